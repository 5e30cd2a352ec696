"""Stage orchestration with content-addressed caching.

Each stage writes its artifacts plus a manifest recording the hash of the
run parameters, the hash of every input file (raw inputs and upstream
artifacts), and the hash of every output. A stage is skipped when all of
these match; touching any input invalidates every stage downstream of it.
Manifests contain no timestamps or absolute paths, so repeated runs are
byte-identical.
"""

from __future__ import annotations

import hashlib
import json
import logging
from pathlib import Path
from typing import Callable

import pandas as pd

from . import corpus, exposure, newwork, panel, report, scoring, semlink
from .config import RunConfig
from .errors import ConfigError, DataError
from .estimator import RegressionResult, RegressionSpec, run_spec

logger = logging.getLogger(__name__)

STAGES = ("ingest", "scores", "matrices", "exposure", "newwork", "panel", "estimate")

__all__ = ["STAGES", "run", "run_all", "build_instrument_series"]


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _params_hash(cfg: RunConfig) -> str:
    payload = {
        "countries": sorted(cfg.countries),
        "iv_countries": sorted(cfg.iv_countries),
        "year_window": [cfg.year_start, cfg.year_end],
        "iv_year_window": [cfg.iv_year_start, cfg.iv_year_end],
        "panel_window": [cfg.panel_year_start, cfg.panel_year_end],
        "decay": cfg.decay,
        "quantile": cfg.quantile,
        "new_work_threshold": cfg.new_work_threshold,
        "weights": cfg.weights_spec,
        "standardize_sample": cfg.standardize_sample,
        "lag": cfg.lag,
        "importance_bounds": list(cfg.importance_bounds),
        "level_bounds": list(cfg.level_bounds),
        "embedding_backend": cfg.embedding_backend,
        "hash_dim": cfg.hash_dim,
        "hash_seed": cfg.hash_seed,
    }
    blob = json.dumps(payload, sort_keys=True).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()


def _raw_inputs(cfg: RunConfig, keys: list[str]) -> dict[str, Path]:
    out = {}
    for key in keys:
        if cfg.has_input(key):
            out[f"inputs:{key}"] = cfg.input_path(key)
    for key, path in cfg.iv_inputs.items():
        if key in keys:
            out[f"iv:{key}"] = path
    return out


def _store_inputs(cfg: RunConfig, keys: list[str]) -> dict[str, Path]:
    if cfg.embedding_backend != "files":
        return {}
    return {f"emb:{k}": cfg.embedding_stores[k] for k in keys}


class Stage:
    def __init__(
        self,
        name: str,
        inputs: Callable[[RunConfig, Path], dict[str, Path]],
        outputs: list[str],
        runner: Callable[[RunConfig, Path], dict],
    ) -> None:
        self.name = name
        self.inputs = inputs
        self.outputs = outputs
        self.runner = runner


def _manifest_path(out_dir: Path, stage: str) -> Path:
    return out_dir / stage / f"{stage}.manifest.json"


def _cache_valid(stage: Stage, cfg: RunConfig, out_dir: Path) -> bool:
    mpath = _manifest_path(out_dir, stage.name)
    if not mpath.exists():
        return False
    try:
        manifest = json.loads(mpath.read_text(encoding="utf-8"))
    except json.JSONDecodeError:
        return False
    if manifest.get("params_hash") != _params_hash(cfg):
        logger.info("stage %s: config changed, re-running", stage.name)
        return False
    for name, digest in manifest.get("inputs", {}).items():
        path = _resolve_logical(name, cfg, out_dir)
        if path is None or not path.exists() or _sha256(path) != digest:
            logger.info("stage %s: input %s changed, re-running", stage.name, name)
            return False
    for rel, digest in manifest.get("outputs", {}).items():
        path = out_dir / rel
        if not path.exists() or _sha256(path) != digest:
            logger.info("stage %s: output %s missing or stale", stage.name, rel)
            return False
    return True


def _resolve_logical(name: str, cfg: RunConfig, out_dir: Path) -> Path | None:
    kind, _, rest = name.partition(":")
    if kind == "inputs":
        return cfg.input_path(rest) if cfg.has_input(rest) else None
    if kind == "iv":
        return cfg.iv_inputs.get(rest)
    if kind == "emb":
        return cfg.embedding_stores.get(rest)
    if kind == "artifact":
        return out_dir / rest
    return None


def _write_manifest(
    stage: Stage, cfg: RunConfig, out_dir: Path, inputs: dict[str, Path], counts: dict
) -> None:
    manifest = {
        "stage": stage.name,
        "params_hash": _params_hash(cfg),
        "inputs": {name: _sha256(path) for name, path in sorted(inputs.items())},
        "outputs": {rel: _sha256(out_dir / rel) for rel in sorted(stage.outputs)},
        "counts": counts,
    }
    mpath = _manifest_path(out_dir, stage.name)
    mpath.parent.mkdir(parents=True, exist_ok=True)
    with open(mpath, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------- stages


def _load_main_posts(cfg: RunConfig) -> tuple[list[corpus.Post], dict[str, corpus.Tag]]:
    tags = corpus.load_tags(cfg.input_path("tags"))
    posts = corpus.load_posts(
        cfg.input_path("posts"), cfg.countries, (cfg.year_start, cfg.year_end), tags
    )
    return posts, tags


def _stage_ingest_inputs(cfg: RunConfig, out_dir: Path) -> dict[str, Path]:
    keys = [
        "posts", "tags", "abilities", "ability_scores", "microtitles",
        "crosswalk_occ8_to_occ6", "crosswalk_csoc", "crosswalk_cnaics",
        "alt_titles", "outcomes", "covariates",
    ]
    inputs = _raw_inputs(cfg, keys)
    inputs.update(_store_inputs(cfg, list(cfg.embedding_stores)))
    return inputs


def _stage_ingest(cfg: RunConfig, out_dir: Path) -> dict:
    posts, tags = _load_main_posts(cfg)
    ai_posts = corpus.select_ai_posts(posts, tags)
    taxonomy = corpus.load_taxonomies(
        cfg.input_path("abilities"),
        cfg.input_path("ability_scores"),
        cfg.input_path("microtitles"),
        importance_bounds=cfg.importance_bounds,
        level_bounds=cfg.level_bounds,
    )
    counts = {
        "posts": len(posts),
        "ai_posts": len(ai_posts),
        "tags": len(tags),
        "ai_tags": sum(1 for t in tags.values() if t.is_ai),
        "abilities": len(taxonomy.abilities),
        "ability_scores": len(taxonomy.requirements),
        "microtitles": len(taxonomy.microtitles),
    }
    if cfg.has_input("alt_titles"):
        counts["title_sets"] = len(newwork.load_title_sets(cfg.input_path("alt_titles")))
    if cfg.has_input("outcomes"):
        counts["outcome_rows"] = len(panel.load_outcomes(cfg.input_path("outcomes")))
    if cfg.has_input("covariates"):
        counts["covariate_rows"] = len(panel.load_covariates(cfg.input_path("covariates")))
    path = out_dir / "ingest" / "summary.json"
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(counts, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return counts


def _compute_tag_scores(
    cfg: RunConfig,
    countries: frozenset[str],
    posts_path: Path,
    window: tuple[int, int] | None = None,
) -> dict[str, dict[int, float]]:
    window = window or (cfg.year_start, cfg.year_end)
    tags = corpus.load_tags(cfg.input_path("tags"))
    posts = corpus.load_posts(posts_path, countries, window, tags)
    ai_posts = corpus.select_ai_posts(posts, tags)
    if not ai_posts:
        raise DataError("no AI-related posts in the selected corpus")
    series = scoring.smooth_question_scores(ai_posts, cfg.decay, window[1])
    return {
        ts.tag_id: ts.scores for ts in scoring.tag_year_scores(series, ai_posts)
    }


def _stage_scores_inputs(cfg: RunConfig, out_dir: Path) -> dict[str, Path]:
    return _raw_inputs(cfg, ["posts", "tags"])


def _stage_scores(cfg: RunConfig, out_dir: Path) -> dict:
    scores = _compute_tag_scores(cfg, cfg.countries, cfg.input_path("posts"))
    path = out_dir / "scores" / "tag_scores.csv"
    path.parent.mkdir(parents=True, exist_ok=True)
    rows = scoring.write_tag_scores(
        [scoring.TagYearScores(t, s) for t, s in sorted(scores.items())], path
    )
    return {"tags_scored": len(scores), "rows": rows}


def _embedding_lookup(cfg: RunConfig, store_key: str, texts: dict[str, str]):
    """Vectors for entity texts, from a store file or the hash embedder.

    With the files backend, vectors are looked up by text; every text must
    be present in the configured store."""
    if cfg.embedding_backend == "hash":
        return semlink.hash_embeddings(texts, cfg.hash_dim, cfg.hash_seed)
    store = semlink.load_embedding_store(cfg.embedding_stores[store_key])
    entries = {}
    for entity_id, text in texts.items():
        if text not in store.entries:
            raise DataError(
                f"embedding store '{store_key}' lacks text '{text}' "
                f"(entity '{entity_id}')"
            )
        entries[entity_id] = store.entries[text]
    return semlink.EmbeddingStore(store.dim, entries)


def _build_matrices(cfg: RunConfig, iv: bool):
    """Name- and description-based joint-quantile transition matrices for
    abilities, occupation micro-titles, and industry micro-titles."""
    tags = corpus.load_tags(cfg.input_path("tags"))
    ai_tags = {tid: t for tid, t in sorted(tags.items()) if t.is_ai}
    abilities = corpus.load_abilities(cfg.input_path("abilities"))
    titles = corpus.load_microtitles(cfg.input_path("microtitles", iv=iv))

    tag_names = {tid: t.name for tid, t in ai_tags.items()}
    tag_descs = {tid: t.description_text for tid, t in ai_tags.items()}
    store_tag_name = _embedding_lookup(cfg, "tag_names", tag_names)
    store_tag_desc = _embedding_lookup(cfg, "tag_descriptions", tag_descs)

    ability_names = {a.ability_id: a.name for a in abilities.values()}
    ability_descs = {a.ability_id: a.description_text for a in abilities.values()}
    store_ab_name = _embedding_lookup(cfg, "ability_names", ability_names)
    store_ab_desc = _embedding_lookup(cfg, "ability_descriptions", ability_descs)

    tag_ids = tuple(sorted(ai_tags))
    ability_ids = tuple(sorted(abilities))
    m_name = semlink.cosine_clamped(store_ab_name, store_tag_name, ability_ids, tag_ids)
    m_desc = semlink.cosine_clamped(store_ab_desc, store_tag_desc, ability_ids, tag_ids)
    trans_auto = semlink.joint_top_quantile_average(m_name, m_desc, cfg.quantile)

    def title_matrix(kind: str, store_key: str):
        ents = {
            f"{t.code}|{t.title}": t.title
            for t in titles
            if t.kind == kind
        }
        if not ents:
            raise DataError(f"no {kind} micro-titles")
        store = _embedding_lookup(cfg, store_key, ents)
        ids = tuple(sorted(ents))
        m_n = semlink.cosine_clamped(store, store_tag_name, ids, tag_ids)
        m_d = semlink.cosine_clamped(store, store_tag_desc, ids, tag_ids)
        return semlink.joint_top_quantile_average(m_n, m_d, cfg.quantile)

    trans_occ = title_matrix("occupation", "occupation_titles")
    trans_ind = title_matrix("industry", "industry_titles")
    return trans_auto, trans_occ, trans_ind


def _stage_matrices_inputs(cfg: RunConfig, out_dir: Path) -> dict[str, Path]:
    inputs = _raw_inputs(cfg, ["tags", "abilities", "microtitles"])
    inputs.update(
        _store_inputs(
            cfg,
            [
                "tag_names", "tag_descriptions", "ability_names",
                "ability_descriptions", "occupation_titles", "industry_titles",
            ],
        )
    )
    return inputs


def _stage_matrices(cfg: RunConfig, out_dir: Path) -> dict:
    trans_auto, trans_occ, trans_ind = _build_matrices(cfg, iv=False)
    mdir = out_dir / "matrices"
    mdir.mkdir(parents=True, exist_ok=True)
    counts = {
        "auto_links": semlink.write_transition_with_ids(
            trans_auto, mdir / "transition_auto.csv"
        ),
        "occ_links": semlink.write_transition_with_ids(
            trans_occ, mdir / "transition_occ.csv"
        ),
        "ind_links": semlink.write_transition_with_ids(
            trans_ind, mdir / "transition_ind.csv"
        ),
    }
    return counts


def _occ8_grouping(cfg: RunConfig, requirements, iv: bool) -> dict[str, str]:
    """8-digit occupation -> 6-digit mapping from the crosswalk when given,
    else the code-prefix rule."""
    if cfg.has_input("crosswalk_occ8_to_occ6"):
        return corpus.load_crosswalk(cfg.input_path("crosswalk_occ8_to_occ6")).grouping()
    return {r.occupation8: r.occupation8[:6] for r in requirements}


def _apply_constant_crosswalk(
    cfg: RunConfig, series: exposure.ExposureSeries, key: str, level: str
) -> exposure.ExposureSeries:
    """Map to the constant classification when a crosswalk is configured."""
    if not cfg.has_input(key):
        return series
    xwalk = corpus.load_crosswalk(cfg.input_path(key))
    return exposure.aggregate(series, xwalk, impute=False, level=level)


def _compute_exposures(cfg: RunConfig, iv: bool, transitions=None):
    """The full index construction for one corpus (main or IV group).

    ``transitions`` lets the stage runner reuse the matrices artifacts;
    the instrument path always rebuilds them because its descriptor
    vintage may differ."""
    posts_path = cfg.input_path("posts", iv=iv)
    countries = cfg.iv_countries if iv else cfg.countries
    window = (cfg.iv_year_start, cfg.iv_year_end) if iv else None
    tag_scores = _compute_tag_scores(cfg, countries, posts_path, window)
    if transitions is None:
        trans_auto, trans_occ, trans_ind = _build_matrices(cfg, iv=iv)
    else:
        trans_auto, trans_occ, trans_ind = transitions

    abilities = corpus.load_abilities(cfg.input_path("abilities"))
    requirements = corpus.load_ability_scores(
        cfg.input_path("ability_scores", iv=iv),
        abilities,
        cfg.importance_bounds,
        cfg.level_bounds,
    )

    ability_series = exposure.ability_exposure(tag_scores, trans_auto)
    auto8 = exposure.occupation_automation(
        ability_series, requirements, cfg.importance_bounds, cfg.level_bounds
    )
    grouping = _occ8_grouping(cfg, requirements, iv)
    auto6 = exposure.aggregate(auto8, grouping, impute=True, level="occupation6")
    auto6 = _apply_constant_crosswalk(cfg, auto6, "crosswalk_csoc", "occupation6")

    occ_micro, ind_micro = exposure.microtitle_exposure(tag_scores, trans_occ, trans_ind)
    titles = corpus.load_microtitles(cfg.input_path("microtitles", iv=iv))
    occ_grouping = {
        f"{t.code}|{t.title}": t.code for t in titles if t.kind == "occupation"
    }
    ind_grouping = {
        f"{t.code}|{t.title}": t.code[:4] for t in titles if t.kind == "industry"
    }
    occ6 = exposure.aggregate(occ_micro, occ_grouping, level="occupation6")
    occ6 = _apply_constant_crosswalk(cfg, occ6, "crosswalk_csoc", "occupation6")
    ind4 = exposure.aggregate(ind_micro, ind_grouping, level="industry4")
    ind4 = _apply_constant_crosswalk(cfg, ind4, "crosswalk_cnaics", "industry4")
    augm, n_missing = exposure.combine_augmentation(occ6, ind4)
    if n_missing:
        logger.info("augmentation: %d cells missing a component", n_missing)
    return auto6, augm


def build_instrument_series(cfg: RunConfig):
    """Instrument construction: the identical pipeline on the IV corpus,
    shifted forward by the configured lag."""
    auto_iv, augm_iv = _compute_exposures(cfg, iv=True)
    return (
        exposure.shift_years(auto_iv, cfg.lag),
        exposure.shift_years(augm_iv, cfg.lag),
    )


def _stage_exposure_inputs(cfg: RunConfig, out_dir: Path) -> dict[str, Path]:
    inputs = _raw_inputs(
        cfg,
        [
            "posts", "tags", "abilities", "ability_scores", "microtitles",
            "crosswalk_occ8_to_occ6", "crosswalk_csoc", "crosswalk_cnaics",
        ],
    )
    inputs.update(
        _store_inputs(
            cfg,
            [
                "tag_names", "tag_descriptions", "ability_names",
                "ability_descriptions", "occupation_titles", "industry_titles",
            ],
        )
    )
    for rel in (
        "matrices/transition_auto.csv",
        "matrices/transition_auto.csv.ids",
        "matrices/transition_occ.csv",
        "matrices/transition_occ.csv.ids",
        "matrices/transition_ind.csv",
        "matrices/transition_ind.csv.ids",
    ):
        inputs[f"artifact:{rel}"] = out_dir / rel
    return inputs


def _stage_exposure(cfg: RunConfig, out_dir: Path) -> dict:
    transitions = tuple(
        semlink.read_transition(out_dir / f"matrices/transition_{kind}.csv")
        for kind in ("auto", "occ", "ind")
    )
    auto6, augm = _compute_exposures(cfg, iv=False, transitions=transitions)
    auto_iv, augm_iv = build_instrument_series(cfg)
    edir = out_dir / "exposure"
    edir.mkdir(parents=True, exist_ok=True)
    counts = {
        "auto_occ6": exposure.write_exposure(auto6, edir / "auto_occ6.csv"),
        "augm_oi": exposure.write_exposure(augm, edir / "augm_oi.csv"),
        "auto_occ6_iv": exposure.write_exposure(auto_iv, edir / "auto_occ6_iv.csv"),
        "augm_oi_iv": exposure.write_exposure(augm_iv, edir / "augm_oi_iv.csv"),
    }
    return counts


def _stage_newwork_inputs(cfg: RunConfig, out_dir: Path) -> dict[str, Path]:
    inputs = _raw_inputs(cfg, ["alt_titles"])
    inputs.update(_store_inputs(cfg, ["alternate_titles"]))
    return inputs


def _stage_newwork(cfg: RunConfig, out_dir: Path) -> dict:
    title_sets = newwork.load_title_sets(cfg.input_path("alt_titles"))
    all_norm = sorted({t for ts in title_sets for t in ts.normalized})
    store = _embedding_lookup(
        cfg, "alternate_titles", {t: t for t in all_norm}
    )
    backend = newwork.EmbeddingSimilarity(store)
    ledger = newwork.build_ledger(title_sets, backend, cfg.new_work_threshold)
    ndir = out_dir / "newwork"
    ndir.mkdir(parents=True, exist_ok=True)
    years = sorted({ts.year for ts in title_sets})
    rows = newwork.write_newwork(title_sets, ledger, ndir / "newwork.csv")
    share_rows = newwork.write_shares(ledger, years, ndir / "shares.csv")
    return {
        "title_rows": rows,
        "share_rows": share_rows,
        "new_titles": len(ledger.entries),
    }


def _stage_panel_inputs(cfg: RunConfig, out_dir: Path) -> dict[str, Path]:
    inputs = _raw_inputs(cfg, ["outcomes", "covariates"])
    for rel in (
        "exposure/auto_occ6.csv",
        "exposure/augm_oi.csv",
        "exposure/auto_occ6_iv.csv",
        "exposure/augm_oi_iv.csv",
        "newwork/shares.csv",
    ):
        inputs[f"artifact:{rel}"] = out_dir / rel
    return inputs


def _stage_panel(cfg: RunConfig, out_dir: Path) -> dict:
    auto6 = exposure.read_exposure(out_dir / "exposure/auto_occ6.csv", "occupation6")
    augm = exposure.read_exposure(out_dir / "exposure/augm_oi.csv", "occ6_x_ind4")
    auto_iv = exposure.read_exposure(
        out_dir / "exposure/auto_occ6_iv.csv", "occupation6"
    )
    augm_iv = exposure.read_exposure(out_dir / "exposure/augm_oi_iv.csv", "occ6_x_ind4")
    if cfg.standardize_sample == "series":
        auto6 = exposure.standardize(auto6)
        augm = exposure.standardize(augm)
        auto_iv = exposure.standardize(auto_iv)
        augm_iv = exposure.standardize(augm_iv)
    shares = newwork.read_shares(out_dir / "newwork/shares.csv")
    outcomes = panel.load_outcomes(cfg.input_path("outcomes"))
    covariates = panel.load_covariates(cfg.input_path("covariates"))
    build = panel.build_panel(
        auto6,
        augm,
        auto_iv,
        augm_iv,
        shares,
        outcomes,
        covariates,
        weights_spec=cfg.weights_spec,
        year_range=(cfg.panel_year_start, cfg.panel_year_end),
        standardize_sample=cfg.standardize_sample,
    )
    pdir = out_dir / "panel"
    pdir.mkdir(parents=True, exist_ok=True)
    rows = panel.write_panel(build.frame, pdir / "panel.csv")
    counts = {"rows": rows}
    counts.update({f"dropped_{k}": v for k, v in sorted(build.dropped.items())})
    return counts


_OUTCOMES = (
    ("newwork", "new_work_share", "log_emp"),
    ("employment", "log_emp", "log_wage"),
    ("wages", "log_wage", "log_emp"),
)


def table_specs(frame: pd.DataFrame) -> list[RegressionSpec]:
    """The six OLS and six 2SLS specifications for each outcome table."""
    controls = panel.covariate_columns(frame)
    specs: list[RegressionSpec] = []
    for key, dependent, own_control in _OUTCOMES:
        exog_base = tuple([own_control] + controls)
        for col in range(1, 7):
            ai_vars: tuple[str, ...]
            if col in (1, 2):
                ai_vars = ("auto_ai",)
            elif col in (3, 4):
                ai_vars = ("augm_ai",)
            else:
                ai_vars = ("auto_ai", "augm_ai")
            fe: tuple[tuple[str, ...], ...] = (("occupation6", "industry4"),)
            if col % 2 == 0:
                fe = (("occupation6", "industry4"), ("industry3", "year"))
            specs.append(
                RegressionSpec(
                    name=f"{key}_ols_{col}",
                    dependent=dependent,
                    exogenous=ai_vars + exog_base,
                    fixed_effects=fe,
                    cluster=("occupation6", "industry4"),
                    weights="weight",
                )
            )
            specs.append(
                RegressionSpec(
                    name=f"{key}_2sls_{col}",
                    dependent=dependent,
                    exogenous=exog_base,
                    endogenous=ai_vars,
                    instruments=tuple(f"{v}_iv" for v in ai_vars),
                    fixed_effects=fe,
                    cluster=("occupation6", "industry4"),
                    weights="weight",
                )
            )
    return specs


def _stage_estimate_inputs(cfg: RunConfig, out_dir: Path) -> dict[str, Path]:
    return {"artifact:panel/panel.csv": out_dir / "panel/panel.csv"}


def _stage_estimate(cfg: RunConfig, out_dir: Path) -> dict:
    frame = panel.read_panel(out_dir / "panel/panel.csv")
    results: list[RegressionResult] = []
    for spec in table_specs(frame):
        results.append(run_spec(frame, spec))
    edir = out_dir / "estimate"
    edir.mkdir(parents=True, exist_ok=True)
    rows = report.write_results_csv(results, edir / "results.csv")
    report.write_results_json(results, edir / "results.json")
    by_name = {r.spec_name: r for r in results}
    titles = {
        "newwork": "Effect of AI exposure on the cumulative share of new work",
        "employment": "Effect of AI exposure on employment (log)",
        "wages": "Effect of AI exposure on mean hourly wages (log)",
    }
    tables = {}
    for key, _, _ in _OUTCOMES:
        ols = [by_name[f"{key}_ols_{c}"] for c in range(1, 7)]
        tsls_res = [by_name[f"{key}_2sls_{c}"] for c in range(1, 7)]
        tables[titles[key]] = (ols, tsls_res)
    report.write_tables(tables, edir / "tables.txt")
    return {"specs": len(results), "result_rows": rows}


def _stages() -> list[Stage]:
    return [
        Stage("ingest", _stage_ingest_inputs, ["ingest/summary.json"], _stage_ingest),
        Stage("scores", _stage_scores_inputs, ["scores/tag_scores.csv"], _stage_scores),
        Stage(
            "matrices",
            _stage_matrices_inputs,
            [
                "matrices/transition_auto.csv",
                "matrices/transition_auto.csv.ids",
                "matrices/transition_occ.csv",
                "matrices/transition_occ.csv.ids",
                "matrices/transition_ind.csv",
                "matrices/transition_ind.csv.ids",
            ],
            _stage_matrices,
        ),
        Stage(
            "exposure",
            _stage_exposure_inputs,
            [
                "exposure/auto_occ6.csv",
                "exposure/augm_oi.csv",
                "exposure/auto_occ6_iv.csv",
                "exposure/augm_oi_iv.csv",
            ],
            _stage_exposure,
        ),
        Stage(
            "newwork",
            _stage_newwork_inputs,
            ["newwork/newwork.csv", "newwork/shares.csv"],
            _stage_newwork,
        ),
        Stage("panel", _stage_panel_inputs, ["panel/panel.csv"], _stage_panel),
        Stage(
            "estimate",
            _stage_estimate_inputs,
            ["estimate/results.csv", "estimate/results.json", "estimate/tables.txt"],
            _stage_estimate,
        ),
    ]


_STAGE_DEPENDENCIES = {
    "ingest": [],
    "scores": ["ingest"],
    "matrices": ["ingest"],
    "exposure": ["ingest", "scores", "matrices"],
    "newwork": ["ingest"],
    "panel": ["exposure", "newwork"],
    "estimate": ["panel"],
}


def run(stage_name: str, cfg: RunConfig, out_dir: Path | None = None) -> dict:
    """Run one stage (with its dependencies) or 'all'; returns counts per
    executed stage. Cached stages are skipped."""
    if stage_name != "all" and stage_name not in STAGES:
        raise ConfigError(
            f"unknown stage '{stage_name}'; expected one of {', '.join(STAGES)} or all"
        )
    out = out_dir if out_dir is not None else cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)

    wanted = list(STAGES) if stage_name == "all" else _closure(stage_name)
    by_name = {s.name: s for s in _stages()}
    executed: dict[str, dict] = {}
    for name in STAGES:
        if name not in wanted:
            continue
        stage = by_name[name]
        if _cache_valid(stage, cfg, out):
            logger.info("stage %s: cache hit, skipping", name)
            executed[name] = {"cached": True}
            continue
        logger.info("stage %s: running", name)
        counts = stage.runner(cfg, out)
        inputs = {
            name_: path for name_, path in stage.inputs(cfg, out).items()
        }
        _write_manifest(stage, cfg, out, inputs, counts)
        executed[name] = counts
    return executed


def _closure(stage_name: str) -> list[str]:
    seen: set[str] = set()

    def visit(name: str) -> None:
        if name in seen:
            return
        for dep in _STAGE_DEPENDENCIES[name]:
            visit(dep)
        seen.add(name)

    visit(stage_name)
    return [s for s in STAGES if s in seen]


def run_all(cfg: RunConfig, out_dir: Path | None = None) -> dict:
    return run("all", cfg, out_dir)
