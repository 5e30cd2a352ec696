"""Run configuration: a sectioned key=value file parsed into a validated
dataclass. Every pipeline parameter has a default matching the headline
construction (decay 0.5, quantile 0.25, similarity threshold 0.7,
5-year instrument lag).
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError

__all__ = ["RunConfig", "load_config"]

_INPUT_KEYS = (
    "posts",
    "tags",
    "abilities",
    "ability_scores",
    "microtitles",
    "crosswalk_occ8_to_occ6",
    "crosswalk_csoc",
    "crosswalk_cnaics",
    "alt_titles",
    "outcomes",
    "covariates",
)

_EMBEDDING_STORE_KEYS = (
    "tag_names",
    "tag_descriptions",
    "ability_names",
    "ability_descriptions",
    "occupation_titles",
    "industry_titles",
    "alternate_titles",
)


@dataclass
class RunConfig:
    config_dir: Path
    inputs: dict[str, Path]
    embedding_backend: str  # "files" | "hash"
    embedding_stores: dict[str, Path]
    hash_dim: int
    hash_seed: int
    countries: frozenset[str]
    iv_countries: frozenset[str]
    year_start: int
    year_end: int
    iv_year_start: int
    iv_year_end: int
    panel_year_start: int
    panel_year_end: int
    decay: float
    quantile: float
    new_work_threshold: float
    weights_spec: str
    standardize_sample: str
    lag: int
    importance_bounds: tuple[float, float]
    level_bounds: tuple[float, float]
    iv_inputs: dict[str, Path] = field(default_factory=dict)
    output_dir: Path = Path("out")

    def input_path(self, key: str, iv: bool = False) -> Path:
        """Resolve an input path; the IV run may override descriptor vintages."""
        if iv and key in self.iv_inputs:
            return self.iv_inputs[key]
        if key not in self.inputs:
            raise ConfigError(f"missing input path '{key}'")
        return self.inputs[key]

    def has_input(self, key: str) -> bool:
        return key in self.inputs


def _parse_float(section, key: str, default: float | None = None) -> float:
    raw = section.get(key)
    if raw is None:
        if default is None:
            raise ConfigError(f"missing required key '{key}'")
        return default
    try:
        return float(raw)
    except ValueError as exc:
        raise ConfigError(f"key '{key}': not a number: '{raw}'") from exc


def _parse_int(section, key: str, default: int | None = None) -> int:
    raw = section.get(key)
    if raw is None:
        if default is None:
            raise ConfigError(f"missing required key '{key}'")
        return default
    try:
        return int(raw)
    except ValueError as exc:
        raise ConfigError(f"key '{key}': not an integer: '{raw}'") from exc


def load_config(path: str | Path) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",))
    parser.read(path, encoding="utf-8")
    base = path.parent

    if "inputs" not in parser:
        raise ConfigError("config must have an [inputs] section")
    inputs: dict[str, Path] = {}
    for key in _INPUT_KEYS:
        raw = parser["inputs"].get(key)
        if raw:
            inputs[key] = (base / raw).resolve()
    required = {"posts", "tags", "abilities", "ability_scores", "microtitles"}
    missing = required - set(inputs)
    if missing:
        raise ConfigError(f"[inputs] missing: {', '.join(sorted(missing))}")
    for key, p in inputs.items():
        if not p.exists():
            raise ConfigError(f"[inputs] {key}: path does not exist: {p}")

    emb = parser["embeddings"] if "embeddings" in parser else {}
    backend = emb.get("backend", "hash")
    if backend not in ("files", "hash"):
        raise ConfigError(f"[embeddings] backend must be files or hash, got '{backend}'")
    stores: dict[str, Path] = {}
    if backend == "files":
        for key in _EMBEDDING_STORE_KEYS:
            raw = emb.get(key)
            if not raw:
                raise ConfigError(f"[embeddings] missing store path '{key}'")
            p = (base / raw).resolve()
            if not p.exists():
                raise ConfigError(f"[embeddings] {key}: path does not exist: {p}")
            stores[key] = p

    params = parser["params"] if "params" in parser else {}
    countries = frozenset((params.get("countries") or "").split())
    if not countries:
        raise ConfigError("[params] countries must list at least one country code")
    decay = _parse_float(params, "decay", 0.5)
    if not 0.0 < decay < 1.0:
        raise ConfigError(f"[params] decay must be in (0, 1), got {decay}")
    quantile = _parse_float(params, "quantile", 0.25)
    if not 0.0 < quantile <= 1.0:
        raise ConfigError(f"[params] quantile must be in (0, 1], got {quantile}")
    threshold = _parse_float(params, "new_work_threshold", 0.7)
    if not 0.0 < threshold <= 1.0:
        raise ConfigError(
            f"[params] new_work_threshold must be in (0, 1], got {threshold}"
        )
    year_start = _parse_int(params, "year_start", 2010)
    year_end = _parse_int(params, "year_end", 2022)
    if year_start > year_end:
        raise ConfigError(f"[params] empty year window {year_start}..{year_end}")
    panel_start = _parse_int(params, "panel_year_start", 2015)
    panel_end = _parse_int(params, "panel_year_end", year_end)
    weights_spec = params.get("weights", "base_year:2015")
    if weights_spec != "current" and not weights_spec.startswith("base_year:"):
        raise ConfigError(
            f"[params] weights must be current or base_year:<year>, got '{weights_spec}'"
        )
    sample = params.get("standardize_sample", "panel")
    if sample not in ("panel", "series"):
        raise ConfigError(
            f"[params] standardize_sample must be panel or series, got '{sample}'"
        )
    imp_bounds = tuple(
        float(x) for x in (params.get("importance_bounds") or "1 5").split()
    )
    lvl_bounds = tuple(float(x) for x in (params.get("level_bounds") or "0 7").split())
    if len(imp_bounds) != 2 or len(lvl_bounds) != 2:
        raise ConfigError("[params] scale bounds must be two numbers")

    iv = parser["iv"] if "iv" in parser else {}
    iv_countries = frozenset((iv.get("countries") or "").split())
    if not iv_countries:
        raise ConfigError("[iv] countries must list at least one country code")
    lag = _parse_int(iv, "lag", 5)
    if lag < 0:
        raise ConfigError(f"[iv] lag must be >= 0, got {lag}")
    iv_year_start = _parse_int(iv, "year_start", year_start)
    iv_year_end = _parse_int(iv, "year_end", year_end)
    if iv_year_start > iv_year_end:
        raise ConfigError(f"[iv] empty year window {iv_year_start}..{iv_year_end}")
    iv_inputs: dict[str, Path] = {}
    for key in ("posts", "ability_scores", "microtitles"):
        raw = iv.get(key)
        if raw:
            p = (base / raw).resolve()
            if not p.exists():
                raise ConfigError(f"[iv] {key}: path does not exist: {p}")
            iv_inputs[key] = p

    out_raw = parser["output"].get("dir", "out") if "output" in parser else "out"
    output_dir = (base / out_raw).resolve()

    return RunConfig(
        config_dir=base,
        inputs=inputs,
        embedding_backend=backend,
        embedding_stores=stores,
        hash_dim=_parse_int(emb, "dim", 64) if backend == "hash" else 0,
        hash_seed=_parse_int(emb, "seed", 0) if backend == "hash" else 0,
        countries=countries,
        iv_countries=iv_countries,
        year_start=year_start,
        year_end=year_end,
        iv_year_start=iv_year_start,
        iv_year_end=iv_year_end,
        panel_year_start=panel_start,
        panel_year_end=panel_end,
        decay=decay,
        quantile=quantile,
        new_work_threshold=threshold,
        weights_spec=weights_spec,
        standardize_sample=sample,
        lag=lag,
        importance_bounds=imp_bounds,  # type: ignore[arg-type]
        level_bounds=lvl_bounds,  # type: ignore[arg-type]
        iv_inputs=iv_inputs,
        output_dir=output_dir,
    )
