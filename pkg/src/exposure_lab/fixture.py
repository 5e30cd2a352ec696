"""Synthetic input corpus generator.

Produces a complete, internally consistent set of input files (posts,
tags, taxonomies, alternate titles, outcomes, covariates, embedding
stores) plus ready-to-run configuration files, so the full pipeline can
be exercised without any licensed data. Outcomes are generated with
planted exposure effects so estimation stages produce non-degenerate
tables. Everything is a pure function of the seed.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from . import corpus, exposure, scoring, semlink
from .newwork import EmbeddingSimilarity, TitleSet, build_ledger

HASH_DIM = 64
HASH_SEED = 7

MAIN_COUNTRIES = ("US", "CA", "DE", "GB")
IV_COUNTRIES = ("BR", "PL", "AR", "ZA")
IV_HIGH_INCOME = ("PL", "AR")

YEARS = tuple(range(2010, 2023))
PANEL_YEARS = tuple(range(2015, 2023))

TAGS = [
    # id, name, description, is_ai
    ("t01", "machine-learning", "Training statistical models that learn patterns from data", 1),
    ("t02", "natural-language-processing", "Understanding and generating human language text", 1),
    ("t03", "computer-vision", "Recognizing objects scenes and text in images", 1),
    ("t04", "speech-recognition", "Converting spoken audio into written transcripts", 1),
    ("t05", "machine-translation", "Translating documents between languages automatically", 1),
    ("t06", "demand-forecasting", "", 1),  # empty description: name fallback path
    ("t07", "vehicle-routing", "Planning optimal delivery routes for courier fleets", 1),
    ("t08", "python", "General purpose programming language", 0),
    ("t09", "sql", "Querying relational databases", 0),
    ("t10", "excel", "Spreadsheet formulas and office automation", 0),
    ("t11", "web-development", "Building websites and web services", 0),
    ("t12", "regex", "Pattern matching in strings", 0),
    ("t13", "git", "Version control workflows", 0),
    ("t14", "docker", "Container images and deployment", 0),
]

ABILITIES = [
    ("a01", "oral comprehension", "Listening to and understanding spoken information"),
    ("a02", "written comprehension", "Reading and understanding written work documents"),
    ("a03", "near vision", "Seeing details of objects at close range"),
    ("a04", "far vision", "Seeing details of objects at a distance"),
    ("a05", "speech recognition", "Identifying and understanding the speech of another person"),
    ("a06", "speech clarity", "Speaking clearly so listeners can understand"),
    ("a07", "problem sensitivity", "Telling when something is wrong or likely to go wrong"),
    ("a08", "manual dexterity", "Quickly moving the hand to grasp and assemble objects"),
    ("a09", "static strength", "Exerting maximum muscle force to lift and carry objects"),
    ("a10", "information ordering", "Arranging items or actions in a certain order or pattern"),
]

# occupation6 -> (flavor words for micro/alternate titles, job zone)
OCCUPATIONS = {
    "111011": ("chief executive strategy director", 5),
    "151251": ("computer programmer software application developer", 4),
    "152031": ("operations research analyst optimization modeler", 5),
    "232011": ("paralegal legal assistant contract clerk", 3),
    "272011": ("actor stage performer voice artist", 2),
    "359021": ("dishwasher kitchen helper utility worker", 1),
    "434051": ("customer service representative account clerk", 2),
    "533011": ("ambulance driver medical transport attendant", 2),
}

# 4-digit codes deliberately share 3-digit prefixes so industry3-by-year
# fixed effects leave within variation, as in the real classification
INDUSTRIES = {
    "5111": "newspaper book publisher",
    "5112": "software publisher",
    "5413": "architectural engineering service",
    "5415": "computer system design service",
    "5417": "scientific research development service",
    "3114": "fruit vegetable preserving",
    "3118": "bakery tortilla manufacturing",
    "7225": "restaurant eating place",
}

MICRO_OCC_TITLES = {
    "111011": ["chief executive officer", "managing director", "strategy president"],
    "151251": ["application developer", "software programmer", "systems coder", "web application engineer"],
    "152031": ["optimization analyst", "logistics modeler", "operations planner"],
    "232011": ["contract paralegal", "legal document clerk", "title examiner assistant"],
    "272011": ["stage actor", "voice performer", "screen artist"],
    "359021": ["dishwasher", "kitchen steward", "pot scrubber"],
    "434051": ["customer account clerk", "service desk representative", "order processing clerk"],
    "533011": ["ambulance driver", "medical transport operator", "patient shuttle attendant"],
}

MICRO_IND_TITLES = {
    "5111": ["newspaper printing house", "book publishing office"],
    "5112": ["packaged software publishing", "game studio publishing"],
    "5413": ["architectural drafting office", "civil engineering bureau"],
    "5415": ["custom software consulting", "computer integration design"],
    "5417": ["biotechnology research laboratory", "physics research institute"],
    "3114": ["fruit canning plant", "frozen vegetable packer"],
    "3118": ["commercial bakery", "tortilla flatbread plant"],
    "7225": ["full service restaurant", "lunch counter diner"],
}

# alternate-title specialty pools per occupation; base titles are built from
# these in 2015, planted new titles appear in later years
ALT_BASE = {
    "111011": ["chief executive", "managing director", "operations president",
               "corporate strategist", "division head"],
    "151251": ["application developer", "software engineer", "systems programmer",
               "release engineer", "web developer"],
    "152031": ["operations analyst", "optimization modeler", "supply planner",
               "simulation specialist", "scheduling analyst"],
    "232011": ["paralegal", "legal assistant", "contract clerk",
               "litigation support specialist", "title examiner"],
    "272011": ["stage actor", "voice performer", "screen artist",
               "theater player", "commercial presenter"],
    "359021": ["dishwasher", "kitchen helper", "utility steward",
               "pot washer", "scullery worker"],
    "434051": ["customer representative", "account clerk", "service agent",
               "order taker", "billing correspondent"],
    "533011": ["ambulance driver", "transport medic", "medical driver",
               "driver medic", "patient shuttle operator"],
}

# (occupation6, year, title): planted genuinely-new work
PLANTED_NEW = [
    ("151251", 2017, "prompt engineer"),
    ("151251", 2020, "quantum firmware author"),
    ("152031", 2018, "autonomous fleet curator"),
    ("111011", 2019, "sustainability czar"),
    ("232011", 2021, "blockchain evidence examiner"),
    ("434051", 2016, "chat queue moderator"),
    ("533011", 2022, "drone dispatch wrangler"),
]

# (occupation6, year, title): renames that normalize onto an existing title
PLANTED_RENAMES = [
    ("151251", 2016, "Application Developers"),      # plural of base title
    ("359021", 2017, "Dishwashers"),                 # plural + casefold
    ("272011", 2018, "Stage Actress"),               # gendered variant
    ("434051", 2019, "Customer   Representative"),   # whitespace variant
]


def _fmt(value: float) -> str:
    return f"{value:.9g}"


def _write_csv(path: Path, header: str, rows: list[str]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(header + "\n")
        for row in rows:
            fh.write(row + "\n")


def _make_posts(rng: np.random.Generator) -> list[dict]:
    tag_ids = [t[0] for t in TAGS]
    ai_ids = {t[0] for t in TAGS if t[3]}
    posts = []
    counter = 0
    for year in YEARS:
        # AI activity ramps up over the window, echoing corpus growth
        ramp = 0.25 + 0.75 * (year - YEARS[0]) / (YEARS[-1] - YEARS[0])
        for group, countries, volume in (
            ("main", MAIN_COUNTRIES, 34),
            ("iv", IV_COUNTRIES, 26),
        ):
            for _ in range(volume):
                counter += 1
                country = countries[int(rng.integers(len(countries)))]
                n_tags = int(rng.choice([1, 2, 3, 4, 5], p=[0.05, 0.1, 0.35, 0.3, 0.2]))
                weights = np.array(
                    [ramp * 2.0 if t in ai_ids else 1.0 for t in tag_ids]
                )
                weights /= weights.sum()
                chosen = list(
                    rng.choice(tag_ids, size=n_tags, replace=False, p=weights)
                )
                votes = int(rng.geometric(0.12)) - 2  # occasionally <= 0
                posts.append(
                    {
                        "id": f"q{counter:06d}",
                        "year": int(year),
                        "votes": votes,
                        "tags": sorted(chosen),
                        "country": country,
                    }
                )
    # a few posts with malformed country codes: excluded with a warning
    for j in range(4):
        counter += 1
        posts.append(
            {
                "id": f"q{counter:06d}",
                "year": 2016 + j,
                "votes": 3,
                "tags": ["t01", "t08", "t09"],
                "country": "z9",
            }
        )
    return posts


def _alt_title_sets() -> dict[tuple[str, int], set[str]]:
    """Snapshot title sets per (occupation, year) with planted events."""
    sets: dict[tuple[str, int], set[str]] = {}
    for occ, base in ALT_BASE.items():
        current = set(base)
        for year in PANEL_YEARS:
            for o, y, title in PLANTED_NEW:
                if o == occ and y == year:
                    current.add(title)
            for o, y, title in PLANTED_RENAMES:
                if o == occ and y == year:
                    current.add(title)
            sets[(occ, year)] = set(current)
    return sets


def _compute_fixture_exposures(posts: list[dict]):
    """Run the index construction in memory to drive the outcome DGP."""
    tags = {
        tid: corpus.Tag(tid, name, desc, bool(is_ai)) for tid, name, desc, is_ai in TAGS
    }
    post_objs = [
        corpus.Post(p["id"], p["year"], p["votes"], tuple(p["tags"]), p["country"])
        for p in posts
        if p["country"] in MAIN_COUNTRIES
    ]
    ai_posts = corpus.select_ai_posts(post_objs, tags)
    series = scoring.smooth_question_scores(ai_posts, 0.5, YEARS[-1])
    tag_scores = {
        ts.tag_id: ts.scores for ts in scoring.tag_year_scores(series, ai_posts)
    }

    ai_tags = {tid: t for tid, t in tags.items() if t.is_ai}
    tag_ids = tuple(sorted(ai_tags))
    store_tn = semlink.hash_embeddings(
        {tid: t.name for tid, t in ai_tags.items()}, HASH_DIM, HASH_SEED
    )
    store_td = semlink.hash_embeddings(
        {tid: t.description_text for tid, t in ai_tags.items()}, HASH_DIM, HASH_SEED
    )
    ability_ids = tuple(a[0] for a in ABILITIES)
    store_an = semlink.hash_embeddings(
        {a[0]: a[1] for a in ABILITIES}, HASH_DIM, HASH_SEED
    )
    store_ad = semlink.hash_embeddings(
        {a[0]: a[2] for a in ABILITIES}, HASH_DIM, HASH_SEED
    )
    m_name = semlink.cosine_clamped(store_an, store_tn, ability_ids, tag_ids)
    m_desc = semlink.cosine_clamped(store_ad, store_td, ability_ids, tag_ids)
    trans_auto = semlink.joint_top_quantile_average(m_name, m_desc, 0.25)

    def title_trans(title_map: dict[str, list[str]], code_len: int):
        ents = {}
        for code, titles in sorted(title_map.items()):
            for i, t in enumerate(titles):
                micro_code = code if code_len == 6 else f"{code}{10 * (i + 1)}"
                ents[f"{micro_code}|{t}"] = t
        store = semlink.hash_embeddings(ents, HASH_DIM, HASH_SEED)
        ids = tuple(sorted(ents))
        m_n = semlink.cosine_clamped(store, store_tn, ids, tag_ids)
        m_d = semlink.cosine_clamped(store, store_td, ids, tag_ids)
        return semlink.joint_top_quantile_average(m_n, m_d, 0.25), ents

    trans_occ, occ_ents = title_trans(MICRO_OCC_TITLES, 6)
    trans_ind, ind_ents = title_trans(MICRO_IND_TITLES, 4)

    requirements = _fixture_requirements()
    ability_series = exposure.ability_exposure(tag_scores, trans_auto)
    auto8 = exposure.occupation_automation(ability_series, requirements)
    grouping = {f"{occ}{sfx}": occ for occ in OCCUPATIONS for sfx in ("01", "02", "03")}
    auto6 = exposure.aggregate(auto8, grouping, impute=True, level="occupation6")

    occ_micro, ind_micro = exposure.microtitle_exposure(tag_scores, trans_occ, trans_ind)
    occ6 = exposure.aggregate(
        occ_micro, {k: k.split("|")[0] for k in occ_ents}, level="occupation6"
    )
    ind4 = exposure.aggregate(
        ind_micro, {k: k.split("|")[0][:4] for k in ind_ents}, level="industry4"
    )
    augm, _ = exposure.combine_augmentation(occ6, ind4)
    return auto6, augm


def _fixture_requirements() -> list[corpus.AbilityRequirement]:
    """Deterministic importance/level grid; physical occupations lean on
    manual abilities, cognitive ones on comprehension and vision."""
    cognitive = {"111011", "151251", "152031", "232011"}
    reqs = []
    for occ_i, occ in enumerate(sorted(OCCUPATIONS)):
        for suffix_i, suffix in enumerate(("01", "02")):
            occ8 = f"{occ}{suffix}"
            for ab_i, (aid, _, _) in enumerate(ABILITIES):
                is_cognitive_ability = ab_i < 7
                affinity = 1.0 if (occ in cognitive) == is_cognitive_ability else 0.35
                importance = 1.0 + 4.0 * affinity * ((ab_i + occ_i + suffix_i) % 5 + 1) / 5.0
                level = 7.0 * affinity * ((ab_i * 2 + occ_i) % 7 + 1) / 7.0
                reqs.append(
                    corpus.AbilityRequirement(occ8, aid, round(importance, 2), round(level, 2))
                )
    return reqs


def _standardize_grid(series: exposure.ExposureSeries, keys) -> dict:
    vals = np.array([series.values[k] for k in keys])
    return {
        k: (series.values[k] - vals.mean()) / vals.std(ddof=0) for k in keys
    }


def generate_fixture(out_dir: str | Path, seed: int = 0) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)

    posts = _make_posts(rng)
    with open(out / "posts.jsonl", "w", encoding="utf-8", newline="\n") as fh:
        for p in posts:
            fh.write(json.dumps(p, sort_keys=True) + "\n")

    _write_csv(
        out / "tags.csv",
        "id,name,description,is_ai",
        [f"{tid},{name},{desc},{is_ai}" for tid, name, desc, is_ai in TAGS],
    )
    alt_desc_rows = [
        f"{tid},{name},{('legacy notes on ' + name) if is_ai else desc},{is_ai}"
        for tid, name, desc, is_ai in TAGS
    ]
    _write_csv(out / "tags_alt_descriptions.csv", "id,name,description,is_ai", alt_desc_rows)

    _write_csv(
        out / "abilities.csv",
        "ability_id,name,description",
        [f"{aid},{name},{desc}" for aid, name, desc in ABILITIES],
    )
    reqs = _fixture_requirements()
    _write_csv(
        out / "ability_scores.csv",
        "occupation8,ability_id,importance,level",
        [f"{r.occupation8},{r.ability_id},{_fmt(r.importance)},{_fmt(r.level)}" for r in reqs],
    )
    # the crosswalk lists one extra 8-digit code per occupation with no
    # ability data, exercising sibling-mean imputation
    xwalk_rows = []
    for occ in sorted(OCCUPATIONS):
        for suffix in ("01", "02", "03"):
            xwalk_rows.append(f"{occ}{suffix},{occ},1")
    _write_csv(out / "crosswalk_occ8_to_occ6.csv", "from_code,to_code,weight", xwalk_rows)

    micro_rows = []
    for occ, titles in sorted(MICRO_OCC_TITLES.items()):
        for t in titles:
            micro_rows.append(f"{t},occupation,{occ},2016")
    for ind4, titles in sorted(MICRO_IND_TITLES.items()):
        for i, t in enumerate(titles):
            micro_rows.append(f"{t},industry,{ind4}{10 * (i + 1)},2016")
    _write_csv(out / "microtitles.csv", "title,kind,code,vintage", micro_rows)

    title_sets = _alt_title_sets()
    alt_rows = [
        f"{occ},{year},{title}"
        for (occ, year) in sorted(title_sets)
        for title in sorted(title_sets[(occ, year)])
    ]
    _write_csv(out / "alt_titles.csv", "occupation6,year,title", alt_rows)

    _write_csv(
        out / "job_zones.csv",
        "occupation6,job_zone",
        [f"{occ},{zone}" for occ, (_, zone) in sorted(OCCUPATIONS.items())],
    )

    _write_embedding_stores(out)
    _verify_new_work_ground_truth(out)

    auto6, augm = _compute_fixture_exposures(posts)
    _write_outcomes_and_covariates(out, rng, auto6, augm)
    _write_configs(out)


def _write_embedding_stores(out: Path) -> None:
    """EMB1 stores keyed by entity text (titles store normalized forms too)."""
    from .newwork import normalize_title

    emb_dir = out / "embeddings"
    emb_dir.mkdir(exist_ok=True)

    def dump(name: str, texts: set[str]) -> None:
        store = semlink.hash_embeddings({t: t for t in sorted(texts)}, HASH_DIM, HASH_SEED)
        semlink.write_embedding_store(store, emb_dir / f"{name}.emb")

    dump("tag_names", {name for _, name, _, _ in TAGS})
    descs = {desc if desc else name for _, name, desc, _ in TAGS}
    descs |= {"legacy notes on " + name for _, name, _, is_ai in TAGS if is_ai}
    dump("tag_descriptions", descs)
    dump("ability_names", {name for _, name, _ in ABILITIES})
    dump("ability_descriptions", {desc for _, _, desc in ABILITIES})
    dump("occupation_titles", {t for ts in MICRO_OCC_TITLES.values() for t in ts})
    dump("industry_titles", {t for ts in MICRO_IND_TITLES.values() for t in ts})
    all_titles = {
        normalize_title(t)
        for titles in _alt_title_sets().values()
        for t in titles
    }
    dump("alternate_titles", all_titles)


def _verify_new_work_ground_truth(out: Path) -> None:
    """The committed fixture must reproduce the planted ledger exactly."""
    from .newwork import normalize_title

    title_sets = _alt_title_sets()
    sets = [
        TitleSet.build(occ, year, titles)
        for (occ, year), titles in sorted(title_sets.items())
    ]
    all_norm = {t for ts in sets for t in ts.normalized}
    store = semlink.hash_embeddings({t: t for t in sorted(all_norm)}, HASH_DIM, HASH_SEED)
    ledger = build_ledger(sets, EmbeddingSimilarity(store), 0.7)
    expected = {
        (occ, year, normalize_title(title)) for occ, year, title in PLANTED_NEW
    }
    detected = set(ledger.entries)
    if detected != expected:
        raise AssertionError(
            f"fixture ground truth drifted: planted {sorted(expected)}, "
            f"detected {sorted(detected)}"
        )


def _write_outcomes_and_covariates(
    out: Path, rng: np.random.Generator, auto6, augm
) -> None:
    occs = sorted(OCCUPATIONS)
    inds = sorted(INDUSTRIES)
    grid = [
        ((o, i), y) for o in occs for i in inds for y in PANEL_YEARS
    ]
    auto_z = _standardize_grid(auto6, [(o, y) for o in occs for y in PANEL_YEARS])
    augm_z = _standardize_grid(augm, grid)

    occ_fx = {o: rng.normal(0, 0.4) for o in occs}
    ind_fx = {i: rng.normal(0, 0.3) for i in inds}
    year_fx = {y: 0.01 * (y - 2015) for y in PANEL_YEARS}

    outcome_rows = []
    planted_gaps = {(occs[2], inds[3], 2018), (occs[5], inds[1], 2021)}
    for o in occs:
        for i in inds:
            base_emp = float(np.exp(7.0 + occ_fx[o] + ind_fx[i]))
            for y in list(PANEL_YEARS) + [2014]:
                if (o, i, y) in planted_gaps:
                    continue
                if y == 2014:
                    # pre-window rows: exercised by the year filter
                    wage_real = float(np.exp(3.0 + 0.1 * occ_fx[o]))
                    emp = base_emp
                else:
                    az = auto_z[(o, y)]
                    gz = augm_z[((o, i), y)]
                    log_wage = (
                        3.0 + 0.5 * occ_fx[o] + 0.2 * ind_fx[i] + year_fx[y]
                        - 0.08 * az + 0.01 * gz + rng.normal(0, 0.05)
                    )
                    log_emp = (
                        np.log(base_emp) + year_fx[y] + 0.04 * gz + 0.0 * az
                        + rng.normal(0, 0.08)
                    )
                    wage_real = float(np.exp(log_wage))
                    emp = float(np.exp(log_emp))
                deflator = 1.0 + 0.02 * (y - 2014)
                outcome_rows.append(
                    f"{o},{i},{y},{_fmt(wage_real * deflator)},{_fmt(emp)},{_fmt(deflator)}"
                )
    _write_csv(
        out / "outcomes.csv",
        "occupation6,industry4,year,mean_hourly_wage,employment,deflator",
        outcome_rows,
    )

    share_cols = {
        "share_gender_": ["female", "male"],
        "share_age_": ["a14_34", "a35_54", "a55_99"],
        "share_race_": ["white", "black", "asian", "other"],
        "share_eth_": ["hisp", "nonhisp"],
        "share_edu_": ["hs", "college", "ba", "na"],
    }
    header = ["industry4", "year", "imports_per_capita"]
    for prefix, cats in share_cols.items():
        header.extend(prefix + c for c in cats)
    cov_rows = []
    for i in inds:
        base_alpha = {p: rng.uniform(2, 8, size=len(c)) for p, c in share_cols.items()}
        for y in list(PANEL_YEARS) + [2014]:
            imports = float(rng.uniform(0, 40)) if rng.uniform() > 0.05 else 0.0
            cells = [i, str(y), _fmt(imports)]
            for prefix, cats in share_cols.items():
                shares = rng.dirichlet(base_alpha[prefix])
                shares = np.round(shares, 9)
                shares[-1] = round(1.0 - float(shares[:-1].sum()), 9)
                cells.extend(_fmt(s) for s in shares)
            cov_rows.append(",".join(cells))
    _write_csv(out / "covariates.csv", ",".join(header), cov_rows)


_CONFIG_TEMPLATE = """# synthetic fixture run configuration
[inputs]
posts = posts.jsonl
tags = {tags}
abilities = abilities.csv
ability_scores = ability_scores.csv
microtitles = microtitles.csv
crosswalk_occ8_to_occ6 = crosswalk_occ8_to_occ6.csv
alt_titles = alt_titles.csv
outcomes = outcomes.csv
covariates = covariates.csv

[embeddings]
backend = files
tag_names = embeddings/tag_names.emb
tag_descriptions = embeddings/tag_descriptions.emb
ability_names = embeddings/ability_names.emb
ability_descriptions = embeddings/ability_descriptions.emb
occupation_titles = embeddings/occupation_titles.emb
industry_titles = embeddings/industry_titles.emb
alternate_titles = embeddings/alternate_titles.emb

[params]
countries = {countries}
year_start = 2010
year_end = 2022
panel_year_start = 2015
panel_year_end = 2022
decay = 0.5
quantile = {quantile}
new_work_threshold = 0.7
weights = {weights}
standardize_sample = panel
importance_bounds = 1 5
level_bounds = 0 7

[iv]
countries = {iv_countries}
lag = 5

[output]
dir = {out_dir}
"""


def _write_configs(out: Path) -> None:
    presets = {
        "config.ini": {},
        "config_fullmatrix.ini": {"quantile": "1"},
        "config_current_weights.ini": {"weights": "current"},
        "config_alt_descriptions.ini": {"tags": "tags_alt_descriptions.csv"},
        "config_iv_high_income.ini": {"iv_countries": " ".join(IV_HIGH_INCOME)},
    }
    for name, overrides in presets.items():
        params = {
            "tags": "tags.csv",
            "countries": " ".join(MAIN_COUNTRIES),
            "iv_countries": " ".join(IV_COUNTRIES),
            "quantile": "0.25",
            "weights": "base_year:2015",
            "out_dir": "out" if name == "config.ini" else f"out_{name[7:-4]}",
        }
        params.update(overrides)
        (out / name).write_text(_CONFIG_TEMPLATE.format(**params), encoding="utf-8")
