"""Assembly of the occupation x industry x year estimation panel.

The panel inner-joins outcomes, covariates, new-work shares, and raw
exposure/instrument series, applies log transforms, attaches weights, and
standardizes the exposure columns over the assembled cells (the default
standardization sample).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

import numpy as np
import pandas as pd
import scipy.stats

from .errors import DataError, NumericalError
from .exposure import ExposureSeries

logger = logging.getLogger(__name__)

__all__ = [
    "PanelBuild",
    "build_panel",
    "percentile_rank",
    "skill_partition",
    "load_outcomes",
    "load_covariates",
    "load_job_zones",
    "covariate_columns",
    "validate_panel",
]

SHARE_GROUP_PREFIXES = (
    "share_gender_",
    "share_age_",
    "share_race_",
    "share_eth_",
    "share_edu_",
)

EXPOSURE_COLUMNS = ("auto_ai", "augm_ai", "auto_ai_iv", "augm_ai_iv")


def load_outcomes(path: str | Path) -> pd.DataFrame:
    df = pd.read_csv(
        path, dtype={"occupation6": str, "industry4": str}, keep_default_na=False
    )
    needed = {"occupation6", "industry4", "year", "mean_hourly_wage", "employment"}
    missing = needed - set(df.columns)
    if missing:
        raise DataError(f"{path}: missing columns: {', '.join(sorted(missing))}")
    if "deflator" not in df.columns:
        df["deflator"] = 1.0
    _check_unique(df, ["occupation6", "industry4", "year"], path)
    return df


def load_covariates(path: str | Path) -> pd.DataFrame:
    df = pd.read_csv(path, dtype={"industry4": str}, keep_default_na=False)
    needed = {"industry4", "year", "imports_per_capita"}
    missing = needed - set(df.columns)
    if missing:
        raise DataError(f"{path}: missing columns: {', '.join(sorted(missing))}")
    _check_unique(df, ["industry4", "year"], path)
    _check_share_groups(df, path)
    return df


def load_job_zones(path: str | Path) -> dict[str, int]:
    df = pd.read_csv(path, dtype={"occupation6": str})
    if not {"occupation6", "job_zone"} <= set(df.columns):
        raise DataError(f"{path}: expected columns occupation6,job_zone")
    return dict(zip(df["occupation6"], df["job_zone"].astype(int)))


def _check_unique(df: pd.DataFrame, keys: list[str], source) -> None:
    dupes = df[df.duplicated(keys, keep=False)]
    if len(dupes):
        first = dupes[keys].iloc[0].tolist()
        raise DataError(f"{source}: duplicate keys, first offender {first}")


def _check_share_groups(df: pd.DataFrame, source) -> None:
    for prefix in SHARE_GROUP_PREFIXES:
        cols = sorted(c for c in df.columns if c.startswith(prefix))
        if not cols:
            continue
        sums = df[cols].sum(axis=1)
        bad = np.abs(sums - 1.0) > 1e-6
        if bad.any():
            row = df.loc[bad].iloc[0]
            raise DataError(
                f"{source}: {prefix}* shares sum to {sums[bad].iloc[0]:.8f} "
                f"for industry {row['industry4']} year {row['year']}"
            )


def _series_frame(series: ExposureSeries, value_name: str) -> pd.DataFrame:
    rows = []
    for (entity, year), value in sorted(series.values.items(), key=_key):
        if isinstance(entity, tuple):
            rows.append(
                {"occupation6": entity[0], "industry4": entity[1], "year": year,
                 value_name: value}
            )
        else:
            rows.append({"occupation6": entity, "year": year, value_name: value})
    return pd.DataFrame(rows)


def _key(item):
    entity, year = item[0]
    flat = entity if isinstance(entity, str) else "|".join(entity)
    return (flat, year)


@dataclass
class PanelBuild:
    frame: pd.DataFrame
    dropped: dict[str, int]


def build_panel(
    auto: ExposureSeries,
    augm: ExposureSeries,
    auto_iv: ExposureSeries,
    augm_iv: ExposureSeries,
    shares: Mapping[tuple[str, int], float],
    outcomes: pd.DataFrame,
    covariates: pd.DataFrame,
    weights_spec: str = "base_year:2015",
    year_range: tuple[int, int] | None = None,
    standardize_sample: str = "panel",
) -> PanelBuild:
    """Merge all sources at the occupation-industry-year level.

    ``weights_spec`` is ``base_year:<y>`` (employment fixed at year y) or
    ``current`` (each cell's own-year employment). Cells missing any
    required field are dropped and counted per source."""
    dropped: dict[str, int] = {}
    df = outcomes.copy()
    df["year"] = df["year"].astype(int)
    if year_range is not None:
        before = len(df)
        df = df[(df["year"] >= year_range[0]) & (df["year"] <= year_range[1])]
        dropped["outside_year_window"] = before - len(df)

    bad = (df["mean_hourly_wage"] <= 0) | (df["employment"] <= 0) | (df["deflator"] <= 0)
    if bad.any():
        dropped["nonpositive_outcome"] = int(bad.sum())
        df = df[~bad]

    df["log_wage"] = np.log(df["mean_hourly_wage"] / df["deflator"])
    df["log_emp"] = np.log(df["employment"])

    cov = covariates.copy()
    cov["year"] = cov["year"].astype(int)
    cov["log_imports_pc"] = np.log1p(cov["imports_per_capita"])
    cov = cov.drop(columns=["imports_per_capita"])
    before = len(df)
    df = df.merge(cov, on=["industry4", "year"], how="inner")
    dropped["missing_covariates"] = before - len(df)

    if not shares:
        raise DataError("no new-work shares to merge")
    share_df = pd.DataFrame(
        [
            {"occupation6": occ, "year": year, "new_work_share": value}
            for (occ, year), value in sorted(shares.items())
        ]
    )
    before = len(df)
    df = df.merge(share_df, on=["occupation6", "year"], how="inner")
    dropped["missing_new_work_share"] = before - len(df)

    for name, series, keys in (
        ("auto_ai", auto, ["occupation6", "year"]),
        ("augm_ai", augm, ["occupation6", "industry4", "year"]),
        ("auto_ai_iv", auto_iv, ["occupation6", "year"]),
        ("augm_ai_iv", augm_iv, ["occupation6", "industry4", "year"]),
    ):
        sf = _series_frame(series, name)
        if sf.empty:
            raise DataError(f"exposure series '{name}' is empty")
        before = len(df)
        df = df.merge(sf, on=keys, how="inner")
        dropped[f"missing_{name}"] = before - len(df)

    if weights_spec.startswith("base_year:"):
        base_year = int(weights_spec.split(":", 1)[1])
        base = outcomes[outcomes["year"] == base_year][
            ["occupation6", "industry4", "employment"]
        ].rename(columns={"employment": "weight"})
        before = len(df)
        df = df.merge(base, on=["occupation6", "industry4"], how="inner")
        dropped["missing_base_weight"] = before - len(df)
    elif weights_spec == "current":
        df["weight"] = df["employment"]
    else:
        raise DataError(f"unknown weights_spec '{weights_spec}'")

    bad_w = df["weight"] <= 0
    if bad_w.any():
        dropped["nonpositive_weight"] = int(bad_w.sum())
        df = df[~bad_w]

    df["industry3"] = df["industry4"].map(lambda c: c if len(c) <= 3 else c[:3])
    df = df.drop(columns=["mean_hourly_wage", "employment", "deflator"])
    df = df.sort_values(["occupation6", "industry4", "year"], kind="mergesort")
    df = df.reset_index(drop=True)
    if df.empty:
        raise DataError("panel is empty after joins")

    if standardize_sample not in ("panel", "series"):
        raise DataError(f"unknown standardization sample '{standardize_sample}'")
    for col in EXPOSURE_COLUMNS:
        values = df[col].to_numpy(dtype=np.float64)
        mean = float(values.mean())
        sd = float(values.std(ddof=0))
        if sd == 0.0:
            raise NumericalError(f"zero variance in exposure column '{col}'")
        if standardize_sample == "panel":
            df[col] = (values - mean) / sd
        # "series": columns arrive already standardized upstream

    for reason, count in sorted(dropped.items()):
        if count:
            logger.info("build_panel: dropped %d cells (%s)", count, reason)
    validate_panel(df)
    return PanelBuild(df, dropped)


def validate_panel(df: pd.DataFrame) -> None:
    """Bulk-check the per-cell invariants after a build."""
    _check_unique(df, ["occupation6", "industry4", "year"], "panel")
    if (df["weight"] <= 0).any():
        raise DataError("panel contains non-positive weights")
    _check_share_groups(df, "panel")


def covariate_columns(df: pd.DataFrame) -> list[str]:
    """Regression covariates: log imports plus each demographic share group
    with its alphabetically-first category dropped as the reference."""
    cols = ["log_imports_pc"]
    for prefix in SHARE_GROUP_PREFIXES:
        group = sorted(c for c in df.columns if c.startswith(prefix))
        cols.extend(group[1:])
    return cols


def percentile_rank(values) -> np.ndarray:
    """Average-rank percentiles in (0, 1]: rank / N with ties averaged."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.size == 0:
        raise DataError("percentile_rank of empty input")
    return scipy.stats.rankdata(arr, method="average") / arr.size


def skill_partition(
    df: pd.DataFrame, job_zones: Mapping[str, int]
) -> dict[str, pd.DataFrame]:
    """Split a panel by preparation level: zones 1-2 low, 3 middle, 4-5 high."""
    occs = df["occupation6"].unique()
    unmapped = sorted(o for o in occs if o not in job_zones)
    if unmapped:
        raise DataError(
            "occupations missing from job zone table: " + ", ".join(unmapped[:10])
        )
    zone = df["occupation6"].map(job_zones)
    out = {
        "low": df[zone <= 2].reset_index(drop=True),
        "middle": df[zone == 3].reset_index(drop=True),
        "high": df[zone >= 4].reset_index(drop=True),
    }
    return out


def write_panel(df: pd.DataFrame, path: str | Path) -> int:
    """Serialize the panel with 9-significant-digit floats."""
    out = df.copy()
    float_cols = out.select_dtypes(include=[np.floating]).columns
    for col in float_cols:
        out[col] = out[col].map(lambda v: f"{v:.9g}")
    out.to_csv(path, index=False, lineterminator="\n")
    return len(out)


def read_panel(path: str | Path) -> pd.DataFrame:
    df = pd.read_csv(
        path,
        dtype={"occupation6": str, "industry4": str, "industry3": str},
        keep_default_na=False,
    )
    for col in df.columns:
        if col in ("occupation6", "industry4", "industry3"):
            continue
        if col == "year":
            df[col] = df[col].astype(int)
        else:
            df[col] = df[col].astype(float)
    return df
