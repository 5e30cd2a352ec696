"""Exposure series: cumulative weighted tag-score sums, hierarchy
aggregation, augmentation combination, standardization, and year lags.

All series are raw until :func:`standardize` is applied; the sample used
for the z-score is explicit because the estimation panel, not the series'
own support, is the usual reference population.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .corpus import AbilityRequirement, Crosswalk
from .errors import DataError, NumericalError
from .semlink import TransitionMatrix

__all__ = [
    "ExposureSeries",
    "ability_exposure",
    "occupation_automation",
    "microtitle_exposure",
    "aggregate",
    "combine_augmentation",
    "standardize",
    "shift_years",
]

EntityKey = str | tuple[str, str]


@dataclass(frozen=True)
class ExposureSeries:
    """Entity-by-year exposure values at one aggregation level."""

    level: str
    values: dict[tuple[EntityKey, int], float]
    standardized: bool = False

    def entities(self) -> list[EntityKey]:
        return sorted({e for e, _ in self.values})

    def years(self) -> list[int]:
        return sorted({y for _, y in self.values})

    def get(self, entity: EntityKey, year: int) -> float:
        key = (entity, year)
        if key not in self.values:
            raise KeyError(f"no value for {entity} in {year}")
        return self.values[key]

    def series_for(self, entity: EntityKey) -> dict[int, float]:
        return {y: v for (e, y), v in sorted(self.values.items()) if e == entity}


def _cumulative_weighted(
    tag_scores: Mapping[str, Mapping[int, float]],
    transition: TransitionMatrix,
    level: str,
) -> ExposureSeries:
    """Shared core: cumulative sum over years of sum_g score_g(t) * C[row, g].

    Rows with no surviving links get an all-zero series; transition columns
    with no score observed contribute nothing."""
    years = sorted({y for scores in tag_scores.values() for y in scores})
    if not years:
        raise DataError("no tag scores to accumulate")
    year_range = list(range(years[0], years[-1] + 1))
    by_row = transition.by_row()
    values: dict[tuple[EntityKey, int], float] = {}
    for row in transition.row_ids:
        links = by_row[row]
        running = 0.0
        for year in year_range:
            flow = math.fsum(
                weight * tag_scores[tag].get(year, 0.0)
                for tag, weight in sorted(links.items())
                if tag in tag_scores
            )
            running += flow
            values[(row, year)] = running
    return ExposureSeries(level, values)


def ability_exposure(
    tag_scores: Mapping[str, Mapping[int, float]], transition: TransitionMatrix
) -> ExposureSeries:
    """Cumulative similarity-weighted tag scores per ability."""
    return _cumulative_weighted(tag_scores, transition, "ability")


def microtitle_exposure(
    tag_scores: Mapping[str, Mapping[int, float]],
    transition_occ: TransitionMatrix,
    transition_ind: TransitionMatrix,
) -> tuple[ExposureSeries, ExposureSeries]:
    """Cumulative exposure per micro-occupation title and micro-industry title."""
    occ = _cumulative_weighted(tag_scores, transition_occ, "micro_occupation")
    ind = _cumulative_weighted(tag_scores, transition_ind, "micro_industry")
    return occ, ind


def _rescale(x: float, bounds: tuple[float, float]) -> float:
    lo, hi = bounds
    if hi <= lo:
        raise DataError(f"invalid scale bounds {bounds}")
    return (x - lo) / (hi - lo)


def occupation_automation(
    ability_series: ExposureSeries,
    requirements: Sequence[AbilityRequirement],
    importance_bounds: tuple[float, float] = (1.0, 5.0),
    level_bounds: tuple[float, float] = (0.0, 7.0),
) -> ExposureSeries:
    """Weighted average of ability exposure per 8-digit occupation.

    Weights are rescale(importance) * rescale(level) using the declared
    source-scale bounds, normalized by their sum within the occupation."""
    years = ability_series.years()
    by_occ: dict[str, list[AbilityRequirement]] = {}
    for req in requirements:
        by_occ.setdefault(req.occupation8, []).append(req)

    known_abilities = set(ability_series.entities())
    values: dict[tuple[EntityKey, int], float] = {}
    for occ in sorted(by_occ):
        reqs = sorted(by_occ[occ], key=lambda r: r.ability_id)
        missing = [r.ability_id for r in reqs if r.ability_id not in known_abilities]
        if missing:
            raise DataError(
                f"occupation {occ} requires abilities with no exposure series: "
                + ", ".join(missing)
            )
        weights = [
            _rescale(r.importance, importance_bounds) * _rescale(r.level, level_bounds)
            for r in reqs
        ]
        total = math.fsum(weights)
        if total <= 0.0:
            raise DataError(f"occupation {occ} has all-zero ability weights")
        for year in years:
            num = math.fsum(
                w * ability_series.get(r.ability_id, year)
                for r, w in zip(reqs, weights)
            )
            values[(occ, year)] = num / total
    return ExposureSeries("occupation8", values)


def aggregate(
    series: ExposureSeries,
    grouping: Mapping[str, str] | Crosswalk,
    impute: bool = False,
    level: str = "aggregated",
    broad_of: Callable[[str], str] | None = None,
) -> ExposureSeries:
    """Unweighted mean of fine-entity values within each target code.

    ``grouping`` maps fine codes to target codes (a many-to-one Crosswalk
    is accepted). With ``impute``, a fine code present in the grouping but
    absent from the series takes the mean of its siblings under the same
    target; if the whole target group is empty, the mean of its broad
    group (default: first 3 characters of the target code). A fine code
    that cannot be imputed at any level is an error."""
    mapping = grouping.grouping() if isinstance(grouping, Crosswalk) else dict(grouping)
    broad_of = broad_of or (lambda code: code[:3])
    years = series.years()
    present = set(series.entities())
    uncovered = present - set(mapping)
    if uncovered:
        raise DataError(
            "grouping does not cover entities: " + ", ".join(sorted(uncovered)[:10])
        )

    by_target: dict[str, list[str]] = {}
    for fine, target in sorted(mapping.items()):
        by_target.setdefault(target, []).append(fine)
    by_broad: dict[str, list[str]] = {}
    for target in by_target:
        by_broad.setdefault(broad_of(target), []).append(target)

    fine_values: dict[tuple[str, int], float] = {
        (e, y): v for (e, y), v in series.values.items()
    }
    if impute:
        for target in sorted(by_target):
            for fine in by_target[target]:
                if fine in present:
                    continue
                for year in years:
                    sibling_vals = [
                        fine_values[(s, year)]
                        for s in by_target[target]
                        if (s, year) in fine_values and s in present
                    ]
                    if sibling_vals:
                        fine_values[(fine, year)] = math.fsum(sibling_vals) / len(
                            sibling_vals
                        )
                        continue
                    broad_targets = by_broad[broad_of(target)]
                    broad_vals = [
                        fine_values[(s, year)]
                        for t in broad_targets
                        for s in by_target[t]
                        if (s, year) in fine_values and s in present
                    ]
                    if not broad_vals:
                        raise DataError(
                            f"cannot impute '{fine}': no values in group "
                            f"'{target}' or broad group '{broad_of(target)}'"
                        )
                    fine_values[(fine, year)] = math.fsum(broad_vals) / len(broad_vals)

    values: dict[tuple[EntityKey, int], float] = {}
    for target in sorted(by_target):
        for year in years:
            child_vals = [
                fine_values[(fine, year)]
                for fine in by_target[target]
                if (fine, year) in fine_values
            ]
            if child_vals:
                values[(target, year)] = math.fsum(child_vals) / len(child_vals)
    return ExposureSeries(level, values)


def combine_augmentation(
    occ_series: ExposureSeries,
    ind_series: ExposureSeries,
    cells: Iterable[tuple[str, str]] | None = None,
) -> tuple[ExposureSeries, int]:
    """Average the occupation and industry components over requested cells.

    Defaults to the full occupation x industry grid. Cells with a missing
    component are left absent and counted."""
    occ_years, ind_years = set(occ_series.years()), set(ind_series.years())
    if occ_years != ind_years:
        raise DataError(
            f"year ranges differ: occupations {sorted(occ_years)} vs "
            f"industries {sorted(ind_years)}"
        )
    if cells is None:
        cells = [
            (o, i) for o in occ_series.entities() for i in ind_series.entities()
        ]
    values: dict[tuple[EntityKey, int], float] = {}
    missing = 0
    for occ, ind in sorted(cells):
        for year in sorted(occ_years):
            has_occ = (occ, year) in occ_series.values
            has_ind = (ind, year) in ind_series.values
            if not (has_occ and has_ind):
                missing += 1
                continue
            values[((occ, ind), year)] = (
                occ_series.values[(occ, year)] + ind_series.values[(ind, year)]
            ) / 2.0
    return ExposureSeries("occ6_x_ind4", values), missing


def standardize(
    series: ExposureSeries,
    sample: Iterable[tuple[EntityKey, int]] | None = None,
) -> ExposureSeries:
    """Z-score using the mean and population standard deviation of the
    pooled (entity, year) cells in ``sample`` (default: all cells)."""
    keys = sorted(series.values) if sample is None else sorted(sample)
    missing = [k for k in keys if k not in series.values]
    if missing:
        raise DataError(
            f"standardization sample includes absent cells, e.g. {missing[0]}"
        )
    if not keys:
        raise DataError("empty standardization sample")
    data = np.array([series.values[k] for k in keys], dtype=np.float64)
    mean = float(data.mean())
    sd = float(data.std(ddof=0))
    if sd == 0.0:
        raise NumericalError("zero variance in standardization sample")
    values = {k: (v - mean) / sd for k, v in series.values.items()}
    return ExposureSeries(series.level, values, standardized=True)


def shift_years(series: ExposureSeries, lag: int) -> ExposureSeries:
    """Map value(entity, t) to (entity, t + lag); used to lag instruments."""
    if lag < 0:
        raise DataError(f"lag must be >= 0, got {lag}")
    values = {(e, y + lag): v for (e, y), v in series.values.items()}
    return ExposureSeries(series.level, values, standardized=series.standardized)


def write_exposure(series: ExposureSeries, path: str | Path) -> int:
    """Dump entity_key,year,value,standardized_flag (9 significant digits).

    Tuple keys (occupation x industry) serialize as occ|ind."""
    rows = 0
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("entity_key,year,value,standardized_flag\n")
        for (entity, year) in sorted(series.values, key=_sort_key):
            key = entity if isinstance(entity, str) else "|".join(entity)
            flag = int(series.standardized)
            fh.write(f"{key},{year},{series.values[(entity, year)]:.9g},{flag}\n")
            rows += 1
    return rows


def read_exposure(path: str | Path, level: str) -> ExposureSeries:
    values: dict[tuple[EntityKey, int], float] = {}
    standardized = False
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != "entity_key,year,value,standardized_flag":
            raise DataError(f"{path}: unexpected exposure header '{header}'")
        for line in fh:
            key, year, value, flag = line.rstrip("\n").split(",")
            entity: EntityKey = tuple(key.split("|")) if "|" in key else key
            values[(entity, int(year))] = float(value)
            standardized = flag == "1"
    return ExposureSeries(level, values, standardized=standardized)


def _sort_key(item: tuple[EntityKey, int]):
    entity, year = item
    flat = entity if isinstance(entity, str) else "|".join(entity)
    return (flat, year)
