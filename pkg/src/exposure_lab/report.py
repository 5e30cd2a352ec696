"""Result serialization: flat CSV, JSON metadata, and plain-text grids
shaped like a six-column regression table with OLS and 2SLS panels."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Mapping, Sequence

from .estimator import RegressionResult

__all__ = ["write_results_csv", "write_results_json", "render_table", "write_tables"]

_CSV_HEADER = (
    "spec_id,term,coef,se,stars,fstat_auto,fstat_augm,r2,r2_within,n,clusters"
)


def _fstat_for(result: RegressionResult, term: str) -> str:
    for fs in result.first_stages:
        if fs.endogenous == term:
            return f"{fs.fstat:.9g}"
    return ""


def write_results_csv(results: Sequence[RegressionResult], path: str | Path) -> int:
    rows = 0
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(_CSV_HEADER + "\n")
        for res in results:
            f_auto = _fstat_for(res, "auto_ai")
            f_augm = _fstat_for(res, "augm_ai")
            for term, coef, se, stars in zip(res.terms, res.coef, res.se, res.stars):
                fh.write(
                    f"{res.spec_name},{term},{coef:.9g},{se:.9g},{stars},"
                    f"{f_auto},{f_augm},{res.r2:.9g},{res.r2_within:.9g},"
                    f"{res.n_obs},{res.n_clusters}\n"
                )
                rows += 1
    return rows


def write_results_json(results: Sequence[RegressionResult], path: str | Path) -> None:
    payload = []
    for res in results:
        payload.append(
            {
                "spec": res.spec_name,
                "terms": list(res.terms),
                "coef": [round(c, 12) for c in res.coef],
                "se": [round(s, 12) for s in res.se],
                "tstats": [round(t, 12) for t in res.tstats],
                "stars": list(res.stars),
                "r2": round(res.r2, 12),
                "r2_within": round(res.r2_within, 12),
                "n_obs": res.n_obs,
                "n_clusters": res.n_clusters,
                "n_singletons_dropped": res.n_singletons_dropped,
                "first_stages": [
                    {
                        "endogenous": fs.endogenous,
                        "terms": list(fs.terms),
                        "coef": [round(c, 12) for c in fs.coef],
                        "se": [round(s, 12) for s in fs.se],
                        "fstat": round(fs.fstat, 12),
                    }
                    for fs in res.first_stages
                ],
            }
        )
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


_VAR_LABELS = (("auto_ai", "Automation AI"), ("augm_ai", "Augmentation AI"))


def render_table(
    title: str,
    ols: Sequence[RegressionResult],
    tsls: Sequence[RegressionResult],
) -> str:
    """Six-column grid with an OLS panel on top and a 2SLS panel below."""
    n_cols = len(ols)
    width = 14
    label_w = 26

    def row(label: str, cells: list[str]) -> str:
        return label.ljust(label_w) + "".join(c.rjust(width) for c in cells) + "\n"

    def coef_cells(results, term) -> tuple[list[str], list[str]]:
        top, bottom = [], []
        for res in results:
            tm = res.term_map()
            if term in tm:
                coef, se, stars = tm[term]
                top.append(f"{coef:.3f}{stars}")
                bottom.append(f"({se:.3f})")
            else:
                top.append("")
                bottom.append("")
        return top, bottom

    out = title + "\n"
    out += "=" * (label_w + width * n_cols) + "\n"
    out += row("", [f"({i + 1})" for i in range(n_cols)])
    out += "-" * (label_w + width * n_cols) + "\n"

    out += "Panel A: OLS\n"
    for term, label in _VAR_LABELS:
        top, bottom = coef_cells(ols, term)
        if any(top):
            out += row(label, top)
            out += row("", bottom)
    out += row("R2 adj.", [f"{r.r2:.3f}" for r in ols])
    out += row("R2 within adj.", [f"{r.r2_within:.3f}" for r in ols])
    out += "-" * (label_w + width * n_cols) + "\n"

    out += "Panel B: 2SLS\n"
    for term, label in _VAR_LABELS:
        top, bottom = coef_cells(tsls, term)
        if any(top):
            out += row(label, top)
            out += row("", bottom)
    f_auto = [_fstat_for(r, "auto_ai") for r in tsls]
    f_augm = [_fstat_for(r, "augm_ai") for r in tsls]
    out += row("F-Stat (auto)", [f"{float(f):.1f}" if f else "" for f in f_auto])
    out += row("F-Stat (augm)", [f"{float(f):.1f}" if f else "" for f in f_augm])
    out += "-" * (label_w + width * n_cols) + "\n"

    fe_occind = ["x"] * n_cols
    fe_indyear = ["x" if i % 2 == 1 else "" for i in range(n_cols)]
    out += row("Covariates", ["x"] * n_cols)
    out += row("FE occ x ind", fe_occind)
    out += row("FE ind3 x year", fe_indyear)
    out += row("Observations", [str(r.n_obs) for r in ols])
    out += row("Clusters", [str(r.n_clusters) for r in ols])
    out += "=" * (label_w + width * n_cols) + "\n"
    return out


def write_tables(
    tables: Mapping[str, tuple[Sequence[RegressionResult], Sequence[RegressionResult]]],
    path: str | Path,
) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for title, (ols, tsls) in tables.items():
            fh.write(render_table(title, ols, tsls))
            fh.write("\n")
