"""Weighted OLS/2SLS with absorbed fixed effects and clustered inference.

The solver path is: drop singleton fixed-effect groups, absorb every
factor by iterated weighted demeaning, estimate by QR-based weighted
least squares (two stages when instruments are present), then form the
cluster-robust sandwich covariance with a G/(G-1) * (N-1)/(N-K)
small-sample correction.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.linalg

from .errors import DataError, NumericalError
from .hdfe import absorb_fixed_effects, drop_singletons, encode_factor

__all__ = [
    "RegressionSpec",
    "RegressionResult",
    "FirstStage",
    "wls",
    "tsls",
    "cluster_vcov",
    "first_stage_f",
    "run_spec",
]

# two-sided normal critical values for 1% / 5% / 10%
_CRIT_1 = 2.5758293035489004
_CRIT_5 = 1.959963984540054
_CRIT_10 = 1.6448536269514722

PANEL_KEY = ("occupation6", "industry4", "year")


def _stars(t: float) -> str:
    at = abs(t)
    if at >= _CRIT_1:
        return "***"
    if at >= _CRIT_5:
        return "**"
    if at >= _CRIT_10:
        return "*"
    return ""


def wls(
    y: np.ndarray,
    X: np.ndarray,
    weights: np.ndarray | None = None,
    names: Sequence[str] | None = None,
) -> np.ndarray:
    """Minimize sum of w * (y - X b)^2 via pivoted QR.

    Rank deficiency raises, listing the redundant columns by name."""
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    n, k = X.shape
    if y.shape[0] != n:
        raise DataError(f"y has {y.shape[0]} rows, X has {n}")
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=np.float64)
    if not (np.all(np.isfinite(y)) and np.all(np.isfinite(X)) and np.all(np.isfinite(w))):
        raise NumericalError("non-finite values in regression inputs")
    if np.any(w <= 0):
        raise NumericalError("weights must be strictly positive")

    sw = np.sqrt(w)
    Xw = X * sw[:, None]
    yw = y * sw
    q, r, piv = scipy.linalg.qr(Xw, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    threshold = diag[0] * max(n, k) * np.finfo(np.float64).eps if diag.size else 0.0
    rank = int(np.sum(diag > threshold))
    if rank < k:
        bad = sorted(piv[rank:])
        labels = (
            ", ".join(names[i] for i in bad)
            if names is not None
            else ", ".join(f"column {i}" for i in bad)
        )
        raise NumericalError(f"rank-deficient design; collinear columns: {labels}")
    rhs = q.T @ yw
    beta_piv = scipy.linalg.solve_triangular(r, rhs)
    beta = np.empty(k)
    beta[piv] = beta_piv
    return beta


def tsls(
    y: np.ndarray,
    X_endog: np.ndarray,
    X_exog: np.ndarray | None,
    Z: np.ndarray,
    weights: np.ndarray | None = None,
) -> np.ndarray:
    """Two-stage least squares; returns endogenous then exogenous coefficients."""
    beta, _, _ = _tsls_parts(y, X_endog, X_exog, Z, weights)
    return beta


def _tsls_parts(y, X_endog, X_exog, Z, weights):
    n = np.asarray(y).reshape(-1).shape[0]
    X_endog = np.asarray(X_endog, dtype=np.float64).reshape(n, -1)
    Z = np.asarray(Z, dtype=np.float64).reshape(n, -1)
    exog = (
        np.empty((n, 0))
        if X_exog is None
        else np.asarray(X_exog, dtype=np.float64).reshape(n, -1)
    )
    if Z.shape[1] < X_endog.shape[1]:
        raise DataError(
            f"{Z.shape[1]} instruments cannot identify {X_endog.shape[1]} "
            "endogenous regressors"
        )
    W = np.column_stack([Z, exog])
    try:
        fitted = np.empty_like(X_endog)
        for j in range(X_endog.shape[1]):
            pi = wls(X_endog[:, j], W, weights)
            fitted[:, j] = W @ pi
    except NumericalError as exc:
        raise NumericalError(f"first stage failed: {exc}") from exc
    X_hat = np.column_stack([fitted, exog])
    try:
        beta = wls(y, X_hat, weights)
    except NumericalError as exc:
        raise NumericalError(f"weak-rank first stage: {exc}") from exc
    return beta, X_hat, fitted


@dataclass(frozen=True)
class DofSpec:
    """Degrees-of-freedom convention for the small-sample correction."""

    n_params: int | None = None  # defaults to the regressor count
    extra_df: int = 0  # e.g. absorbed fixed-effect dof, if desired


def cluster_vcov(
    X: np.ndarray,
    residuals: np.ndarray,
    clusters: np.ndarray,
    weights: np.ndarray | None = None,
    dof: DofSpec = DofSpec(),
) -> np.ndarray:
    """Cluster-robust sandwich: bread (X'WX)^-1, meat from cluster-summed
    weighted scores, scaled by G/(G-1) * (N-1)/(N-K)."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    e = np.asarray(residuals, dtype=np.float64).reshape(-1)
    n, k = X.shape
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=np.float64)
    codes = encode_factor(clusters)
    n_clusters = int(codes.max()) + 1 if codes.size else 0
    if n_clusters < 2:
        raise NumericalError("clustered inference requires at least 2 clusters")

    scores = X * (w * e)[:, None]
    summed = np.empty((n_clusters, k))
    for j in range(k):
        summed[:, j] = np.bincount(codes, scores[:, j], minlength=n_clusters)
    meat = summed.T @ summed

    bread = np.linalg.inv(X.T @ (X * w[:, None]))
    k_model = (dof.n_params if dof.n_params is not None else k) + dof.extra_df
    if n - k_model <= 0:
        raise NumericalError(
            f"degrees of freedom exhausted: n={n}, model df={k_model}"
        )
    correction = (n_clusters / (n_clusters - 1)) * ((n - 1) / (n - k_model))
    return correction * bread @ meat @ bread


@dataclass(frozen=True)
class FirstStage:
    """One endogenous regressor's first-stage coefficients and F-statistic."""

    endogenous: str
    terms: tuple[str, ...]
    coef: tuple[float, ...]
    se: tuple[float, ...]
    fstat: float


def first_stage_f(
    coef: np.ndarray, vcov: np.ndarray, excluded: Sequence[int]
) -> float:
    """Cluster-robust Wald statistic on the excluded instruments over their
    count."""
    idx = list(excluded)
    if not idx:
        raise DataError("no excluded instruments")
    b = np.asarray(coef, dtype=np.float64)[idx]
    V = np.asarray(vcov, dtype=np.float64)[np.ix_(idx, idx)]
    try:
        solved = np.linalg.solve(V, b)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"singular instrument covariance block: {exc}") from exc
    return float(b @ solved) / len(idx)


@dataclass(frozen=True)
class RegressionSpec:
    """One table column: variables, fixed effects, clustering, weighting.

    Fixed-effect factors and the cluster factor are tuples of panel
    columns whose combined labels define the groups."""

    name: str
    dependent: str
    exogenous: tuple[str, ...]
    endogenous: tuple[str, ...] = ()
    instruments: tuple[str, ...] = ()
    fixed_effects: tuple[tuple[str, ...], ...] = ()
    cluster: tuple[str, ...] = ()
    weights: str | None = None

    def __post_init__(self) -> None:
        if self.endogenous and len(self.instruments) < len(self.endogenous):
            raise DataError(
                f"spec '{self.name}': {len(self.instruments)} instruments for "
                f"{len(self.endogenous)} endogenous regressors"
            )
        if len(self.endogenous) > 2:
            raise DataError(f"spec '{self.name}': at most 2 endogenous regressors")
        if not self.cluster:
            raise DataError(f"spec '{self.name}': cluster factor is required")


@dataclass(frozen=True)
class RegressionResult:
    spec_name: str
    terms: tuple[str, ...]
    coef: tuple[float, ...]
    se: tuple[float, ...]
    tstats: tuple[float, ...]
    stars: tuple[str, ...]
    first_stages: tuple[FirstStage, ...]
    r2: float
    r2_within: float
    n_obs: int
    n_clusters: int
    n_singletons_dropped: int

    def term_map(self) -> dict[str, tuple[float, float, str]]:
        return {
            t: (c, s, st)
            for t, c, s, st in zip(self.terms, self.coef, self.se, self.stars)
        }


def _combined_labels(frame, columns: tuple[str, ...]) -> np.ndarray:
    parts = [frame[c].astype(str).to_numpy() for c in columns]
    if len(parts) == 1:
        return parts[0]
    out = parts[0]
    for p in parts[1:]:
        out = np.char.add(np.char.add(out, "\x1f"), p)
    return out


def run_spec(panel, spec: RegressionSpec) -> RegressionResult:
    """Absorb, estimate, and report one specification on a panel frame."""
    needed = (
        {spec.dependent, *spec.exogenous, *spec.endogenous, *spec.instruments}
        | set(spec.cluster)
        | {c for f in spec.fixed_effects for c in f}
    )
    if spec.weights:
        needed.add(spec.weights)
    missing = needed - set(panel.columns)
    if missing:
        raise DataError(
            f"spec '{spec.name}': panel lacks columns: {', '.join(sorted(missing))}"
        )

    sort_cols = [c for c in PANEL_KEY if c in panel.columns]
    frame = panel.sort_values(sort_cols, kind="mergesort") if sort_cols else panel
    frame = frame.reset_index(drop=True)

    factors = [encode_factor(_combined_labels(frame, f)) for f in spec.fixed_effects]
    if factors:
        keep, n_dropped = drop_singletons(factors)
        frame = frame.loc[keep].reset_index(drop=True)
        factors = [encode_factor(codes[keep]) for codes in factors]
    else:
        n_dropped = 0
    n = len(frame)
    if n == 0:
        raise DataError(f"spec '{spec.name}': no observations left")

    y0 = frame[spec.dependent].to_numpy(dtype=np.float64)
    exog = (
        frame[list(spec.exogenous)].to_numpy(dtype=np.float64)
        if spec.exogenous
        else np.empty((n, 0))
    )
    endog = (
        frame[list(spec.endogenous)].to_numpy(dtype=np.float64)
        if spec.endogenous
        else np.empty((n, 0))
    )
    Z = (
        frame[list(spec.instruments)].to_numpy(dtype=np.float64)
        if spec.instruments
        else np.empty((n, 0))
    )
    w = (
        frame[spec.weights].to_numpy(dtype=np.float64)
        if spec.weights
        else np.ones(n)
    )
    if np.any(w <= 0):
        raise DataError(f"spec '{spec.name}': non-positive weights")
    cluster_labels = _combined_labels(frame, spec.cluster)

    block = np.column_stack([y0, endog, exog, Z])
    if factors:
        block = absorb_fixed_effects(block, factors, w)
    y = block[:, 0]
    n_en, n_ex = endog.shape[1], exog.shape[1]
    endog_a = block[:, 1 : 1 + n_en]
    exog_a = block[:, 1 + n_en : 1 + n_en + n_ex]
    Z_a = block[:, 1 + n_en + n_ex :]

    terms = spec.endogenous + spec.exogenous
    names = list(terms)
    if n_en:
        beta, X_hat, _ = _tsls_parts(y, endog_a, exog_a, Z_a, w)
        X_actual = np.column_stack([endog_a, exog_a])
        resid = y - X_actual @ beta
        vcov = cluster_vcov(X_hat, resid, cluster_labels, w)
        first_stages = _first_stage_tables(spec, endog_a, exog_a, Z_a, w, cluster_labels)
    else:
        X = exog_a
        beta = wls(y, X, w, names=names)
        resid = y - X @ beta
        vcov = cluster_vcov(X, resid, cluster_labels, w)
        first_stages = ()

    se = np.sqrt(np.diag(vcov))
    if np.any(se <= 0):
        raise NumericalError(f"spec '{spec.name}': non-positive standard error")
    tstats = beta / se

    fe_df = sum(int(f.max()) + 1 for f in factors) - max(len(factors) - 1, 0)
    k = len(names)
    df_resid = n - k - fe_df
    if df_resid <= 0:
        raise NumericalError(f"spec '{spec.name}': no residual degrees of freedom")
    wmean = float(np.average(y0, weights=w))
    tss_total = float(np.sum(w * (y0 - wmean) ** 2))
    tss_within = float(np.sum(w * y**2)) if factors else tss_total
    rss = float(np.sum(w * resid**2))
    scale = (rss / df_resid) * ((n - 1) if n > 1 else 1)
    r2 = 1.0 - scale / tss_total if tss_total > 0 else float("nan")
    r2_within = 1.0 - scale / tss_within if tss_within > 0 else float("nan")

    n_clusters = len(np.unique(cluster_labels))
    return RegressionResult(
        spec_name=spec.name,
        terms=tuple(names),
        coef=tuple(float(b) for b in beta),
        se=tuple(float(s) for s in se),
        tstats=tuple(float(t) for t in tstats),
        stars=tuple(_stars(t) for t in tstats),
        first_stages=first_stages,
        r2=r2,
        r2_within=r2_within,
        n_obs=n,
        n_clusters=n_clusters,
        n_singletons_dropped=n_dropped,
    )


def _first_stage_tables(
    spec: RegressionSpec,
    endog_a: np.ndarray,
    exog_a: np.ndarray,
    Z_a: np.ndarray,
    w: np.ndarray,
    cluster_labels: np.ndarray,
) -> tuple[FirstStage, ...]:
    """Per-endogenous first stages for diagnostics.

    When the system is exactly identified each endogenous regressor is
    regressed on its positionally paired instrument alone (plus exogenous
    controls), mirroring separate per-instrument F rows; otherwise all
    excluded instruments enter jointly."""
    out = []
    exact = len(spec.instruments) == len(spec.endogenous)
    for j, endog_name in enumerate(spec.endogenous):
        if exact:
            z_cols = [j]
        else:
            z_cols = list(range(Z_a.shape[1]))
        Zj = Z_a[:, z_cols]
        W = np.column_stack([Zj, exog_a])
        term_names = tuple(spec.instruments[i] for i in z_cols) + spec.exogenous
        pi = wls(endog_a[:, j], W, w, names=list(term_names))
        resid = endog_a[:, j] - W @ pi
        vcov = cluster_vcov(W, resid, cluster_labels, w)
        se = np.sqrt(np.diag(vcov))
        fstat = first_stage_f(pi, vcov, list(range(len(z_cols))))
        out.append(
            FirstStage(
                endogenous=endog_name,
                terms=term_names,
                coef=tuple(float(b) for b in pi),
                se=tuple(float(s) for s in se),
                fstat=fstat,
            )
        )
    return tuple(out)
