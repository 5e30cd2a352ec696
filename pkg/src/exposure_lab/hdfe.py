"""High-dimensional fixed-effect absorption by iterated weighted group
demeaning (alternating projections).

With a single factor one sweep is exact; with several factors sweeps
repeat until the largest absolute weighted group mean across every factor
and column falls below the tolerance.
"""

from __future__ import annotations

import numpy as np

from .errors import NumericalError

__all__ = ["encode_factor", "drop_singletons", "absorb_fixed_effects"]


def encode_factor(labels) -> np.ndarray:
    """Map arbitrary group labels to dense integer codes (order-stable)."""
    _, codes = np.unique(np.asarray(labels), return_inverse=True)
    return codes.astype(np.int64)


def drop_singletons(factors: list[np.ndarray]) -> tuple[np.ndarray, int]:
    """Mask observations whose group has a single member in any factor.

    Dropping can create new singletons in other factors, so the scan
    iterates to a fixed point. Returns (keep mask, dropped count)."""
    n = factors[0].shape[0]
    keep = np.ones(n, dtype=bool)
    changed = True
    while changed:
        changed = False
        for codes in factors:
            active = codes[keep]
            if active.size == 0:
                break
            counts = np.bincount(active)
            single = np.zeros(n, dtype=bool)
            single[keep] = counts[active] == 1
            if single.any():
                keep &= ~single
                changed = True
    return keep, int(n - keep.sum())


def _weighted_group_means(
    x: np.ndarray, codes: np.ndarray, weights: np.ndarray, group_w: np.ndarray
) -> np.ndarray:
    """Per-group weighted means of each column; shape (groups, cols)."""
    n_groups = group_w.shape[0]
    sums = np.empty((n_groups, x.shape[1]), dtype=np.float64)
    for j in range(x.shape[1]):
        sums[:, j] = np.bincount(codes, weights * x[:, j], minlength=n_groups)
    return sums / group_w[:, None]


def absorb_fixed_effects(
    columns: np.ndarray,
    factors: list[np.ndarray],
    weights: np.ndarray | None = None,
    tol: float = 1e-8,
    max_iter: int = 10000,
) -> np.ndarray:
    """Residualize columns on all fixed-effect factors under the weights.

    ``columns`` is (n, k); ``factors`` holds integer group codes per
    observation. Raises on non-convergence, reporting the residual norm."""
    x = np.array(columns, dtype=np.float64, copy=True)
    if x.ndim == 1:
        x = x[:, None]
    n = x.shape[0]
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=np.float64)
    if w.shape != (n,) or np.any(w <= 0):
        raise NumericalError("weights must be positive with one entry per row")
    if tol <= 0:
        raise NumericalError(f"tol must be positive, got {tol}")

    coded = [np.asarray(f, dtype=np.int64) for f in factors]
    group_w = [np.bincount(c, w) for c in coded]

    if len(coded) == 1:
        means = _weighted_group_means(x, coded[0], w, group_w[0])
        return x - means[coded[0]]

    for _ in range(max_iter):
        for codes, gw in zip(coded, group_w):
            means = _weighted_group_means(x, codes, w, gw)
            x -= means[codes]
        worst = 0.0
        for codes, gw in zip(coded, group_w):
            means = _weighted_group_means(x, codes, w, gw)
            worst = max(worst, float(np.abs(means).max()))
        if worst <= tol:
            return x
    raise NumericalError(
        f"fixed-effect absorption did not converge in {max_iter} iterations "
        f"(largest weighted group mean {worst:.3e})"
    )
