"""Shape-constrained least squares for action-probability CDFs.

Univariate fits use weighted pool-adjacent-violators.  Fits over a
coordinate-wise partial order use cyclic dual coordinate ascent (Dykstra's
method specialized to halfspaces) on the transitive reduction of the
dominance graph, with the ``[0, 1]`` box as extra halfspaces.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

import numba
import numpy as np

from perfmap.core import BenefitProfile, ContrastMatrix
from perfmap.errors import ArgumentError, NumericalError

ORDER_TOL = 1e-9


def weighted_pava(y, w=None) -> np.ndarray:
    """Nondecreasing least-squares fit of ``y`` with positive weights ``w``.

    Inputs must already be sorted by design point.
    """
    y = np.asarray(y, dtype=float)
    if y.ndim != 1 or y.size == 0:
        raise ArgumentError("y must be a nonempty 1-d array")
    w = np.ones_like(y) if w is None else np.asarray(w, dtype=float)
    if w.shape != y.shape:
        raise ArgumentError(f"weights shape {w.shape} does not match y shape {y.shape}")
    if np.any(~(w > 0)):
        raise ArgumentError("weights must be strictly positive")

    means = np.empty_like(y)
    weights = np.empty_like(y)
    sizes = np.empty(y.size, dtype=np.int64)
    top = -1
    for value, weight in zip(y, w):
        top += 1
        means[top], weights[top], sizes[top] = value, weight, 1
        while top > 0 and means[top - 1] > means[top]:
            total = weights[top - 1] + weights[top]
            means[top - 1] = (weights[top - 1] * means[top - 1] + weights[top] * means[top]) / total
            weights[top - 1] = total
            sizes[top - 1] += sizes[top]
            top -= 1
    return np.repeat(means[: top + 1], sizes[: top + 1])


@dataclass(frozen=True)
class MonotoneFit:
    """Fitted values of a monotone function at its (distinct) design points."""

    design_points: np.ndarray
    fitted_values: np.ndarray
    weights: np.ndarray

    @property
    def dimension(self) -> int:
        return self.design_points.shape[1]

    def __call__(self, x):
        return evaluate_fit(self, x)

    def to_dict(self) -> dict:
        return {
            "dimension": self.dimension,
            "design_points": self.design_points.tolist(),
            "fitted_values": self.fitted_values.tolist(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, data: Mapping) -> "MonotoneFit":
        points = np.asarray(data["design_points"], dtype=float).reshape(-1, int(data["dimension"]))
        values = np.asarray(data["fitted_values"], dtype=float)
        return cls(points, values, np.ones_like(values))

    @classmethod
    def from_json(cls, text: str) -> "MonotoneFit":
        return cls.from_dict(json.loads(text))


def _pool_duplicates(points: np.ndarray, y: np.ndarray, w: np.ndarray):
    unique, inverse = np.unique(points, axis=0, return_inverse=True)
    inverse = inverse.reshape(-1)
    wsum = np.bincount(inverse, weights=w, minlength=len(unique))
    ysum = np.bincount(inverse, weights=w * y, minlength=len(unique))
    return unique, ysum / wsum, wsum


def fit_cdf_univariate(b, pi_hat, n=None) -> MonotoneFit:
    """Weighted isotonic fit of observed proportions against benefit gaps.

    Exact duplicates in ``b`` are pooled into one point with summed weight.
    """
    b = np.asarray(b, dtype=float).reshape(-1)
    pi_hat = np.asarray(pi_hat, dtype=float).reshape(-1)
    n = np.ones_like(b) if n is None else np.broadcast_to(np.asarray(n, dtype=float), b.shape)
    if b.size == 0 or b.shape != pi_hat.shape:
        raise ArgumentError("b and pi_hat must be nonempty and of equal length")
    if not np.all(np.isfinite(b)):
        raise ArgumentError("benefit gaps must be finite")
    if np.any(pi_hat < 0) or np.any(pi_hat > 1):
        raise ArgumentError("proportions must lie in [0, 1]")
    points, y, w = _pool_duplicates(b[:, None], pi_hat, n)
    return MonotoneFit(points, weighted_pava(y, w), w)


def dominance_edges(points: np.ndarray) -> np.ndarray:
    """Edges ``(i, j)`` of the transitive reduction of ``p_i < p_j`` (coordinate-wise, distinct)."""
    n = len(points)
    less = np.all(points[:, None, :] <= points[None, :, :], axis=2)
    np.fill_diagonal(less, False)
    # distinct points: <= everywhere and not equal means strictly below in the order
    lm = less.astype(np.int32)
    via = (lm @ lm) > 0
    reduced = less & ~via
    i, j = np.nonzero(reduced)
    edges = np.stack([i, j], axis=1).astype(np.int64)
    if n and len(edges):
        # process edges from the bottom of the order upward
        depth = less.sum(axis=0)
        edges = edges[np.lexsort((depth[edges[:, 1]], depth[edges[:, 0]]))]
    return edges


@numba.njit(cache=True)
def _max_violation(f, edges):
    violation = 0.0
    for e in range(edges.shape[0]):
        violation = max(violation, f[edges[e, 0]] - f[edges[e, 1]])
    return violation


@numba.njit(cache=True)
def _dual_ascent(y, w, edges, lower, upper, tol, vtol, max_sweeps):
    n = y.size
    m = edges.shape[0]
    f = y.copy()
    lam = np.zeros(m)
    lam_lo = np.zeros(n)
    lam_hi = np.zeros(n)
    inv_w = 1.0 / w
    change = np.inf
    sweep = 0
    for sweep in range(1, max_sweeps + 1):
        change = 0.0
        for e in range(m):
            i = edges[e, 0]
            j = edges[e, 1]
            step = (f[i] - f[j]) / (inv_w[i] + inv_w[j])
            delta = max(-lam[e], step)
            if delta != 0.0:
                lam[e] += delta
                di = delta * inv_w[i]
                dj = delta * inv_w[j]
                f[i] -= di
                f[j] += dj
                change = max(change, abs(di), abs(dj))
        for i in range(n):
            delta = max(-lam_lo[i], (lower - f[i]) * w[i])
            if delta != 0.0:
                lam_lo[i] += delta
                f[i] += delta * inv_w[i]
                change = max(change, abs(delta * inv_w[i]))
            delta = max(-lam_hi[i], (f[i] - upper) * w[i])
            if delta != 0.0:
                lam_hi[i] += delta
                f[i] -= delta * inv_w[i]
                change = max(change, abs(delta * inv_w[i]))
        if change < tol and _max_violation(f, edges) <= vtol:
            break
    return f, sweep, change, _max_violation(f, edges)


def fit_monotone_multivariate(
    points,
    y,
    w=None,
    tol: float = 1e-8,
    max_sweeps: int = 100_000,
) -> MonotoneFit:
    """Weighted least squares over functions monotone in the coordinate-wise order.

    Also constrains fitted values to ``[0, 1]``.  One-dimensional input is
    solved exactly by PAVA.
    """
    points = np.asarray(points, dtype=float)
    if points.ndim == 1:
        points = points[:, None]
    y = np.asarray(y, dtype=float).reshape(-1)
    w = np.ones_like(y) if w is None else np.asarray(w, dtype=float).reshape(-1)
    if points.shape[0] != y.size or w.size != y.size or y.size == 0:
        raise ArgumentError("points, y and w must be nonempty with matching lengths")
    if np.any(~(w > 0)):
        raise ArgumentError("weights must be strictly positive")
    if np.any(y < 0) or np.any(y > 1):
        raise ArgumentError("responses must lie in [0, 1]")
    if not np.all(np.isfinite(points)):
        raise ArgumentError("design points must be finite")

    unique, ybar, wsum = _pool_duplicates(points, y, w)
    if unique.shape[1] == 1:
        return MonotoneFit(unique, weighted_pava(ybar, wsum), wsum)

    edges = dominance_edges(unique)
    f, sweeps, change, violation = _dual_ascent(ybar, wsum, edges, 0.0, 1.0, tol, ORDER_TOL, max_sweeps)
    if change >= tol or violation > ORDER_TOL:
        raise NumericalError(
            "monotone projection did not converge",
            {"sweeps": sweeps, "last_change": change, "max_violation": violation, "edges": len(edges)},
        )
    return MonotoneFit(unique, np.clip(f, 0.0, 1.0), wsum)


def evaluate_fit(fit: MonotoneFit, x):
    """Lower-envelope extension: largest fitted value among design points below ``x``.

    Points with no design point below them evaluate to 0.  Accepts one point
    or an ``(m, d)`` array (``(m,)`` when ``d == 1``).
    """
    x = np.asarray(x, dtype=float)
    scalar = x.ndim == 0 or (fit.dimension > 1 and x.ndim == 1)
    if fit.dimension == 1:
        xs = x.reshape(-1)
        grid = fit.design_points[:, 0]
        envelope = np.maximum.accumulate(fit.fitted_values)
        idx = np.searchsorted(grid, xs, side="right") - 1
        out = np.where(idx >= 0, envelope[np.clip(idx, 0, None)], 0.0)
    else:
        xs = x.reshape(-1, fit.dimension)
        out = np.zeros(len(xs))
        chunk = max(1, 2_000_000 // max(1, fit.design_points.size))
        for start in range(0, len(xs), chunk):
            block = xs[start : start + chunk]
            below = np.all(fit.design_points[None, :, :] <= block[:, None, :], axis=2)
            out[start : start + chunk] = np.max(np.where(below, fit.fitted_values[None, :], 0.0), axis=1)
    return float(out[0]) if scalar else out


@dataclass(frozen=True)
class DistributionMapEstimate:
    """Estimated action probabilities ``D_a(theta) = F_a(L_a B(theta))``."""

    contrasts: Sequence[ContrastMatrix]
    fits: Mapping[int, MonotoneFit]
    benefits: Optional[BenefitProfile] = None

    @property
    def count(self) -> int:
        return len(self.contrasts)

    def probabilities(self, benefit_rows) -> np.ndarray:
        """Simplex-valued estimates for one benefit vector or an ``(m, count)`` array."""
        rows = np.asarray(benefit_rows, dtype=float)
        single = rows.ndim == 1
        rows = np.atleast_2d(rows)
        out = np.zeros((len(rows), self.count))
        for a in range(1, self.count):
            gaps = self.contrasts[a].apply(rows)
            out[:, a] = np.atleast_1d(evaluate_fit(self.fits[a], gaps[:, 0] if gaps.shape[1] == 1 else gaps))
        out = normalize_complement(out)
        return out[0] if single else out

    def __call__(self, theta) -> np.ndarray:
        if self.benefits is None:
            raise ArgumentError("no benefit profile attached; use probabilities()")
        return self.probabilities(self.benefits(theta))


def normalize_complement(probs: np.ndarray) -> np.ndarray:
    """Fill column 0 with ``1 - sum(others)``, rescaling the others when they exceed 1."""
    probs = np.array(probs, dtype=float)
    s = probs[:, 1:].sum(axis=1)
    over = s > 1.0
    probs[over, 1:] /= s[over, None]
    probs[:, 0] = np.where(over, 0.0, 1.0 - s)
    return probs


def assemble_distribution_map(
    fits: Mapping[int, MonotoneFit],
    contrasts: Sequence[ContrastMatrix],
    benefits: Optional[BenefitProfile] = None,
) -> DistributionMapEstimate:
    count = len(contrasts)
    missing = [a for a in range(1, count) if a not in fits]
    if missing:
        raise ArgumentError(f"missing fits for actions {missing}")
    for a in range(1, count):
        if fits[a].dimension != count - 1:
            raise ArgumentError(
                f"fit for action {a} has dimension {fits[a].dimension}, expected {count - 1}"
            )
    return DistributionMapEstimate(contrasts=list(contrasts), fits=dict(fits), benefits=benefits)
