"""Estimating agents' action proportions under a deployed model.

Either the actions are observed and simply counted, or only outcomes ``Z``
are observed and the proportions are recovered by inverting the matrix of
class-conditional moments of a discriminating function ``h``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from perfmap.errors import ArgumentError, IllConditionedError

SINGULAR_TOL = 1e-8


@dataclass(frozen=True)
class ProportionObservation:
    """Benefits of one deployed model with the proportions it induced."""

    benefits: np.ndarray
    proportions: np.ndarray
    sample_size: int

    def __post_init__(self):
        p = np.asarray(self.proportions, dtype=float)
        if np.any(p < 0) or np.any(p > 1) or abs(p.sum() - 1.0) > 1e-9:
            raise ArgumentError(f"proportions must lie on the simplex, got {p}")
        if self.sample_size < 1:
            raise ArgumentError(f"sample size must be >= 1, got {self.sample_size}")


def estimate_direct(actions, count: int | None = None) -> np.ndarray:
    actions = np.asarray(actions)
    if actions.size == 0:
        raise ArgumentError("cannot estimate proportions from zero actions")
    if count is None:
        count = max(2, int(actions.max()) + 1)
    if np.any(actions < 0) or np.any(actions >= count):
        raise ArgumentError(f"actions must lie in 0..{count - 1}")
    return np.bincount(actions.astype(int).reshape(-1), minlength=count) / actions.size


def smallest_singular_value(matrix) -> float:
    matrix = np.asarray(matrix, dtype=float)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise ArgumentError(f"expected a square matrix, got shape {matrix.shape}")
    return float(np.linalg.svd(matrix, compute_uv=False).min())


def project_to_simplex(p) -> np.ndarray:
    """Clip negatives to zero and renormalize."""
    p = np.clip(np.asarray(p, dtype=float), 0.0, None)
    total = p.sum()
    if total <= 0:
        return np.full(p.shape, 1.0 / p.size)
    return p / total


def estimate_moment_matching(z_samples, h, delta) -> np.ndarray:
    """Proportions ``delta^{-1} mean(h(Z))`` projected onto the simplex.

    ``delta`` has columns ``E[h(Z) | A = a]``.  ``h`` maps an array of samples
    to an ``(n, count)`` array; pass ``h=None`` when ``z_samples`` already
    holds ``h(Z)``.
    """
    delta = np.asarray(delta, dtype=float)
    smin = smallest_singular_value(delta)
    if smin < SINGULAR_TOL:
        raise IllConditionedError(
            f"moment matrix is near singular (smallest singular value {smin:.3g}); "
            "the discriminating function cannot separate the actions"
        )
    features = np.asarray(z_samples if h is None else h(z_samples), dtype=float)
    features = np.atleast_2d(features)
    if features.shape[1] != delta.shape[0]:
        raise ArgumentError(f"h returns {features.shape[1]} features, expected {delta.shape[0]}")
    return project_to_simplex(np.linalg.solve(delta, features.mean(axis=0)))
