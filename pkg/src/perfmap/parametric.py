"""Closed-form probit / logit fits of a binary cost CDF.

With ``phi_m = Q(pi_m)`` for the family quantile ``Q``, the model
``phi = (b - mu) / sigma`` is linear in ``b``.  The least-squares slope
estimates ``1 / sigma``; a nonpositive slope yields a degenerate fit.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import special, stats

from perfmap.errors import ArgumentError, DegenerateModelError

PROBIT = "probit"
LOGIT = "logit"
CLIP_EPS = 1e-6

_QUANTILE = {PROBIT: stats.norm.ppf, LOGIT: special.logit}
_CDF = {PROBIT: stats.norm.cdf, LOGIT: special.expit}


@dataclass(frozen=True)
class ParametricFit:
    family: str
    mu: float
    sigma: Optional[float]
    degenerate: bool = False
    epsilon_clip: float = CLIP_EPS

    def __call__(self, b):
        return predict_parametric(self, b)

    def to_json(self) -> str:
        return json.dumps(
            {"family": self.family, "mu": self.mu, "sigma": self.sigma, "degenerate": self.degenerate}
        )


def _family(name: str) -> str:
    if name not in _QUANTILE:
        raise ArgumentError(f"unknown family {name!r}; expected 'probit' or 'logit'")
    return name


def fit_parametric(family: str, b, pi_hat, eps: float = CLIP_EPS) -> ParametricFit:
    family = _family(family)
    b = np.asarray(b, dtype=float).reshape(-1)
    pi_hat = np.asarray(pi_hat, dtype=float).reshape(-1)
    if b.size < 2 or b.shape != pi_hat.shape:
        raise ArgumentError("need at least two (b, pi_hat) pairs of equal length")
    db = b - b.mean()
    sxx = float(np.dot(db, db))
    if sxx == 0.0:
        raise ArgumentError("all benefit gaps are equal; the slope is undefined")
    phi = _QUANTILE[family](np.clip(pi_hat, eps, 1.0 - eps))
    slope = float(np.dot(db, phi - phi.mean())) / sxx
    if not slope > 0:
        return ParametricFit(family, mu=float(b.mean()), sigma=None, degenerate=True, epsilon_clip=eps)
    sigma = 1.0 / slope
    return ParametricFit(family, mu=float(b.mean() - sigma * phi.mean()), sigma=sigma, epsilon_clip=eps)


def predict_parametric(fit: ParametricFit, b):
    if fit.degenerate:
        raise DegenerateModelError(f"{fit.family} fit is degenerate (nonpositive slope)")
    out = _CDF[fit.family]((np.asarray(b, dtype=float) - fit.mu) / fit.sigma)
    return float(out) if np.ndim(out) == 0 else out
