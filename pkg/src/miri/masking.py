"""Synthetic missingness masks (MCAR, MAR, MNAR) for benchmarking.

Masks are boolean arrays with True = observed, matching ``MaskedDataset``.
MAR and MNAR use logistic missingness with unit slope on a standardized
score; the intercept is found by bisection so that the expected missing
fraction equals the requested rate.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.optimize import brentq
from scipy.special import expit

from .data import MaskedDataset
from .errors import MaskSpecError, ShapeError
from .numeric import Rng

MECHANISMS = ("MCAR", "MAR", "MNAR")


@dataclass(frozen=True)
class MaskSpec:
    mechanism: str = "MCAR"
    rate: float = 0.3
    cond_fraction: float = 0.5
    seed: int = 0

    def __post_init__(self):
        mech = str(self.mechanism).upper()
        if mech not in MECHANISMS:
            raise MaskSpecError(f"unknown mechanism {self.mechanism!r}; expected one of {MECHANISMS}")
        object.__setattr__(self, "mechanism", mech)
        _check_rate(self.rate)
        if not 0.0 < self.cond_fraction <= 1.0:
            raise MaskSpecError(f"cond_fraction must lie in (0, 1], got {self.cond_fraction}")

    def generate(self, x_true: np.ndarray, rng: Optional[Rng] = None) -> np.ndarray:
        rng = rng if rng is not None else Rng(self.seed)
        x_true = np.asarray(x_true, dtype=np.float64)
        if self.mechanism == "MCAR":
            return gen_mcar(x_true.shape[0], x_true.shape[1], self.rate, rng)
        if self.mechanism == "MAR":
            return gen_mar(x_true, self.rate, self.cond_fraction, rng)
        return gen_mnar(x_true, self.rate, rng)


def _check_rate(rate: float) -> None:
    if not 0.0 < rate < 1.0:
        raise MaskSpecError(f"missing rate must lie in the open interval (0, 1), got {rate}")


def gen_mcar(n: int, d: int, rate: float, rng: Rng) -> np.ndarray:
    """Each entry is missing independently with probability ``rate``."""
    _check_rate(rate)
    return rng.uniform((n, d)) >= rate


def _zscore(a: np.ndarray) -> np.ndarray:
    sd = a.std(axis=0)
    return (a - a.mean(axis=0)) / np.where(sd > 0, sd, 1.0)


def _calibrate_intercept(score: np.ndarray, target: float) -> float:
    """Intercept b with mean(sigmoid(score + b)) == target."""
    f = lambda b: float(expit(score + b).mean()) - target
    lo, hi = -1.0, 1.0
    while f(lo) > 0:
        lo *= 2.0
    while f(hi) < 0:
        hi *= 2.0
    return brentq(f, lo, hi, xtol=1e-12)


def _check_complete(x_true: np.ndarray) -> np.ndarray:
    x_true = np.asarray(x_true, dtype=np.float64)
    if x_true.ndim != 2:
        raise ShapeError(f"expected a 2-d array, got shape {x_true.shape}")
    if not np.all(np.isfinite(x_true)):
        raise MaskSpecError("ground-truth data must be fully observed")
    return x_true


def gen_mar(x_true: np.ndarray, rate: float, cond_fraction: float, rng: Rng) -> np.ndarray:
    """Missing at random.

    A random ``cond_fraction`` of the features is always observed. Cells of
    the remaining features go missing with probability
    ``sigmoid(s_i + b)``, where ``s_i`` is the standardized mean of the row's
    standardized conditioning features. ``rate`` is the overall missing
    fraction across all cells.
    """
    _check_rate(rate)
    x_true = _check_complete(x_true)
    n, d = x_true.shape
    if d < 2:
        raise MaskSpecError("MAR needs at least 2 features")
    if not 0.0 < cond_fraction <= 1.0:
        raise MaskSpecError(f"cond_fraction must lie in (0, 1], got {cond_fraction}")
    n_cond = max(1, int(round(cond_fraction * d)))
    if n_cond >= d:
        raise MaskSpecError(f"cond_fraction {cond_fraction} leaves no maskable feature among {d}")
    perm = rng.permutation(d)
    cond, maskable = np.sort(perm[:n_cond]), np.sort(perm[n_cond:])
    frac_maskable = len(maskable) / d
    if rate >= frac_maskable:
        raise MaskSpecError(
            f"rate {rate} is infeasible: only {len(maskable)}/{d} features can be masked"
        )
    score = _zscore(_zscore(x_true[:, cond]).mean(axis=1))
    b = _calibrate_intercept(score, rate / frac_maskable)
    p_missing = expit(score + b)
    mask = np.ones((n, d), dtype=bool)
    u = rng.uniform((n, len(maskable)))
    mask[:, maskable] = u >= p_missing[:, None]
    return mask


def gen_mnar(x_true: np.ndarray, rate: float, rng: Rng) -> np.ndarray:
    """Self-masking: each cell goes missing with probability
    ``sigmoid(z_ij + b)`` where ``z`` is the column-standardized value."""
    _check_rate(rate)
    x_true = _check_complete(x_true)
    z = _zscore(x_true)
    b = _calibrate_intercept(z.ravel(), rate)
    return rng.uniform(z.shape) >= expit(z + b)


def apply_mask(x_true: np.ndarray, mask: np.ndarray, feature_names=None) -> MaskedDataset:
    """Hide ``x_true`` wherever ``mask`` is False."""
    x_true = np.asarray(x_true, dtype=np.float64)
    mask = np.asarray(mask)
    if mask.shape != x_true.shape:
        raise ShapeError(f"mask shape {mask.shape} does not match data shape {x_true.shape}")
    return MaskedDataset(x_true, mask.astype(bool), feature_names)
