"""Evaluation metrics: masked errors, RBF-kernel MMD and a histogram
estimate of the mutual information between data and mask pattern."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np
from scipy.spatial.distance import pdist

from .errors import MetricError, ShapeError

_MEDIAN_MAX_POINTS = 2000
_BLOCK = 1024


def _masked_errors(imputed, truth, mask):
    imputed = np.asarray(imputed, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    mask = np.asarray(mask, dtype=bool)
    if not (imputed.shape == truth.shape == mask.shape):
        raise ShapeError(f"shapes differ: imputed {imputed.shape}, truth {truth.shape}, mask {mask.shape}")
    missing = ~mask
    if not missing.any():
        raise MetricError("no masked cells to evaluate")
    return imputed[missing] - truth[missing], imputed.size


def rmse_masked(imputed, truth, mask, denominator: str = "masked") -> float:
    """Root mean squared error over the masked cells (mask False).

    ``denominator="all"`` divides the masked squared error by the total
    number of cells instead, the convention used for the toy-benchmark
    reference numbers.
    """
    err, n_cells = _masked_errors(imputed, truth, mask)
    return float(np.sqrt(np.sum(err * err) / _count(err, n_cells, denominator)))


def mae_masked(imputed, truth, mask, denominator: str = "masked") -> float:
    err, n_cells = _masked_errors(imputed, truth, mask)
    return float(np.sum(np.abs(err)) / _count(err, n_cells, denominator))


def _count(err, n_cells, denominator):
    if denominator == "masked":
        return err.size
    if denominator == "all":
        return n_cells
    raise ValueError(f"denominator must be 'masked' or 'all', got {denominator!r}")


def median_bandwidth(a: np.ndarray, b: np.ndarray) -> float:
    """Median pairwise Euclidean distance over the pooled sample.

    Pools larger than 2000 points use a fixed, evenly spaced subsample so
    the result is deterministic and memory stays bounded.
    """
    pooled = np.concatenate([a, b], axis=0)
    if pooled.shape[0] > _MEDIAN_MAX_POINTS:
        idx = np.linspace(0, pooled.shape[0] - 1, _MEDIAN_MAX_POINTS).round().astype(int)
        pooled = pooled[idx]
    dist = pdist(pooled)
    med = float(np.median(dist))
    if med > 0:
        return med
    positive = dist[dist > 0]
    return float(positive.min()) if positive.size else 0.0


def _kernel_mean(a: np.ndarray, b: np.ndarray, gamma: float) -> float:
    b_sq = np.einsum("ij,ij->i", b, b)
    total = 0.0
    for s in range(0, a.shape[0], _BLOCK):
        blk = a[s:s + _BLOCK]
        sq = np.einsum("ij,ij->i", blk, blk)[:, None] + b_sq[None, :] - 2.0 * blk @ b.T
        np.maximum(sq, 0.0, out=sq)
        total += float(np.exp(-gamma * sq).sum())
    return total / (a.shape[0] * b.shape[0])


def mmd_rbf(a, b, bandwidth: Optional[float] = None) -> float:
    """Biased (V-statistic) MMD with a Gaussian kernel, square-rooted.

    k(x, y) = exp(-|x - y|^2 / (2 * bandwidth^2)); the bandwidth defaults to
    the pooled median heuristic.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[1]:
        raise ShapeError(f"samples must be 2-d with equal width, got {a.shape} and {b.shape}")
    if a.shape[0] < 2 or b.shape[0] < 2:
        raise MetricError("MMD needs at least 2 points per sample")
    if bandwidth is None:
        bandwidth = median_bandwidth(a, b)
    if bandwidth <= 0:
        # every point identical across both samples
        return 0.0
    gamma = 1.0 / (2.0 * bandwidth * bandwidth)
    mmd2 = _kernel_mean(a, a, gamma) + _kernel_mean(b, b, gamma) - 2.0 * _kernel_mean(a, b, gamma)
    return float(np.sqrt(max(mmd2, 0.0)))


def mi_plugin(x, mask, bins: int = 8, max_dim: int = 4) -> float:
    """Histogram plug-in estimate of I(X; M) in nats.

    M is the row's mask pattern; X is binned on an equal-width grid per
    dimension spanning the pooled range. Empty cells contribute zero.
    """
    x = np.asarray(x, dtype=np.float64)
    mask = np.asarray(mask, dtype=bool)
    if x.ndim != 2 or mask.shape != x.shape:
        raise ShapeError(f"x {x.shape} and mask {mask.shape} must be equal 2-d shapes")
    n, d = x.shape
    if d > max_dim:
        raise MetricError(f"plug-in MI is limited to d <= {max_dim}, got d = {d}")
    if bins < 2:
        raise MetricError(f"bins must be >= 2, got {bins}")

    _, pattern = np.unique(mask, axis=0, return_inverse=True)
    pattern = pattern.ravel()
    n_patterns = int(pattern.max()) + 1
    if n_patterns == 1:
        return 0.0

    lo, hi = x.min(axis=0), x.max(axis=0)
    width = np.where(hi > lo, hi - lo, 1.0)
    cell_1d = np.clip(((x - lo) / width * bins).astype(np.int64), 0, bins - 1)
    cell = np.ravel_multi_index(cell_1d.T, (bins,) * d)

    joint = np.zeros((bins ** d, n_patterns))
    np.add.at(joint, (cell, pattern), 1.0)
    p_xm = joint / n
    p_x = p_xm.sum(axis=1, keepdims=True)
    p_m = p_xm.sum(axis=0, keepdims=True)
    nz = p_xm > 0
    mi = float(np.sum(p_xm[nz] * np.log(p_xm[nz] / (p_x @ p_m)[nz])))
    return max(mi, 0.0)


@dataclass
class MetricsReport:
    """Imputation quality.

    ``rmse``, ``mae``, ``mmd`` and ``mi`` are measured in standardized units;
    ``rmse_all_cells`` and ``mae_all_cells`` are in original units with the
    masked error averaged over every cell.
    """

    rmse: float
    mae: float
    mmd: float
    mi: float
    rmse_all_cells: float
    mae_all_cells: float
    n_masked: int
    n_rows: int

    def to_text(self) -> str:
        return "".join(f"{k}={_fmt(v)}\n" for k, v in asdict(self).items())

    @classmethod
    def from_text(cls, text: str) -> "MetricsReport":
        kv = dict(ln.split("=", 1) for ln in text.splitlines() if "=" in ln)
        return cls(**{k: (int(kv[k]) if k.startswith("n_") else float(kv[k]))
                      for k in cls.__dataclass_fields__})


def _fmt(v) -> str:
    return str(v) if isinstance(v, (int, np.integer)) else repr(float(v))


def evaluate(imputed, truth, mask, bins: int = 8) -> MetricsReport:
    """Full report. Standardization statistics come from the observed truth."""
    from .data import MaskedDataset, Standardizer

    imputed = np.asarray(imputed, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    mask = np.asarray(mask, dtype=bool)
    if not (imputed.shape == truth.shape == mask.shape):
        raise ShapeError(f"shapes differ: imputed {imputed.shape}, truth {truth.shape}, mask {mask.shape}")
    if not (np.all(np.isfinite(imputed)) and np.all(np.isfinite(truth))):
        raise MetricError("imputed and ground-truth matrices must be fully finite")
    s = Standardizer.fit(MaskedDataset(truth, mask))
    zi, zt = s.transform(imputed), s.transform(truth)
    n_masked = int((~mask).sum())
    if n_masked:
        rmse, mae = rmse_masked(zi, zt, mask), mae_masked(zi, zt, mask)
        rmse_all = rmse_masked(imputed, truth, mask, "all")
        mae_all = mae_masked(imputed, truth, mask, "all")
    else:
        rmse = mae = rmse_all = mae_all = 0.0
    mi = mi_plugin(zi, mask, bins) if imputed.shape[1] <= 4 else float("nan")
    return MetricsReport(rmse, mae, mmd_rbf(zi, zt), mi, rmse_all, mae_all, n_masked, imputed.shape[0])
