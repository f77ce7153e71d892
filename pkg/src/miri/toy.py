"""Two-cluster Gaussian toy problem and the end-to-end benchmark run on it."""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, replace
from typing import Dict, Optional, Sequence

import numpy as np

from .data import MaskedDataset, write_csv, write_mask_csv, write_matrix_csv, atomic_write_text
from .errors import ConfigError
from .iterations import MiriConfig, run_miri
from .masking import MaskSpec, apply_mask
from .metrics import MetricsReport, evaluate
from .numeric import Rng

# reference values reported for this benchmark (mean, std over 10 masks)
REFERENCE = {"rmse_all_cells": (0.938, 0.022), "mae_all_cells": (0.325, 0.009), "mmd": (0.036, 0.007)}

MASK_SEED_OFFSET = 1000


@dataclass(frozen=True)
class MixtureSpec:
    """Isotropic Gaussian mixture: one scalar std per component."""

    n: int = 6000
    weights: Sequence[float] = (0.5, 0.5)
    means: Sequence[Sequence[float]] = ((-2.0, -2.0), (2.0, 2.0))
    stds: Sequence[float] = (0.5, 0.5)

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        mu = np.asarray(self.means, dtype=float)
        sd = np.asarray(self.stds, dtype=float)
        if self.n < 1:
            raise ConfigError(f"n must be >= 1, got {self.n}")
        if w.ndim != 1 or w.size < 1 or np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
            raise ConfigError(f"mixture weights must be non-negative and sum to 1, got {list(w)}")
        if mu.ndim != 2 or mu.shape[0] != w.size:
            raise ConfigError(f"need one mean vector per component, got means of shape {mu.shape}")
        if sd.shape != w.shape or np.any(sd <= 0):
            raise ConfigError(f"need one positive std per component, got {list(sd)}")

    def to_dict(self) -> dict:
        return {"n": int(self.n), "weights": [float(v) for v in self.weights],
                "means": [[float(v) for v in m] for m in self.means],
                "stds": [float(v) for v in self.stds]}


def sample_mixture(spec: MixtureSpec, rng: Rng) -> np.ndarray:
    w = np.asarray(spec.weights, dtype=float)
    mu = np.asarray(spec.means, dtype=float)
    sd = np.asarray(spec.stds, dtype=float)
    comp = np.searchsorted(np.cumsum(w), rng.uniform(spec.n), side="right")
    comp = np.minimum(comp, w.size - 1)
    return mu[comp] + sd[comp, None] * rng.normal((spec.n, mu.shape[1]))


def config_hash(obj) -> str:
    text = json.dumps(obj, sort_keys=True, default=str)
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def provenance(command: str, cfg: dict, seed: int) -> str:
    return f"miri {command} config={config_hash(cfg)} seed={seed}"


def run_toy_seed(seed: int, cfg: MiriConfig, out_dir: Optional[str] = None,
                 mixture: MixtureSpec = MixtureSpec(), rate: float = 0.3,
                 callback=None) -> Dict:
    """Synthesize, mask (MCAR), impute and evaluate one replicate.

    Data use seed ``seed``, the mask ``seed + 1000`` and the imputer ``seed``.
    When ``out_dir`` is given, every artifact is written there atomically.
    """
    truth = sample_mixture(mixture, Rng(seed))
    mask_spec = MaskSpec("MCAR", rate, seed=seed + MASK_SEED_OFFSET)
    mask = mask_spec.generate(truth)
    ds = apply_mask(truth, mask)
    cfg = replace(cfg, seed=seed)
    state, trace = run_miri(ds, cfg, truth, callback=callback)
    report = evaluate(state.x, truth, mask, cfg.mi_bins)
    result = {"seed": seed, "state": state, "trace": trace, "report": report,
              "truth": truth, "mask": mask, "dataset": ds}
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        full_cfg = {"miri": cfg.to_dict(), "mixture": mixture.to_dict(), "rate": rate}
        head = provenance("repro-toy", full_cfg, seed)
        write_matrix_csv(os.path.join(out_dir, "truth.csv"), truth, comment=head)
        write_mask_csv(os.path.join(out_dir, "mask.csv"), mask, comment=head)
        write_csv(os.path.join(out_dir, "observed.csv"), ds, comment=head)
        write_matrix_csv(os.path.join(out_dir, "imputed.csv"), state.x, comment=head)
        atomic_write_text(os.path.join(out_dir, "trace.csv"), f"# {head}\n" + trace.to_csv())
        atomic_write_text(os.path.join(out_dir, "metrics.txt"), f"# {head}\n" + report.to_text())
    return result


def summarize(reports: Sequence[MetricsReport]) -> str:
    """Mean (and std with more than one run) per metric beside the reference values."""
    keys = ["rmse_all_cells", "mae_all_cells", "mmd", "rmse", "mae", "mi"]
    lines = [f"runs: {len(reports)}", f"{'metric':<16}{'mean':>10}{'std':>10}{'reference':>20}"]
    for k in keys:
        vals = np.array([getattr(r, k) for r in reports], dtype=float)
        std = f"{vals.std(ddof=1):10.4f}" if len(vals) > 1 else f"{'':>10}"
        ref = REFERENCE.get(k)
        ref_s = f"{ref[0]:.3f} +/- {ref[1]:.3f}" if ref else "-"
        lines.append(f"{k:<16}{vals.mean():10.4f}{std}{ref_s:>20}")
    return "\n".join(lines) + "\n"
