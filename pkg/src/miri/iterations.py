"""The outer imputation loop: fit a velocity field on the current
completion, re-impute the missing cells, record diagnostics, repeat."""

from __future__ import annotations

import csv
import io
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Callable, List, Optional, Tuple

import numpy as np

from .data import INIT_STRATEGIES, ImputationState, MaskedDataset, initial_impute, standardize
from .errors import ConfigError, MiriError
from .flow import impute_once, train_velocity
from .metrics import mae_masked, mi_plugin, mmd_rbf, rmse_masked
from .numeric import ACTIVATIONS, Rng


@dataclass(frozen=True)
class MiriConfig:
    n_iterations: int = 10
    n_steps: int = 2000
    batch_size: int = 256
    euler_steps: int = 100
    hidden: Tuple[int, ...] = (128, 128, 128)
    lr: float = 1e-3
    init: str = "normal"
    seed: int = 0
    warm_start: bool = False
    activation: str = "silu"
    standardize: bool = True
    mi_bins: int = 8

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        for name in ("n_iterations", "n_steps", "batch_size", "euler_steps", "mi_bins"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if not self.hidden or min(self.hidden) < 1:
            raise ConfigError(f"hidden sizes must be positive, got {self.hidden}")
        if not self.lr > 0:
            raise ConfigError(f"lr must be positive, got {self.lr}")
        if self.init not in INIT_STRATEGIES:
            raise ConfigError(f"init must be one of {INIT_STRATEGIES}, got {self.init!r}")
        if self.activation not in ACTIVATIONS:
            raise ConfigError(f"activation must be one of {ACTIVATIONS}, got {self.activation!r}")

    def check_for(self, n_rows: int) -> None:
        if self.batch_size > n_rows:
            raise ConfigError(f"batch_size {self.batch_size} exceeds the {n_rows} rows available")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        return d


# training-loss summaries average this many optimizer steps at each end
LOSS_WINDOW = 50


@dataclass
class IterationRecord:
    iteration: int
    loss_start: float = float("nan")
    loss_end: float = float("nan")
    rmse: float = float("nan")
    mae: float = float("nan")
    mmd: float = float("nan")
    mi: float = float("nan")


TRACE_COLUMNS = [f.name for f in fields(IterationRecord)]


@dataclass
class DiagnosticsTrace:
    """Per-iteration diagnostics in standardized units.

    ``initial`` describes the starting completion (iteration 0); ``records``
    holds one entry per completed iteration.
    """

    initial: IterationRecord
    records: List[IterationRecord] = field(default_factory=list)

    def column(self, name: str, include_initial: bool = True) -> np.ndarray:
        rows = ([self.initial] if include_initial else []) + self.records
        return np.array([getattr(r, name) for r in rows], dtype=float)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(TRACE_COLUMNS)
        for r in [self.initial] + self.records:
            w.writerow([r.iteration] + [repr(float(getattr(r, c))) for c in TRACE_COLUMNS[1:]])
        return buf.getvalue()


def _diagnose(state: ImputationState, truth: Optional[np.ndarray], cfg: MiriConfig,
              record: IterationRecord) -> IterationRecord:
    d = state.x.shape[1]
    if d <= 4:
        record.mi = mi_plugin(state.x, state.mask, cfg.mi_bins)
    if truth is not None:
        if state.mask.all():
            record.rmse = record.mae = 0.0
        else:
            record.rmse = rmse_masked(state.x, truth, state.mask)
            record.mae = mae_masked(state.x, truth, state.mask)
        record.mmd = mmd_rbf(state.x, truth)
    return record


IterationCallback = Callable[[ImputationState], None]


def run_miri(
    ds: MaskedDataset,
    cfg: MiriConfig = MiriConfig(),
    ground_truth: Optional[np.ndarray] = None,
    callback: Optional[IterationCallback] = None,
) -> Tuple[ImputationState, DiagnosticsTrace]:
    """Impute ``ds``.

    Standardizes (unless ``cfg.standardize`` is off), fills missing cells with
    the initial strategy, then runs ``cfg.n_iterations`` rounds of velocity
    training and ODE re-imputation. ``callback`` sees the working-space state
    after initialization and after every iteration.

    Returns the final state in original units (observed cells equal the
    input exactly) and the diagnostics trace. With ``ground_truth`` the trace
    includes RMSE, MAE and MMD.
    """
    cfg.check_for(ds.shape[0])
    if ground_truth is not None:
        ground_truth = np.asarray(ground_truth, dtype=np.float64)
        if ground_truth.shape != ds.shape:
            raise ConfigError(f"ground truth shape {ground_truth.shape} does not match data {ds.shape}")

    if cfg.standardize:
        work, scaler = standardize(ds)
        truth = scaler.transform(ground_truth) if ground_truth is not None else None
    else:
        work, scaler, truth = ds, None, ground_truth

    init_rng, train_rng = Rng(cfg.seed).spawn(2)
    state = initial_impute(work, cfg.init, init_rng)
    if callback:
        callback(state)
    trace = DiagnosticsTrace(_diagnose(state, truth, cfg, IterationRecord(0)))

    has_missing = not ds.mask.all()
    params = None
    for t in range(1, cfg.n_iterations + 1):
        record = IterationRecord(t)
        if has_missing:
            try:
                model = train_velocity(state, cfg, train_rng,
                                       init_params=params if cfg.warm_start else None)
                state = impute_once(state, model, cfg.euler_steps)
            except MiriError as exc:
                raise type(exc)(f"iteration {t}: {exc}") from exc
            params = model.params
            w = max(1, min(LOSS_WINDOW, len(model.losses) // 2))
            record.loss_start = float(model.losses[:w].mean())
            record.loss_end = float(model.losses[-w:].mean())
        else:
            state = replace(state, iteration=t)
        if callback:
            callback(state)
        trace.records.append(_diagnose(state, truth, cfg, record))

    x = state.x if scaler is None else scaler.inverse(state.x)
    x = np.where(ds.mask, ds.raw, x)
    return ImputationState(x, ds.mask, ds.raw, state.iteration), trace


def run_multiple(
    ds: MaskedDataset,
    cfg: MiriConfig,
    k: int,
    ground_truth: Optional[np.ndarray] = None,
) -> List[Tuple[ImputationState, DiagnosticsTrace]]:
    """``k`` independent imputations using seeds ``cfg.seed, cfg.seed + 1, ...``."""
    if k < 1:
        raise ConfigError(f"k must be >= 1, got {k}")
    return [run_miri(ds, replace(cfg, seed=cfg.seed + i), ground_truth) for i in range(k)]
