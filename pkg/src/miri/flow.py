"""Mask-conditioned rectified flow: training pairs, the velocity network and
the masked Euler solver used for imputation.

Velocity inputs are laid out as ``[(1-m)*x_tau, m*x0, m*x1, m, tau]``
(width ``4d + 1``). During training the two conditioning slots carry the
observed parts of the source and target rows; during imputation both carry
the row's own observed values.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .data import ImputationState
from .errors import ShapeError, SolverError, TrainingError
from .numeric import AdamState, MlpParams, Rng, adam_step, init_mlp, mlp_forward, mlp_loss_grad

CHECKPOINT_FORMAT = "miri-velocity"
CHECKPOINT_VERSION = 1


@dataclass
class FlowBatch:
    x0: np.ndarray
    m0: np.ndarray
    x1: np.ndarray
    tau: np.ndarray
    x_tau: np.ndarray
    y: np.ndarray


def interpolate(x0: np.ndarray, x1: np.ndarray, tau: np.ndarray) -> np.ndarray:
    """Row-wise straight line ``(1 - tau) * x0 + tau * x1``."""
    t = np.asarray(tau, dtype=np.float64).reshape(-1, 1)
    return (1.0 - t) * x0 + t * x1


def draw_flow_batch(state: ImputationState, batch_size: int, rng: Rng) -> FlowBatch:
    """Sample ``(x0, m0)`` rows jointly and ``x1`` rows from an independent
    shuffle of the same data, plus a per-row time in [0, 1)."""
    n = state.x.shape[0]
    if not 1 <= batch_size <= n:
        raise ShapeError(f"batch size {batch_size} must lie in [1, {n}]")
    i0 = rng.permutation(n)[:batch_size]
    i1 = rng.permutation(n)[:batch_size]
    tau = rng.uniform(batch_size)
    x0 = state.x[i0]
    x1 = state.x[i1]
    return FlowBatch(x0, state.mask[i0], x1, tau, interpolate(x0, x1, tau), x1 - x0)


def velocity_input(x_tau, x0, x1, m, tau) -> np.ndarray:
    """Concatenate ``[(1-m)*x_tau, m*x0, m*x1, m, tau]``.

    Accepts single rows (1-d, scalar ``tau``) or batches (2-d, ``tau`` of
    length B or scalar).
    """
    x_tau = np.asarray(x_tau, dtype=np.float64)
    single = x_tau.ndim == 1
    x_tau = np.atleast_2d(x_tau)
    x0 = np.atleast_2d(np.asarray(x0, dtype=np.float64))
    x1 = np.atleast_2d(np.asarray(x1, dtype=np.float64))
    m = np.atleast_2d(np.asarray(m)).astype(np.float64)
    if not (x_tau.shape == x0.shape == x1.shape == m.shape):
        raise ShapeError(
            f"velocity input parts disagree: {x_tau.shape}, {x0.shape}, {x1.shape}, {m.shape}"
        )
    t = np.broadcast_to(np.asarray(tau, dtype=np.float64).reshape(-1, 1), (x_tau.shape[0], 1))
    # where() rather than multiplication keeps -0.0/NaN-free zeros in masked slots
    out = np.concatenate(
        [np.where(m == 0, x_tau, 0.0), np.where(m == 1, x0, 0.0), np.where(m == 1, x1, 0.0), m, t],
        axis=1,
    )
    return out[0] if single else out


@dataclass
class VelocityModel:
    """Trained velocity field; callable on a (rows, 4d+1) input matrix."""

    params: MlpParams
    d: int
    losses: np.ndarray = field(default_factory=lambda: np.empty(0))

    def __post_init__(self):
        if self.params.in_dim != 4 * self.d + 1 or self.params.out_dim != self.d:
            raise ShapeError(
                f"network maps {self.params.in_dim} -> {self.params.out_dim}, "
                f"expected {4 * self.d + 1} -> {self.d}"
            )

    def __call__(self, inputs: np.ndarray) -> np.ndarray:
        return mlp_forward(self.params, inputs)

    def save(self, path) -> None:
        """Write a versioned ``.npz`` checkpoint (see README for the layout)."""
        header = {
            "format": CHECKPOINT_FORMAT,
            "version": CHECKPOINT_VERSION,
            "d": self.d,
            "sizes": self.params.sizes,
            "activation": self.params.activation,
        }
        with open(path, "wb") as fh:
            np.savez(fh, header=np.array(json.dumps(header, sort_keys=True)),
                     params=self.params.flatten())

    @classmethod
    def load(cls, path) -> "VelocityModel":
        with np.load(path, allow_pickle=False) as z:
            header = json.loads(str(z["header"]))
            flat = z["params"]
        if header.get("format") != CHECKPOINT_FORMAT or header.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"{path}: unsupported checkpoint header {header}")
        template = init_mlp(header["sizes"], Rng(0), header["activation"])
        return cls(template.unflatten(flat), int(header["d"]))


def new_velocity_params(d: int, hidden, rng: Rng, activation: str = "silu") -> MlpParams:
    return init_mlp([4 * d + 1, *hidden, d], rng, activation)


def train_velocity(
    state: ImputationState,
    cfg,
    rng: Rng,
    init_params: Optional[MlpParams] = None,
) -> VelocityModel:
    """Fit the velocity field by regressing ``x1 - x0`` on the conditioned
    interpolant for ``cfg.n_steps`` Adam steps of ``cfg.batch_size`` rows.

    The residual is taken over all ``d`` coordinates. ``init_params`` warm
    starts from an earlier network instead of a fresh initialization.
    """
    d = state.x.shape[1]
    params = (init_params.copy() if init_params is not None
              else new_velocity_params(d, cfg.hidden, rng, cfg.activation))
    opt = AdamState.for_params(params, lr=cfg.lr)
    losses = np.empty(cfg.n_steps)
    for step in range(cfg.n_steps):
        b = draw_flow_batch(state, cfg.batch_size, rng)
        inputs = velocity_input(b.x_tau, b.x0, b.x1, b.m0, b.tau)
        loss, grads = mlp_loss_grad(params, inputs, b.y)
        if not np.isfinite(loss):
            raise TrainingError(f"non-finite training loss at step {step + 1}")
        try:
            params, opt = adam_step(params, grads, opt)
        except TrainingError as exc:
            raise TrainingError(f"{exc} (training step {step + 1})") from exc
        losses[step] = loss
    return VelocityModel(params, d, losses)


VelocityField = Callable[[np.ndarray], np.ndarray]


def euler_solve(model: VelocityField, x_init: np.ndarray, mask: np.ndarray, steps: int) -> np.ndarray:
    """Integrate the masked imputation ODE from tau = 0 to 1 with ``steps``
    explicit Euler steps, evaluating the field at tau = k/steps.

    Only missing coordinates move; observed ones are returned bit-exactly.
    ``model`` is any callable mapping a (rows, 4d+1) input to (rows, d).
    """
    if steps < 1:
        raise ValueError(f"Euler steps must be >= 1, got {steps}")
    x_init = np.asarray(x_init, dtype=np.float64)
    mask = np.asarray(mask, dtype=bool)
    if x_init.ndim != 2 or mask.shape != x_init.shape:
        raise ShapeError(f"x_init {x_init.shape} and mask {mask.shape} must be equal 2-d shapes")
    if not np.all(np.isfinite(x_init)):
        raise SolverError("initial state has non-finite entries (step 0)")

    out = x_init.copy()
    rows = np.flatnonzero(~mask.all(axis=1))
    if rows.size == 0:
        return out
    m = mask[rows]
    cond = np.where(m, x_init[rows], 0.0)
    z = x_init[rows].copy()
    h = 1.0 / steps
    for k in range(1, steps + 1):
        v = np.asarray(model(velocity_input(z, cond, cond, m, k / steps)), dtype=np.float64)
        if v.shape != z.shape:
            raise ShapeError(f"velocity field returned shape {v.shape}, expected {z.shape}")
        z = np.where(m, z, z + h * v)
        if not np.all(np.isfinite(z)):
            raise SolverError(f"non-finite state at Euler step {k} of {steps}")
    out[rows] = z
    return out


def impute_once(state: ImputationState, model: VelocityField, steps: int) -> ImputationState:
    """One imputation pass: start from the current completion, solve the ODE,
    and keep observed cells pinned."""
    z1 = euler_solve(model, state.x, state.mask, steps)
    x = np.where(state.mask, state.x, z1)
    return ImputationState(x, state.mask, state.pinned, state.iteration + 1)
