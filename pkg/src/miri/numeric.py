"""Numerical substrate: seeded randomness, a small MLP with hand-written
backpropagation, and an Adam optimizer.

All arrays are float64. Parameters are plain numpy arrays held in
``MlpParams``; every function here returns new arrays rather than
mutating its inputs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Sequence, Tuple

import numpy as np

from .errors import ShapeError, TrainingError

ACTIVATIONS = ("silu", "tanh")


class Rng:
    """Seeded random source wrapping numpy's PCG64 generator.

    Identical seed and identical call sequence give an identical stream.
    """

    def __init__(self, seed: int = 0):
        self.seed = int(seed)
        self._gen = np.random.Generator(np.random.PCG64(np.random.SeedSequence(self.seed)))

    def uniform(self, n) -> np.ndarray:
        """Draws from U[0, 1). ``n`` may be an int or a shape tuple."""
        return self._gen.random(n)

    def normal(self, n) -> np.ndarray:
        return self._gen.standard_normal(n)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def integers(self, high: int, size=None) -> np.ndarray:
        return self._gen.integers(0, high, size=size)

    def choice(self, n: int, size: int, p=None) -> np.ndarray:
        return self._gen.choice(n, size=size, p=p)

    def spawn(self, k: int) -> List["Rng"]:
        """Derive ``k`` independent child sources from this one's seed."""
        children = np.random.SeedSequence(self.seed).spawn(k)
        out = []
        for i, ss in enumerate(children):
            r = Rng.__new__(Rng)
            r.seed = self.seed * 1000003 + i
            r._gen = np.random.Generator(np.random.PCG64(ss))
            out.append(r)
        return out


@dataclass
class MlpParams:
    """Weights ``W[l]`` of shape (fan_in, fan_out) and biases ``b[l]`` of shape (fan_out,)."""

    weights: List[np.ndarray]
    biases: List[np.ndarray]
    activation: str = "silu"

    def __post_init__(self):
        if len(self.weights) != len(self.biases) or not self.weights:
            raise ShapeError("weights and biases must be non-empty lists of equal length")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}; expected one of {ACTIVATIONS}")
        for l, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.shape != (w.shape[1],):
                raise ShapeError(f"layer {l}: weight {w.shape} and bias {b.shape} do not match")
            if l > 0 and self.weights[l - 1].shape[1] != w.shape[0]:
                raise ShapeError(
                    f"layer {l}: input size {w.shape[0]} does not chain with previous output "
                    f"{self.weights[l - 1].shape[1]}"
                )

    @property
    def sizes(self) -> List[int]:
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    @property
    def in_dim(self) -> int:
        return self.weights[0].shape[0]

    @property
    def out_dim(self) -> int:
        return self.weights[-1].shape[1]

    def arrays(self) -> List[np.ndarray]:
        """Parameters in canonical order: W0, b0, W1, b1, ..."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    @classmethod
    def from_arrays(cls, arrays: Sequence[np.ndarray], activation: str) -> "MlpParams":
        return cls(list(arrays[0::2]), list(arrays[1::2]), activation)

    def copy(self) -> "MlpParams":
        return MlpParams.from_arrays([a.copy() for a in self.arrays()], self.activation)

    def flatten(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.arrays()])

    def unflatten(self, flat: np.ndarray) -> "MlpParams":
        """Build params of this architecture from a flat vector."""
        flat = np.asarray(flat, dtype=np.float64)
        n_expected = sum(a.size for a in self.arrays())
        if flat.shape != (n_expected,):
            raise ShapeError(f"flat vector has {flat.size} entries, architecture needs {n_expected}")
        out, pos = [], 0
        for a in self.arrays():
            out.append(flat[pos:pos + a.size].reshape(a.shape).copy())
            pos += a.size
        return MlpParams.from_arrays(out, self.activation)


def init_mlp(sizes: Sequence[int], rng: Rng, activation: str = "silu") -> MlpParams:
    """Fan-in scaled uniform weights U(-1/sqrt(fan_in), 1/sqrt(fan_in)), zero biases."""
    if len(sizes) < 2 or any(int(s) < 1 for s in sizes):
        raise ShapeError(f"invalid layer sizes {list(sizes)}")
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        bound = 1.0 / np.sqrt(fan_in)
        weights.append((2.0 * rng.uniform((fan_in, fan_out)) - 1.0) * bound)
        biases.append(np.zeros(fan_out))
    return MlpParams(weights, biases, activation)


def _sigmoid(z: np.ndarray) -> np.ndarray:
    # exp overflow for very negative z correctly yields 0
    with np.errstate(over="ignore"):
        return 1.0 / (1.0 + np.exp(-z))


def _act(z: np.ndarray, kind: str) -> np.ndarray:
    if kind == "silu":
        return z * _sigmoid(z)
    return np.tanh(z)


def _act_and_grad(z: np.ndarray, kind: str) -> Tuple[np.ndarray, np.ndarray]:
    if kind == "silu":
        s = _sigmoid(z)
        a = z * s
        return a, s + a * (1.0 - s)
    t = np.tanh(z)
    return t, 1.0 - t * t


def _check_batch(params: MlpParams, batch: np.ndarray) -> np.ndarray:
    batch = np.asarray(batch, dtype=np.float64)
    if batch.ndim != 2 or batch.shape[1] != params.in_dim:
        raise ShapeError(f"batch shape {batch.shape} does not match network input size {params.in_dim}")
    return batch


def mlp_forward(params: MlpParams, batch: np.ndarray) -> np.ndarray:
    """Evaluate the network on a (B, in_dim) batch. Hidden layers use the
    activation, the output layer is linear."""
    h = _check_batch(params, batch)
    last = len(params.weights) - 1
    for l, (w, b) in enumerate(zip(params.weights, params.biases)):
        h = h @ w + b
        if l < last:
            h = _act(h, params.activation)
    return h


def mlp_loss_grad(
    params: MlpParams, batch: np.ndarray, targets: np.ndarray
) -> Tuple[float, MlpParams]:
    """Mean over rows of the squared Euclidean residual, and its exact gradient.

    Returns ``(loss, grads)`` where ``grads`` has the same layout as ``params``.
    """
    x = _check_batch(params, batch)
    targets = np.asarray(targets, dtype=np.float64)
    if targets.shape != (x.shape[0], params.out_dim):
        raise ShapeError(
            f"targets shape {targets.shape} does not match ({x.shape[0]}, {params.out_dim})"
        )
    n_rows = x.shape[0]
    last = len(params.weights) - 1

    slopes, post = [], [x]
    h = x
    for l, (w, b) in enumerate(zip(params.weights, params.biases)):
        h = h @ w + b
        if l < last:
            h, slope = _act_and_grad(h, params.activation)
            slopes.append(slope)
        post.append(h)

    resid = h - targets
    loss = float(np.sum(resid * resid) / n_rows)

    g = (2.0 / n_rows) * resid
    gw: List[np.ndarray] = [None] * len(params.weights)  # type: ignore[list-item]
    gb: List[np.ndarray] = [None] * len(params.weights)  # type: ignore[list-item]
    for l in range(last, -1, -1):
        gw[l] = post[l].T @ g
        gb[l] = g.sum(axis=0)
        if l > 0:
            g = (g @ params.weights[l].T) * slopes[l - 1]
    return loss, MlpParams(gw, gb, params.activation)


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: List[np.ndarray] = field(default_factory=list)
    v: List[np.ndarray] = field(default_factory=list)

    @classmethod
    def for_params(cls, params: MlpParams, lr: float = 1e-3, beta1: float = 0.9,
                   beta2: float = 0.999, eps: float = 1e-8) -> "AdamState":
        zeros = [np.zeros_like(a) for a in params.arrays()]
        return cls(lr, beta1, beta2, eps, 0, zeros, [z.copy() for z in zeros])


def adam_step(params: MlpParams, grads: MlpParams, opt: AdamState) -> Tuple[MlpParams, AdamState]:
    """One bias-corrected Adam update. Raises ``TrainingError`` on non-finite gradients."""
    p_arr, g_arr = params.arrays(), grads.arrays()
    if len(p_arr) != len(g_arr) or any(p.shape != g.shape for p, g in zip(p_arr, g_arr)):
        raise ShapeError("gradient layout does not match parameters")
    if len(opt.m) != len(p_arr) or any(p.shape != m.shape for p, m in zip(p_arr, opt.m)):
        raise ShapeError("optimizer state does not match parameters")
    for g in g_arr:
        if not np.all(np.isfinite(g)):
            raise TrainingError(f"non-finite gradient at optimizer step {opt.step + 1}")

    t = opt.step + 1
    c1 = 1.0 - opt.beta1 ** t
    c2 = 1.0 - opt.beta2 ** t
    new_p, new_m, new_v = [], [], []
    for p, g, m, v in zip(p_arr, g_arr, opt.m, opt.v):
        m = opt.beta1 * m + (1.0 - opt.beta1) * g
        v = opt.beta2 * v + (1.0 - opt.beta2) * (g * g)
        new_p.append(p - opt.lr * (m / c1) / (np.sqrt(v / c2) + opt.eps))
        new_m.append(m)
        new_v.append(v)
    new_opt = AdamState(opt.lr, opt.beta1, opt.beta2, opt.eps, t, new_m, new_v)
    return MlpParams.from_arrays(new_p, params.activation), new_opt
