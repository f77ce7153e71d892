"""Datasets with missing entries, CSV I/O, standardization and initial imputation."""

from __future__ import annotations

import csv
import io
import os
import tempfile
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .errors import ParseError, PreprocessingError, ShapeError
from .numeric import Rng

MISSING = np.nan
DEFAULT_MISSING_TOKENS = ("", "NaN", "nan", "NA")
INIT_STRATEGIES = ("normal", "uniform", "mean")


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class MaskedDataset:
    """Observed values plus a boolean mask (True = observed).

    ``raw`` holds NaN wherever ``mask`` is False; the mask is the source of truth.
    """

    raw: np.ndarray
    mask: np.ndarray
    feature_names: Optional[Tuple[str, ...]] = None

    def __post_init__(self):
        raw = np.asarray(self.raw, dtype=np.float64)
        mask = np.asarray(self.mask)
        if raw.ndim != 2 or raw.shape[0] < 1 or raw.shape[1] < 1:
            raise ShapeError(f"dataset must be a non-empty 2-d array, got shape {raw.shape}")
        if mask.shape != raw.shape:
            raise ShapeError(f"mask shape {mask.shape} does not match data shape {raw.shape}")
        if mask.dtype != bool:
            if not np.all((mask == 0) | (mask == 1)):
                raise ShapeError("mask entries must be 0 or 1")
            mask = mask.astype(bool)
        if not np.all(np.isfinite(raw[mask])):
            raise ShapeError("observed entries must be finite")
        raw = np.where(mask, raw, MISSING)
        if self.feature_names is not None:
            names = tuple(str(n) for n in self.feature_names)
            if len(names) != raw.shape[1]:
                raise ShapeError(f"{len(names)} feature names for {raw.shape[1]} columns")
            object.__setattr__(self, "feature_names", names)
        object.__setattr__(self, "raw", _frozen(raw))
        object.__setattr__(self, "mask", _frozen(mask))

    @property
    def shape(self) -> Tuple[int, int]:
        return self.raw.shape

    @property
    def n_missing(self) -> int:
        return int((~self.mask).sum())

    def feature_label(self, j: int) -> str:
        if self.feature_names is not None:
            return f"{self.feature_names[j]!r} (column {j})"
        return f"column {j}"


@dataclass(frozen=True)
class ImputationState:
    """Completed data at iteration ``iteration``; observed cells are pinned."""

    x: np.ndarray
    mask: np.ndarray
    pinned: np.ndarray
    iteration: int = 0

    def __post_init__(self):
        x = np.asarray(self.x, dtype=np.float64)
        mask = np.asarray(self.mask, dtype=bool)
        pinned = np.asarray(self.pinned, dtype=np.float64)
        if x.ndim != 2 or mask.shape != x.shape or pinned.shape != x.shape:
            raise ShapeError(
                f"inconsistent state shapes x={x.shape} mask={mask.shape} pinned={pinned.shape}"
            )
        if not np.all(np.isfinite(x)):
            raise ShapeError(f"state at iteration {self.iteration} has non-finite entries")
        object.__setattr__(self, "x", _frozen(x))
        object.__setattr__(self, "mask", _frozen(mask))
        object.__setattr__(self, "pinned", _frozen(pinned))

    def pinning_holds(self) -> bool:
        """True when every observed entry equals its pinned value bit for bit."""
        a = self.x[self.mask]
        b = self.pinned[self.mask]
        return bool(np.array_equal(a.view(np.int64), b.view(np.int64)))


# ---------------------------------------------------------------- CSV


def _is_missing(tok: str, missing_tokens: Sequence[str]) -> bool:
    return tok.strip() in missing_tokens


def _parse_float(tok: str) -> Optional[float]:
    try:
        v = float(tok)
    except ValueError:
        return None
    return v


def load_csv(path, missing_token: Optional[str] = None, header: Optional[bool] = None) -> MaskedDataset:
    """Read a numeric CSV with missing cells.

    Lines starting with ``#`` are comments. ``header=None`` auto-detects a
    header row: the first row is a header when none of its fields is numeric.
    An empty field is always missing; ``missing_token`` adds one more token
    (default: "NaN", "nan" and "NA").
    """
    tokens = ("",) + ((missing_token,) if missing_token is not None else DEFAULT_MISSING_TOKENS[1:])
    with open(path, newline="") as fh:
        lines = [(i + 1, ln) for i, ln in enumerate(fh.read().splitlines())]
    lines = [(i, ln) for i, ln in lines if ln.strip() and not ln.lstrip().startswith("#")]
    if not lines:
        raise ParseError(f"{path}: file has no data rows")
    rows = [(i, next(csv.reader([ln]))) for i, ln in lines]

    names = None
    first_line, first = rows[0]
    is_header = header
    if is_header is None:
        is_header = all(
            _parse_float(t) is None and not _is_missing(t, tokens) for t in first
        )
    if is_header:
        names = tuple(t.strip() for t in first)
        rows = rows[1:]
        if not rows:
            raise ParseError(f"{path}: file has a header but no data rows")

    d = len(names) if names is not None else len(rows[0][1])
    raw = np.empty((len(rows), d))
    mask = np.ones((len(rows), d), dtype=bool)
    for r, (line_no, fields) in enumerate(rows):
        if len(fields) != d:
            raise ParseError(f"{path}: expected {d} fields, found {len(fields)}", row=line_no)
        for c, tok in enumerate(fields):
            if _is_missing(tok, tokens):
                raw[r, c] = MISSING
                mask[r, c] = False
                continue
            v = _parse_float(tok)
            if v is None or not np.isfinite(v):
                raise ParseError(f"{path}: non-numeric field {tok!r}", row=line_no, column=c + 1)
            raw[r, c] = v
    return MaskedDataset(raw, mask, names)


def format_float(v: float) -> str:
    """Shortest string that round-trips to the same double."""
    return repr(float(v))


def atomic_write_text(path, text: str) -> None:
    """Write ``text`` to a sibling temp file, then rename over ``path``."""
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def matrix_to_csv(values: np.ndarray, mask: Optional[np.ndarray] = None,
                  feature_names: Optional[Sequence[str]] = None, missing_token: str = "NaN",
                  comment: Optional[str] = None, fmt=format_float) -> str:
    buf = io.StringIO()
    if comment:
        for ln in comment.splitlines():
            buf.write(f"# {ln}\n")
    w = csv.writer(buf, lineterminator="\n")
    if feature_names is not None:
        w.writerow(feature_names)
    values = np.asarray(values)
    for i in range(values.shape[0]):
        if mask is None:
            w.writerow([fmt(v) for v in values[i]])
        else:
            w.writerow([fmt(v) if m else missing_token for v, m in zip(values[i], mask[i])])
    return buf.getvalue()


def write_csv(path, ds: MaskedDataset, missing_token: str = "NaN", comment: Optional[str] = None) -> None:
    """Write a dataset; missing cells become ``missing_token``."""
    atomic_write_text(path, matrix_to_csv(ds.raw, ds.mask, ds.feature_names, missing_token, comment))


def write_matrix_csv(path, values: np.ndarray, feature_names=None, comment: Optional[str] = None) -> None:
    atomic_write_text(path, matrix_to_csv(values, None, feature_names, comment=comment))


def write_mask_csv(path, mask: np.ndarray, feature_names=None, comment: Optional[str] = None) -> None:
    """0/1 mask in the same layout as the data (1 = observed)."""
    text = matrix_to_csv(np.asarray(mask, dtype=int), None, feature_names, comment=comment,
                         fmt=lambda v: str(int(v)))
    atomic_write_text(path, text)


def load_mask_csv(path) -> np.ndarray:
    ds = load_csv(path)
    if ds.n_missing:
        raise ParseError(f"{path}: mask file has empty cells")
    m = ds.raw
    if not np.all((m == 0) | (m == 1)):
        raise ParseError(f"{path}: mask entries must be 0 or 1")
    return m.astype(bool)


# ---------------------------------------------------------------- standardization


@dataclass(frozen=True)
class Standardizer:
    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, ds: MaskedDataset) -> "Standardizer":
        """Per-feature mean and population std over observed entries only."""
        n_obs = ds.mask.sum(axis=0)
        mean = np.empty(ds.shape[1])
        std = np.empty(ds.shape[1])
        for j in range(ds.shape[1]):
            col = ds.raw[ds.mask[:, j], j]
            if n_obs[j] < 2:
                raise PreprocessingError(
                    f"feature {ds.feature_label(j)} has {n_obs[j]} observed entries; need at least 2"
                )
            mean[j] = col.mean()
            std[j] = col.std()
            if not std[j] > 0:
                raise PreprocessingError(f"feature {ds.feature_label(j)} is constant over observed entries")
        return cls(_frozen(mean), _frozen(std))

    def transform(self, x: np.ndarray) -> np.ndarray:
        return (x - self.mean) / self.std

    def inverse(self, z: np.ndarray) -> np.ndarray:
        return z * self.std + self.mean


def standardize(ds: MaskedDataset) -> Tuple[MaskedDataset, Standardizer]:
    s = Standardizer.fit(ds)
    return MaskedDataset(s.transform(ds.raw), ds.mask, ds.feature_names), s


# ---------------------------------------------------------------- initial imputation


def initial_impute(ds: MaskedDataset, strategy: str = "normal", rng: Optional[Rng] = None) -> ImputationState:
    """Fill missing cells to start the iterations.

    ``normal`` draws iid N(0, 1), ``uniform`` iid U(0, 1), ``mean`` uses the
    per-feature observed mean. Fills are drawn in row-major order of the
    missing cells. Observed cells are copied verbatim.
    """
    if strategy not in INIT_STRATEGIES:
        raise ValueError(f"unknown init strategy {strategy!r}; expected one of {INIT_STRATEGIES}")
    miss = ~ds.mask
    k = int(miss.sum())
    x = np.array(ds.raw, copy=True)
    if k:
        if strategy == "mean":
            obs = np.where(ds.mask, ds.raw, 0.0)
            counts = ds.mask.sum(axis=0)
            col_mean = np.divide(obs.sum(axis=0), counts, out=np.zeros(ds.shape[1]), where=counts > 0)
            x[miss] = np.broadcast_to(col_mean, ds.shape)[miss]
        else:
            rng = rng if rng is not None else Rng(0)
            x[miss] = rng.normal(k) if strategy == "normal" else rng.uniform(k)
    return ImputationState(x, ds.mask, ds.raw, 0)
