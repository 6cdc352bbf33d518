"""Signals, sparse vectors, sketch matrices, sketch vectors and the oracle.

Conventions used everywhere in the package:

* ordering of coordinates is by magnitude descending, then index ascending;
* a ``Signal`` is a plain 1-d float64 numpy array;
* dense materialisation of a sketch matrix is only allowed when
  ``n * m <= 2**26``.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Iterator

import numpy as np

from . import kernels

DENSE_LIMIT = 1 << 26


class ParameterError(ValueError):
    """Invalid or inconsistent construction parameters."""


class DimensionError(ValueError):
    """A signal, update or sketch does not match the matrix dimensions."""


class StreamFormatError(ValueError):
    """A malformed line in a stream or signal file."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


@dataclass(frozen=True)
class Update:
    index: int
    delta: float


def as_signal(x, n: int | None = None) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise DimensionError("a signal must be one-dimensional")
    if n is not None and x.shape[0] != n:
        raise DimensionError(f"signal has length {x.shape[0]}, expected {n}")
    return x


def magnitude_order(indices, values) -> np.ndarray:
    """Permutation sorting entries by |value| descending, then index ascending."""
    indices = np.asarray(indices)
    values = np.asarray(values, dtype=np.float64)
    return np.lexsort((indices, -np.abs(values)))


class SparseVector:
    """Index -> value map over ``[0, n)`` with a declared support bound."""

    __slots__ = ("n", "entries", "support_bound")

    def __init__(self, n: int, entries: dict | None = None, support_bound: int | None = None):
        self.n = int(n)
        self.entries = {}
        for i, v in (entries or {}).items():
            i = int(i)
            if not 0 <= i < self.n:
                raise DimensionError(f"index {i} outside [0, {self.n})")
            if v != 0:
                self.entries[i] = float(v)
        self.support_bound = len(self.entries) if support_bound is None else int(support_bound)
        if len(self.entries) > self.support_bound:
            raise ParameterError(
                f"{len(self.entries)} nonzeros exceed the support bound {self.support_bound}"
            )

    @classmethod
    def zeros(cls, n: int, support_bound: int = 0) -> SparseVector:
        return cls(n, {}, support_bound)

    @classmethod
    def from_arrays(cls, n, indices, values, support_bound=None) -> SparseVector:
        return cls(n, dict(zip(np.asarray(indices).tolist(), np.asarray(values).tolist())), support_bound)

    @classmethod
    def from_dense(cls, x, support_bound=None) -> SparseVector:
        x = as_signal(x)
        idx = np.flatnonzero(x)
        return cls.from_arrays(x.shape[0], idx, x[idx], support_bound)

    def __len__(self):
        return len(self.entries)

    def __contains__(self, i):
        return i in self.entries

    def __getitem__(self, i):
        return self.entries.get(i, 0.0)

    def __eq__(self, other):
        return isinstance(other, SparseVector) and self.n == other.n and self.entries == other.entries

    def __repr__(self):
        return f"SparseVector(n={self.n}, nnz={len(self.entries)}, bound={self.support_bound})"

    @property
    def nnz(self) -> int:
        return len(self.entries)

    def support(self) -> set[int]:
        return set(self.entries)

    def arrays(self) -> tuple[np.ndarray, np.ndarray]:
        """Indices (ascending) and values as numpy arrays."""
        idx = np.array(sorted(self.entries), dtype=np.int64)
        vals = np.array([self.entries[i] for i in idx.tolist()], dtype=np.float64)
        return idx, vals

    def ranked(self) -> list[tuple[int, float]]:
        """Entries in the global order: magnitude descending, index ascending."""
        return sorted(self.entries.items(), key=lambda kv: (-abs(kv[1]), kv[0]))

    def top(self, s: int) -> SparseVector:
        return SparseVector(self.n, dict(self.ranked()[: max(0, int(s))]), max(0, int(s)))

    def to_dense(self) -> np.ndarray:
        out = np.zeros(self.n)
        for i, v in self.entries.items():
            out[i] = v
        return out

    def __add__(self, other: SparseVector) -> SparseVector:
        if other.n != self.n:
            raise DimensionError("sparse vectors over different universes")
        merged = dict(self.entries)
        for i, v in other.entries.items():
            merged[i] = merged.get(i, 0.0) + v
        return SparseVector(self.n, merged, self.support_bound + other.support_bound)

    def without(self, i: int) -> SparseVector:
        e = dict(self.entries)
        e.pop(i, None)
        return SparseVector(self.n, e, self.support_bound)


# --------------------------------------------------------------------------
# tails and heads


def tail_norm(x, k: int) -> float:
    """l1 norm of ``x`` after zeroing its ``k`` largest-magnitude coordinates."""
    x = as_signal(x)
    n = x.shape[0]
    if k < 0 or k > n:
        raise ParameterError(f"k={k} outside [0, {n}]")
    mags = np.sort(np.abs(x))[::-1]
    return math.fsum(mags[k:].tolist())


def top_k(x, k: int) -> np.ndarray:
    """H(x, k): indices of the ``k`` largest coordinates under the global order."""
    x = as_signal(x)
    if k < 0:
        raise ParameterError("k must be nonnegative")
    order = np.lexsort((np.arange(x.shape[0]), -np.abs(x)))
    return np.sort(order[: min(k, x.shape[0])])


def head_set(x, k: int, eps: float) -> set[int]:
    """H(x, k, eps) = {i : |x_i| >= (eps / k) * ||x_{-k}||_1}.

    With a zero tail the set is defined as the support of ``x``.
    """
    if k < 1:
        raise ParameterError("k must be at least 1")
    if eps <= 0:
        raise ParameterError("eps must be positive")
    x = as_signal(x)
    tail = tail_norm(x, min(k, x.shape[0]))
    if tail == 0:
        return set(np.flatnonzero(x).tolist())
    thr = eps / k * tail
    return set(np.flatnonzero(np.abs(x) >= thr).tolist())


# --------------------------------------------------------------------------
# sketch matrices


def descriptor_bytes(desc: dict) -> bytes:
    """Canonical JSON encoding of a matrix descriptor."""
    return json.dumps(desc, sort_keys=True, separators=(",", ":")).encode()


class SketchMatrix:
    """A linear measurement operator with sparse column access.

    Subclasses implement ``columns``; everything else is derived from it.
    ``columns(idx)`` returns ``(rows, vals)`` of shape ``(len(idx), width)``
    where ``vals`` may be ``None`` for an all-ones pattern.
    """

    kind = "abstract"
    n: int
    m: int
    seed: int | None = None

    def columns(self, idx) -> tuple[np.ndarray, np.ndarray | None]:
        raise NotImplementedError

    def params(self) -> dict:
        return {}

    def descriptor(self) -> dict:
        d = {"kind": self.kind, "n": self.n, "m": self.m, "params": self.params()}
        if self.seed is not None:
            d["seed"] = self.seed
        return d

    def _table_bytes(self) -> Iterable[bytes]:
        return ()

    def fingerprint(self) -> str:
        """sha256 over the descriptor and any sampled tables."""
        h = hashlib.sha256(descriptor_bytes(self.descriptor()))
        for chunk in self._table_bytes():
            h.update(chunk)
        return h.hexdigest()

    def _check_indices(self, idx) -> np.ndarray:
        idx = np.atleast_1d(np.asarray(idx, dtype=np.int64))
        if idx.size and (idx.min() < 0 or idx.max() >= self.n):
            raise DimensionError(f"column index outside [0, {self.n})")
        return idx

    def column(self, i: int) -> np.ndarray:
        rows, vals = self.columns([i])
        out = np.zeros(self.m)
        kernels.accumulate(out, rows[0], np.ones(rows.shape[1]) if vals is None else vals[0])
        return out

    def _chunk(self) -> int:
        rows, _ = self.columns([0])
        return max(1, (1 << 21) // max(1, rows.shape[1]))

    def accumulate_columns(self, out: np.ndarray, idx, coef) -> None:
        """out += sum_t coef[t] * column(idx[t])."""
        idx = self._check_indices(idx)
        coef = np.asarray(coef, dtype=np.float64)
        if idx.size == 0:
            return
        step = self._chunk()
        for a in range(0, idx.size, step):
            rows, vals = self.columns(idx[a : a + step])
            c = coef[a : a + step, None]
            w = np.broadcast_to(c, rows.shape) if vals is None else vals * c
            kernels.accumulate(out, rows, w)

    def apply(self, x) -> np.ndarray:
        x = as_signal(x, self.n)
        out = np.zeros(self.m)
        idx = np.flatnonzero(x)
        self.accumulate_columns(out, idx, x[idx])
        return out

    def apply_sparse(self, sv: SparseVector) -> np.ndarray:
        if sv.n != self.n:
            raise DimensionError("sparse vector universe does not match the matrix")
        out = np.zeros(self.m)
        idx, vals = sv.arrays()
        self.accumulate_columns(out, idx, vals)
        return out

    def to_dense(self) -> np.ndarray:
        if self.n * self.m > DENSE_LIMIT:
            raise ParameterError(f"refusing to materialise a {self.m}x{self.n} matrix")
        out = np.zeros((self.m, self.n))
        for i in range(self.n):
            out[:, i] = self.column(i)
        return out


class DenseMatrix(SketchMatrix):
    """An explicitly stored matrix; only for tiny worked examples and tests."""

    kind = "dense"

    def __init__(self, array):
        a = np.asarray(array, dtype=np.float64)
        if a.ndim != 2:
            raise DimensionError("dense matrix must be 2-d")
        self.m, self.n = a.shape
        if self.m * self.n > DENSE_LIMIT:
            raise ParameterError("dense matrix too large")
        self.array = a

    def columns(self, idx):
        idx = self._check_indices(idx)
        rows = np.broadcast_to(np.arange(self.m, dtype=np.int64), (idx.size, self.m))
        return np.ascontiguousarray(rows), np.ascontiguousarray(self.array[:, idx].T)

    def params(self):
        return {"entries": self.array.tolist()}

    def apply(self, x):
        return self.array @ as_signal(x, self.n)


class StackedMatrix(SketchMatrix):
    """Vertical concatenation of child matrices over a common universe."""

    kind = "stacked"

    def __init__(self, children, name: str = "stacked"):
        children = list(children)
        if not children:
            raise ParameterError("a stacked matrix needs at least one child")
        n = {c.n for c in children}
        if len(n) != 1:
            raise DimensionError("stacked children must share the universe size")
        self.children = children
        self.name = name
        self.n = children[0].n
        self.offsets = np.cumsum([0] + [c.m for c in children])
        self.m = int(self.offsets[-1])

    def params(self):
        return {"name": self.name}

    def descriptor(self):
        d = super().descriptor()
        d["children"] = [c.descriptor() for c in self.children]
        return d

    def _table_bytes(self):
        for c in self.children:
            yield from c._table_bytes()

    def segment(self, v: np.ndarray, t: int) -> np.ndarray:
        return v[self.offsets[t] : self.offsets[t + 1]]

    def columns(self, idx):
        idx = self._check_indices(idx)
        rows, vals = [], []
        for off, c in zip(self.offsets[:-1], self.children):
            r, v = c.columns(idx)
            rows.append(r + off)
            vals.append(np.ones(r.shape) if v is None else v)
        return np.concatenate(rows, axis=1), np.concatenate(vals, axis=1)

    def accumulate_columns(self, out, idx, coef):
        for t, c in enumerate(self.children):
            c.accumulate_columns(self.segment(out, t), idx, coef)

    def apply(self, x):
        x = as_signal(x, self.n)
        return np.concatenate([c.apply(x) for c in self.children])


# --------------------------------------------------------------------------
# sketch vectors


class SketchVector:
    """The measurement vector ``Phi x`` maintained under turnstile updates.

    Not thread-safe: updates need exclusive access.
    """

    def __init__(self, matrix: SketchMatrix, values=None):
        self.matrix = matrix
        if values is None:
            values = np.zeros(matrix.m)
        values = np.asarray(values, dtype=np.float64)
        if values.shape != (matrix.m,):
            raise DimensionError(f"sketch has length {values.shape}, matrix has {matrix.m} rows")
        self.values = values

    def copy(self) -> SketchVector:
        return SketchVector(self.matrix, self.values.copy())

    def ingest(self, update: Update) -> SketchVector:
        if not 0 <= update.index < self.matrix.n:
            raise DimensionError(f"update index {update.index} outside [0, {self.matrix.n})")
        self.matrix.accumulate_columns(self.values, [update.index], [update.delta])
        return self

    def ingest_many(self, indices, deltas) -> SketchVector:
        """Apply a batch of updates; equivalent to ingesting them one by one."""
        self.matrix.accumulate_columns(self.values, indices, deltas)
        return self

    def __sub__(self, other):
        return SketchVector(self.matrix, self.values - np.asarray(getattr(other, "values", other)))


def apply(phi: SketchMatrix, x) -> SketchVector:
    return SketchVector(phi, phi.apply(x))


def ingest(v: SketchVector, u: Update) -> SketchVector:
    return v.ingest(u)


# --------------------------------------------------------------------------
# oracle


def _exact_tail(x: np.ndarray, r: int) -> Fraction:
    mags = np.sort(np.abs(x))[::-1][r:]
    return sum((Fraction(float(v)) for v in mags if v), Fraction(0))


def linf_error(x, xhat: SparseVector) -> Fraction:
    """max_i |x_i - xhat_i| computed exactly."""
    x = as_signal(x, xhat.n)
    mask = np.ones(x.shape[0], dtype=bool)
    worst = Fraction(0)
    for i, v in xhat.entries.items():
        mask[i] = False
        worst = max(worst, abs(Fraction(float(x[i])) - Fraction(v)))
    if mask.any():
        worst = max(worst, Fraction(float(np.abs(x[mask]).max())))
    return worst


def l1_error(x, xhat: SparseVector) -> Fraction:
    x = as_signal(x, xhat.n)
    mask = np.ones(x.shape[0], dtype=bool)
    total = Fraction(0)
    for i, v in xhat.entries.items():
        mask[i] = False
        total += abs(Fraction(float(x[i])) - Fraction(v))
    return total + sum((Fraction(float(v)) for v in np.abs(x[mask]) if v), Fraction(0))


def oracle_verify_linf(x, xhat: SparseVector, k: int, r: int) -> bool:
    """Exact check of ``||x - xhat||_inf <= (1/k) ||x_{-r}||_1``."""
    x = as_signal(x, xhat.n)
    return linf_error(x, xhat) * k <= _exact_tail(x, min(r, x.shape[0]))


def oracle_verify_l1(x, xhat: SparseVector, k: int, factor: float) -> bool:
    """Exact check of ``||x - xhat||_1 <= factor * ||x_{-k}||_1``."""
    x = as_signal(x, xhat.n)
    return l1_error(x, xhat) <= Fraction(factor) * _exact_tail(x, min(k, x.shape[0]))


# --------------------------------------------------------------------------
# text formats


def _parse_pairs(lines: Iterable[str]) -> Iterator[tuple[int, int, float]]:
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2:
            raise StreamFormatError(f"expected '<index> <value>', got {raw.strip()!r}", lineno)
        try:
            idx = int(parts[0])
            val = float(parts[1])
        except ValueError:
            raise StreamFormatError(f"cannot parse {raw.strip()!r}", lineno) from None
        if not math.isfinite(val):
            raise StreamFormatError("non-finite value", lineno)
        yield lineno, idx, val


def read_stream(lines: Iterable[str], n: int | None = None) -> Iterator[Update]:
    """Parse ``<index> <delta>`` lines; ``#`` starts a comment."""
    for lineno, idx, val in _parse_pairs(lines):
        if idx < 0 or (n is not None and idx >= n):
            raise StreamFormatError(f"index {idx} outside [0, {n})", lineno)
        yield Update(idx, val)


def read_signal(lines: Iterable[str], n: int) -> np.ndarray:
    """Parse a sparse ``<index> <value>`` listing into a dense signal."""
    x = np.zeros(n)
    for lineno, idx, val in _parse_pairs(lines):
        if not 0 <= idx < n:
            raise StreamFormatError(f"index {idx} outside [0, {n})", lineno)
        x[idx] += val
    return x


def format_signal(x) -> str:
    x = as_signal(x)
    return "".join(f"{i} {float(x[i])!r}\n" for i in np.flatnonzero(x).tolist())
