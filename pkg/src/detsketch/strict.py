"""Strict-turnstile recovery with strongly explicit matrices.

Every matrix here is a pure function of ``(n, k)``: column ``i`` evaluates
the Reed-Solomon codeword of ``i`` at every field point and puts a one in
row ``alpha * q + C_i(alpha)`` of block ``alpha``. Two columns agree in at
most ``message_len - 1`` blocks, so a median over the ``q`` counters of a
column is a point query with error ``O(||x||_1 / (beta k))``.

Sublinear decoding splits index bits in halves, recovers the heavy
coordinates of both projections recursively and only queries the product
of the two candidate sets.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .core import (
    DimensionError,
    ParameterError,
    SketchMatrix,
    SparseVector,
    as_signal,
    magnitude_order,
)
from .hashgraph import _next_prime

C6 = 4
BETA = 100
KEEP = 5  # reduce_noise keeps the KEEP * k largest estimates
LEAF = 25  # a universe of at most LEAF * k^2 is queried exhaustively


class StrictViolationError(ValueError):
    """The sketch cannot come from a nonnegative signal."""


@dataclass
class DecodeStats:
    candidate_evaluations: int = 0
    rounds: int = 0
    nodes: int = 0


# ------------------------------------------------------------------------
# Reed-Solomon code matrices


def rs_alphabet(n: int, k: int, c6: int = C6) -> int:
    """Smallest prime ``q >= c6 k ceil(log n / (log log n + log k))`` (base-2 logs)."""
    ln = math.log2(max(n, 2))
    denom = max(1.0, math.log2(ln) + math.log2(k)) if ln > 1 else max(1.0, math.log2(k))
    return _next_prime(c6 * k * math.ceil(ln / denom))


def message_length(n: int, q: int) -> int:
    """Number of base-``q`` digits needed for indices below ``n``."""
    L, cap = 1, q
    while cap < n:
        L += 1
        cap *= q
    return L


def rs_rows(n: int, k: int, c6: int = C6) -> int:
    q = rs_alphabet(n, k, c6)
    return q * q


class RSMatrix(SketchMatrix):
    """``q^2 x n`` 0/1 matrix from a Reed-Solomon code with ``b = q`` blocks.

    The code has alphabet ``GF(q)`` for the prime ``q = rs_alphabet(n, k)``
    and message length ``ceil(log_q n)``; the message of ``i`` is its
    base-``q`` digits.
    """

    kind = "reed_solomon"

    def __init__(self, n: int, k: int, c6: int = C6):
        if n < 2 or k < 1:
            raise ParameterError("Reed-Solomon matrix needs n >= 2 and k >= 1")
        self.n, self.k, self.c6 = int(n), int(k), int(c6)
        self.q = rs_alphabet(self.n, self.k, self.c6)
        self.b = self.q
        self.message_len = message_length(self.n, self.q)
        self.m = self.q * self.b

    def params(self):
        return {"k": self.k, "c6": self.c6, "q": self.q, "b": self.b, "message_len": self.message_len}

    def digits(self, idx) -> np.ndarray:
        """``(message_len, len(idx))`` base-``q`` digits, least significant first."""
        idx = self._check_indices(idx)
        digits = np.empty((self.message_len, idx.size), dtype=np.int64)
        rest = idx.copy()
        for t in range(self.message_len):
            rest, digits[t] = np.divmod(rest, self.q)
        return digits

    def codewords(self, idx) -> np.ndarray:
        """``(len(idx), b)`` symbols ``C_i(alpha)`` by Horner's rule."""
        digits = self.digits(idx)
        q = self.q
        alpha = np.arange(self.b, dtype=np.int64)[None, :]
        acc = np.zeros((digits.shape[1], self.b), dtype=np.int64)
        for t in range(self.message_len - 1, -1, -1):
            acc = (acc * alpha + digits[t][:, None]) % q
        return acc

    def columns(self, idx):
        sym = self.codewords(idx)
        return np.arange(self.b, dtype=np.int64)[None, :] * self.q + sym, None

    def accumulate_columns(self, out, idx, coef):
        kernels.rs_scatter(out, self.digits(idx), np.asarray(coef, dtype=np.float64), self.q)

    def entry(self, row: int, i: int) -> int:
        """Single entry from ``(row, i)`` alone."""
        if not 0 <= row < self.m:
            raise DimensionError(f"row {row} outside [0, {self.m})")
        alpha, sym = divmod(int(row), self.q)
        val, rest, digits = 0, int(i), []
        for _ in range(self.message_len):
            rest, d = divmod(rest, self.q)
            digits.append(d)
        for d in reversed(digits):
            val = (val * alpha + d) % self.q
        return int(val == sym)


def build_rs_matrix(n: int, k: int) -> RSMatrix:
    return RSMatrix(n, k)


def rs_point_query(M: RSMatrix, v, i):
    """Median of the ``b`` counters of column ``i`` (vectorised over ``i``)."""
    v = np.ascontiguousarray(getattr(v, "values", v), dtype=np.float64)
    if v.shape != (M.m,):
        raise DimensionError(f"sketch length {v.shape} does not match m={M.m}")
    scalar = np.ndim(i) == 0
    rows, _ = M.columns(np.atleast_1d(i))
    est = kernels.gather_median(v, rows)
    return float(est[0]) if scalar else est


# ------------------------------------------------------------------------
# noise reduction and the tail point query


def _candidates(S) -> np.ndarray:
    return np.unique(np.asarray(S, dtype=np.int64).ravel())


def _reduce(M: RSMatrix, u: np.ndarray, S: np.ndarray, rows: np.ndarray, k: int, stats) -> tuple[np.ndarray, np.ndarray]:
    """Positions in ``S`` and values of the ``5k`` largest median estimates."""
    est = kernels.gather_median(u, rows)
    if stats is not None:
        stats.candidate_evaluations += int(S.size)
    order = magnitude_order(S, est)[: KEEP * k]
    order = order[est[order] != 0]
    return order, est[order]


def reduce_noise(M: RSMatrix, u, S, k: int, stats: DecodeStats | None = None) -> SparseVector:
    """Point-query every index of ``S`` and keep the ``5k`` largest estimates."""
    u = np.ascontiguousarray(getattr(u, "values", u), dtype=np.float64)
    if u.shape != (M.m,):
        raise DimensionError(f"sketch length {u.shape} does not match m={M.m}")
    S = _candidates(S)
    keep = KEEP * k
    if S.size == 0:
        return SparseVector.zeros(M.n, keep)
    pos, vals = _reduce(M, u, S, M.columns(S)[0], k, stats)
    return SparseVector.from_arrays(M.n, S[pos], vals, keep)


def contraction_factor(beta: float = BETA) -> float:
    """Guaranteed per-round shrink of the residual mass while ``S`` holds
    at least three quarters of it."""
    return (2 / beta + 1 / 3) * 0.75 + (1 + 2 / beta) * 0.25


def round_count(n: int, beta: float = BETA) -> int:
    return math.ceil(math.log2(max(n, 2)) / math.log2(1 / contraction_factor(beta))) + 2


def tail_point_query(
    M: RSMatrix,
    v,
    S,
    k: int,
    rounds: int | None = None,
    stats: DecodeStats | None = None,
) -> SparseVector:
    """Repeated ``reduce_noise`` on the residual sketch.

    ``M`` should be built for sparsity ``beta * k``. The sum of all rounds
    is truncated to its ``5k`` largest entries, which keeps every
    coordinate above the error bound when ``beta`` is large.
    """
    v = np.array(getattr(v, "values", v), dtype=np.float64)
    if v.shape != (M.m,):
        raise DimensionError(f"sketch length {v.shape} does not match m={M.m}")
    R = round_count(M.n) if rounds is None else int(rounds)
    S = _candidates(S)
    w = np.zeros(S.size)
    if S.size:
        rows = M.columns(S)[0]
        for _ in range(R + 1):
            pos, vals = _reduce(M, v, S, rows, k, stats)
            if stats is not None:
                stats.rounds += 1
            if pos.size == 0:
                break
            w[pos] += vals
            # residual sketch: subtract the columns just estimated
            kernels.accumulate(v, rows[pos], np.repeat(-vals, rows.shape[1]))
    return SparseVector.from_arrays(M.n, S, w, S.size).top(KEEP * k)


# ------------------------------------------------------------------------
# recursive bit splitting


@dataclass
class SplitNode:
    """Node over the index bits ``[lo, lo + bits)`` of the padded universe."""

    lo: int
    bits: int
    level: int
    matrix: RSMatrix
    children: tuple = field(default=())
    offset: int = 0

    @property
    def universe(self) -> int:
        return 1 << self.bits

    @property
    def leaf(self) -> bool:
        return not self.children

    def project(self, idx: np.ndarray) -> np.ndarray:
        return (idx >> self.lo) & (self.universe - 1)


class SplitTree(SketchMatrix):
    """Stack of Reed-Solomon matrices over recursive halvings of the index bits.

    The root sees the padded index itself; its first child sees the high
    ``ceil(bits / 2)`` bits and its second child the remaining low bits.
    A node whose universe has at most ``25 k^2`` indices is a leaf.
    """

    kind = "split_tree"

    def __init__(self, n: int, k: int, beta: int = BETA, c6: int = C6):
        if n < 2 or k < 1:
            raise ParameterError("split tree needs n >= 2 and k >= 1")
        self.n, self.k, self.beta, self.c6 = int(n), int(k), int(beta), int(c6)
        self.n_bits = max(1, math.ceil(math.log2(self.n)))
        self.nodes: list[SplitNode] = []
        self.root = self._grow(0, self.n_bits, 0)
        self.m = 0
        for node in self.nodes:
            node.offset = self.m
            self.m += node.matrix.m

    def _grow(self, lo: int, bits: int, level: int) -> SplitNode:
        node = SplitNode(lo, bits, level, RSMatrix(max(2, 1 << bits), self.beta * self.k, self.c6))
        self.nodes.append(node)
        if (1 << bits) > LEAF * self.k * self.k and bits >= 2:
            hi_bits = math.ceil(bits / 2)
            first = self._grow(lo + bits - hi_bits, hi_bits, level + 1)
            sec = self._grow(lo, bits - hi_bits, level + 1)
            node.children = (first, sec)
        return node

    @property
    def depth(self) -> int:
        return max(nd.level for nd in self.nodes)

    def params(self):
        return {
            "k": self.k,
            "beta": self.beta,
            "c6": self.c6,
            "nodes": [[nd.level, nd.lo, nd.bits, nd.matrix.q] for nd in self.nodes],
        }

    def segment(self, v: np.ndarray, node: SplitNode) -> np.ndarray:
        return v[node.offset : node.offset + node.matrix.m]

    def columns(self, idx):
        idx = self._check_indices(idx)
        parts = [nd.matrix.columns(nd.project(idx))[0] + nd.offset for nd in self.nodes]
        return np.concatenate(parts, axis=1), None

    def accumulate_columns(self, out, idx, coef):
        idx = self._check_indices(idx)
        coef = np.asarray(coef, dtype=np.float64)
        for nd in self.nodes:
            nd.matrix.accumulate_columns(self.segment(out, nd), nd.project(idx), coef)

    def apply(self, x):
        x = as_signal(x, self.n)
        out = np.zeros(self.m)
        idx = np.flatnonzero(x)
        for nd in self.nodes:
            # summing projected coordinates first keeps each node at one pass
            proj = np.bincount(nd.project(idx), weights=x[idx], minlength=nd.universe)
            pidx = np.flatnonzero(proj)
            nd.matrix.accumulate_columns(self.segment(out, nd), pidx, proj[pidx])
        return out


def build_split_tree(n: int, k: int, beta: int = BETA) -> SplitTree:
    return SplitTree(n, k, beta)


def split_tree_rows(n: int, k: int, beta: int = BETA, c6: int = C6) -> int:
    """``sum_i 2^i M(n^(1/2^i), beta k)`` over levels until ``n^(1/2^i) <= 25 k^2``.

    Exact for universes whose bit count halves evenly at every level.
    """
    bits = max(1, math.ceil(math.log2(n)))
    total, i = 0, 0
    while True:
        size = 1 << bits
        total += 2**i * rs_rows(max(2, size), beta * k, c6)
        if size <= LEAF * k * k or bits < 2:
            return total
        bits = math.ceil(bits / 2)
        i += 1


def recursive_decode(T: SplitTree, v_all, k: int | None = None, stats: DecodeStats | None = None) -> SparseVector:
    """Recover a ``5k``-sparse ``x_hat`` with ``||x - x_hat||_inf <= ||x_{-k}||_1 / k``.

    Requires a nonnegative signal; a negative counter anywhere in the
    sketch is reported as a strict-model violation.
    """
    k = T.k if k is None else int(k)
    v_all = np.asarray(getattr(v_all, "values", v_all), dtype=np.float64)
    if v_all.shape != (T.m,):
        raise DimensionError(f"sketch length {v_all.shape} does not match m={T.m}")
    scale = float(np.abs(v_all).max()) if v_all.size else 0.0
    if v_all.size and v_all.min() < -1e-9 * max(scale, 1.0):
        raise StrictViolationError("negative counter: the signal is not nonnegative")
    stats = DecodeStats() if stats is None else stats

    def solve(node: SplitNode, limit: int) -> SparseVector:
        stats.nodes += 1
        if node.leaf:
            S = np.arange(min(node.universe, limit), dtype=np.int64)
        else:
            first, sec = node.children
            f_idx, _ = solve(first, first.universe).arrays()
            s_idx, _ = solve(sec, sec.universe).arrays()
            S = ((f_idx[:, None] << sec.bits) | s_idx[None, :]).ravel()
            S = S[S < limit]
        return tail_point_query(node.matrix, T.segment(v_all, node), S, k, stats=stats)

    res = solve(T.root, T.n)
    return SparseVector(T.n, res.entries, KEEP * k)
