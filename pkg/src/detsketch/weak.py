"""Weak recovery systems built on two-layer hashing with embedded messages.

One weak system finds most of the heavy coordinates of a signal that is a
few heavies plus a light tail:

1. keep first-layer buckets whose median pair sum clears a threshold;
2. read the embedded bits of every kept bucket and inner-decode them into
   a chunk of the index codeword plus links to other repetitions;
3. join chunks that name each other into clusters and outer-decode each
   cluster to a candidate index;
4. estimate each candidate by the median of its bucket sums and keep the
   largest ``s``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from . import kernels
from .coding import BinaryCode, BlockLayout, LinkGraph, OuterCode, block_payloads, fold_repeats
from .core import DimensionError, ParameterError, SketchMatrix, SketchVector, SparseVector, magnitude_order
from .hashgraph import TwoLayerHash, TwoLayerParams

BITS_CACHE_LIMIT = 1 << 26


@dataclass(frozen=True)
class Flavor:
    """Which weak guarantee a matrix is sized for.

    ``l1l1``: sparsity ``s`` and accuracy ``eps``.
    ``linf``: target ``k``, sparsity ``s`` and head parameter ``w``; the
    residual head after decoding is at most ``sqrt(s w)``.
    """

    kind: str
    s: float
    eps: float = 1.0
    k: float | None = None
    w: float | None = None
    final: bool = False

    @classmethod
    def l1l1(cls, s, eps) -> Flavor:
        return cls("l1l1", float(s), float(eps))

    @classmethod
    def linf(cls, k, s, w, final=False) -> Flavor:
        """``final`` marks the closing call of the schedule, which may use ``s > k``."""
        return cls("linf", float(s), 1.0, float(k), float(w), bool(final))

    def validate(self, n: int) -> None:
        root = math.sqrt(n)
        if self.kind == "l1l1":
            if not (1 <= self.s <= root) or not 0 < self.eps <= 1:
                raise ParameterError(f"l1l1 weak system needs 1 <= s <= sqrt(n) and 0 < eps <= 1, got s={self.s} eps={self.eps}")
        elif self.kind == "linf":
            if not (0 < self.w <= self.s and self.k <= root and (self.final or self.s <= self.k)):
                raise ParameterError(
                    f"linf weak system needs 0 < w <= s <= k <= sqrt(n), got w={self.w} s={self.s} k={self.k}"
                )
        else:
            raise ParameterError(f"unknown flavor {self.kind!r}")

    @property
    def sparsity(self) -> int:
        return max(1, math.ceil(self.s - 1e-9))

    @property
    def accuracy(self) -> float:
        """Accuracy handed to the two-layer sizing rules."""
        if self.kind == "l1l1":
            return self.eps
        return min(1.0, math.sqrt(self.s * self.w) / self.k)

    @property
    def threshold(self) -> float:
        """Bucket magnitude filter, relative to the tail scale."""
        if self.kind == "l1l1":
            return self.eps / (4 * self.s)
        return 1.0 / (4 * self.k)

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "s": self.s}
        if self.kind == "l1l1":
            d["eps"] = self.eps
        else:
            d.update(k=self.k, w=self.w, final=self.final)
        return d


class WeakMatrix(SketchMatrix):
    """Two-layer hashing matrix with one message bit per pair of rows.

    Row of coordinate ``i`` at ``(r, j)`` is ``2 * q + bit`` where
    ``q = (r d2 + j) B2 + h[r, j, g[r, i]]`` and ``bit`` is position
    ``j mod len`` of the protected block of ``i`` for repetition ``r``.
    ``m = 2 B2 d1 d2``.
    """

    kind = "two_layer_weak"

    def __init__(self, n: int, flavor: Flavor, seed: int, zeta: float = 0.5, delta: int = 4, **constants):
        flavor.validate(n)
        self.n, self.flavor, self.seed, self.zeta, self.delta = int(n), flavor, int(seed), zeta, delta
        self.sizing = TwoLayerParams(n, flavor.s, flavor.accuracy, zeta, **constants)
        d1 = self.sizing.d1 + (self.sizing.d1 % 2)
        d1 = max(d1, 2)
        self.outer = OuterCode(n, d1)
        self.layout = BlockLayout.make(self.outer.block_bits, self.sizing.B1, delta)
        self.inner = BinaryCode(self.layout.inner)
        d2 = max(self.sizing.d2, self.layout.inner.coded_bits)
        self.hash = TwoLayerHash(n, self.sizing.B1, d1, self.sizing.B2, d2, seed)
        self.link = LinkGraph(d1, delta, seed)
        self.B1, self.d1, self.B2, self.d2 = self.sizing.B1, d1, self.sizing.B2, d2
        self.m = 2 * self.B2 * self.d1 * self.d2
        self._bits = None

    def params(self) -> dict:
        return {
            "flavor": self.flavor.to_dict(),
            "zeta": self.zeta,
            "delta": self.delta,
            "B1": self.B1,
            "d1": self.d1,
            "B2": self.B2,
            "d2": self.d2,
            "outer": [self.outer.k_sym, self.outer.n_sym],
            "inner": [self.layout.inner.message_len, self.layout.inner.block_len, self.layout.inner.alphabet_bits],
        }

    def _table_bytes(self):
        yield self.hash.g.table.tobytes()
        yield self.hash.h.tobytes()
        yield self.link.neighbors.tobytes()

    def coded_blocks(self, idx) -> np.ndarray:
        """Protected blocks ``(len(idx), d1, coded_bits)`` of the given coordinates."""
        table, cols = self._block_table(idx)
        return np.ascontiguousarray(table[:, :, cols].transpose(2, 0, 1))

    def _block_table(self, idx) -> tuple[np.ndarray, np.ndarray]:
        """``(d1, coded_bits, c)`` bit table and the column of each ``idx`` in it.

        The table for all of ``[n]`` is built once and kept when it is small
        enough; otherwise only the requested columns are encoded.
        """
        idx = np.atleast_1d(np.asarray(idx, dtype=np.int64))
        if self._bits is None and self.n * self.d1 * self.layout.inner.coded_bits <= BITS_CACHE_LIMIT:
            self._bits = self._encode_columns(np.arange(self.n))
        if self._bits is not None:
            return self._bits, idx
        return self._encode_columns(idx), np.arange(idx.size)

    def _encode_columns(self, idx) -> np.ndarray:
        payload = block_payloads(idx, self.hash, self.link, self.outer, self.layout)
        return np.ascontiguousarray(self.inner.encode(payload).transpose(1, 2, 0))

    def columns(self, idx):
        idx = self._check_indices(idx)
        nodes = self.hash.right_nodes(idx)
        bits = self.coded_blocks(idx)
        pos = np.arange(self.d2) % bits.shape[2]
        rows = nodes * 2 + bits[:, :, pos].reshape(len(idx), -1)
        return rows, None

    def accumulate_columns(self, out, idx, coef):
        idx = self._check_indices(idx)
        coef = np.asarray(coef, dtype=np.float64)
        step = max(1, (1 << 22) // (self.d1 * self.d2))
        for a in range(0, idx.size, step):
            sl = slice(a, a + step)
            table, cols = self._block_table(idx[sl])
            kernels.two_layer_scatter(out, self.hash.g.table, self.hash.h, table, cols, idx[sl], coef[sl], self.B2)

    # views of a sketch ---------------------------------------------------

    def pair_sums(self, v) -> np.ndarray:
        """``(d1, d2, B2)`` second-layer bucket sums ``v[2q] + v[2q + 1]``."""
        v = np.asarray(v, dtype=np.float64)
        return (v[0::2] + v[1::2]).reshape(self.d1, self.d2, self.B2)

    def bucket_values(self, v, i: int) -> np.ndarray:
        """The multiset ``E_i``: all ``d1 d2`` bucket sums containing ``i``."""
        q = self.hash.right_nodes([i])[0]
        v = np.asarray(v, dtype=np.float64)
        return v[2 * q] + v[2 * q + 1]


# ------------------------------------------------------------------------
# chunk graph and clustering


@dataclass
class ChunkGraph:
    """Decoded bucket messages and the mutual-suggestion edges between them."""

    nodes: list[tuple[int, int]]
    chunks: np.ndarray
    suggestions: np.ndarray
    edges: list[tuple[int, int]]
    d1: int


def build_chunk_graph(nodes, chunks, suggestions, link: LinkGraph) -> ChunkGraph:
    """Add an edge between two nodes when each names the other through a link."""
    nodes = [(int(r), int(b)) for r, b in nodes]
    where = {}
    for t, key in enumerate(nodes):
        where.setdefault(key, t)
    edges = set()
    for t, (r, b) in enumerate(nodes):
        for ell in range(link.delta):
            r2 = int(link.neighbors[r, ell])
            u = where.get((r2, int(suggestions[t, ell])))
            if u is None or u == t:
                continue
            back = np.flatnonzero(link.neighbors[r2] == r)
            if np.any(suggestions[u, back] == b):
                edges.add((min(t, u), max(t, u)))
    return ChunkGraph(nodes, chunks, suggestions, sorted(edges), link.d1)


def cluster_chunks(G: ChunkGraph, delta1: float = 0.25) -> list[list[int]]:
    """Connected components of the edge set with at least ``(1 - delta1) d1 / 2`` nodes."""
    if not G.nodes:
        return []
    floor = max(1, math.ceil((1 - delta1) * G.d1 / 2))
    N = len(G.nodes)
    if G.edges:
        e = np.array(G.edges)
        adj = coo_matrix((np.ones(len(e)), (e[:, 0], e[:, 1])), shape=(N, N))
    else:
        adj = coo_matrix((N, N))
    _, labels = connected_components(adj, directed=False)
    groups: dict[int, list[int]] = {}
    for t, lab in enumerate(labels.tolist()):
        groups.setdefault(lab, []).append(t)
    return [g for g in groups.values() if len(g) >= floor]


Clustering = Callable[[ChunkGraph], list[list[int]]]


# ------------------------------------------------------------------------
# decoding


@dataclass
class WeakResult:
    xhat: SparseVector
    candidates: list[tuple[int, float]]
    stats: dict = field(default_factory=dict)


def estimate_scale(phi: WeakMatrix, v, s: int | None = None) -> float:
    """Tail-mass proxy: median over second-layer repetitions of the bucket-sum
    mass outside the ``s`` largest buckets (default: the layer's sparsity).

    Never exceeds ``||x_{-s}||_1``: removing the ``s`` largest buckets removes
    at least as much as removing the buckets of the ``s`` largest coordinates.
    """
    if isinstance(v, SketchVector):
        v = v.values
    P = np.abs(phi.pair_sums(v)).reshape(phi.d1 * phi.d2, phi.B2)
    s = min(phi.flavor.sparsity if s is None else int(s), phi.B2)
    top = -np.partition(-P, s - 1, axis=1)[:, :s] if s else np.zeros((P.shape[0], 0))
    rest = P.sum(axis=1) - top.sum(axis=1)
    return float(np.sort(rest)[(rest.size - 1) // 2])


def estimate(phi: WeakMatrix, v, idx) -> np.ndarray:
    """Lower median of ``E_i`` for every ``i`` in ``idx``."""
    idx = np.atleast_1d(np.asarray(idx, dtype=np.int64))
    if idx.size == 0:
        return np.zeros(0)
    q = phi.hash.right_nodes(idx)
    v = np.asarray(v, dtype=np.float64)
    vals = v[2 * q] + v[2 * q + 1]
    mid = (vals.shape[1] - 1) // 2
    return np.partition(vals, mid, axis=1)[:, mid]


def weak_decode(
    phi: WeakMatrix,
    v,
    scale: float | None = None,
    clustering: Clustering | None = None,
    ambiguity: float = 0.5,
) -> WeakResult:
    """Recover the heavy coordinates found by one weak system.

    ``scale`` is the tail mass the thresholds are relative to; when omitted
    it is estimated from the sketch itself.
    """
    if isinstance(v, SketchVector):
        v = v.values
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (phi.m,):
        raise DimensionError(f"sketch length {v.shape} does not match m={phi.m}")
    clustering = clustering or cluster_chunks
    if scale is None:
        scale = estimate_scale(phi, v)
    stats = {"scale": scale}
    s = phi.flavor.sparsity
    empty = WeakResult(SparseVector.zeros(phi.n, s), [], stats)

    # the lower median of d2 values clears thr iff at least d2 - (d2 - 1) // 2 do
    thr = phi.flavor.threshold * scale
    counts = kernels.two_layer_bucket_counts(v, phi.hash.h, phi.B2, thr, thr <= 0)
    reps, buckets = np.nonzero(counts >= phi.d2 - (phi.d2 - 1) // 2)
    stats["survivors"] = int(reps.size)
    if reps.size == 0:
        return empty

    bits, erased = kernels.two_layer_pair_bits(v, phi.hash.h, phi.B2, reps, buckets, ambiguity)
    word, er = fold_repeats(bits, erased.astype(bool), phi.layout.inner.coded_bits)
    payload, ok = phi.inner.decode(word, er)
    chunks, links = phi.layout.split(payload)
    ok &= np.all(links < phi.B1, axis=1)
    stats["decoded"] = int(ok.sum())
    if not ok.any():
        return empty

    keep = np.flatnonzero(ok)
    G = build_chunk_graph(
        list(zip(reps[keep].tolist(), buckets[keep].tolist())), chunks[keep], links[keep], phi.link
    )
    clusters = clustering(G)
    stats["clusters"] = len(clusters)

    found = set()
    for cl in clusters:
        blocks: dict[int, np.ndarray] = {}
        clash = set()
        for t in cl:
            r = G.nodes[t][0]
            if r in blocks and not np.array_equal(blocks[r], G.chunks[t]):
                clash.add(r)
            blocks.setdefault(r, G.chunks[t])
        for r in clash:
            del blocks[r]
        i = phi.outer.decode_blocks(blocks)
        if i is None:
            continue
        agree = sum(int(phi.hash.g.table[G.nodes[t][0], i]) == G.nodes[t][1] for t in cl)
        if 2 * agree > len(cl):
            found.add(i)
    stats["candidates"] = len(found)
    if not found:
        return empty

    idx = np.array(sorted(found), dtype=np.int64)
    est = estimate(phi, v, idx)
    candidates = list(zip(idx.tolist(), est.tolist()))
    order = magnitude_order(idx, est)
    chosen = {int(idx[t]): float(est[t]) for t in order[:s] if est[t] != 0}
    return WeakResult(SparseVector(phi.n, chosen, s), candidates, stats)


def build_weak_matrix(flavor: Flavor, n: int, seed: int, **kwargs) -> WeakMatrix:
    return WeakMatrix(n, flavor, seed, **kwargs)
