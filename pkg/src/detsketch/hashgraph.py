"""Hashing schemes, their bipartite graphs, and exhaustive property checkers."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .core import ParameterError, as_signal

EXHAUSTIVE_LIMIT = 10**6


def child_rng(seed: int, *tags: int) -> np.random.Generator:
    """Independent generator derived from ``seed`` and an integer path."""
    return np.random.default_rng(np.random.SeedSequence([int(seed) & (2**64 - 1), *tags]))


def _next_prime(p: int) -> int:
    p = max(2, p)
    while any(p % q == 0 for q in range(2, math.isqrt(p) + 1)):
        p += 1
    return p


def _table_dtype(bound: int):
    if bound > 2**31:
        raise ParameterError("bucket count too large for int32 tables")
    return np.int32


class OneLayerHash:
    """``d`` seeded functions ``[N] -> [B]``.

    ``independence`` is ``"full_table"`` (explicit random tables) or
    ``("k_wise", t)``: degree ``t-1`` polynomials over a prime field larger
    than ``max(N, B)``, reduced mod ``B``.
    """

    def __init__(self, N: int, B: int, d: int, seed: int, independence="full_table"):
        if N < 1 or B < 1 or d < 1:
            raise ParameterError(f"hash parameters must be positive, got N={N} B={B} d={d}")
        self.N, self.B, self.d, self.seed = int(N), int(B), int(d), int(seed)
        self.independence = independence
        rng = child_rng(seed, 1)
        if independence == "full_table":
            self.table = rng.integers(0, B, size=(d, N)).astype(_table_dtype(B))
        else:
            kind, t = independence
            if kind != "k_wise" or t < 1:
                raise ParameterError(f"unknown independence mode {independence!r}")
            self.prime = _next_prime(max(N, B) + 1)
            self.coef = rng.integers(0, self.prime, size=(d, t), dtype=np.int64)
            self.table = self._poly_eval(np.arange(N, dtype=np.int64)).astype(_table_dtype(B))

    def _poly_eval(self, xs: np.ndarray) -> np.ndarray:
        acc = np.zeros((self.d, xs.size), dtype=np.int64)
        for c in range(self.coef.shape[1]):
            acc = (acc * xs[None, :] + self.coef[:, c : c + 1]) % self.prime
        return acc % self.B

    def __call__(self, x: int) -> np.ndarray:
        return self.table[:, x].astype(np.int64)

    def graph(self) -> BipartiteGraph:
        adj = self.table.T.astype(np.int64) + (np.arange(self.d) * self.B)[None, :]
        return BipartiteGraph(self.N, self.B * self.d, adj)


class TwoLayerHash:
    """First layer ``g: [N] -> [B1]`` (``d1`` functions), then ``h[r, j]: [B1] -> [B2]``.

    Right node of the edge of ``i`` at ``(r, j)`` is
    ``(r * d2 + j) * B2 + h[r, j, g[r, i]]``.
    """

    def __init__(self, N, B1, d1, B2, d2, seed: int):
        for name, val in (("N", N), ("B1", B1), ("d1", d1), ("B2", B2), ("d2", d2)):
            if val < 1:
                raise ParameterError(f"{name} must be positive, got {val}")
        self.N, self.B1, self.d1, self.B2, self.d2 = map(int, (N, B1, d1, B2, d2))
        self.seed = int(seed)
        self.g = OneLayerHash(N, B1, d1, seed)
        rng = child_rng(seed, 2)
        self.h = rng.integers(0, B2, size=(d1, d2, B1)).astype(_table_dtype(B2))

    def idx(self, r: int, i) -> np.ndarray | int:
        """First-layer bucket of ``i`` in repetition ``r``."""
        return self.g.table[r, i]

    @property
    def degree(self) -> int:
        return self.d1 * self.d2

    @property
    def n_right(self) -> int:
        return self.B2 * self.d1 * self.d2

    def second_buckets(self, idx) -> np.ndarray:
        """``(len(idx), d1, d2)`` array of second-layer buckets."""
        idx = np.asarray(idx, dtype=np.int64)
        first = self.g.table[:, idx].T.astype(np.int64)  # (len, d1)
        r = np.arange(self.d1)[None, :, None]
        j = np.arange(self.d2)[None, None, :]
        return self.h[r, j, first[:, :, None]].astype(np.int64)

    def right_nodes(self, idx) -> np.ndarray:
        sb = self.second_buckets(idx)
        base = (np.arange(self.d1)[:, None] * self.d2 + np.arange(self.d2)[None, :]) * self.B2
        return (sb + base[None]).reshape(len(sb), -1)

    def graph(self) -> BipartiteGraph:
        return BipartiteGraph(self.N, self.n_right, self.right_nodes(np.arange(self.N)))


class BipartiteGraph:
    """Left-regular bipartite graph; ``adj[i]`` lists the ``d`` right neighbours of ``i``."""

    def __init__(self, n_left: int, n_right: int, adj):
        adj = np.asarray(adj, dtype=np.int64)
        if adj.ndim != 2 or adj.shape[0] != n_left:
            raise ParameterError("adjacency must have one row per left node")
        if adj.size and (adj.min() < 0 or adj.max() >= n_right):
            raise ParameterError("right neighbour out of range")
        self.n_left, self.n_right, self.d = int(n_left), int(n_right), adj.shape[1]
        self.adj = adj

    def neighbourhood(self, S) -> set[int]:
        return set(self.adj[list(S)].ravel().tolist()) if len(S) else set()

    def dump(self) -> str:
        return "".join(f"{i}: " + " ".join(map(str, row)) + "\n" for i, row in enumerate(self.adj.tolist()))

    def masks(self) -> list[int]:
        """Distinct-neighbour sets as Python int bitmasks over compacted right ids."""
        used, inv = np.unique(self.adj, return_inverse=True)
        inv = inv.reshape(self.adj.shape)
        out = []
        for row in inv.tolist():
            m = 0
            for v in row:
                m |= 1 << v
            out.append(m)
        return out


def _subset_count(n: int, ell: int) -> int:
    return sum(math.comb(n, j) for j in range(1, min(ell, n) + 1))


def _gate(G: BipartiteGraph, ell: int, mode: str) -> None:
    if mode not in ("exhaustive", "sampled"):
        raise ParameterError(f"unknown mode {mode!r}")
    if mode == "exhaustive" and _subset_count(G.n_left, ell) > EXHAUSTIVE_LIMIT:
        raise ParameterError(
            f"exhaustive check over {_subset_count(G.n_left, ell)} subsets exceeds {EXHAUSTIVE_LIMIT}"
        )


def _subsets(G, ell, mode, trials, seed):
    """Yield subsets as tuples: all of them, or ``trials`` random ones."""
    if mode == "exhaustive":
        for size in range(1, min(ell, G.n_left) + 1):
            yield from combinations(range(G.n_left), size)
    else:
        rng = np.random.default_rng(seed)
        for _ in range(trials):
            size = int(rng.integers(1, min(ell, G.n_left) + 1))
            yield tuple(sorted(rng.choice(G.n_left, size, replace=False).tolist()))


def check_expansion(G: BipartiteGraph, ell: int, eps: float, mode="exhaustive", trials=10_000, seed=0) -> bool:
    """``|Gamma(S)| >= (1 - eps) d |S|`` for every ``S`` with ``|S| <= ell``.

    Exhaustive mode is exact; sampled mode can only refute.
    """
    _gate(G, ell, mode)
    masks = G.masks()
    need = (1 - eps) * G.d
    if mode == "sampled":
        for S in _subsets(G, ell, mode, trials, seed):
            union = 0
            for x in S:
                union |= masks[x]
            if union.bit_count() < need * len(S):
                return False
        return True

    # depth-first over increasing index tuples, carrying the union mask
    def dfs(start, depth, union):
        for x in range(start, G.n_left):
            u = union | masks[x]
            if u.bit_count() < need * (depth + 1):
                return False
            if depth + 1 < ell and not dfs(x + 1, depth + 1, u):
                return False
        return True

    return dfs(0, 0, 0)


def check_isolation(G: BipartiteGraph, L: int, eta: float, zeta: float, mode="exhaustive", trials=10_000, seed=0) -> bool:
    """Every ``S`` with ``|S| <= L`` has at least ``(1 - eta)|S|`` members ``x``
    with ``|Gamma(x) \\ Gamma(S - x)| >= (1 - zeta) d``."""
    _gate(G, L, mode)
    masks = G.masks()
    need = (1 - zeta) * G.d

    def ok(S, once):
        good = sum(1 for x in S if (masks[x] & once).bit_count() >= need)
        return good >= (1 - eta) * len(S)

    if mode == "sampled":
        for S in _subsets(G, L, mode, trials, seed):
            once = multi = 0
            for x in S:
                m = masks[x]
                multi |= once & m
                once = (once ^ m) & ~multi
            if not ok(S, once):
                return False
        return True

    stack = []

    def dfs(start, once, multi):
        for x in range(start, G.n_left):
            m = masks[x]
            multi2 = multi | (once & m)
            once2 = (once ^ m) & ~multi2
            stack.append(x)
            if not ok(stack, once2):
                return False
            if len(stack) < L and not dfs(x + 1, once2, multi2):
                return False
            stack.pop()
        return True

    return dfs(0, 0, 0)


def bucket_sums(G: BipartiteGraph, x) -> np.ndarray:
    """Sum of ``x_u`` over every edge ``(u, v)``, indexed by right node ``v``."""
    x = as_signal(x, G.n_left)
    return np.bincount(G.adj.ravel(), weights=np.repeat(x, G.d), minlength=G.n_right)


def decoy_count(G: BipartiteGraph, x, D, eps: float, gamma: float, delta: float) -> int:
    """Number of ``i`` in ``D`` whose bucket sums ``E_i`` are at least
    ``eps * gamma / 4`` away from ``x_i`` in ``(1 - delta) d`` or more places."""
    x = as_signal(x, G.n_left)
    D = sorted(set(int(i) for i in D))
    if not D:
        return 0
    sums = bucket_sums(G, x)
    E = sums[G.adj[D]]  # (|D|, d)
    far = (np.abs(x[D][:, None] - E) >= eps * gamma / 4).sum(axis=1)
    return int((far >= (1 - delta) * G.d).sum())


@dataclass(frozen=True)
class TwoLayerParams:
    """Concrete two-layer sizes for sparsity ``k`` and accuracy ``eps``.

    ``B1 = max(4, ceil(c1 (k / (zeta eps^2))^alpha))`` capped at ``N``,
    ``d1 = ceil(c2 ln N / (zeta eps ln(B1 / k)))``,
    ``B2 = ceil(c3 k / (zeta eps))``, ``d2 = ceil(c4 ln(B1 / k) / zeta)``.
    """

    N: int
    k: float
    eps: float
    zeta: float = 0.5
    alpha: float = 1.5
    c1: float = 4.0
    c2: float = 2.0
    c3: float = 4.0
    c4: float = 2.0
    B1: int = field(init=False)
    d1: int = field(init=False)
    B2: int = field(init=False)
    d2: int = field(init=False)

    def __post_init__(self):
        if self.k <= 0 or self.eps <= 0 or self.zeta <= 0 or self.N < 2:
            raise ParameterError("two-layer parameters need k, eps, zeta > 0 and N >= 2")
        B1 = max(4, math.ceil(self.c1 * (self.k / (self.zeta * self.eps**2)) ** self.alpha))
        B1 = min(B1, self.N)
        ratio = max(B1 / self.k, 2.0)
        d1 = max(1, math.ceil(self.c2 * math.log(self.N) / (self.zeta * self.eps * math.log(ratio))))
        B2 = max(2, math.ceil(self.c3 * self.k / (self.zeta * self.eps)))
        d2 = max(1, math.ceil(self.c4 * math.log(ratio) / self.zeta))
        object.__setattr__(self, "B1", B1)
        object.__setattr__(self, "d1", d1)
        object.__setattr__(self, "B2", B2)
        object.__setattr__(self, "d2", d2)

    def sample(self, seed: int) -> TwoLayerHash:
        return TwoLayerHash(self.N, self.B1, self.d1, self.B2, self.d2, seed)
