"""l_inf/l1 recovery: the iterated weak-system schedule, an incoherent
point-query matrix, and their combination with the l1/l1 scheme.

The schedule shrinks the number of unrecovered heavy coordinates to
roughly its square root per step and depends only on ``k``, so the
stacked matrix is fixed before any data arrives.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from . import kernels
from .core import (
    DimensionError,
    ParameterError,
    SketchMatrix,
    SketchVector,
    SparseVector,
    StackedMatrix,
    magnitude_order,
)
from .hashgraph import child_rng
from .recover_l1 import L1Scheme, build_l1_scheme, l1_decode
from .weak import Flavor, WeakMatrix, estimate_scale, weak_decode

FINAL_S = 4
FINAL_W = 0.2


# ------------------------------------------------------------------------
# schedule


@dataclass(frozen=True)
class Step:
    round: int
    i: int
    s: float
    w: float


@dataclass
class Round:
    k_r: float
    i_star: int
    i_plus: int
    steps: list[Step]


@dataclass
class Schedule:
    k: int
    rounds: list[Round]
    final: Step

    @property
    def R(self) -> int:
        return len(self.rounds)

    @property
    def steps(self) -> list[Step]:
        """Every weak-system call in execution order, the final one last."""
        return [st for rd in self.rounds for st in rd.steps] + [self.final]

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "rounds": [
                {
                    "k_r": rd.k_r,
                    "i_star": rd.i_star,
                    "i_plus": rd.i_plus,
                    "steps": [[st.i, st.s, st.w] for st in rd.steps],
                }
                for rd in self.rounds
            ],
            "final": [self.final.s, self.final.w],
        }


def build_schedule(k: int) -> Schedule:
    """Precompute every ``(s, w)`` pair of the iteration; a pure function of ``k``.

    Within a round, steps first take ``s = (i+1)^2 k_r^(2^-i)`` and
    ``w = (i+1)^2`` while ``k_r^(2^-i) >= max((i+1)^2, 4 (1 + 1/(i+1))^4)``,
    then ``s = s*^(2^-(i - i* - 1))`` with ``w = 1`` while
    ``s >= max(4, log2 log2 k_r)``. The next round starts from the first
    ``s`` that failed. Rounds run while ``k_r > 4``.
    """
    if k < 1:
        raise ParameterError("k must be at least 1")
    rounds = []
    k_r = float(k)
    while k_r > 4:
        r = len(rounds)
        steps = []
        i = 0
        while k_r ** (2.0**-i) >= max((i + 1) ** 2, 4 * (1 + 1 / (i + 1)) ** 4):
            steps.append(Step(r, i, (i + 1) ** 2 * k_r ** (2.0**-i), float((i + 1) ** 2)))
            i += 1
        i_star = i - 1
        # with no first-phase step the second phase starts from k_r itself
        s_star = steps[-1].s if steps else k_r
        s = s_star ** (2.0 ** -(i - i_star - 1))
        floor = max(4.0, math.log2(math.log2(k_r)))
        while s >= floor:
            steps.append(Step(r, i, s, 1.0))
            i += 1
            s = s_star ** (2.0 ** -(i - i_star - 1))
        rounds.append(Round(k_r, i_star, i - i_star - 1, steps))
        k_r = s
    return Schedule(k, rounds, Step(len(rounds), 0, float(FINAL_S), FINAL_W))


# ------------------------------------------------------------------------
# l_inf/l1 scheme with tail r = k


def step_seed(seed: int, t: int) -> int:
    return int(child_rng(seed, 20, t).integers(0, 2**63))


@dataclass
class LinfScheme:
    n: int
    k: int
    seed: int
    schedule: Schedule
    layers: list[WeakMatrix]
    matrix: StackedMatrix

    @property
    def m_total(self) -> int:
        return self.matrix.m


def build_linf_scheme(n: int, k: int, seed: int, **weak_kwargs) -> LinfScheme:
    if k < 1 or k > math.sqrt(n):
        raise ParameterError(f"l_inf scheme needs 1 <= k <= sqrt(n), got k={k} n={n}")
    sched = build_schedule(k)
    layers = []
    for t, st in enumerate(sched.steps):
        final = st is sched.final
        layers.append(WeakMatrix(n, Flavor.linf(k, st.s, st.w, final=final), step_seed(seed, t), **weak_kwargs))
    return LinfScheme(n, k, seed, sched, layers, StackedMatrix(layers, name="linf"))


def linf_decode(scheme: LinfScheme, v, scale: float | None = None, trace: list | None = None) -> SparseVector:
    """Run the schedule on the residual sketch and sum the findings.

    ``scale`` is the tail mass ``||x_{-k}||_1``; estimated from the first
    layer when omitted. ``trace`` collects ``(layer_xhat, residual_sketch)``.
    """
    if isinstance(v, SketchVector):
        v = v.values
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (scheme.m_total,):
        raise DimensionError(f"sketch length {v.shape} does not match m={scheme.m_total}")
    segs = [scheme.matrix.segment(v, t).copy() for t in range(len(scheme.layers))]
    if scale is None:
        scale = estimate_scale(scheme.layers[0], segs[0], scheme.k)
    total = SparseVector.zeros(scheme.n, 0)
    for t, layer in enumerate(scheme.layers):
        res = weak_decode(layer, segs[t], scale=scale)
        if trace is not None:
            trace.append((res.xhat, segs[t].copy()))
        if res.xhat.nnz:
            for u in range(t + 1, len(scheme.layers)):
                segs[u] -= scheme.layers[u].apply_sparse(res.xhat)
        total = total + res.xhat
    return SparseVector(scheme.n, total.entries, total.support_bound)


# ------------------------------------------------------------------------
# point queries


class IncoherentMatrix(SketchMatrix):
    """Block-sparse random-sign matrix with unit-norm columns.

    Rows form ``p`` blocks of ``block`` rows; every column has one entry
    ``+-1/sqrt(p)`` per block, so ``<C_i, C_j>`` is a scaled sum of random
    signs over colliding blocks. ``p = ceil(c5 k^2 ln n / block)``.
    """

    kind = "incoherent"

    def __init__(self, n: int, k: int, seed: int, c5: float = 8.0, block: int = 8):
        if n < 2 or k < 1 or block < 1:
            raise ParameterError("incoherent matrix needs n >= 2, k >= 1, block >= 1")
        self.n, self.k, self.seed, self.c5, self.block = int(n), int(k), int(seed), c5, int(block)
        self.p = max(1, math.ceil(c5 * k * k * math.log(n) / block))
        self.m = self.block * self.p
        rng = child_rng(seed, 30)
        # stored block-major so applying walks each block contiguously
        self.offsets = rng.integers(0, block, size=(self.p, n), dtype=np.uint8)
        self.signs = (rng.integers(0, 2, size=(self.p, n), dtype=np.int8) * 2 - 1).astype(np.int8)
        self._base = np.arange(self.p, dtype=np.int64) * block

    def params(self):
        return {"k": self.k, "c5": self.c5, "block": self.block, "p": self.p}

    def _table_bytes(self):
        yield self.offsets.tobytes()
        yield self.signs.tobytes()

    def columns(self, idx):
        idx = self._check_indices(idx)
        rows = self._base[None, :] + self.offsets[:, idx].T
        vals = self.signs[:, idx].T.astype(np.float64) / math.sqrt(self.p)
        return rows, vals

    def accumulate_columns(self, out, idx, coef):
        idx = self._check_indices(idx)
        kernels.block_sign_scatter(out, self.offsets, self.signs, idx, coef, self.block, 1 / math.sqrt(self.p))

    def coherence(self, chunk: int = 512) -> float:
        """Largest ``|<C_i, C_j>|`` over distinct columns (full Gram scan)."""
        rows, vals = self.columns(np.arange(self.n))
        S = sparse.csc_matrix(
            (vals.ravel(), (rows.ravel(), np.repeat(np.arange(self.n), self.p))), shape=(self.m, self.n)
        )
        St = S.T.tocsr()
        worst = 0.0
        for a in range(0, self.n, chunk):
            G = (St @ S[:, a : a + chunk]).toarray()
            G[np.arange(a, min(a + chunk, self.n)), np.arange(G.shape[1])] = 0.0
            worst = max(worst, float(np.abs(G).max()))
        return worst


def point_query(C: IncoherentMatrix, y, i) -> float | np.ndarray:
    """``<C_i, y>``: estimate of ``x_i`` from ``y = C x``."""
    y = np.asarray(getattr(y, "values", y), dtype=np.float64)
    scalar = np.ndim(i) == 0
    rows, vals = C.columns(np.atleast_1d(i))
    out = (y[rows] * vals).sum(axis=1)
    return float(out[0]) if scalar else out


# ------------------------------------------------------------------------
# combined scheme with tail r = k^2


@dataclass
class CombinedScheme:
    n: int
    k: int
    seed: int
    A: L1Scheme
    B: LinfScheme
    C: IncoherentMatrix
    matrix: StackedMatrix = field(init=False)

    def __post_init__(self):
        self.matrix = StackedMatrix([self.A.matrix, self.B.matrix, self.C], name="combined")

    @property
    def m_total(self) -> int:
        return self.matrix.m

    def split(self, v) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        v = np.asarray(getattr(v, "values", v), dtype=np.float64)
        return tuple(self.matrix.segment(v, t) for t in range(3))


def build_combined_scheme(n: int, k: int, seed: int, b_factor: int = 2, c_factor: int = 6, **weak_kwargs) -> CombinedScheme:
    """``A``: l1/l1 at sparsity ``k^2``, eps 1; ``B``: l_inf at ``b_factor k``;
    ``C``: point queries at ``c_factor k``."""
    if k < 1 or k * k > math.sqrt(n):
        raise ParameterError(f"combined scheme needs k^2 <= sqrt(n), got k={k} n={n}")
    A = build_l1_scheme(n, k * k, 1.0, int(child_rng(seed, 40).integers(0, 2**63)), **weak_kwargs)
    B = build_linf_scheme(n, b_factor * k, int(child_rng(seed, 41).integers(0, 2**63)), **weak_kwargs)
    C = IncoherentMatrix(n, c_factor * k, int(child_rng(seed, 42).integers(0, 2**63)))
    return CombinedScheme(n, k, seed, A, B, C)


def combined_decode(A: L1Scheme, B: LinfScheme, C: IncoherentMatrix, v_A, v_B, v_C, k: int) -> SparseVector:
    """Find ``x_hat`` with ``||x - x_hat||_inf <= (1/k) ||x_{-k^2}||_1``.

    ``z`` from ``A`` captures the top ``k^2`` in l1; ``w`` from ``B(x - z)``
    catches every coordinate above the threshold that ``z`` got wrong; each
    coordinate of ``supp(z) | supp(w)`` is then re-estimated by a point
    query on ``C(x - z')`` with ``z'`` equal to ``z`` minus that coordinate.
    The ``4k`` largest estimates are kept.
    """
    v_A, v_B, v_C = (np.asarray(getattr(t, "values", t), dtype=np.float64) for t in (v_A, v_B, v_C))
    z = l1_decode(A, v_A)
    w = linf_decode(B, v_B - B.matrix.apply_sparse(z))
    cand = np.array(sorted(z.support() | w.support()), dtype=np.int64)
    if cand.size == 0:
        return SparseVector.zeros(A.n, 4 * k)
    resid = v_C - C.apply_sparse(z)
    rows, vals = C.columns(cand)
    zc = np.array([z[i] for i in cand.tolist()])
    est = (resid[rows] * vals).sum(axis=1) + zc * (vals * vals).sum(axis=1)
    order = magnitude_order(cand, est)[: 4 * k]
    return SparseVector(A.n, {int(cand[t]): float(est[t]) for t in order if est[t] != 0}, 4 * k)


def combined_decode_sketch(scheme: CombinedScheme, v) -> SparseVector:
    v_A, v_B, v_C = scheme.split(v)
    return combined_decode(scheme.A, scheme.B, scheme.C, v_A, v_B, v_C, scheme.k)
