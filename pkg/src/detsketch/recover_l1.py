"""l1/l1 sparse recovery by repeated weak systems with shrinking sparsity.

Layer ``t`` is sized for sparsity ``ceil(k / 8^t)`` and accuracy
``eps / 2^(t + 2)``. Decoding runs the layers in order and subtracts each
layer's findings from the sketches of all later layers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import DimensionError, ParameterError, SketchVector, SparseVector, StackedMatrix
from .hashgraph import child_rng
from .weak import Flavor, WeakMatrix, estimate_scale, weak_decode

DECAY = 8


def layer_plan(k: int, eps: float) -> list[tuple[int, float]]:
    """``(s_t, eps_t)`` for every layer: ``s_t = ceil(k / 8^t)`` while ``8^t <= k``."""
    plan = []
    t = 0
    while DECAY**t <= k:
        plan.append((math.ceil(k / DECAY**t), eps / 2 ** (t + 2)))
        t += 1
    return plan


def layer_seed(seed: int, t: int) -> int:
    return int(child_rng(seed, 10, t).integers(0, 2**63))


@dataclass
class L1Scheme:
    n: int
    k: int
    eps: float
    seed: int
    layers: list[WeakMatrix]
    matrix: StackedMatrix

    @property
    def m_total(self) -> int:
        return self.matrix.m


def build_l1_scheme(n: int, k: int, eps: float, seed: int, **weak_kwargs) -> L1Scheme:
    if k < 1 or k > math.sqrt(n):
        raise ParameterError(f"l1/l1 scheme needs 1 <= k <= sqrt(n), got k={k} n={n}")
    if not 0 < eps <= 1:
        raise ParameterError(f"eps must be in (0, 1], got {eps}")
    layers = [
        WeakMatrix(n, Flavor.l1l1(s, e), layer_seed(seed, t), **weak_kwargs)
        for t, (s, e) in enumerate(layer_plan(k, eps))
    ]
    return L1Scheme(n, k, eps, seed, layers, StackedMatrix(layers, name="l1l1"))


def l1_decode(scheme: L1Scheme, v, scale: float | None = None, trace: list | None = None) -> SparseVector:
    """Run every layer on the residual sketch and sum the findings.

    ``scale`` is the tail mass ``||x_{-k}||_1`` the thresholds refer to;
    estimated from the first layer when omitted. When ``trace`` is a list,
    each layer appends ``(layer_xhat, residual_sketch)`` to it.
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
