"""End-to-end acceptance checks, one test per criterion.

Each test records a one-line verdict that is echoed and repeated in the
terminal summary under "acceptance criteria".
"""

import json
import math
import time
from fractions import Fraction

import numpy as np
import pytest

from conftest import EXAMPLE_BUCKETS, EXAMPLE_MESSAGES, EXAMPLE_X, record
from detsketch.cli import build_scheme
from detsketch.coding import CodeSpec, bucket_message_matrix, decode_bucket_message, extract_bit
from detsketch.core import (
    ParameterError,
    SketchVector,
    StackedMatrix,
    Update,
    apply,
    l1_error,
    oracle_verify_l1,
    oracle_verify_linf,
    tail_norm,
)
from detsketch.hashgraph import OneLayerHash, check_expansion, check_isolation, decoy_count
from detsketch.planted import TAILS, planted_signal, signal_to_stream
from detsketch.recover_l1 import build_l1_scheme, l1_decode, layer_plan
from detsketch.recover_linf import (
    IncoherentMatrix,
    build_combined_scheme,
    build_linf_scheme,
    build_schedule,
    combined_decode_sketch,
    linf_decode,
)
from detsketch.strict import (
    BETA,
    DecodeStats,
    RSMatrix,
    SplitTree,
    recursive_decode,
    reduce_noise,
)

N = 4096
TRIALS = 100


def tail_of(seed):
    return TAILS[seed % len(TAILS)]


# -- 1 -----------------------------------------------------------------------


def test_criterion_01_worked_example():
    t0 = time.perf_counter()
    phi = bucket_message_matrix(EXAMPLE_BUCKETS, EXAMPLE_MESSAGES)
    D = phi.to_dense()
    exact = [sum(Fraction(int(c)) * Fraction(str(v)) for c, v in zip(row, EXAMPLE_X)) for row in D]
    want = [Fraction(s) for s in ("0.5", "10.2", "0.1", "10.6", "-0.1", "-9.7", "-10", "0.2")]
    y = apply(phi, EXAMPLE_X).values
    bits = [extract_bit(y[2 * t], y[2 * t + 1]) for t in range(4)]
    rep = CodeSpec(2, 2, 1, "repetition")
    messages = [decode_bucket_message(y[4 * b : 4 * b + 4], rep).tolist() for b in range(2)]
    elapsed = time.perf_counter() - t0
    ok = (
        exact == want
        and np.abs(y - [float(w) for w in want]).max() <= 1e-12
        and bits == [1, 1, 1, 0]
        and messages == [[1, 1], [1, 0]]
        and elapsed < 1.0
    )
    record(1, "worked example: measurements and bits", ok, f"m={bits}, {elapsed:.3f}s")
    assert ok


# -- 2 -----------------------------------------------------------------------


def test_criterion_02_linf_recovery():
    t0 = time.perf_counter()
    rates = {}
    for k in (2, 4, 8):
        sch = build_linf_scheme(N, k, seed=7)
        good = 0
        for seed in range(TRIALS):
            x = planted_signal(N, k, seed, tail=tail_of(seed))
            good += oracle_verify_linf(x, linf_decode(sch, sch.matrix.apply(x)), k, k)
        rates[k] = good
    elapsed = time.perf_counter() - t0
    ok = all(g >= 99 for g in rates.values()) and elapsed < 300
    detail = ", ".join(f"k={k}: {g}/{TRIALS}" for k, g in rates.items()) + f", {elapsed:.0f}s"
    record(2, "l_inf/l1 recovery with tail k", ok, detail)
    assert ok


# -- 3 -----------------------------------------------------------------------


def test_criterion_03_combined_recovery():
    t0 = time.perf_counter()
    rates = {}
    for k in (2, 3, 4):
        sch = build_combined_scheme(N, k, seed=7)
        good = 0
        for seed in range(TRIALS):
            # alternate k and k^2 planted heads
            heads = k if seed % 2 else k * k
            x = planted_signal(N, k, seed, heads=heads, tail=tail_of(seed))
            good += oracle_verify_linf(x, combined_decode_sketch(sch, sch.matrix.apply(x)), k, k * k)
        rates[k] = good
    elapsed = time.perf_counter() - t0
    ok = all(g >= 99 for g in rates.values()) and elapsed < 600
    detail = ", ".join(f"k={k}: {g}/{TRIALS}" for k, g in rates.items()) + f", {elapsed:.0f}s"
    record(3, "combined scheme with tail k^2", ok, detail)
    assert ok


# -- 4 -----------------------------------------------------------------------


def test_criterion_04_l1_recovery():
    t0 = time.perf_counter()
    rates = {}
    for k in (4, 16):
        sch = build_l1_scheme(N, k, 1.0, seed=7)
        good = 0
        for seed in range(TRIALS):
            x = planted_signal(N, k, seed, tail=tail_of(seed))
            good += oracle_verify_l1(x, l1_decode(sch, sch.matrix.apply(x)), k, 2.0)
        rates[k] = good
    elapsed = time.perf_counter() - t0
    ok = all(g >= 99 for g in rates.values()) and elapsed < 300
    detail = ", ".join(f"k={k}: {g}/{TRIALS}" for k, g in rates.items()) + f", {elapsed:.0f}s"
    record(4, "l1/l1 recovery, eps = 1", ok, detail)
    assert ok


# -- 5 -----------------------------------------------------------------------


def test_criterion_05_strict_recovery():
    t0 = time.perf_counter()
    rates, worst = {}, {}
    for k in (2, 4):
        T = SplitTree(N, k)
        good, most = 0, 0
        for seed in range(TRIALS):
            x = planted_signal(N, k, seed, nonneg=True, tail=tail_of(seed))
            stats = DecodeStats()
            xhat = recursive_decode(T, T.apply(x), stats=stats)
            good += oracle_verify_linf(x, xhat, k, k)
            most = max(most, stats.candidate_evaluations)
        rates[k], worst[k] = good, most
    elapsed = time.perf_counter() - t0
    budget = {k: 10 * k**3 * math.log2(N) ** 3 for k in rates}
    ok = all(rates[k] == TRIALS and worst[k] <= budget[k] for k in rates) and elapsed < 120
    detail = ", ".join(f"k={k}: {rates[k]}/{TRIALS}, max candidates {worst[k]} <= {budget[k]:.0f}" for k in rates)
    record(5, "strict turnstile recovery", ok, detail + f", {elapsed:.0f}s")
    assert ok


# -- 6 -----------------------------------------------------------------------


def contraction_instance(rng, n, k):
    """Residual ``z`` and candidate set ``S`` with ``||z_S|| >= 3 ||z_out||``
    and every ``1/k``-heavy coordinate of ``z`` inside ``S``."""
    while True:
        heads = int(rng.integers(1, 5 * k + 1))
        size = heads + int(rng.integers(0, 40))
        S = rng.choice(n, size=size, replace=False)
        z = np.zeros(n)
        out = np.setdiff1d(np.arange(n), S)
        z[out] = rng.standard_normal(out.size) * rng.uniform(0, 1) ** 3
        z[S[heads:]] = rng.standard_normal(size - heads) * 0.1
        z[S[:heads]] = rng.uniform(1, 10, heads) * rng.choice([-1, 1], heads)
        inside, outside = np.abs(z[S]).sum(), np.abs(z[out]).sum()
        # scale the outside mass so it is at most a third of the inside
        target = rng.uniform(0, inside / 3)
        if outside > 0:
            z[out] *= target / outside
        heavy = np.flatnonzero(np.abs(z) >= np.abs(z).sum() / k)
        if np.abs(z[S]).sum() >= 3 * np.abs(z[out]).sum() and set(heavy) <= set(S.tolist()):
            return z, S


def test_criterion_06_noise_reduction_contracts():
    rng = np.random.default_rng(6)
    worst = 0.0
    mats = {k: RSMatrix(N, BETA * k) for k in (2, 4)}
    for t in range(TRIALS):
        k = (2, 4)[t % 2]
        M = mats[k]
        z, S = contraction_instance(rng, N, k)
        zhat = reduce_noise(M, apply(M, z).values, S, k)
        gamma = float(l1_error(z, zhat) / Fraction(np.abs(z).sum()))
        worst = max(worst, gamma)
    ok = worst < 0.9
    record(6, "one noise-reduction round contracts the residual", ok, f"worst gamma {worst:.4f} over {TRIALS}")
    assert ok


# -- 7 -----------------------------------------------------------------------

# s = 1, gamma = 1, eps = 0.9, theta = 0.9, delta = 0.5, beta = 0.005, zeta = 0.1:
# zeta < delta - 64 beta / theta, expansion (4s, d, beta eps), isolation
# (floor(6 / (gamma eps)), eps theta / 12, zeta); the bound theta / gamma < 1 allows no decoys.
DECOY = dict(s=1, gamma=1.0, eps=0.9, theta=0.9, delta=0.5, beta=0.005, zeta=0.1)


def decoy_instance(rng, G, s):
    """``x = y + z`` with ``|supp y| <= s`` and ``||z||_1 <= 3/2``, and the two
    light coordinates sharing the most right nodes with the heavy one."""
    x = np.zeros(G.n_left)
    heavy = int(rng.integers(G.n_left))
    x[heavy] = rng.uniform(1, 20) * rng.choice([-1, 1])
    light = np.delete(np.arange(G.n_left), heavy)
    support = rng.choice(light, size=int(rng.integers(1, light.size + 1)), replace=False)
    w = rng.dirichlet(np.ones(support.size)) * rng.uniform(0.5, 1.5)
    x[support] = w * rng.choice([-1, 1], support.size)
    hn = set(G.adj[heavy].tolist())
    overlap = np.array([len(hn & set(G.adj[i].tolist())) for i in light])
    D = light[np.argsort(-overlap, kind="stable")[: 2 * s]]
    return x, D


def test_criterion_07_decoy_bound():
    p = DECOY
    assert 0 < p["zeta"] < p["delta"] - 64 * p["beta"] / p["theta"]
    L = math.floor(6 / (p["gamma"] * p["eps"]))
    rng = np.random.default_rng(7)
    certified, tried, worst = 0, 0, 0
    while certified < 50:
        tried += 1
        G = OneLayerHash(16, 2**14, 64, seed=tried).graph()
        if not check_expansion(G, 4 * p["s"], p["beta"] * p["eps"]):
            continue
        if not check_isolation(G, L, p["eps"] * p["theta"] / 12, p["zeta"]):
            continue
        certified += 1
        for _ in range(2):
            x, D = decoy_instance(rng, G, p["s"])
            worst = max(worst, decoy_count(G, x, D, p["eps"], p["gamma"], p["delta"]))
    ok = worst <= p["theta"] / p["gamma"]
    record(7, "decoy bound on certified graphs", ok, f"max decoys {worst}, {certified} graphs of {tried} tried")
    assert ok


# -- 8 -----------------------------------------------------------------------


def weak_rows(n, s, accuracy, zeta=0.5, delta=4):
    """Row count of a two-layer weak matrix from the sizing rules alone."""
    B1 = min(n, max(4, math.ceil(4 * (s / (zeta * accuracy**2)) ** 1.5)))
    ratio = max(B1 / s, 2.0)
    d1 = max(1, math.ceil(2 * math.log(n) / (zeta * accuracy * math.log(ratio))))
    d1 = max(2, d1 + d1 % 2)
    B2 = max(2, math.ceil(4 * s / (zeta * accuracy)))
    d2 = max(1, math.ceil(2 * math.log(ratio) / zeta))
    k_sym = max(1, math.ceil(math.log2(n) / 8))
    payload = 8 * math.ceil(4 * k_sym / d1) + delta * max(1, math.ceil(math.log2(B1)))
    m_f = next(m for m in range(4, 9) if 2 * math.ceil(payload / m) <= 2**m - 1)
    d2 = max(d2, 2 * math.ceil(payload / m_f) * m_f)
    return 2 * B2 * d1 * d2


def rs_rows_formula(n, k):
    ln = math.log2(n)
    bound = 4 * k * math.ceil(ln / max(1.0, math.log2(ln) + math.log2(k)))
    q = bound
    while any(q % d == 0 for d in range(2, math.isqrt(q) + 1)):
        q += 1
    return q * q


def split_rows_formula(n, k):
    """sum over levels i of 2^i M(n^(1/2^i), beta k) while the roots stay integral."""
    total, i, size = 0, 0, n
    while True:
        total += 2**i * rs_rows_formula(size, BETA * k)
        if size <= 25 * k * k:
            return total
        size = math.isqrt(size) if math.isqrt(size) ** 2 == size else None
        i += 1


def materialized_rows(matrix):
    """Length of an actual sketch, block by block for large stacks."""
    parts = getattr(matrix, "children", None) or [nd.matrix for nd in getattr(matrix, "nodes", [])]
    if matrix.m > 20_000_000 and parts:
        return sum(materialized_rows(p) for p in parts)
    x = np.zeros(matrix.n)
    x[0] = 1.0
    return matrix.apply(x).size


def test_criterion_08_row_counts():
    mismatches, checked = [], 0
    for n in (2**10, 2**12):
        for k in (2, 4, 8, 16):
            l1 = build_l1_scheme(n, k, 1.0, seed=1)
            want = sum(weak_rows(n, s, e) for s, e in layer_plan(k, 1.0))
            linf = build_linf_scheme(n, k, seed=1)
            sched = build_schedule(k)
            want_linf = sum(
                weak_rows(n, st.s, min(1.0, math.sqrt(st.s * st.w) / k)) for st in sched.steps
            )
            C = IncoherentMatrix(n, k, seed=1)
            want_c = 8 * math.ceil(8 * k * k * math.log(n) / 8)
            T = SplitTree(n, k)
            cases = [
                ("l1l1", materialized_rows(l1.matrix), want),
                ("linf", materialized_rows(linf.matrix), want_linf),
                ("incoherent", materialized_rows(C), want_c),
                ("split_tree", materialized_rows(T), split_rows_formula(n, k)),
            ]
            if k * k <= math.sqrt(n):
                comb = build_combined_scheme(n, k, seed=1)
                want_comb = (
                    sum(weak_rows(n, s, e) for s, e in layer_plan(k * k, 1.0))
                    + sum(
                        weak_rows(n, st.s, min(1.0, math.sqrt(st.s * st.w) / (2 * k)))
                        for st in build_schedule(2 * k).steps
                    )
                    + 8 * math.ceil(8 * 36 * k * k * math.log(n) / 8)
                )
                cases.append(("combined", materialized_rows(comb.matrix), want_comb))
            else:
                with pytest.raises(ParameterError):
                    build_combined_scheme(n, k, seed=1)
            for name, got, expect in cases:
                checked += 1
                if got != expect:
                    mismatches.append(f"{name} n={n} k={k}: {got} != {expect}")
    ok = not mismatches
    record(8, "row counts match the sizing formulas", ok, f"{checked} cases" + (f"; {mismatches}" if mismatches else ""))
    assert ok


# -- 9 -----------------------------------------------------------------------


def test_criterion_09_linearity_and_determinism():
    n = 1024
    mats = [
        lambda: build_l1_scheme(n, 4, 1.0, seed=3).matrix,
        lambda: build_linf_scheme(n, 4, seed=3).matrix,
        lambda: IncoherentMatrix(n, 4, seed=3),
        lambda: RSMatrix(n, 8),
        lambda: SplitTree(n, 1, beta=4),
    ]
    built = [f() for f in mats]
    rng = np.random.default_rng(9)
    worst = 0.0
    failures = 0
    for t in range(1000):
        phi = built[t % len(built)]
        length = int(rng.integers(0, 60))
        ups = [Update(int(rng.integers(n)), float(rng.standard_normal() * 10)) for _ in range(length)]
        cut = int(rng.integers(0, length + 1))
        full, a, b, shuffled = (SketchVector(phi) for _ in range(4))
        for u in ups:
            full.ingest(u)
        for u in ups[:cut]:
            a.ingest(u)
        for u in ups[cut:]:
            b.ingest(u)
        for j in rng.permutation(length):
            shuffled.ingest(ups[j])
        x = np.zeros(n)
        for u in ups:
            x[u.index] += u.delta
        ref = apply(phi, x).values
        scale = max(1.0, float(np.abs(ref).max()))
        errs = [np.abs(v - ref).max() / scale for v in (full.values, a.values + b.values, shuffled.values)]
        worst = max(worst, *errs)
        failures += any(e > 1e-9 for e in errs)
    rebuilt = [f() for f in mats]
    same = all(p.fingerprint() == q.fingerprint() for p, q in zip(built, rebuilt))
    x = rng.standard_normal(n)
    same &= all(np.array_equal(p.apply(x), q.apply(x)) for p, q in zip(built, rebuilt))
    ok = failures == 0 and same
    record(9, "linearity and determinism", ok, f"1000 sequences, worst relative error {worst:.2e}, rebuilt matrices identical: {same}")
    assert ok


# -- 10 ----------------------------------------------------------------------


def test_criterion_10_non_adaptive():
    identical = True
    for name, k in (("general_linf", 2), ("general_l1l1", 4), ("strict", 2)):
        blobs = []
        for seed in (1, 2):
            sch = build_scheme(name, N, k, seed=11)
            before = json.dumps(sch.descriptor(), sort_keys=True).encode()
            x = planted_signal(N, k, seed, nonneg=True)
            sv = SketchVector(sch.matrix)
            sv.ingest_many(*zip(*[(u.index, u.delta) for u in signal_to_stream(x, seed, strict=True)]))
            sch.decode(sv.values)
            after = json.dumps(sch.descriptor(), sort_keys=True).encode()
            blobs.append(before + after)
        identical &= blobs[0] == blobs[1]
    sched = {k: json.dumps(build_schedule(k).to_dict()).encode() for k in (2, 8, 300)}
    identical &= all(json.dumps(build_schedule(k).to_dict()).encode() == b for k, b in sched.items())
    record(10, "descriptors and schedules do not depend on the input", identical)
    assert identical
