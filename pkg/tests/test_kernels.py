"""Both kernel backends agree with each other and with plain loops."""

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from detsketch import kernels
from detsketch.kernels import available_backends

BACKENDS = available_backends()
seeds = st.integers(0, 2**32 - 1)


def test_compiled_backend_is_built_and_active():
    assert "cython" in BACKENDS
    assert kernels.BACKEND in BACKENDS


@pytest.fixture(params=sorted(BACKENDS))
def impl(request):
    return BACKENDS[request.param]


@given(seeds)
def test_accumulate_matches_loop(impl, seed):
    r = np.random.default_rng(seed)
    m = int(r.integers(1, 50))
    rows = r.integers(0, m, size=int(r.integers(0, 200)))
    w = r.standard_normal(rows.size)
    out = np.zeros(m)
    impl.accumulate(out, rows, w)
    want = np.zeros(m)
    for a, b in zip(rows, w):
        want[a] += b
    assert np.allclose(out, want)


@given(seeds)
def test_gather_median_is_lower_median(impl, seed):
    r = np.random.default_rng(seed)
    v = r.standard_normal(40)
    rows = r.integers(0, 40, size=(int(r.integers(0, 20)), int(r.integers(1, 8))))
    want = [sorted(v[row])[(len(row) - 1) // 2] for row in rows]
    assert impl.gather_median(v, rows).tolist() == want


@given(seeds)
def test_two_layer_kernels_agree(seed):
    r = np.random.default_rng(seed)
    n, B1, d1, B2, d2, coded = 30, 5, 2, 4, 3, 2
    g = r.integers(0, B1, size=(d1, n)).astype(np.int32)
    h = r.integers(0, B2, size=(d1, d2, B1)).astype(np.int32)
    bits = r.integers(0, 2, size=(d1, coded, n)).astype(np.uint8)
    idx = r.integers(0, n, size=10)
    coef = r.standard_normal(10)
    m = 2 * B2 * d1 * d2
    outs = []
    for impl in BACKENDS.values():
        out = np.zeros(m)
        impl.two_layer_scatter(out, g, h, bits, idx, idx, coef, B2)
        outs.append(out)
    # plain loop
    want = np.zeros(m)
    for c, i in enumerate(idx):
        for rr in range(d1):
            for j in range(d2):
                q = (rr * d2 + j) * B2 + h[rr, j, g[rr, i]]
                want[2 * q + bits[rr, j % coded, i]] += coef[c]
    for out in outs:
        assert np.allclose(out, want)
    v = want
    reps, buckets = r.integers(0, d1, 6), r.integers(0, B1, 6)
    res = [
        (impl.two_layer_bucket_counts(v, h, B2, 0.3, False), impl.two_layer_pair_bits(v, h, B2, reps, buckets, 0.5))
        for impl in BACKENDS.values()
    ]
    for counts, (b, e) in res[1:]:
        assert np.array_equal(counts, res[0][0])
        assert np.array_equal(b, res[0][1][0]) and np.array_equal(e, res[0][1][1])


@given(seeds)
def test_block_sign_scatter_agrees(seed):
    r = np.random.default_rng(seed)
    p, n, block = 6, 20, 4
    offsets = r.integers(0, block, size=(p, n)).astype(np.uint8)
    signs = (r.integers(0, 2, size=(p, n)) * 2 - 1).astype(np.int8)
    idx, coef = r.integers(0, n, 7), r.standard_normal(7)
    want = np.zeros(p * block)
    for c, i in enumerate(idx):
        for t in range(p):
            want[t * block + offsets[t, i]] += signs[t, i] * coef[c] * 0.5
    for impl in BACKENDS.values():
        out = np.zeros(p * block)
        impl.block_sign_scatter(out, offsets, signs, idx, coef, block, 0.5)
        assert np.allclose(out, want)


@given(seeds, st.sampled_from([2, 3, 7, 11]))
def test_rs_scatter_agrees(seed, q):
    r = np.random.default_rng(seed)
    L, nc = 3, 9
    digits = r.integers(0, q, size=(L, nc))
    coef = r.standard_normal(nc)
    want = np.zeros(q * q)
    for c in range(nc):
        for a in range(q):
            sym = sum(int(digits[t, c]) * a**t for t in range(L)) % q
            want[a * q + sym] += coef[c]
    for impl in BACKENDS.values():
        out = np.zeros(q * q)
        impl.rs_scatter(out, digits, coef, q)
        assert np.allclose(out, want)
