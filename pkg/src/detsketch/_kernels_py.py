"""Pure numpy implementations of the hot kernels.

Every function here has a compiled twin in ``_kernels.pyx`` with the same
signature. Medians and bit reads agree exactly between the two; sums from
``accumulate`` and ``two_layer_scatter`` agree up to floating-point
summation order. ``detsketch.kernels`` picks one at import time.

Two-layer tables: ``g`` is ``(d1, n)`` int32 first-layer buckets, ``h`` is
``(d1, d2, B1)`` int32 second-layer buckets. The pair for repetition
``(r, j)`` and first-layer bucket ``b`` starts at row
``2 * ((r * d2 + j) * B2 + h[r, j, b])``.
"""

import numpy as np

# rows per chunk so temporaries stay around a few million elements
_CHUNK_ELEMS = 1 << 22


def _row_chunks(n_rows, width):
    step = max(1, _CHUNK_ELEMS // max(1, width))
    for start in range(0, n_rows, step):
        yield start, min(n_rows, start + step)


def _lower_median(a, axis):
    mid = (a.shape[axis] - 1) // 2
    return np.take(np.partition(a, mid, axis=axis), mid, axis=axis)


def accumulate(out, rows, weights):
    """out[rows[t]] += weights[t] for every t, duplicates included."""
    rows = np.asarray(rows, dtype=np.int64).ravel()
    weights = np.asarray(weights, dtype=np.float64).ravel()
    if rows.size == 0:
        return
    if rows.size * 8 < out.shape[0]:
        np.add.at(out, rows, weights)
    else:
        out += np.bincount(rows, weights=weights, minlength=out.shape[0])


def gather_median(v, rows):
    """Lower median of ``v[rows[c, :]]`` for every row ``c``."""
    rows = np.asarray(rows, dtype=np.int64)
    res = np.empty(rows.shape[0], dtype=np.float64)
    if rows.shape[0] == 0:
        return res
    for a, b in _row_chunks(rows.shape[0], rows.shape[1]):
        res[a:b] = _lower_median(v[rows[a:b]], 1)
    return res


def _pair_base(h, B2, r):
    d2 = h.shape[1]
    return ((r * d2 + np.arange(d2, dtype=np.int64))[:, None] * B2 + h[r]) * 2


def two_layer_scatter(out, g, h, bits, bcol, idx, coef, B2):
    """Add ``coef[t]`` times column ``idx[t]`` of a two-layer matrix to ``out``.

    ``bits[r, :, bcol[t]]`` is the protected block of ``idx[t]`` in
    repetition ``r``; position ``j`` of the second layer carries bit
    ``j mod len``.
    """
    idx = np.asarray(idx, dtype=np.int64)
    bcol = np.asarray(bcol, dtype=np.int64)
    coef = np.asarray(coef, dtype=np.float64)
    d1, d2 = h.shape[0], h.shape[1]
    coded = bits.shape[1]
    pos = np.arange(d2) % coded
    for a, b in _row_chunks(idx.size, d1 * d2):
        first = g[:, idx[a:b]].astype(np.int64)  # (d1, c)
        rows = np.empty((d1, d2, b - a), dtype=np.int64)
        for r in range(d1):
            base = ((r * d2 + np.arange(d2))[:, None] * B2 + h[r][:, first[r]]) * 2
            rows[r] = base + bits[r][pos][:, bcol[a:b]]
        w = np.broadcast_to(coef[a:b], rows.shape)
        out += np.bincount(rows.ravel(), weights=w.ravel(), minlength=out.shape[0])


def two_layer_bucket_counts(v, h, B2, thr, strict):
    """``(d1, B1)`` counts over ``j`` of ``|v[p] + v[p + 1]|`` at or above ``thr``
    (strictly above when ``strict``)."""
    d1, d2, B1 = h.shape
    out = np.empty((d1, B1), dtype=np.int32)
    for r in range(d1):
        base = _pair_base(h, B2, r)  # (d2, B1)
        vals = np.abs(v[base] + v[base + 1])
        out[r] = (vals > thr).sum(axis=0) if strict else (vals >= thr).sum(axis=0)
    return out


def two_layer_pair_bits(v, h, B2, reps, buckets, ambiguity):
    """Bits of the pairs of first-layer buckets ``(reps[c], buckets[c])``.

    Returns ``(bits, erased)``, each ``(len, d2)`` uint8. The bit is 1 when
    ``|v[p]| < |v[p + 1]|``; a pair is erased when both entries are zero or
    the smaller magnitude exceeds ``ambiguity`` times the larger one.
    """
    reps = np.asarray(reps, dtype=np.int64)
    buckets = np.asarray(buckets, dtype=np.int64)
    d2 = h.shape[1]
    j = np.arange(d2, dtype=np.int64)[None, :]
    p = ((reps[:, None] * d2 + j) * B2 + h[reps[:, None], j, buckets[:, None]]) * 2
    a = np.abs(v[p])
    b = np.abs(v[p + 1])
    bits = (a < b).astype(np.uint8)
    hi = np.maximum(a, b)
    lo = np.minimum(a, b)
    erased = ((hi == 0) | (lo > ambiguity * hi)).astype(np.uint8)
    return bits, erased


def block_sign_scatter(out, offsets, signs, idx, coef, block, scale):
    """Add ``coef[c]`` times column ``idx[c]`` of a block-sparse sign matrix.

    Block ``t`` of column ``i`` holds ``signs[t, i] * scale`` at row
    ``t * block + offsets[t, i]``.
    """
    idx = np.asarray(idx, dtype=np.int64)
    coef = np.asarray(coef, dtype=np.float64)
    p = offsets.shape[0]
    base = np.arange(p, dtype=np.int64)[:, None] * block
    for a, b in _row_chunks(idx.size, p):
        rows = base + offsets[:, idx[a:b]]
        w = signs[:, idx[a:b]] * (coef[a:b] * scale)[None, :]
        out += np.bincount(rows.ravel(), weights=w.ravel(), minlength=out.shape[0])


def rs_scatter(out, digits, coef, q):
    """Add ``coef[c]`` times the Reed-Solomon column with base-``q`` digits
    ``digits[:, c]`` (least significant first): a one in row
    ``alpha * q + C(alpha)`` for every ``alpha < q``."""
    digits = np.asarray(digits, dtype=np.int64)
    coef = np.asarray(coef, dtype=np.float64)
    L, nc = digits.shape
    alpha = np.arange(q, dtype=np.int64)[None, :]
    for a, b in _row_chunks(nc, q):
        acc = np.zeros((b - a, q), dtype=np.int64)
        for t in range(L - 1, -1, -1):
            acc = (acc * alpha + digits[t, a:b, None]) % q
        rows = alpha * q + acc
        w = np.broadcast_to(coef[a:b, None], rows.shape)
        out += np.bincount(rows.ravel(), weights=w.ravel(), minlength=out.shape[0])
