"""Index codes, block messages with linking information, and bit embedding.

Every coordinate ``i`` gets an outer codeword split into ``d1`` blocks, one
per first-layer repetition ``r``. Block ``r`` is extended with the
first-layer buckets of ``i`` in the ``Delta`` repetitions linked to ``r``,
protected by a rate-1/2 inner code, and written into the second-layer
measurements one bit per pair of rows.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import DenseMatrix, ParameterError
from .hashgraph import TwoLayerHash, child_rng
from .reedsolomon import RSCode, bits_to_symbols, symbols_to_bits


@dataclass(frozen=True)
class CodeSpec:
    """A binary-interface block code.

    ``message_len`` and ``block_len`` count symbols of ``alphabet_bits``
    bits. For ``repetition`` the alphabet is one bit and each message bit
    is repeated ``block_len // message_len`` times.
    """

    message_len: int
    block_len: int
    alphabet_bits: int
    kind: str = "reed_solomon"

    def __post_init__(self):
        if self.kind not in ("reed_solomon", "repetition"):
            raise ParameterError(f"unknown code kind {self.kind!r}")
        if self.message_len < 1 or self.block_len < self.message_len:
            raise ParameterError("need 1 <= message_len <= block_len")
        if self.kind == "repetition" and (self.alphabet_bits != 1 or self.block_len % self.message_len):
            raise ParameterError("repetition codes use 1-bit symbols and a whole repeat count")

    @property
    def message_bits(self) -> int:
        return self.message_len * self.alphabet_bits

    @property
    def coded_bits(self) -> int:
        return self.block_len * self.alphabet_bits

    @property
    def correctable(self) -> int:
        """Number of symbol errors always corrected."""
        if self.kind == "repetition":
            return (self.block_len // self.message_len - 1) // 2
        return (self.block_len - self.message_len) // 2

    @property
    def theta(self) -> float:
        """Correctable fraction of symbols (per repetition group for repetition codes)."""
        if self.kind == "repetition":
            return self.correctable / (self.block_len // self.message_len)
        return self.correctable / self.block_len

    @property
    def bit_theta(self) -> float:
        """Fraction of arbitrary bit flips that is always corrected."""
        if self.kind == "repetition":
            return self.theta
        return self.correctable / self.coded_bits


class BinaryCode:
    """Batch bit-level encoder/decoder for a :class:`CodeSpec`."""

    def __init__(self, spec: CodeSpec):
        self.spec = spec
        if spec.kind == "reed_solomon":
            self.rs = RSCode(spec.alphabet_bits, spec.block_len, spec.message_len)
            self._gen = self.rs.binary_generator().astype(np.int32)

    def encode(self, bits) -> np.ndarray:
        """``(..., message_bits)`` -> ``(..., coded_bits)``."""
        bits = np.asarray(bits, dtype=np.uint8)
        if bits.shape[-1] != self.spec.message_bits:
            raise ParameterError(f"expected {self.spec.message_bits} message bits")
        if self.spec.kind == "repetition":
            reps = self.spec.block_len // self.spec.message_len
            return np.tile(bits, reps)
        flat = bits.reshape(-1, bits.shape[-1]).astype(np.int32)
        out = (flat @ self._gen) & 1
        return out.astype(np.uint8).reshape(*bits.shape[:-1], -1)

    def decode(self, bits, erased=None) -> tuple[np.ndarray, np.ndarray]:
        """Decode a batch ``(N, coded_bits)``; returns ``(messages, ok)``.

        ``erased`` marks unreliable bits; a symbol containing an erased bit
        is treated as an erasure.
        """
        bits = np.atleast_2d(np.asarray(bits, dtype=np.uint8))
        N = bits.shape[0]
        spec = self.spec
        if erased is None:
            erased = np.zeros(bits.shape, dtype=bool)
        erased = np.atleast_2d(np.asarray(erased, dtype=bool))
        if spec.kind == "repetition":
            reps = spec.block_len // spec.message_len
            b = bits.reshape(N, reps, spec.message_len).astype(np.int32)
            live = ~erased.reshape(N, reps, spec.message_len)
            ones = (b * live).sum(axis=1)
            zeros = live.sum(axis=1) - ones
            return (ones > zeros).astype(np.uint8), np.all(ones != zeros, axis=1)
        k = spec.message_bits
        # fast path: systematic part re-encodes to the received word
        clean = ~erased.any(axis=1)
        reenc = self.encode(bits[:, :k])
        good = clean & np.all(reenc == bits, axis=1)
        msgs = bits[:, :k].copy()
        ok = good.copy()
        m = spec.alphabet_bits
        sym_erased = erased.reshape(N, spec.block_len, m).any(axis=2)
        symbols = bits_to_symbols(bits, m)
        for t in np.flatnonzero(~good).tolist():
            res = self.rs.decode(symbols[t].tolist(), np.flatnonzero(sym_erased[t]).tolist())
            if res is not None:
                msgs[t] = symbols_to_bits(np.array(res), m)
                ok[t] = True
        return msgs, ok


def inner_code_for(message_bits: int) -> CodeSpec:
    """Smallest-field rate-1/2 Reed-Solomon code carrying ``message_bits`` bits."""
    for m in range(4, 9):
        k = max(1, math.ceil(message_bits / m))
        if 2 * k <= (1 << m) - 1:
            return CodeSpec(k, 2 * k, m)
    raise ParameterError(f"block of {message_bits} bits too long for the inner code")


class OuterCode:
    """Reed-Solomon index code over GF(2^8) split into ``d1`` equal blocks.

    Rate is at most 1/4; a missing block is decoded as erasures.
    """

    def __init__(self, n: int, d1: int):
        if n < 2 or d1 < 1:
            raise ParameterError("outer code needs n >= 2 and d1 >= 1")
        self.n, self.d1 = n, d1
        self.k_sym = max(1, math.ceil(math.log2(n) / 8))
        self.t = math.ceil(4 * self.k_sym / d1)
        self.n_sym = d1 * self.t
        if self.n_sym > 255:
            raise ParameterError(f"d1={d1} too large for a GF(256) outer code")
        if self.n_sym == self.k_sym:
            raise ParameterError("outer code needs redundancy")
        self.spec = CodeSpec(self.k_sym, self.n_sym, 8)
        self.rs = RSCode(8, self.n_sym, self.k_sym)

    @property
    def block_bits(self) -> int:
        return 8 * self.t

    def message_symbols(self, idx) -> np.ndarray:
        idx = np.asarray(idx, dtype=np.int64)
        shifts = 8 * np.arange(self.k_sym - 1, -1, -1)
        return (idx[..., None] >> shifts) & 0xFF

    def encode(self, idx) -> np.ndarray:
        """``(len(idx), n_sym * 8)`` codeword bits."""
        bits = symbols_to_bits(self.message_symbols(np.atleast_1d(idx)), 8)
        gen = self.rs.binary_generator().astype(np.int32)
        return ((bits.astype(np.int32) @ gen) & 1).astype(np.uint8)

    def blocks(self, idx) -> np.ndarray:
        """``(len(idx), d1, 8 t)`` codeword bits split per repetition."""
        cw = self.encode(idx)
        return cw.reshape(cw.shape[0], self.d1, self.block_bits)

    def decode_blocks(self, blocks: dict[int, np.ndarray]) -> int | None:
        """Decode from a map repetition -> block bits; absent blocks are erasures."""
        symbols = np.zeros(self.n_sym, dtype=np.int64)
        erasures = []
        for r in range(self.d1):
            if r in blocks:
                symbols[r * self.t : (r + 1) * self.t] = np.asarray(
                    bits_to_symbols(np.asarray(blocks[r]), 8)
                )
            else:
                erasures.extend(range(r * self.t, (r + 1) * self.t))
        res = self.rs.decode(symbols.tolist(), erasures)
        if res is None:
            return None
        i = 0
        for s in res:
            i = (i << 8) | int(s)
        return i if i < self.n else None


def enc_index(i: int, n: int, d1: int = 4) -> np.ndarray:
    """Outer codeword bits of index ``i``."""
    if not 0 <= i < n:
        raise ParameterError(f"index {i} outside [0, {n})")
    return OuterCode(n, d1).encode([i])[0]


def dec_index(bits, n: int, d1: int = 4) -> int | None:
    code = OuterCode(n, d1)
    b = np.asarray(bits, dtype=np.uint8).reshape(d1, code.block_bits)
    return code.decode_blocks({r: b[r] for r in range(d1)})


class LinkGraph:
    """``Delta``-regular graph on ``d1`` (even) vertices: a union of random perfect matchings.

    ``neighbors[r, l]`` is the ``l``-th neighbour of repetition ``r``; since
    each layer is a matching, ``neighbors[neighbors[r, l], l] == r``.
    """

    def __init__(self, d1: int, delta: int = 4, seed: int = 0, attempts: int = 200):
        if d1 < 2 or d1 % 2:
            raise ParameterError(f"link graph needs an even number of vertices, got {d1}")
        if delta < 1:
            raise ParameterError("link graph degree must be positive")
        self.d1, self.delta = d1, delta
        rng = child_rng(seed, 3)
        layers: list[np.ndarray] = []
        seen: set[tuple[int, int]] = set()
        for _ in range(delta):
            best = None
            for _ in range(attempts):
                perm = rng.permutation(d1)
                match = np.empty(d1, dtype=np.int64)
                match[perm[0::2]] = perm[1::2]
                match[perm[1::2]] = perm[0::2]
                edges = {(min(a, b), max(a, b)) for a, b in enumerate(match.tolist())}
                if best is None:
                    best = (match, edges)
                if not edges & seen:
                    best = (match, edges)
                    break
            layers.append(best[0])
            seen |= best[1]
        self.neighbors = np.stack(layers, axis=1)


@dataclass(frozen=True)
class BlockLayout:
    """Bit layout of one protected block: message chunk then link fields."""

    chunk_bits: int
    link_bits: int
    delta: int
    inner: CodeSpec

    @property
    def payload_bits(self) -> int:
        return self.chunk_bits + self.delta * self.link_bits

    @classmethod
    def make(cls, chunk_bits: int, B1: int, delta: int) -> BlockLayout:
        link_bits = max(1, math.ceil(math.log2(B1)))
        payload = chunk_bits + delta * link_bits
        return cls(chunk_bits, link_bits, delta, inner_code_for(payload))

    def split(self, payload: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Message chunk bits and decoded link fields ``(..., delta)``."""
        chunk = payload[..., : self.chunk_bits]
        links = payload[..., self.chunk_bits : self.payload_bits]
        links = links.reshape(*links.shape[:-1], self.delta, self.link_bits).astype(np.int64)
        weights = 1 << np.arange(self.link_bits - 1, -1, -1)
        return chunk, (links * weights).sum(axis=-1)


def int_bits(values, width: int) -> np.ndarray:
    v = np.asarray(values, dtype=np.int64)
    return ((v[..., None] >> np.arange(width - 1, -1, -1)) & 1).astype(np.uint8)


def block_payloads(idx, hash: TwoLayerHash, link: LinkGraph, outer: OuterCode, layout: BlockLayout) -> np.ndarray:
    """Uncoded block messages ``(len(idx), d1, payload_bits)``."""
    idx = np.atleast_1d(np.asarray(idx, dtype=np.int64))
    chunks = outer.blocks(idx)
    first = hash.g.table[:, idx].T.astype(np.int64)  # (len, d1)
    linked = first[:, link.neighbors]  # (len, d1, delta)
    links = int_bits(linked, layout.link_bits).reshape(len(idx), hash.d1, -1)
    pad = layout.inner.message_bits - layout.payload_bits
    parts = [chunks, links]
    if pad:
        parts.append(np.zeros((len(idx), hash.d1, pad), dtype=np.uint8))
    return np.concatenate(parts, axis=2)


def build_block_message(i: int, r: int, hash: TwoLayerHash, link: LinkGraph, outer: OuterCode, layout: BlockLayout) -> np.ndarray:
    """Protected block of coordinate ``i`` for repetition ``r``."""
    if not 0 <= r < hash.d1:
        raise ParameterError(f"repetition {r} outside [0, {hash.d1})")
    payload = block_payloads([i], hash, link, outer, layout)[0, r]
    return BinaryCode(layout.inner).encode(payload)


def embed_bits(a: float, bits) -> np.ndarray:
    """Expand entry ``a`` into one pair per bit: ``(a, 0)`` for 0, ``(0, a)`` for 1."""
    bits = np.asarray(bits, dtype=np.uint8)
    out = np.zeros((bits.size, 2))
    out[np.arange(bits.size), bits] = a
    return out.ravel()


def bucket_message_matrix(buckets, messages) -> DenseMatrix:
    """Dense ``(2 * B * L) x n`` matrix writing each column's ``L``-bit message
    into the pairs of its bucket.

    ``buckets`` lists the column indices of every base row; ``messages`` is
    ``(L, n)``. Bit ``l`` of column ``i`` in bucket ``b`` lands in row
    ``(b * L + l) * 2 + bit``.
    """
    messages = np.asarray(messages, dtype=np.uint8)
    L, n = messages.shape
    out = np.zeros((2 * len(buckets) * L, n))
    for b, cols in enumerate(buckets):
        for i in cols:
            out[2 * b * L : 2 * (b + 1) * L, i] = embed_bits(1.0, messages[:, i])
    return DenseMatrix(out)


def extract_bit(a: float, b: float) -> int:
    """1 if ``|a| < |b|`` else 0."""
    return int(abs(a) < abs(b))


def fold_repeats(bits: np.ndarray, erased: np.ndarray, length: int) -> tuple[np.ndarray, np.ndarray]:
    """Majority-combine positions ``p, p + length, ...`` of a cyclically repeated word.

    Works on the last axis; ties and all-erased positions become erasures.
    """
    total = bits.shape[-1]
    reps = math.ceil(total / length)
    padded = np.zeros((*bits.shape[:-1], reps * length), dtype=np.int32)
    live = np.zeros(padded.shape, dtype=bool)
    padded[..., :total] = bits
    live[..., :total] = ~erased
    padded = padded.reshape(*bits.shape[:-1], reps, length)
    live = live.reshape(*bits.shape[:-1], reps, length)
    ones = (padded * live).sum(axis=-2)
    zeros = live.sum(axis=-2) - ones
    return (ones > zeros).astype(np.uint8), ones == zeros


def decode_bucket_message(pairs, inner: CodeSpec) -> np.ndarray | None:
    """Extract one bit per pair, fold repeats, inner-decode; ``None`` on failure."""
    p = np.asarray(pairs, dtype=np.float64).reshape(-1, 2)
    bits = (np.abs(p[:, 0]) < np.abs(p[:, 1])).astype(np.uint8)
    erased = np.zeros(bits.shape, dtype=bool)
    if bits.size < inner.coded_bits:
        raise ParameterError("fewer pairs than coded bits")
    word, er = fold_repeats(bits, erased, inner.coded_bits)
    msg, ok = BinaryCode(inner).decode(word[None], er[None])
    return msg[0] if ok[0] else None
