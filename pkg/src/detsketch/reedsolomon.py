"""Reed-Solomon codes over GF(2^m) with errors-and-erasures decoding.

Symbols are ints in ``[0, 2^m)``. Codes are systematic: the first
``k`` symbols of a codeword are the message. Decoding uses the
Berlekamp-Massey algorithm on Forney syndromes, Chien search and Forney's
formula; it returns ``None`` instead of a wrong answer whenever the
corrected word fails the syndrome check.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

PRIMITIVE = {3: 0xB, 4: 0x13, 5: 0x25, 6: 0x43, 7: 0x89, 8: 0x11D}


class GF:
    """Arithmetic in GF(2^m) via log/antilog tables."""

    def __init__(self, m: int):
        if m not in PRIMITIVE:
            raise ValueError(f"unsupported field size 2^{m}")
        self.m = m
        self.size = 1 << m
        self.order = self.size - 1
        exp = [0] * (2 * self.order)
        log = [0] * self.size
        x = 1
        for e in range(self.order):
            exp[e] = x
            log[x] = e
            x <<= 1
            if x & self.size:
                x ^= PRIMITIVE[m]
        for e in range(self.order, 2 * self.order):
            exp[e] = exp[e - self.order]
        self.exp, self.log = exp, log

    def mul(self, a: int, b: int) -> int:
        if a == 0 or b == 0:
            return 0
        return self.exp[self.log[a] + self.log[b]]

    def div(self, a: int, b: int) -> int:
        if b == 0:
            raise ZeroDivisionError("division by zero in GF(2^m)")
        if a == 0:
            return 0
        return self.exp[(self.log[a] - self.log[b]) % self.order]

    def pow(self, a: int, e: int) -> int:
        if a == 0:
            return 0 if e else 1
        return self.exp[(self.log[a] * e) % self.order]

    def inv(self, a: int) -> int:
        return self.div(1, a)

    # polynomials are lists, highest degree first
    def poly_mul(self, p, q):
        out = [0] * (len(p) + len(q) - 1)
        for i, a in enumerate(p):
            if a:
                for j, b in enumerate(q):
                    out[i + j] ^= self.mul(a, b)
        return out

    def poly_eval(self, p, x: int) -> int:
        y = 0
        for c in p:
            y = self.mul(y, x) ^ c
        return y

    def poly_scale(self, p, c):
        return [self.mul(a, c) for a in p]

    def poly_add(self, p, q):
        n = max(len(p), len(q))
        out = [0] * n
        for i, a in enumerate(p):
            out[i + n - len(p)] = a
        for i, b in enumerate(q):
            out[i + n - len(q)] ^= b
        return out


@lru_cache(maxsize=None)
def field(m: int) -> GF:
    return GF(m)


class RSCode:
    """Systematic ``[n, k]`` Reed-Solomon code over GF(2^m), ``n <= 2^m - 1``."""

    def __init__(self, m: int, n: int, k: int):
        self.gf = field(m)
        if not 1 <= k < n <= self.gf.order:
            raise ValueError(f"need 1 <= k < n <= {self.gf.order}, got n={n} k={k}")
        self.m, self.n, self.k = m, n, k
        self.nsym = n - k
        g = [1]
        for i in range(self.nsym):
            g = self.gf.poly_mul(g, [1, self.gf.pow(2, i + 1)])
        self.generator = g
        self._binary = None

    def encode(self, msg) -> list[int]:
        msg = [int(s) for s in msg]
        if len(msg) != self.k:
            raise ValueError(f"message must have {self.k} symbols")
        gf = self.gf
        rem = msg + [0] * self.nsym
        for i in range(self.k):
            c = rem[i]
            if c:
                for j in range(1, len(self.generator)):
                    rem[i + j] ^= gf.mul(self.generator[j], c)
        return msg + rem[self.k :]

    def syndromes(self, word) -> list[int]:
        return [self.gf.poly_eval(word, self.gf.pow(2, i + 1)) for i in range(self.nsym)]

    def decode(self, word, erasures=()) -> list[int] | None:
        """Message symbols, or ``None`` if the word is not correctable."""
        gf = self.gf
        word = [int(s) for s in word]
        if len(word) != self.n:
            raise ValueError(f"received word must have {self.n} symbols")
        erasures = sorted(set(int(e) for e in erasures))
        if len(erasures) > self.nsym:
            return None
        for e in erasures:
            word[e] = 0
        synd = self.syndromes(word)
        if not any(synd):
            return word[: self.k]
        # positions are powers of x counted from the end of the word
        coef_pos = [self.n - 1 - e for e in erasures]
        # erasure locator
        e_loc = [1]
        for p in coef_pos:
            e_loc = gf.poly_mul(e_loc, gf.poly_add([1], [gf.pow(2, p), 0]))
        # Forney syndromes: remove erasure influence
        fsynd = list(synd)
        for p in coef_pos:
            x = gf.pow(2, p)
            for j in range(len(fsynd) - 1):
                fsynd[j] = gf.mul(fsynd[j], x) ^ fsynd[j + 1]
        fsynd = fsynd[: len(fsynd) - len(coef_pos)] if coef_pos else fsynd
        # Berlekamp-Massey for the error locator
        err_loc, old_loc = [1], [1]
        for i in range(len(fsynd)):
            delta = fsynd[i]
            for j in range(1, len(err_loc)):
                delta ^= gf.mul(err_loc[-(j + 1)], fsynd[i - j])
            old_loc = old_loc + [0]
            if delta:
                if len(old_loc) > len(err_loc):
                    new_loc = gf.poly_scale(old_loc, delta)
                    old_loc = gf.poly_scale(err_loc, gf.inv(delta))
                    err_loc = new_loc
                err_loc = gf.poly_add(err_loc, gf.poly_scale(old_loc, delta))
        while len(err_loc) > 1 and err_loc[0] == 0:
            err_loc = err_loc[1:]
        n_err = len(err_loc) - 1
        if 2 * n_err + len(coef_pos) > self.nsym:
            return None
        # combined locator and Chien search
        loc = gf.poly_mul(err_loc, e_loc)
        positions = []
        for p in range(self.n):
            if gf.poly_eval(loc, gf.inv(gf.pow(2, p))) == 0:
                positions.append(p)
        if len(positions) != len(loc) - 1:
            return None
        # Forney: evaluator omega = (S(x) * loc(x)) mod x^nsym, low-order first
        s_low = synd  # s_low[i] = S_{i+1}, coefficient of x^i
        loc_low = loc[::-1]
        omega = [0] * self.nsym
        for i in range(self.nsym):
            acc = 0
            for j in range(min(i + 1, len(loc_low))):
                acc ^= gf.mul(loc_low[j], s_low[i - j])
            omega[i] = acc
        for p in positions:
            x = gf.pow(2, p)
            xinv = gf.inv(x)
            num = 0
            for i in reversed(range(self.nsym)):
                num = gf.mul(num, xinv) ^ omega[i]
            # formal derivative of loc at xinv: odd-degree terms
            den = 0
            for j in range(1, len(loc_low), 2):
                den ^= gf.mul(loc_low[j], gf.pow(xinv, j - 1))
            if den == 0:
                return None
            # with first consecutive root alpha^1: e = X * omega(X^-1) / loc'(X^-1) * X^-1
            mag = gf.div(num, den)
            word[self.n - 1 - p] ^= mag
        if any(self.syndromes(word)):
            return None
        return word[: self.k]

    # ------------------------------------------------------------------
    # bit-level batch helpers

    def binary_generator(self) -> np.ndarray:
        """``(k m) x (n m)`` 0/1 matrix with ``bits(encode(msg)) = bits(msg) @ G mod 2``."""
        if self._binary is None:
            G = np.zeros((self.k * self.m, self.n * self.m), dtype=np.uint8)
            for row in range(self.k * self.m):
                bits = np.zeros(self.k * self.m, dtype=np.uint8)
                bits[row] = 1
                G[row] = symbols_to_bits(self.encode(bits_to_symbols(bits, self.m)), self.m)
            self._binary = G
        return self._binary

    def encode_bits_batch(self, bits: np.ndarray) -> np.ndarray:
        bits = np.asarray(bits, dtype=np.uint8)
        G = self.binary_generator().astype(np.int32)
        return ((bits.astype(np.int32) @ G) & 1).astype(np.uint8)


def symbols_to_bits(symbols, m: int) -> np.ndarray:
    """Big-endian bit expansion of each symbol."""
    s = np.asarray(symbols, dtype=np.int64)
    shifts = np.arange(m - 1, -1, -1)
    return ((s[..., None] >> shifts) & 1).reshape(*s.shape[:-1], -1).astype(np.uint8)


def bits_to_symbols(bits, m: int) -> np.ndarray:
    b = np.asarray(bits, dtype=np.int64)
    b = b.reshape(*b.shape[:-1], -1, m)
    weights = 1 << np.arange(m - 1, -1, -1)
    return (b * weights).sum(axis=-1)
