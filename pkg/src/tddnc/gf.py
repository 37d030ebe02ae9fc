"""GF(2^g) arithmetic by lookup tables, sized for vectorized use (g <= 10)."""

from __future__ import annotations

from functools import lru_cache

import numpy as np

# x^g + ... as bit masks, including the leading term
POLYNOMIALS = {
    1: 0b11,
    2: 0b111,
    3: 0b1011,
    4: 0b10011,
    5: 0b100101,
    6: 0b1000011,
    7: 0b10000011,
    8: 0b100011011,
    9: 0b1000010001,
    10: 0b10000001001,
}


def _poly_mod(a: int, b: int) -> int:
    db = b.bit_length()
    while a.bit_length() >= db:
        a ^= b << (a.bit_length() - db)
    return a


def is_irreducible(poly: int) -> bool:
    """Trial division by every polynomial of degree 1..deg/2 over GF(2)."""
    deg = poly.bit_length() - 1
    if deg < 1:
        return False
    for d in range(1, deg // 2 + 1):
        for b in range(1 << d, 1 << (d + 1)):
            if _poly_mod(poly, b) == 0:
                return False
    return True


class GfContext:
    """Field tables for GF(2^g): ``mul[a, b]``, ``inv[a]`` and a log/antilog pair."""

    def __init__(self, g: int, poly: int | None = None):
        if not 1 <= g <= 10:
            raise ValueError("field exponent must lie in 1..10")
        poly = POLYNOMIALS[g] if poly is None else poly
        if poly.bit_length() - 1 != g or not is_irreducible(poly):
            raise ValueError(f"{poly:#b} is not an irreducible polynomial of degree {g}")
        self.g, self.q, self.poly = g, 1 << g, poly
        q = self.q
        # shift-and-add multiplication over all pairs at once
        a = np.arange(q, dtype=np.int64)[:, None]
        b = np.arange(q, dtype=np.int64)[None, :]
        acc = np.zeros((q, q), dtype=np.int64)
        for bit in range(g):
            acc ^= np.where((b >> bit) & 1, a, 0)
            a = a << 1
            a = np.where(a & q, a ^ poly, a)
        self.mul = acc.astype(np.uint16)
        self.mul.setflags(write=False)
        inv = np.zeros(q, dtype=np.uint16)
        rows, cols = np.nonzero(self.mul == 1)
        inv[rows] = cols
        self.inv = inv
        self.inv.setflags(write=False)
        self.exp, self.log = self._log_tables()

    def _log_tables(self):
        q = self.q
        for gen in range(2, q) if q > 2 else [1]:
            exp = np.empty(q - 1, dtype=np.uint16)
            x = 1
            for i in range(q - 1):
                exp[i] = x
                x = int(self.mul[x, gen])
            if len(set(exp.tolist())) == q - 1:
                log = np.zeros(q, dtype=np.int32)
                log[exp] = np.arange(q - 1)
                self.generator = gen
                return exp, log
        raise ArithmeticError("no primitive element found")

    def __repr__(self):
        return f"GfContext(g={self.g}, poly={self.poly:#x})"


@lru_cache(maxsize=None)
def gf(g: int) -> GfContext:
    return GfContext(g)
