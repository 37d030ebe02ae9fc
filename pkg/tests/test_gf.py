import numpy as np
import pytest

from tddnc.gf import POLYNOMIALS, GfContext, gf, is_irreducible


def clmul(a, b, poly):
    """Bit-serial reference product, independent of the tables."""
    r = 0
    while b:
        if b & 1:
            r ^= a
        b >>= 1
        a <<= 1
    d = poly.bit_length() - 1
    for s in range(r.bit_length() - 1, d - 1, -1):
        if r >> s & 1:
            r ^= poly << (s - d)
    return r


@pytest.mark.parametrize("g", range(1, 11))
def test_polynomials_irreducible(g):
    assert POLYNOMIALS[g].bit_length() - 1 == g
    assert is_irreducible(POLYNOMIALS[g])


def test_reducible_rejected():
    assert not is_irreducible(0b101)      # (x+1)^2
    assert not is_irreducible(0b10001)    # (x+1)^4
    with pytest.raises(ValueError):
        GfContext(4, 0b10001)
    with pytest.raises(ValueError):
        GfContext(11)


def test_aes_inverse_pair():
    F = gf(8)
    assert F.poly == 0x11B
    assert F.mul[0x53, 0xCA] == 1 and F.inv[0x53] == 0xCA


@pytest.mark.parametrize("g", range(1, 11))
def test_field_axioms(g):
    F = gf(g)
    q, mul, inv = F.q, F.mul.astype(np.int64), F.inv
    rng = np.random.default_rng(g)
    a, b, c = rng.integers(0, q, size=(3, 10_000))
    assert (mul[a, b ^ c] == mul[a, b] ^ mul[a, c]).all()
    assert (mul[mul[a, b], c] == mul[a, mul[b, c]]).all()
    assert (mul[a, b] == mul[b, a]).all()
    nz = a[a != 0]
    assert (mul[nz, inv[nz]] == 1).all()
    assert (mul[a, 1] == a).all() and (mul[a, 0] == 0).all()


@pytest.mark.parametrize("g", [1, 3, 4, 8, 10])
def test_table_matches_reference(g):
    F = gf(g)
    rng = np.random.default_rng(100 + g)
    for a, b in rng.integers(0, F.q, size=(500, 2)):
        assert F.mul[a, b] == clmul(int(a), int(b), F.poly)


@pytest.mark.parametrize("g", range(1, 11))
def test_log_tables(g):
    F = gf(g)
    assert sorted(F.exp.tolist()) == list(range(1, F.q))
    a = np.arange(1, F.q)
    assert (F.exp[F.log[a]] == a).all()
    rng = np.random.default_rng(g)
    x, y = rng.integers(1, F.q, size=(2, 2000))
    assert (F.exp[(F.log[x] + F.log[y]) % (F.q - 1)] == F.mul[x, y]).all()


def test_tables_read_only():
    with pytest.raises(ValueError):
        gf(4).mul[1, 1] = 0
    assert gf(4) is gf(4)
