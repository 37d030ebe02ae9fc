"""Probability kernels for RLNC block transmission over erasure channels.

The rDOF of a receiver (remaining degrees of freedom) only moves downwards.
A successfully received coded packet whose coefficients are uniform over
GF(q)^M is non-innovative with probability ``q**-x`` when the rDOF is ``x``,
so the per-reception dynamics form a pure-death Markov chain on ``0..M``.

Two routes compute the coded transition probability ``P(x, y, z)``:

* :func:`coded_transition_prob` sums binomially weighted ``w``-step chain
  probabilities term by term in the log domain.
* :func:`coded_failure_table` / :func:`coded_transition_matrix` fold the
  erasure into a per-transmission kernel ``p_e*I + (1-p_e)*S`` and iterate it.
  The failure table propagates ``1 - P(x, 0, z)`` directly, so drop rates
  far below machine epsilon keep their relative accuracy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.special import gammaln

LOG_ZERO = float("-inf")


def field_exponent(q: float) -> float:
    """Return ``g = log2(q)`` for a power-of-two field size.

    ``math.inf`` is accepted as the ideal-field limit where every received
    coded packet is innovative; its exponent is ``inf``.
    """
    if q == math.inf:
        return math.inf
    if isinstance(q, float):
        if not q.is_integer():
            raise ValueError(f"field size must be a power of two, got {q!r}")
        q = int(q)
    if not isinstance(q, (int, np.integer)) or q < 2 or (q & (q - 1)):
        raise ValueError(f"field size must be a power of two >= 2, got {q!r}")
    return int(q).bit_length() - 1


def _check_prob(p, name):
    if not (0.0 <= p <= 1.0):
        raise ValueError(f"{name} must lie in [0, 1], got {p!r}")


# -- binomial terms ---------------------------------------------------------

def log_binom_pmf(z: int, w: int, p_success: float) -> float:
    """``log[C(z, w) p^w (1-p)^(z-w)]``, ``-inf`` where the pmf vanishes."""
    if z < 0 or w < 0 or w > z:
        raise ValueError(f"need 0 <= w <= z, got z={z}, w={w}")
    _check_prob(p_success, "p_success")
    if p_success == 0.0:
        return 0.0 if w == 0 else LOG_ZERO
    if p_success == 1.0:
        return 0.0 if w == z else LOG_ZERO
    return _log_binom_terms(z, w, math.log(p_success), math.log1p(-p_success))


def _log_binom_terms(z, w, log_p, log_q):
    # exact integer binomial keeps log C(z, w) correctly rounded
    out = math.log(math.comb(z, w))
    if w:
        if log_p == LOG_ZERO:
            return LOG_ZERO
        out += w * log_p
    if z - w:
        if log_q == LOG_ZERO:
            return LOG_ZERO
        out += (z - w) * log_q
    return out


def binom_pmf_vec(z: int, p_success: float, p_failure: float | None = None) -> np.ndarray:
    """Binomial pmf for ``k = 0..z`` as an array.

    Pass ``p_failure`` explicitly when ``1 - p_success`` would be rounded
    away (e.g. a per-packet loss of ``p_e**K``).
    """
    if z < 0:
        raise ValueError("z must be non-negative")
    if p_failure is None:
        p_failure = 1.0 - p_success
    _check_prob(p_success, "p_success")
    _check_prob(p_failure, "p_failure")
    k = np.arange(z + 1)
    if p_success == 0.0 or p_failure == 0.0:
        out = np.zeros(z + 1)
        out[0 if p_success == 0.0 else z] = 1.0
        return out
    logc = gammaln(z + 1) - gammaln(k + 1) - gammaln(z - k + 1)
    return np.exp(logc + k * math.log(p_success) + (z - k) * math.log(p_failure))


def systematic_reception_prob(M: int, m: int, p_e: float) -> float:
    """Probability that ``m`` of the ``M`` uncoded packets get through."""
    if not 0 <= m <= M:
        raise ValueError(f"need 0 <= m <= M, got M={M}, m={m}")
    _check_prob(p_e, "p_e")
    if p_e == 0.0:
        return 1.0 if m == M else 0.0
    if p_e == 1.0:
        return 1.0 if m == 0 else 0.0
    return math.exp(_log_binom_terms(M, m, math.log1p(-p_e), math.log(p_e)))


def systematic_reception_vec(M: int, p_e: float) -> np.ndarray:
    """:func:`systematic_reception_prob` for every ``m = 0..M``."""
    return binom_pmf_vec(M, 1.0 - p_e, p_e)


# -- rDOF reduction chain -----------------------------------------------------

def _readonly(a):
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class RdofChain:
    """Pure-death chain of rDOF reductions per successfully received coded packet.

    ``stay[x]`` is the non-innovation probability ``q**-x`` (1 at ``x = 0``)
    and ``down[x] = 1 - stay[x]``.
    """

    M: int
    q: float
    stay: np.ndarray = field(init=False, repr=False, compare=False)
    down: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.M < 0:
            raise ValueError("block size must be non-negative")
        g = field_exponent(self.q)
        x = np.arange(self.M + 1)
        if g == math.inf:
            stay = (x == 0).astype(float)
        else:
            stay = np.ldexp(1.0, -int(g) * x)
        down = -np.expm1(-x * (math.log(2.0) * g)) if g != math.inf else (x > 0).astype(float)
        down[0] = 0.0
        object.__setattr__(self, "stay", _readonly(stay))
        object.__setattr__(self, "down", _readonly(down))

    def matrix(self) -> np.ndarray:
        """The ``(M+1) x (M+1)`` row-stochastic step matrix."""
        P = np.diag(self.stay.copy())
        idx = np.arange(1, self.M + 1)
        P[idx, idx - 1] = self.down[1:]
        return P


@lru_cache(maxsize=4096)
def rdof_chain(M: int, q: float) -> RdofChain:
    """Shared, cached :class:`RdofChain` for ``(M, q)``."""
    return RdofChain(M, q)


@lru_cache(maxsize=1024)
def _reduction_rows(chain: RdofChain, x: int, w_max: int) -> np.ndarray:
    # row w = distribution after w successful receptions from state x
    rows = np.zeros((w_max + 1, chain.M + 1))
    v = np.zeros(chain.M + 1)
    v[x] = 1.0
    rows[0] = v
    for w in range(1, w_max + 1):
        nv = v * chain.stay
        nv[:-1] += v[1:] * chain.down[1:]
        v = nv
        rows[w] = v
    return _readonly(rows)


def _check_states(chain, x, y):
    if not (0 <= y <= x <= chain.M):
        raise ValueError(f"need 0 <= y <= x <= M={chain.M}, got x={x}, y={y}")


def rdof_reduction_prob(chain: RdofChain, w: int, x: int, y: int) -> float:
    """Probability that ``w`` received coded packets take the rDOF from ``x`` to ``y``."""
    _check_states(chain, x, y)
    if w < 0:
        raise ValueError("w must be non-negative")
    return float(_reduction_rows(chain, x, w)[w, y])


def coded_transition_prob(x: int, y: int, z: int, p_e: float, chain: RdofChain) -> float:
    """Probability that ``z`` coded transmissions reduce the rDOF from ``x`` to ``y``.

    Sums ``C(z, w) (1-p_e)^w p_e^(z-w) P_q^w(x, y)`` over ``w`` in the log
    domain with exact (compensated) summation.
    """
    _check_states(chain, x, y)
    if z < 0:
        raise ValueError("z must be non-negative")
    _check_prob(p_e, "p_e")
    if z == 0:
        return 1.0 if x == y else 0.0
    rows = _reduction_rows(chain, x, z)
    log_p = math.log1p(-p_e) if p_e < 1.0 else LOG_ZERO
    log_q = math.log(p_e) if p_e > 0.0 else LOG_ZERO
    terms = []
    for w in range(x - y, z + 1):
        r = rows[w, y]
        if r <= 0.0:
            continue
        lb = _log_binom_terms(z, w, log_p, log_q)
        if lb == LOG_ZERO:
            continue
        terms.append(math.exp(lb + math.log(r)))
    return min(1.0, math.fsum(terms))


# -- per-transmission kernel --------------------------------------------------

def transmission_kernel(chain: RdofChain, p_e: float) -> tuple[np.ndarray, np.ndarray]:
    """Stay/step-down probabilities for one coded transmission with erasure ``p_e``."""
    _check_prob(p_e, "p_e")
    stay = p_e + (1.0 - p_e) * chain.stay
    stay[0] = 1.0
    down = (1.0 - p_e) * chain.down
    return stay, down


@lru_cache(maxsize=256)
def _failure_table(chain, p_e, z_max):
    stay, down = transmission_kernel(chain, p_e)
    F = np.empty((z_max + 1, chain.M + 1))
    f = np.ones(chain.M + 1)
    f[0] = 0.0
    F[0] = f
    for z in range(1, z_max + 1):
        nf = stay * f
        nf[1:] += down[1:] * f[:-1]
        nf[0] = 0.0
        f = nf
        F[z] = f
    return _readonly(F)


def coded_failure_table(chain: RdofChain, p_e: float, z_max: int) -> np.ndarray:
    """``F[z, x] = 1 - P(x, 0, z)`` for ``z = 0..z_max`` and ``x = 0..M``.

    Every entry is built from products and sums of non-negative terms, so
    tiny failure probabilities are never produced by cancellation.
    """
    if z_max < 0:
        raise ValueError("z_max must be non-negative")
    return _failure_table(chain, float(p_e), int(z_max))


def coded_transition_matrix(chain: RdofChain, p_e: float, z: int) -> np.ndarray:
    """``W[x, y] = P(x, y, z)`` for all start and end states."""
    if z < 0:
        raise ValueError("z must be non-negative")
    stay, down = transmission_kernel(chain, p_e)
    W = np.eye(chain.M + 1)
    for _ in range(z):
        nW = W * stay
        nW[:, :-1] += W[:, 1:] * down[1:]
        W = nW
    return W
