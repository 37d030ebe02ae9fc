"""Timing, feasibility and per-user metrics for the six transmission schemes.

Times are exact :class:`fractions.Fraction` seconds so that deadline
comparisons never misclassify a boundary plan; probabilities and
throughputs are floats.

Every evaluator enumerates its terminal states (probability, realized
throughput, dropped fraction of the block) and aggregates them, so the
state probabilities can be checked for completeness independently of the
metrics.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import NamedTuple, Sequence

import numpy as np

from .core_math import (
    binom_pmf_vec,
    coded_failure_table,
    coded_transition_matrix,
    field_exponent,
    rdof_chain,
    systematic_reception_vec,
)
from .errors import InfeasiblePlanError


def as_fraction(x) -> Fraction:
    """Exact rational for ints/Fractions; floats are read via their shortest repr."""
    if isinstance(x, Fraction):
        return x
    if isinstance(x, (int, np.integer)):
        return Fraction(int(x))
    if isinstance(x, str):
        return Fraction(x)
    return Fraction(repr(float(x)))


@dataclass(frozen=True)
class LinkParams:
    """Rate (bit/s), packet bit counts and the two times (seconds)."""

    R: Fraction
    n: int
    h: int
    n_fb: int
    T_rt: Fraction
    T_d: Fraction

    def __post_init__(self):
        for name in ("R", "T_rt", "T_d"):
            object.__setattr__(self, name, as_fraction(getattr(self, name)))
        for name in ("n", "h", "n_fb"):
            v = getattr(self, name)
            if int(v) != v:
                raise ValueError(f"{name} must be an integer bit count")
            object.__setattr__(self, name, int(v))
        if self.R <= 0 or self.n <= 0 or self.h < 0 or self.n_fb < 0:
            raise ValueError("rate and information bits must be positive; header/feedback bits non-negative")
        if self.T_rt < 0 or self.T_d <= 0:
            raise ValueError("round-trip time must be >= 0 and deadline > 0")
        if self.T_d <= self.T_rt / 2:
            raise ValueError("deadline must exceed the one-way propagation delay T_rt/2")

    @classmethod
    def from_ms(cls, R, n, h, n_fb, T_rt_ms, T_d_ms) -> "LinkParams":
        return cls(R, n, h, n_fb, as_fraction(T_rt_ms) / 1000, as_fraction(T_d_ms) / 1000)

    def with_times_ms(self, T_rt_ms=None, T_d_ms=None) -> "LinkParams":
        T_rt = self.T_rt if T_rt_ms is None else as_fraction(T_rt_ms) / 1000
        T_d = self.T_d if T_d_ms is None else as_fraction(T_d_ms) / 1000
        return LinkParams(self.R, self.n, self.h, self.n_fb, T_rt, T_d)


@dataclass(frozen=True)
class ChannelParams:
    p_e: float
    p_e_fb: float = 0.0

    def __post_init__(self):
        for name in ("p_e", "p_e_fb"):
            v = float(getattr(self, name))
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v!r}")
            object.__setattr__(self, name, v)


class PacketTiming(NamedTuple):
    l: int
    l_u: int
    T_P: Fraction
    T_Pu: Fraction
    T_fb: Fraction


def packet_timing(M: int, q, link: LinkParams) -> PacketTiming:
    """Coded/uncoded packet lengths and air times for block size ``M`` over GF(q)."""
    g = field_exponent(q)
    if g == math.inf:
        raise ValueError("an ideal field has no finite coefficient overhead")
    l_u = link.h + link.n
    l = l_u + M * int(g)
    return PacketTiming(l, l_u, Fraction(l) / link.R, Fraction(l_u) / link.R, Fraction(link.n_fb) / link.R)


@dataclass(frozen=True)
class OneRoundPlan:
    M: int
    q: int | None
    N_s: int

    def __post_init__(self):
        if self.M < 1:
            raise ValueError("block size M must be >= 1")
        if self.q is not None:
            field_exponent(self.q)


@dataclass(frozen=True)
class TwoRoundPlan:
    M: int
    q: int
    N_s: int
    N: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "N", tuple(int(v) for v in self.N))
        if self.M < 1:
            raise ValueError("block size M must be >= 1")
        if len(self.N) != self.M:
            raise ValueError(f"need one second-round count per rDOF 1..{self.M}, got {len(self.N)}")
        field_exponent(self.q)


@dataclass(frozen=True)
class RoundRobinPlan:
    M: int
    K: int

    @property
    def N_s(self) -> int:
        return self.K * self.M


@dataclass(frozen=True)
class IsrlncPlan:
    M: int
    N_s: int

    def __post_init__(self):
        if self.M < 1 or self.N_s < self.M:
            raise ValueError("need 1 <= M <= N_s")


@dataclass(frozen=True)
class Metrics:
    mean_throughput: float
    pdr: float


class State(NamedTuple):
    """A terminal state: probability, realized throughput (bit/s), dropped fraction."""

    label: str
    prob: float
    throughput: float
    drop: float


def aggregate(states: Sequence[State]) -> Metrics:
    eta = math.fsum(s.prob * s.throughput for s in states)
    pdr = math.fsum(s.prob * s.drop for s in states)
    return Metrics(max(eta, 0.0), min(max(pdr, 0.0), 1.0))


# -- timing and feasibility ---------------------------------------------------

def min_deadlines(M: int, q, link: LinkParams) -> tuple[Fraction, Fraction]:
    """Smallest deadlines the one-round and (worst-case) two-round schemes can meet."""
    t = packet_timing(M, q, link)
    T_d1 = M * t.T_P + link.T_rt / 2
    T_d2 = 2 * M * t.T_P + 3 * link.T_rt / 2 + t.T_fb
    return T_d1, T_d2


def max_one_round_ns(M: int, q, link: LinkParams) -> int:
    """Largest ``N_s`` with ``N_s T_P + T_rt/2 <= T_d`` (may be below ``M``)."""
    t = packet_timing(M, q, link)
    return math.floor((link.T_d - link.T_rt / 2) / t.T_P)


def first_round_time(N_s: int, t: PacketTiming, link: LinkParams) -> Fraction:
    return N_s * t.T_P + link.T_rt + t.T_fb


def max_second_round(M: int, q, N_s: int, link: LinkParams) -> int:
    """Largest second-round count that still meets the deadline after ``N_s``."""
    t = packet_timing(M, q, link)
    slack = link.T_d - first_round_time(N_s, t, link) - link.T_rt / 2
    return math.floor(slack / t.T_P)


def feasible_one_round(plan: OneRoundPlan, link: LinkParams) -> bool:
    if plan.N_s < plan.M:
        return False
    t = packet_timing(plan.M, plan.q, link)
    return plan.N_s * t.T_P + link.T_rt / 2 <= link.T_d


def feasible_two_round(plan: TwoRoundPlan, link: LinkParams) -> bool:
    if plan.N_s < plan.M:
        return False
    if any(Nj < j for j, Nj in enumerate(plan.N, start=1)):
        return False
    t = packet_timing(plan.M, plan.q, link)
    T_r1 = first_round_time(plan.N_s, t, link)
    # every j can occur at run time; the lost-feedback branch sends N_M
    return all(T_r1 + Nj * t.T_P + link.T_rt / 2 <= link.T_d for Nj in plan.N)


def feasible_rr(plan: RoundRobinPlan, link: LinkParams) -> bool:
    if plan.K < 1 or plan.M < 1:
        return False
    T_Pu = Fraction(link.h + link.n) / link.R
    return plan.K * plan.M * T_Pu + link.T_rt / 2 <= link.T_d


def feasible_isrlnc(M: int, N_s: int, link: LinkParams) -> bool:
    if M < 1 or N_s < M:
        return False
    T_Pu = Fraction(link.h + link.n) / link.R
    return N_s * T_Pu + link.T_rt / 2 <= link.T_d


def _require(ok, what):
    if not ok:
        raise InfeasiblePlanError(what)


# -- one-round schemes --------------------------------------------------------

def one_round_states(scheme: str, plan: OneRoundPlan, ch: ChannelParams, link: LinkParams) -> list[State]:
    _require(feasible_one_round(plan, link), f"infeasible one-round plan {plan}")
    M, N_s = plan.M, plan.N_s
    t = packet_timing(M, plan.q, link)
    T_tot = float(N_s * t.T_P + link.T_rt / 2)
    chain = rdof_chain(M, plan.q)
    if scheme == "rlnc":
        fail = float(coded_failure_table(chain, ch.p_e, N_s)[N_s, M])
        return [
            State("S", 1.0 - fail, M * link.n / T_tot, 0.0),
            State("F", fail, 0.0, 1.0),
        ]
    if scheme == "srlnc":
        psys = systematic_reception_vec(M, ch.p_e)
        F = coded_failure_table(chain, ch.p_e, N_s - M)[N_s - M]
        states = []
        for m in range(M + 1):
            f = float(F[M - m])
            states.append(State(f"S|{m}", psys[m] * (1.0 - f), M * link.n / T_tot, 0.0))
            if m < M:
                states.append(State(f"F|{m}", psys[m] * f, m * link.n / T_tot, (M - m) / M))
        return states
    raise ValueError(f"unknown one-round scheme {scheme!r}")


def _one_round_metrics(scheme, plan, ch, link):
    # n bits per delivered packet over a fixed duration, so E{eta} = (Mn/T)(1 - P_d)
    # exactly; using the identity keeps the two schemes comparable to the last ulp
    pdr = aggregate(one_round_states(scheme, plan, ch, link)).pdr
    t = packet_timing(plan.M, plan.q, link)
    T_tot = float(plan.N_s * t.T_P + link.T_rt / 2)
    return Metrics(plan.M * link.n / T_tot * (1.0 - pdr), pdr)


def rlnc_one_round(plan: OneRoundPlan, ch: ChannelParams, link: LinkParams) -> Metrics:
    return _one_round_metrics("rlnc", plan, ch, link)


def srlnc_one_round(plan: OneRoundPlan, ch: ChannelParams, link: LinkParams) -> Metrics:
    return _one_round_metrics("srlnc", plan, ch, link)


def one_round_curve(scheme: str, M: int, q, p_e: float, link: LinkParams, ns_values) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized (throughput, pdr) of a one-round scheme for many ``N_s``.

    Equivalent to calling the scalar evaluator per ``N_s``; used by sweeps
    and the broadcast searches.
    """
    ns = np.asarray(ns_values, dtype=int)
    if ns.size == 0:
        return np.zeros(0), np.zeros(0)
    if ns.min() < M or ns.max() > max_one_round_ns(M, q, link):
        raise InfeasiblePlanError("N_s outside the feasible one-round range")
    t = packet_timing(M, q, link)
    T_tot = ns * float(t.T_P) + float(link.T_rt / 2)
    chain = rdof_chain(M, q)
    if scheme == "rlnc":
        pdr = coded_failure_table(chain, p_e, int(ns.max()))[ns, M]
    elif scheme == "srlnc":
        m = np.arange(M + 1)
        psys = systematic_reception_vec(M, p_e)
        F = coded_failure_table(chain, p_e, int(ns.max()) - M)[ns - M][:, M - m]
        pdr = F @ (psys * (M - m) / M)
    else:
        raise ValueError(f"unknown one-round scheme {scheme!r}")
    pdr = np.clip(pdr, 0.0, 1.0)
    # both schemes earn n bits per delivered packet over the full round
    return M * link.n / T_tot * (1.0 - pdr), pdr


# -- two-round schemes --------------------------------------------------------

def two_round_states(scheme: str, plan: TwoRoundPlan, ch: ChannelParams, link: LinkParams) -> list[State]:
    _require(feasible_two_round(plan, link), f"infeasible two-round plan {plan}")
    M, N_s, N = plan.M, plan.N_s, plan.N
    t = packet_timing(M, plan.q, link)
    n = link.n
    T_r1 = first_round_time(N_s, t, link)
    T_j = [None] + [float(T_r1 + Nj * t.T_P + link.T_rt / 2) for Nj in N]
    T_r1 = float(T_r1)
    chain = rdof_chain(M, plan.q)
    ok_fb, lost_fb = 1.0 - ch.p_e_fb, ch.p_e_fb

    if scheme == "rlnc2":
        coded_first = N_s
        sys_weight = {M: (0, 1.0)}
    elif scheme == "srlnc2":
        psys = systematic_reception_vec(M, ch.p_e)
        coded_first = N_s - M
        sys_weight = {M - m: (m, psys[m]) for m in range(M + 1)}
    else:
        raise ValueError(f"unknown two-round scheme {scheme!r}")

    z_max = max(max(N), coded_first + N[-1])
    F = coded_failure_table(chain, ch.p_e, z_max)
    W = coded_transition_matrix(chain, ch.p_e, coded_first)
    states = []
    for x, (m, wm) in sys_weight.items():
        if wm == 0.0:
            continue
        tag = f"|{m}" if scheme == "srlnc2" else ""
        drop = (M - m) / M
        states.append(State("S" + tag, wm * ok_fb * W[x, 0], M * n / T_r1, 0.0))
        for j in range(1, x + 1):
            d = wm * ok_fb * W[x, j]
            f = float(F[N[j - 1], j])
            states.append(State(f"{j},S" + tag, d * (1.0 - f), M * n / T_j[j], 0.0))
            states.append(State(f"{j},F" + tag, d * f, m * n / T_j[j], drop))
        f = float(F[coded_first + N[-1], x])
        states.append(State("FF,S" + tag, wm * lost_fb * (1.0 - f), M * n / T_j[M], 0.0))
        states.append(State("FF,F" + tag, wm * lost_fb * f, m * n / T_j[M], drop))
    return states


def rlnc_two_round(plan: TwoRoundPlan, ch: ChannelParams, link: LinkParams) -> Metrics:
    return aggregate(two_round_states("rlnc2", plan, ch, link))


def srlnc_two_round(plan: TwoRoundPlan, ch: ChannelParams, link: LinkParams) -> Metrics:
    return aggregate(two_round_states("srlnc2", plan, ch, link))


# -- comparison schemes -------------------------------------------------------

def rr_packet_success(K: int, p_e: float) -> float:
    """Probability a packet sent ``K`` times is received at least once (truncated binomial sum)."""
    pmf = binom_pmf_vec(K, 1.0 - p_e, p_e)
    return math.fsum(pmf[1:])


def rr_states(M: int, K: int, ch: ChannelParams, link: LinkParams) -> list[State]:
    plan = RoundRobinPlan(M, K)
    _require(feasible_rr(plan, link), f"infeasible round-robin plan M={M}, K={K}")
    T_Pu = Fraction(link.h + link.n) / link.R
    T_tot = float(K * M * T_Pu + link.T_rt / 2)
    lost = ch.p_e ** K  # the k=0 term; kept separate so tiny losses survive
    pm = binom_pmf_vec(M, 1.0 - lost, lost)
    return [State(f"m={m}", pm[m], m * link.n / T_tot, (M - m) / M) for m in range(M + 1)]


def rr_metrics(M: int, K: int, ch: ChannelParams, link: LinkParams) -> Metrics:
    return aggregate(rr_states(M, K, ch, link))


def _upper_tail(pmf, k):
    return math.fsum(pmf[k:]) if k < len(pmf) else 0.0


def isrlnc_states(M: int, N_s: int, users: Sequence[ChannelParams], link: LinkParams) -> list[list[State]]:
    """Terminal states per user for systematic RLNC with free, immediate feedback.

    The sender stops as soon as every user holds ``M`` packets; field-size
    effects and coefficient overhead are ignored (``T_P = T_Pu``). The
    early-stop states ``S,J`` are shared by all users.
    """
    users = list(users)
    if not users:
        raise ValueError("at least one user is required")
    _require(feasible_isrlnc(M, N_s, link), f"infeasible ISRLNC plan M={M}, N_s={N_s}")
    T_Pu = Fraction(link.h + link.n) / link.R
    T = lambda J: float(J * T_Pu + link.T_rt / 2)  # noqa: E731
    n = link.n

    # probability that all users hold M packets within J transmissions
    all_by = []
    for J in range(M, N_s):
        prod = 1.0
        for u in users:
            prod *= _upper_tail(binom_pmf_vec(J, 1.0 - u.p_e, u.p_e), M)
        all_by.append(prod)
    P_SJ = np.diff(np.concatenate([[0.0], all_by])) if all_by else np.zeros(0)
    P_SJ = np.clip(P_SJ, 0.0, None)
    early = math.fsum(P_SJ)
    shared = [State(f"S,{J}", float(p), M * n / T(J), 0.0) for J, p in zip(range(M, N_s), P_SJ)]

    out = []
    for u in users:
        psys = systematic_reception_vec(M, u.p_e)
        coded = binom_pmf_vec(N_s - M, 1.0 - u.p_e, u.p_e)
        fail = np.empty(M)
        for m in range(M):
            need = M - m  # coded receptions still required
            fail[m] = 1.0 if need > N_s - M else min(1.0, math.fsum(coded[:need]))
        w_fail = psys[:M] * fail
        P_S = max(0.0, 1.0 - early - math.fsum(w_fail))
        states = shared + [State(f"S,{N_s}", P_S, M * n / T(N_s), 0.0)]
        states += [State(f"F|{m}", float(w_fail[m]), m * n / T(N_s), (M - m) / M) for m in range(M)]
        out.append(states)
    return out


def isrlnc_metrics(M: int, N_s: int, users: Sequence[ChannelParams], link: LinkParams) -> list[Metrics]:
    """Per-user metrics of :func:`isrlnc_states`."""
    return [aggregate(s) for s in isrlnc_states(M, N_s, users, link)]


EVALUATORS = {
    "rlnc": rlnc_one_round,
    "srlnc": srlnc_one_round,
    "rlnc2": rlnc_two_round,
    "srlnc2": srlnc_two_round,
}

SCHEMES = ("rlnc", "srlnc", "rlnc2", "srlnc2", "rr", "isrlnc")


def plan_states(scheme: str, plan, ch: ChannelParams, link: LinkParams) -> list[State]:
    """Terminal states of any single-user plan (ISRLNC with one user)."""
    if scheme in ("rlnc", "srlnc"):
        return one_round_states(scheme, plan, ch, link)
    if scheme in ("rlnc2", "srlnc2"):
        return two_round_states(scheme, plan, ch, link)
    if scheme == "rr":
        return rr_states(plan.M, plan.K, ch, link)
    if scheme == "isrlnc":
        return isrlnc_states(plan.M, plan.N_s, [ch], link)[0]
    raise ValueError(f"unknown scheme {scheme!r}; expected one of {SCHEMES}")


def evaluate(scheme: str, plan, ch: ChannelParams, link: LinkParams) -> Metrics:
    if scheme in EVALUATORS:
        return EVALUATORS[scheme](plan, ch, link)
    return aggregate(plan_states(scheme, plan, ch, link))


def state_moments(states: Sequence[State]) -> tuple[Metrics, float, float]:
    """Means plus per-episode standard deviations of throughput and drop fraction."""
    m = aggregate(states)
    e2 = math.fsum(s.prob * s.throughput ** 2 for s in states)
    d2 = math.fsum(s.prob * s.drop ** 2 for s in states)
    return m, math.sqrt(max(e2 - m.mean_throughput ** 2, 0.0)), math.sqrt(max(d2 - m.pdr ** 2, 0.0))
