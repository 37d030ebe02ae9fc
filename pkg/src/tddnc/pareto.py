"""Bi-objective (maximize mean throughput, minimize PDR) plan selection.

One-round plans have a single free variable and are enumerated outright.
Two-round plans are scalarized as ``lam * E{eta} - (1 - lam) * P_d``; the
objective splits into a first-round term plus one term per reported rDOF
``j`` that depends only on ``(N_s, N_j)``, so each weighted point costs one
outer scan over ``N_s`` with ``M`` independent inner scans over ``N_j``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np

from .core_math import coded_failure_table, coded_transition_matrix, rdof_chain, systematic_reception_vec
from .errors import NoFeasiblePlanError
from .schemes import (
    EVALUATORS,
    ChannelParams,
    LinkParams,
    Metrics,
    OneRoundPlan,
    TwoRoundPlan,
    first_round_time,
    max_one_round_ns,
    max_second_round,
    min_deadlines,
    packet_timing,
)


@dataclass(frozen=True)
class ParetoPoint:
    plan: object
    metrics: Metrics


def plan_key(plan) -> tuple:
    """Lexicographic identity used for deterministic tie-breaking."""
    return (plan.M, getattr(plan, "q", None) or 0, plan.N_s, tuple(getattr(plan, "N", ())))


def dominates(a: Metrics, b: Metrics) -> bool:
    """``a`` is at least as good on both objectives and strictly better on one."""
    return (
        a.mean_throughput >= b.mean_throughput
        and a.pdr <= b.pdr
        and (a.mean_throughput > b.mean_throughput or a.pdr < b.pdr)
    )


def pareto_filter(points: Iterable[ParetoPoint]) -> list[ParetoPoint]:
    """Non-dominated subset, sorted by ascending PDR.

    Of several points with identical metrics only the one with the smallest
    plan key survives.
    """
    pts = sorted(points, key=lambda p: (p.metrics.pdr, -p.metrics.mean_throughput, plan_key(p.plan)))
    front = []
    best = -math.inf
    for p in pts:
        if p.metrics.mean_throughput > best:
            front.append(p)
            best = p.metrics.mean_throughput
    return front


def one_round_front(scheme: str, M: int, q, ch: ChannelParams, link: LinkParams) -> list[ParetoPoint]:
    """Exhaustive Pareto front over every feasible ``N_s`` of a one-round scheme."""
    hi = max_one_round_ns(M, q, link)
    if hi < M:
        raise NoFeasiblePlanError(f"deadline below the one-round minimum for M={M}, q={q}")
    evaluate = EVALUATORS[scheme]
    pts = []
    for N_s in range(M, hi + 1):
        plan = OneRoundPlan(M, q, N_s)
        pts.append(ParetoPoint(plan, evaluate(plan, ch, link)))
    return pareto_filter(pts)


def sample_lambdas(count: int = 360, rng_seed=None) -> list[float]:
    """Weights ``10**theta`` with ``theta ~ U[-18, 0]``."""
    if count < 1:
        raise ValueError("count must be positive")
    theta = np.random.default_rng(rng_seed).uniform(-18.0, 0.0, size=count)
    return [float(v) for v in 10.0 ** theta]


# -- two-round decomposition --------------------------------------------------

@dataclass(frozen=True)
class _Slice:
    """Objective pieces for one first-round count ``N_s``.

    ``A[j]``/``B[j]`` hold the throughput/drop contributions of rDOF ``j``
    for ``N_j = j..bound`` (index 0 is ``N_j = j``).
    """

    N_s: int
    A0: float
    A: tuple
    B: tuple


@lru_cache(maxsize=64)
def two_round_tables(scheme: str, M: int, q, ch: ChannelParams, link: LinkParams) -> tuple[_Slice, ...]:
    if scheme not in ("rlnc2", "srlnc2"):
        raise ValueError(f"not a two-round scheme: {scheme!r}")
    _, T_d2 = min_deadlines(M, q, link)
    if link.T_d < T_d2:
        raise NoFeasiblePlanError("deadline below the two-round minimum T_d2")
    t = packet_timing(M, q, link)
    n = link.n
    chain = rdof_chain(M, q)
    ok_fb, lost_fb = 1.0 - ch.p_e_fb, ch.p_e_fb
    srlnc = scheme == "srlnc2"
    if srlnc:
        psys = systematic_reception_vec(M, ch.p_e)
        m = np.arange(M + 1)
    slices = []
    N_s = M
    while True:
        bound = max_second_round(M, q, N_s, link)
        if bound < M:
            break
        T_r1 = first_round_time(N_s, t, link)
        Nj = np.arange(0, bound + 1)
        T_tot = np.array([float(T_r1 + k * t.T_P + link.T_rt / 2) for k in Nj])
        T_r1 = float(T_r1)
        coded_first = N_s - M if srlnc else N_s
        F = coded_failure_table(chain, ch.p_e, coded_first + bound)
        W = coded_transition_matrix(chain, ch.p_e, coded_first)
        if srlnc:
            # rows of W indexed by the start rDOF M - m
            Wm = W[M - m]                      # (m, j)
            c = psys @ Wm                      # P(rDOF after round 1 = j)
            cm = (psys * m) @ Wm               # same, weighted by uncoded count
            cd = (psys * (M - m) / M) @ Wm     # same, weighted by dropped fraction
            A0 = ok_fb * c[0] * M * n / T_r1
        else:
            d = W[M]
            A0 = ok_fb * d[0] * M * n / T_r1
        A, B = [], []
        for j in range(1, M + 1):
            k = Nj[j:]
            f = F[k, j]
            T = T_tot[j:]
            if srlnc:
                a = ok_fb * (c[j] * (1.0 - f) * M * n + f * cm[j] * n) / T
                b = ok_fb * cd[j] * f
            else:
                a = ok_fb * d[j] * (1.0 - f) * M * n / T
                b = ok_fb * d[j] * f
            if j == M:
                # lost feedback: the sender assumes rDOF M and sends N_M
                if srlnc:
                    ff = F[coded_first + k][:, M - m]          # (N_M, m)
                    a = a + lost_fb * ((1.0 - ff) @ psys * M * n + ff @ (psys * m) * n) / T
                    b = b + lost_fb * (ff @ (psys * (M - m) / M))
                else:
                    ff = F[coded_first + k, M]
                    a = a + lost_fb * (1.0 - ff) * M * n / T
                    b = b + lost_fb * ff
            A.append(a)
            B.append(b)
        slices.append(_Slice(N_s, float(A0), tuple(A), tuple(B)))
        N_s += 1
    if not slices:
        raise NoFeasiblePlanError("no feasible two-round plan")
    return tuple(slices)


def weighted_optimum(tables, lam: float) -> tuple[float, int, tuple[int, ...]]:
    """Maximize the scalarized objective; ties go to the smallest ``N_s`` then ``N``."""
    if not 0.0 <= lam <= 1.0:
        raise ValueError("lambda must lie in [0, 1]")
    best = (-math.inf, None, None)
    for sl in tables:
        total = [lam * sl.A0]
        N = []
        for j, (a, b) in enumerate(zip(sl.A, sl.B), start=1):
            obj = lam * a - (1.0 - lam) * b
            i = int(np.argmax(obj))
            total.append(float(obj[i]))
            N.append(j + i)
        value = math.fsum(total)
        if value > best[0]:
            best = (value, sl.N_s, tuple(N))
    return best


def two_round_weighted_point(scheme: str, M: int, q, ch: ChannelParams, link: LinkParams, lam: float) -> ParetoPoint:
    """Pareto-optimal two-round plan for weight ``lam`` with its exact metrics."""
    tables = two_round_tables(scheme, M, q, ch, link)
    _, N_s, N = weighted_optimum(tables, lam)
    plan = TwoRoundPlan(M, q, N_s, N)
    return ParetoPoint(plan, EVALUATORS[scheme](plan, ch, link))


def two_round_front(scheme: str, M: int, q, ch: ChannelParams, link: LinkParams,
                    lambdas: Sequence[float]) -> list[ParetoPoint]:
    """Weighted-sum points for each weight, deduplicated by plan, in weight order."""
    seen = {}
    for lam in lambdas:
        p = two_round_weighted_point(scheme, M, q, ch, link, lam)
        seen.setdefault(p.plan, p)
    return list(seen.values())
