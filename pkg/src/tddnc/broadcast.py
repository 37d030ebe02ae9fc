"""QoS-constrained plan search for a broadcast to heterogeneous user classes.

Each scenario turns per-class metrics into an objective ``F`` (bits/s, to
maximize) and a constraint ``G`` (a PDR, kept at or below ``p_th``):

====  ==========================  ======================================
kind  F                           G
====  ==========================  ======================================
I     throughput of class ``k``   PDR of class ``k``
II    weighted mean throughput    PDR of the class with the highest PER
III   weighted mean throughput    weighted arithmetic mean PDR
IV    weighted mean throughput    weighted geometric mean PDR
====  ==========================  ======================================

Searches scan the grid in ascending ``(q, M, N_s)`` order. Candidates whose
objective lies within a relative ``TIE_RTOL`` of the best are treated as
ties and the smallest key wins; all such ties are reported.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np
from scipy.special import bdtr, bdtrc

from .errors import NoFeasiblePlanError, NumericalError
from .schemes import (
    ChannelParams,
    IsrlncPlan,
    LinkParams,
    Metrics,
    OneRoundPlan,
    RoundRobinPlan,
    isrlnc_metrics,
    max_one_round_ns,
    one_round_curve,
    packet_timing,
    rr_metrics,
    rlnc_one_round,
    srlnc_one_round,
)
from .core_math import systematic_reception_vec

TIE_RTOL = 1e-9
KINDS = ("I", "II", "III", "IV")
DEFAULT_Q_GRID = tuple(2 ** g for g in range(1, 11))


@dataclass(frozen=True)
class UserClass:
    """A population share with either a packet error rate or a bit error rate."""

    weight: float
    p_e: float | None = None
    ber: float | None = None

    def __post_init__(self):
        if (self.p_e is None) == (self.ber is None):
            raise ValueError("give exactly one of p_e or ber")
        for v in (self.weight, self.p_e if self.ber is None else self.ber):
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"probabilities and weights must lie in [0, 1], got {v!r}")

    def per(self, bits: int) -> float:
        """Packet error rate for a packet of ``bits`` bits."""
        if self.p_e is not None:
            return self.p_e
        return -math.expm1(bits * math.log1p(-self.ber)) if self.ber < 1.0 else 1.0


def check_weights(classes: Sequence[UserClass]) -> np.ndarray:
    if not classes:
        raise ValueError("at least one user class is required")
    w = np.array([c.weight for c in classes], dtype=float)
    if abs(math.fsum(w) - 1.0) > 1e-12:
        raise ValueError(f"class weights must sum to 1, got {math.fsum(w)!r}")
    return w


@dataclass(frozen=True)
class ScenarioSpec:
    kind: str
    p_th: float
    user_of_interest: int | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"scenario kind must be one of {KINDS}, got {self.kind!r}")
        if not 0.0 < self.p_th < 1.0:
            raise ValueError("p_th must lie in (0, 1)")
        if self.kind == "I" and self.user_of_interest is None:
            raise ValueError("scenario I needs user_of_interest")


@dataclass(frozen=True)
class BroadcastResult:
    plan: object
    per_class: tuple[Metrics, ...]
    pers: tuple[float, ...]
    objective: float
    constraint_value: float
    mean_throughput: float
    mean_pdr: float
    ties: tuple = field(default=())


def _scenario_arrays(spec, eta, pd, w, pers):
    """Vectorized F, G over the trailing axis; ``eta``/``pd`` are (classes, plans)."""
    mean_eta = w @ eta
    if spec.kind == "I":
        k = spec.user_of_interest
        if not 0 <= k < len(w):
            raise ValueError(f"user_of_interest {k} out of range for {len(w)} classes")
        return eta[k], pd[k]
    if spec.kind == "II":
        worst = np.flatnonzero(np.asarray(pers) == max(pers))
        return mean_eta, pd[worst].max(axis=0)
    if spec.kind == "III":
        return mean_eta, w @ pd
    # geometric mean; any zero PDR in a weighted class collapses it to 0
    with np.errstate(divide="ignore"):
        logs = np.where(w[:, None] > 0, np.log(pd), 0.0)
    return mean_eta, np.exp(w @ logs)


def scenario_objective(spec: ScenarioSpec, per_class: Sequence[Metrics], weights, pers) -> tuple[float, float]:
    """``(F, G)`` for one plan; ``pers`` identifies the worst class in scenario II."""
    w = np.asarray(weights, dtype=float)
    if len(per_class) != len(w) or len(pers) != len(w):
        raise ValueError("need one metric and one PER per class")
    eta = np.array([[m.mean_throughput] for m in per_class])
    pd = np.array([[m.pdr] for m in per_class])
    F, G = _scenario_arrays(spec, eta, pd, w, list(pers))
    return float(F[0]), float(G[0])


# -- candidate bookkeeping ----------------------------------------------------

def _cell_candidates(key_prefix, xs, F, G, p_th):
    """Constraint-satisfying entries of one cell within the tie band of its best."""
    ok = G <= p_th
    if not ok.any():
        return []
    best = F[ok].max()
    sel = np.flatnonzero(ok & (F >= best * (1 - TIE_RTOL)))
    return [(float(F[i]), key_prefix + (int(xs[i]),)) for i in sel]


def _pick(cands):
    if not cands:
        raise NoFeasiblePlanError("no feasible plan meets the PDR threshold")
    top = max(F for F, _ in cands)
    tied = sorted(k for F, k in cands if F >= top * (1 - TIE_RTOL))
    return tied[0], tuple(tied[1:])


def _finish(spec, plan, per_class, w, pers, ties):
    F, G = scenario_objective(spec, per_class, w, pers)
    if not G <= spec.p_th * (1 + 1e-12):
        raise NumericalError(f"selected plan {plan} violates the threshold on re-evaluation (G={G!r})")
    return BroadcastResult(
        plan=plan,
        per_class=tuple(per_class),
        pers=tuple(pers),
        objective=F,
        constraint_value=G,
        mean_throughput=math.fsum(wi * m.mean_throughput for wi, m in zip(w, per_class)),
        mean_pdr=math.fsum(wi * m.pdr for wi, m in zip(w, per_class)),
        ties=ties,
    )


_SCALAR_ONE_ROUND = {"rlnc": rlnc_one_round, "srlnc": srlnc_one_round}


# -- one-round searches -------------------------------------------------------

def _one_round_cell(spec, classes, w, M, q, link, scheme):
    hi = max_one_round_ns(M, q, link)
    if hi < M:
        return None
    l = packet_timing(M, q, link).l
    pers = [c.per(l) for c in classes]
    ns = np.arange(M, hi + 1)
    eta = np.empty((len(classes), ns.size))
    pd = np.empty_like(eta)
    for i, pe in enumerate(pers):
        eta[i], pd[i] = one_round_curve(scheme, M, q, pe, link, ns)
    F, G = _scenario_arrays(spec, eta, pd, w, pers)
    return _cell_candidates((q, M), ns, F, G, spec.p_th)


def _one_round_result(spec, classes, w, key, ties, link, scheme):
    q, M, N_s = key
    plan = OneRoundPlan(M, q, N_s)
    l = packet_timing(M, q, link).l
    pers = [c.per(l) for c in classes]
    per_class = [_SCALAR_ONE_ROUND[scheme](plan, ChannelParams(pe), link) for pe in pers]
    ties = tuple(OneRoundPlan(t[1], t[0], t[2]) for t in ties)
    return _finish(spec, plan, per_class, w, pers, ties)


def optimize_ns(spec: ScenarioSpec, classes: Sequence[UserClass], M: int, q: int, link: LinkParams,
                scheme: str = "srlnc") -> BroadcastResult:
    """Best ``N_s`` for a fixed block size and field."""
    w = check_weights(classes)
    cands = _one_round_cell(spec, classes, w, M, q, link, scheme)
    if cands is None:
        raise NoFeasiblePlanError(f"no feasible N_s for M={M}, q={q}")
    key, ties = _pick(cands)
    return _one_round_result(spec, classes, w, key, ties, link, scheme)


def _q_column(args):
    spec, classes, w, q, link, scheme, M_max = args
    out = []
    M = 1
    while M_max is None or M <= M_max:
        cell = _one_round_cell(spec, classes, w, M, q, link, scheme)
        if cell is None:
            break
        out.extend(cell)
        M += 1
    return out


def optimize_full(spec: ScenarioSpec, classes: Sequence[UserClass], link: LinkParams,
                  q_grid: Sequence[int] = DEFAULT_Q_GRID, scheme: str = "srlnc",
                  M_max: int | None = None, workers: int = 1) -> BroadcastResult:
    """Joint search over ``(q, M, N_s)``; ``M`` runs up to the largest block that fits the deadline."""
    w = check_weights(classes)
    if not q_grid:
        raise ValueError("q grid must not be empty")
    jobs = [(spec, tuple(classes), w, q, link, scheme, M_max) for q in q_grid]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            columns = list(ex.map(_q_column, jobs))
    else:
        columns = [_q_column(j) for j in jobs]
    key, ties = _pick([c for col in columns for c in col])
    return _one_round_result(spec, classes, w, key, ties, link, scheme)


# -- comparison schemes -------------------------------------------------------

def optimize_rr(spec: ScenarioSpec, classes: Sequence[UserClass], link: LinkParams) -> BroadcastResult:
    """Search over block size ``M`` and repetition count ``K``; PER uses the uncoded length."""
    w = check_weights(classes)
    l_u = link.h + link.n
    pers = [c.per(l_u) for c in classes]
    chans = [ChannelParams(pe) for pe in pers]
    T_Pu = Fraction(l_u) / link.R
    budget = math.floor((link.T_d - link.T_rt / 2) / T_Pu)
    cands = []
    for M in range(1, budget + 1):
        Ks = np.arange(1, budget // M + 1)
        eta = np.empty((len(pers), Ks.size))
        pd = np.empty_like(eta)
        for i, ch in enumerate(chans):
            for k, K in enumerate(Ks):
                m = rr_metrics(M, int(K), ch, link)
                eta[i, k], pd[i, k] = m.mean_throughput, m.pdr
        F, G = _scenario_arrays(spec, eta, pd, w, pers)
        # keys sort by (M, N_s); N_s = K*M
        cands.extend(_cell_candidates((M,), Ks * M, F, G, spec.p_th))
    key, ties = _pick(cands)
    M, N_s = key
    plan = RoundRobinPlan(M, N_s // M)
    per_class = [rr_metrics(M, plan.K, ch, link) for ch in chans]
    return _finish(spec, plan, per_class, w, pers, tuple(RoundRobinPlan(t[0], t[1] // t[0]) for t in ties))


def expand_population(weights, n_users: int) -> list[int]:
    """Integer user counts per class summing to ``n_users`` (largest remainder, ties to lower index)."""
    if n_users < 1:
        raise ValueError("n_users must be positive")
    w = np.asarray(weights, dtype=float)
    raw = w * n_users
    base = np.floor(raw + 1e-12).astype(int)
    rem = raw - base
    order = sorted(range(len(w)), key=lambda i: (-rem[i], i))
    for i in order[: n_users - int(base.sum())]:
        base[i] += 1
    return [int(v) for v in base]


def isrlnc_curve(M: int, pers: Sequence[float], counts: Sequence[int], link: LinkParams, ns_values):
    """Per-class (throughput, pdr) arrays of ISRLNC for many ``N_s`` at one ``M``.

    Vectorized twin of :func:`isrlnc_metrics` for a population that holds
    ``counts[i]`` identical users of class ``i``.
    """
    ns = np.asarray(ns_values, dtype=int)
    n = link.n
    T_Pu = float(Fraction(link.h + link.n) / link.R)
    T_half = float(link.T_rt / 2)
    J = np.arange(M, int(ns.max()))
    all_by = np.ones(J.size)
    for pe, c in zip(pers, counts):
        all_by *= bdtrc(M - 1, J, 1.0 - pe) ** c if pe < 1.0 else (0.0 if c else 1.0)
    P_SJ = np.clip(np.diff(np.concatenate([[0.0], all_by])), 0.0, None)
    cum_p = np.concatenate([[0.0], np.cumsum(P_SJ)])
    cum_eta = np.concatenate([[0.0], np.cumsum(P_SJ * M * n / (J * T_Pu + T_half))])
    early = cum_p[ns - M]
    eta_early = cum_eta[ns - M]
    T = ns * T_Pu + T_half
    m = np.arange(M)
    need = (M - m)[None, :]
    coded = (ns - M)[:, None]
    eta = np.empty((len(pers), ns.size))
    pd = np.empty_like(eta)
    for i, pe in enumerate(pers):
        psys = systematic_reception_vec(M, pe)[:M]
        if pe == 1.0:
            fail = np.ones((ns.size, M))
        else:
            fail = np.where(need > coded, 1.0, bdtr(need - 1, np.maximum(coded, 0), 1.0 - pe))
        w_fail = fail * psys[None, :]
        f_tot = w_fail.sum(axis=1)
        P_S = np.clip(1.0 - early - f_tot, 0.0, None)
        eta[i] = eta_early + P_S * M * n / T + (w_fail @ m) * n / T
        pd[i] = np.minimum(w_fail @ ((M - m) / M), 1.0)
    return eta, pd


def optimize_isrlnc(spec: ScenarioSpec, classes: Sequence[UserClass], link: LinkParams,
                    n_users: int = 10) -> BroadcastResult:
    """Search over ``(M, N_s)`` for a concrete population of ``n_users`` users.

    Classes that receive no users after rounding are left out.
    """
    w = check_weights(classes)
    counts = expand_population(w, n_users)
    keep = [i for i, c in enumerate(counts) if c > 0]
    l_u = link.h + link.n
    pers = [classes[i].per(l_u) for i in keep]
    cnt = [counts[i] for i in keep]
    w_pop = np.array(cnt, dtype=float) / n_users
    if spec.kind == "I":
        if spec.user_of_interest not in keep:
            raise ValueError("the class of interest has no users in the population")
        spec = ScenarioSpec("I", spec.p_th, keep.index(spec.user_of_interest))
    T_Pu = Fraction(l_u) / link.R
    budget = math.floor((link.T_d - link.T_rt / 2) / T_Pu)
    cands = []
    for M in range(1, budget + 1):
        ns = np.arange(M, budget + 1)
        eta, pd = isrlnc_curve(M, pers, cnt, link, ns)
        F, G = _scenario_arrays(spec, eta, pd, w_pop, pers)
        cands.extend(_cell_candidates((M,), ns, F, G, spec.p_th))
    key, ties = _pick(cands)
    plan = IsrlncPlan(*key)
    users = [ChannelParams(pe) for pe, c in zip(pers, cnt) for _ in range(c)]
    per_user = isrlnc_metrics(plan.M, plan.N_s, users, link)
    starts = np.cumsum([0] + cnt[:-1])
    per_class = [per_user[s] for s in starts]
    return _finish(spec, plan, per_class, w_pop, pers, tuple(IsrlncPlan(*t) for t in ties))
