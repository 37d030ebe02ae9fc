"""Monte-Carlo episodes with real GF(2^g) coding and rank tracking.

Episodes are simulated in fixed-size batches. Batch ``b`` draws from
``SeedSequence([seed, b])``, so results depend only on the master seed and
the episode count, never on how many worker processes share the batches.

A receiver keeps its coefficient vectors in echelon form: row ``p`` (when
present) has a unit pivot in column ``p`` and zeros before it. Inserting a
vector eliminates it against existing pivots and, if anything survives,
stores it normalized under its first non-zero column.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from fractions import Fraction
from typing import NamedTuple, Sequence

import numpy as np

from .core_math import field_exponent
from .gf import gf
from .schemes import (
    ChannelParams,
    LinkParams,
    Metrics,
    first_round_time,
    feasible_isrlnc,
    feasible_one_round,
    feasible_rr,
    feasible_two_round,
    packet_timing,
)
from .errors import InfeasiblePlanError

BATCH = 4096


class EpisodeOutcome(NamedTuple):
    decoded: int
    elapsed: float


class StdErrors(NamedTuple):
    mean_throughput: float
    pdr: float


# -- decoder ------------------------------------------------------------------

class Decoder:
    """Echelon bases of ``E`` independent receivers over GF(2^g)."""

    def __init__(self, E: int, M: int, g: int):
        self.ctx = gf(g)
        self.M = M
        self.basis = np.zeros((E, M, M), dtype=np.uint16)
        self.has = np.zeros((E, M), dtype=bool)

    @property
    def rank(self) -> np.ndarray:
        return self.has.sum(axis=1)

    def add_unit(self, k: int, mask: np.ndarray):
        """Systematic packet ``k``; only valid while column ``k`` holds no pivot."""
        idx = np.flatnonzero(mask & ~self.has[:, k])
        self.basis[idx, k, :] = 0
        self.basis[idx, k, k] = 1
        self.has[idx, k] = True

    def insert(self, v: np.ndarray):
        """Insert one vector per receiver; zero rows are no-ops."""
        mul, inv = self.ctx.mul, self.ctx.inv
        v = v.copy()
        for p in range(self.M):
            c = v[:, p]
            nz = c != 0
            if not nz.any():
                continue
            have = self.has[:, p]
            idx = np.flatnonzero(nz & have)
            if idx.size:
                v[idx] ^= mul[c[idx, None], self.basis[idx, p, :]]
            idx = np.flatnonzero(nz & ~have)
            if idx.size:
                self.basis[idx, p] = mul[inv[c[idx]][:, None], v[idx]]
                self.has[idx, p] = True
                v[idx] = 0


def _coded(rng, E, M, q, p_e):
    """Uniform coefficient vectors, zeroed where the packet is erased."""
    v = rng.integers(0, q, size=(E, M), dtype=np.uint16)
    v[rng.random(E) < p_e] = 0
    return v


# -- batched schemes ----------------------------------------------------------

def _one_round(scheme, plan, ch, link, rng, E):
    M, N_s = plan.M, plan.N_s
    g = int(field_exponent(plan.q))
    dec = Decoder(E, M, g)
    sys_got = np.zeros(E, dtype=int)
    coded = N_s
    if scheme == "srlnc":
        for k in range(M):
            got = rng.random(E) >= ch.p_e
            dec.add_unit(k, got)
            sys_got += got
        coded = N_s - M
    for _ in range(coded):
        dec.insert(_coded(rng, E, M, plan.q, ch.p_e))
    decoded = np.where(dec.rank == M, M, sys_got)
    t = packet_timing(M, plan.q, link)
    return decoded[None, :], np.full(E, float(N_s * t.T_P + link.T_rt / 2))


def _two_round(scheme, plan, ch, link, rng, E):
    M, N_s, N = plan.M, plan.N_s, plan.N
    g = int(field_exponent(plan.q))
    dec = Decoder(E, M, g)
    sys_got = np.zeros(E, dtype=int)
    coded = N_s
    if scheme == "srlnc2":
        for k in range(M):
            got = rng.random(E) >= ch.p_e
            dec.add_unit(k, got)
            sys_got += got
        coded = N_s - M
    for _ in range(coded):
        dec.insert(_coded(rng, E, M, plan.q, ch.p_e))
    j = M - dec.rank
    lost = rng.random(E) < ch.p_e_fb
    j = np.where(lost, M, j)  # the sender assumes nothing arrived
    t = packet_timing(M, plan.q, link)
    T_r1 = first_round_time(N_s, t, link)
    second = np.array([0] + list(N))[j]
    for r in range(max(N)):
        v = _coded(rng, E, M, plan.q, ch.p_e)
        v[second <= r] = 0
        dec.insert(v)
    T_j = np.array([float(T_r1)] + [float(T_r1 + Nj * t.T_P + link.T_rt / 2) for Nj in N])
    decoded = np.where(dec.rank == M, M, sys_got)
    return decoded[None, :], T_j[j]


def _rr(plan, ch, link, rng, E):
    M, K = plan.M, plan.K
    got = (rng.random((E, M, K)) >= ch.p_e).any(axis=2)
    T_Pu = Fraction(link.h + link.n) / link.R
    return got.sum(axis=1)[None, :], np.full(E, float(K * M * T_Pu + link.T_rt / 2))


def _isrlnc(plan, users, link, rng, E):
    M, N_s = plan.M, plan.N_s
    U = len(users)
    pe = np.array([u.p_e for u in users])[:, None, None]
    recv = rng.random((U, E, N_s)) >= pe
    counts = np.cumsum(recv, axis=2)
    sys_got = counts[:, :, M - 1]
    # first transmission index J (1-based) at which every user holds M packets
    done = (counts >= M).all(axis=0)
    any_done = done.any(axis=1)
    J = np.where(any_done, done.argmax(axis=1) + 1, N_s)
    ok = counts[:, :, -1] >= M
    decoded = np.where(ok, M, sys_got)
    T_Pu = Fraction(link.h + link.n) / link.R
    return decoded, J * float(T_Pu) + float(link.T_rt / 2)


def _check_plan(scheme, plan, link):
    if scheme in ("rlnc", "srlnc"):
        ok = feasible_one_round(plan, link)
    elif scheme in ("rlnc2", "srlnc2"):
        ok = feasible_two_round(plan, link)
    elif scheme == "rr":
        ok = feasible_rr(plan, link)
    elif scheme == "isrlnc":
        ok = feasible_isrlnc(plan.M, plan.N_s, link)
    else:
        raise ValueError(f"unknown scheme {scheme!r}")
    if not ok:
        raise InfeasiblePlanError(f"infeasible {scheme} plan {plan}")


def _batch(scheme, plan, users, link, rng, E):
    """(decoded (U, E), elapsed (E,)) for one batch."""
    if scheme in ("rlnc", "srlnc"):
        return _one_round(scheme, plan, users[0], link, rng, E)
    if scheme in ("rlnc2", "srlnc2"):
        return _two_round(scheme, plan, users[0], link, rng, E)
    if scheme == "rr":
        return _rr(plan, users[0], link, rng, E)
    return _isrlnc(plan, users, link, rng, E)


def _users(scheme, ch):
    users = [ch] if isinstance(ch, ChannelParams) else list(ch)
    if not users:
        raise ValueError("at least one user is required")
    if scheme != "isrlnc" and len(users) != 1:
        raise ValueError(f"{scheme} is evaluated for a single user")
    return users


def simulate_episode(scheme: str, plan, ch, link: LinkParams, rng: np.random.Generator):
    """One episode; a list of outcomes (one per user) for ISRLNC, else a single outcome."""
    users = _users(scheme, ch)
    _check_plan(scheme, plan, link)
    decoded, elapsed = _batch(scheme, plan, users, link, rng, 1)
    out = [EpisodeOutcome(int(d[0]), float(elapsed[0])) for d in decoded]
    return out if scheme == "isrlnc" else out[0]


def _run_batch(args):
    scheme, plan, users, link, seed, b, E = args
    rng = np.random.default_rng(np.random.SeedSequence([seed, b]))
    decoded, elapsed = _batch(scheme, plan, users, link, rng, E)
    return decoded * link.n / elapsed[None, :], (plan.M - decoded) / plan.M


def simulate_samples(scheme: str, plan, ch, link: LinkParams, episodes: int, seed: int = 0, workers: int = 1):
    """Per-episode (throughput, drop fraction), each of shape (users, episodes)."""
    if episodes < 1:
        raise ValueError("episodes must be >= 1")
    users = _users(scheme, ch)
    _check_plan(scheme, plan, link)
    jobs = []
    for b in range(math.ceil(episodes / BATCH)):
        jobs.append((scheme, plan, users, link, int(seed), b, min(BATCH, episodes - b * BATCH)))
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            parts = list(ex.map(_run_batch, jobs))
    else:
        parts = [_run_batch(j) for j in jobs]
    eta = np.concatenate([p[0] for p in parts], axis=1)
    drop = np.concatenate([p[1] for p in parts], axis=1)
    return eta, drop


def _summarize(x):
    mean = math.fsum(x) / x.size
    se = float(np.std(x, ddof=1) / math.sqrt(x.size)) if x.size > 1 else 0.0
    return mean, se


def estimate_metrics(scheme: str, plan, ch, link: LinkParams, episodes: int, seed: int = 0, workers: int = 1):
    """Sample means with standard errors.

    Returns ``(Metrics, StdErrors)``; for ISRLNC with several users, a list
    of such pairs in user order.
    """
    eta, drop = simulate_samples(scheme, plan, ch, link, episodes, seed, workers)
    out = []
    for e, d in zip(eta, drop):
        (me, se), (md, sd) = _summarize(e), _summarize(d)
        out.append((Metrics(me, md), StdErrors(se, sd)))
    return out if isinstance(ch, (list, tuple)) else out[0]


def empirical_rdof_check(M: int, q: int, w: int, trials: int = 100_000, seed: int = 0,
                         start: int | None = None) -> np.ndarray:
    """Frequencies of the rDOF after ``w`` uniform vectors, starting from rDOF ``start``.

    The starting subspace of dimension ``M - start`` is itself random:
    uniform vectors are inserted until each trial reaches that rank.
    """
    if M < 1 or M > 16:
        raise ValueError("M must lie in 1..16")
    start = M if start is None else start
    if not 0 <= start <= M or w < 0 or trials < 1:
        raise ValueError("need 0 <= start <= M, w >= 0, trials >= 1")
    g = int(field_exponent(q))
    counts = np.zeros(M + 1, dtype=np.int64)
    for b in range(math.ceil(trials / BATCH)):
        E = min(BATCH, trials - b * BATCH)
        rng = np.random.default_rng(np.random.SeedSequence([seed, b]))
        dec = Decoder(E, M, g)
        while True:
            short = dec.rank < M - start
            if not short.any():
                break
            v = rng.integers(0, q, size=(E, M), dtype=np.uint16)
            v[~short] = 0
            dec.insert(v)
        for _ in range(w):
            dec.insert(rng.integers(0, q, size=(E, M), dtype=np.uint16))
        counts += np.bincount(M - dec.rank, minlength=M + 1)
    return counts / trials
