import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats

from tddnc.errors import NoFeasiblePlanError
from tddnc.pareto import (
    ParetoPoint,
    dominates,
    one_round_front,
    pareto_filter,
    sample_lambdas,
    two_round_front,
    two_round_tables,
    two_round_weighted_point,
    weighted_optimum,
)
from tddnc.schemes import (
    ChannelParams,
    LinkParams,
    Metrics,
    OneRoundPlan,
    TwoRoundPlan,
    evaluate,
    max_one_round_ns,
    max_second_round,
    min_deadlines,
    packet_timing,
)


def link(T_rt=250, T_d=450):
    return LinkParams.from_ms(5_000_000, 10000, 80, 100, T_rt, T_d)


def tiny_link(M=3, q=16, extra=8, T_rt=10):
    """A deadline that leaves room for ``extra`` packets beyond the two-round minimum."""
    base = link(T_rt, 1000)
    _, T_d2 = min_deadlines(M, q, base)
    t = packet_timing(M, q, base)
    return LinkParams(base.R, base.n, base.h, base.n_fb, base.T_rt, T_d2 + extra * t.T_P)


def exhaustive_plans(scheme, M, q, ch, lk):
    out = []
    N_s = M
    while (b := max_second_round(M, q, N_s, lk)) >= M:
        for N in itertools.product(*[range(j, b + 1) for j in range(1, M + 1)]):
            plan = TwoRoundPlan(M, q, N_s, N)
            out.append(ParetoPoint(plan, evaluate(scheme, plan, ch, lk)))
        N_s += 1
    return out


def brute_front(points):
    return [p for p in points if not any(dominates(o.metrics, p.metrics) for o in points)]


def pt(eta, pdr, N_s=1):
    return ParetoPoint(OneRoundPlan(1, 2, N_s), Metrics(eta, pdr))


class TestDominance:
    def test_basic(self):
        assert dominates(Metrics(2, 0.1), Metrics(1, 0.1))
        assert dominates(Metrics(1, 0.05), Metrics(1, 0.1))
        assert not dominates(Metrics(1, 0.1), Metrics(1, 0.1))
        assert not dominates(Metrics(2, 0.2), Metrics(1, 0.1))

    def test_filter_example(self):
        pts = [pt(5, 0.5, 1), pt(4, 0.1, 2), pt(4, 0.2, 3), pt(6, 0.5, 4), pt(1, 0.01, 5), pt(4, 0.1, 6)]
        front = pareto_filter(pts)
        assert [p.plan.N_s for p in front] == [5, 2, 4]

    @given(st.lists(st.tuples(st.integers(0, 20), st.integers(0, 20)), min_size=1, max_size=60))
    def test_filter_matches_brute_force(self, raw):
        pts = [pt(float(a), b / 20, i + 1) for i, (a, b) in enumerate(raw)]
        front = pareto_filter(pts)
        brute = brute_front(pts)
        assert {(p.metrics.mean_throughput, p.metrics.pdr) for p in front} == \
               {(p.metrics.mean_throughput, p.metrics.pdr) for p in brute}
        for a, b in itertools.combinations(front, 2):
            assert not dominates(a.metrics, b.metrics) and not dominates(b.metrics, a.metrics)
        pdrs = [p.metrics.pdr for p in front]
        assert pdrs == sorted(pdrs)


class TestOneRound:
    def test_lossless_single_point(self):
        front = one_round_front("srlnc", 10, 1024, ChannelParams(0.0), link())
        assert len(front) == 1 and front[0].plan.N_s == 10
        assert front[0].metrics.pdr == 0.0

    @pytest.mark.parametrize("scheme", ["rlnc", "srlnc"])
    def test_endpoints(self, scheme):
        lk = link()
        front = one_round_front(scheme, 10, 1024, ChannelParams(0.1), lk)
        hi = max_one_round_ns(10, 1024, lk)
        assert front[0].plan.N_s == hi
        eta = {N: evaluate(scheme, OneRoundPlan(10, 1024, N), ChannelParams(0.1), lk).mean_throughput
               for N in range(10, hi + 1)}
        assert front[-1].plan.N_s == max(eta, key=eta.get)
        eta = [p.metrics.mean_throughput for p in front]
        assert all(b > a for a, b in zip(eta, eta[1:]))

    def test_srlnc_covers_rlnc_fig3e(self):
        lk, ch = link(250, 450), ChannelParams(0.1)
        s = one_round_front("srlnc", 10, 1024, ch, lk)
        r = one_round_front("rlnc", 10, 1024, ch, lk)
        for p in r:
            if 1e-6 <= p.metrics.pdr <= 1e-3:
                assert any(o.metrics.pdr <= p.metrics.pdr and
                           o.metrics.mean_throughput >= p.metrics.mean_throughput for o in s)

    def test_infeasible(self):
        with pytest.raises(NoFeasiblePlanError):
            one_round_front("srlnc", 10, 1024, ChannelParams(0.1), link(250, 130))


class TestLambdas:
    def test_range_and_determinism(self):
        lam = sample_lambdas(360, 7)
        assert len(lam) == 360 and lam == sample_lambdas(360, 7)
        assert all(1e-18 <= v <= 1.0 for v in lam)

    def test_log_uniform(self):
        theta = np.log10(sample_lambdas(20000, 3))
        res = stats.kstest(theta, stats.uniform(loc=-18, scale=18).cdf)
        assert res.statistic < 0.1

    def test_rejects(self):
        with pytest.raises(ValueError):
            sample_lambdas(0)


class TestTwoRound:
    def test_below_minimum_deadline(self):
        lk = tiny_link(extra=-1)
        with pytest.raises(NoFeasiblePlanError):
            two_round_tables("srlnc2", 3, 16, ChannelParams(0.1), lk)

    def test_rejects_lambda(self):
        tables = two_round_tables("rlnc2", 3, 16, ChannelParams(0.1), tiny_link())
        with pytest.raises(ValueError):
            weighted_optimum(tables, 1.5)

    @pytest.mark.parametrize("scheme", ["rlnc2", "srlnc2"])
    def test_lambda_zero_uses_full_budget(self, scheme):
        lk, ch = tiny_link(extra=6), ChannelParams(0.2, 0.1)
        p = two_round_weighted_point(scheme, 3, 16, ch, lk, 0.0)
        b = max_second_round(3, 16, p.plan.N_s, lk)
        assert p.plan.N == (b, b, b)

    @pytest.mark.parametrize("scheme", ["rlnc2", "srlnc2"])
    @pytest.mark.parametrize("pe,pfb", [(0.1, 0.0), (0.3, 0.1), (0.5, 1.0)])
    def test_against_exhaustive(self, scheme, pe, pfb):
        lk, ch = tiny_link(), ChannelParams(pe, pfb)
        plans = exhaustive_plans(scheme, 3, 16, ch, lk)
        assert len(plans) > 100
        for lam in [0.0, 1e-9, 1e-6, 1e-4, 0.5, 1.0] + sample_lambdas(20, 11):
            p = two_round_weighted_point(scheme, 3, 16, ch, lk, lam)
            f = lambda m: lam * m.mean_throughput - (1 - lam) * m.pdr
            best = max(f(o.metrics) for o in plans)
            scale = max(lam * p.metrics.mean_throughput, (1 - lam) * p.metrics.pdr, 1e-300)
            assert abs(f(p.metrics) - best) <= 1e-12 * scale
            if lam > 0:
                # lam = 0 ignores throughput and is only weakly optimal
                assert not any(dominates(o.metrics, p.metrics) for o in plans)

    def test_lambda_one_maximizes_throughput(self):
        lk, ch = tiny_link(), ChannelParams(0.2)
        plans = exhaustive_plans("srlnc2", 3, 16, ch, lk)
        p = two_round_weighted_point("srlnc2", 3, 16, ch, lk, 1.0)
        assert p.metrics.mean_throughput == pytest.approx(max(o.metrics.mean_throughput for o in plans), rel=1e-12)

    def test_front_dedup_and_order(self):
        lk, ch = link(50, 150), ChannelParams(0.1)
        lams = sample_lambdas(40, 0)
        front = two_round_front("srlnc2", 10, 1024, ch, lk, lams)
        plans = [p.plan for p in front]
        assert len(plans) == len(set(plans))
        assert front[0].plan == two_round_weighted_point("srlnc2", 10, 1024, ch, lk, lams[0]).plan
