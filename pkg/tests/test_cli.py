import json
import subprocess
import sys

import pytest

from tddnc import cli
from tddnc.pareto import dominates
from tddnc.schemes import Metrics


def call(capsys, *argv):
    code = cli.main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def rows(capsys, *argv, fmt="json"):
    code, out, err = call(capsys, *argv, "--format", fmt)
    assert code == 0, err
    return cli.parse_results(out, fmt)


def test_list_presets(capsys):
    code, out, _ = call(capsys, "eval", "--list-presets")
    names = out.split()
    assert code == 0
    for n in ("v_b_defaults", "table1", "table2", "fig3a", "fig3e", "fig4", "fig5", "fig7"):
        assert n in names


class TestEval:
    def test_n_s_equals_m_gives_per(self, capsys):
        (r,) = rows(capsys, "eval", "--preset", "v_b_defaults")
        assert r["N_s"] == 10 and r["pdr"] == pytest.approx(0.1, rel=1e-12)

    def test_csv_and_json_agree(self, capsys):
        args = ("eval", "--preset", "v_b_defaults", "--set", "plan.N_s=17")
        a = rows(capsys, *args, fmt="csv")
        b = rows(capsys, *args, fmt="json")
        assert a == b

    def test_two_round_plan(self, capsys):
        (r,) = rows(capsys, "eval", "--preset", "v_b_defaults", "--set", "scheme=srlnc2",
                    "--set", "link.T_rt_ms=10", "--set", "link.T_d_ms=80",
                    "--set", "plan={\"M\": 3, \"q\": 16, \"N_s\": 4, \"N\": [2, 3, 4]}")
        assert r["N_vector"] == [2, 3, 4] and 0 < r["pdr"] < 1

    def test_isrlnc_one_row_per_user(self, capsys):
        out = rows(capsys, "eval", "--preset", "v_b_defaults", "--set", "scheme=isrlnc",
                   "--set", "channels=[{\"p_e\": 0.1}, {\"p_e\": 0.3}]", "--set", "plan.N_s=20")
        assert [r["user"] for r in out] == [0, 1]
        assert out[0]["pdr"] < out[1]["pdr"]

    def test_missing_field_named(self, capsys, tmp_path):
        cfg = cli.load_preset("v_b_defaults")
        del cfg["link"]["R"]
        p = tmp_path / "c.json"
        p.write_text(json.dumps(cfg))
        code, _, err = call(capsys, "eval", "--config", str(p))
        assert code == 2 and "link.R" in err

    def test_bad_json_reports_line(self, capsys, tmp_path):
        p = tmp_path / "c.json"
        p.write_text('{\n  "link": {\n    "R": ,\n  }\n}')
        code, _, err = call(capsys, "eval", "--config", str(p))
        assert code == 2 and "line 3" in err

    def test_unknown_preset(self, capsys):
        code, _, err = call(capsys, "eval", "--preset", "nope")
        assert code == 2 and "nope" in err

    def test_infeasible_plan(self, capsys):
        code, _, _ = call(capsys, "eval", "--preset", "v_b_defaults", "--set", "plan.N_s=500")
        assert code == 3

    def test_out_file(self, capsys, tmp_path):
        p = tmp_path / "r.csv"
        code, out, _ = call(capsys, "eval", "--preset", "v_b_defaults", "--out", str(p))
        assert code == 0 and out == ""
        assert cli.parse_results(p.read_text(), "csv")[0]["scheme"] == "srlnc"


class TestFront:
    def test_lossless_single_row(self, capsys):
        out = rows(capsys, "front", "--preset", "fig3e", "--set", "channel.p_e=0",
                   "--set", "front.schemes=[\"srlnc\"]")
        assert len(out) == 1 and out[0]["N_s"] == 10

    def test_fig3e_dominance(self, capsys):
        out = rows(capsys, "front", "--preset", "fig3e", "--set", "front.schemes=[\"rlnc\", \"srlnc\"]")
        s = [Metrics(r["mean_throughput_bps"], r["pdr"]) for r in out if r["scheme"] == "srlnc"]
        r_ = [Metrics(r["mean_throughput_bps"], r["pdr"]) for r in out if r["scheme"] == "rlnc"]
        for m in r_:
            if 1e-6 <= m.pdr <= 1e-3:
                assert any(o.pdr <= m.pdr and o.mean_throughput >= m.mean_throughput for o in s)
                assert not any(dominates(m, o) for o in s)

    def test_seeded_determinism(self, capsys):
        args = ("front", "--preset", "fig3c", "--set", "front.schemes=[\"srlnc2\"]", "--lambdas", "30")
        a = call(capsys, *args, "--seed", "5")[1]
        b = call(capsys, *args, "--seed", "5")[1]
        assert a == b and a.count("\n") > 2

    def test_csv_schema(self, capsys):
        code, out, _ = call(capsys, "front", "--preset", "fig3c", "--set", "front.schemes=[\"rlnc2\"]",
                            "--lambdas", "20")
        header = out.splitlines()[0].split(",")
        assert code == 0
        assert header[:7] == ["scheme", "M", "q", "N_s", "N_vector", "mean_throughput_bps", "pdr"]
        assert ";" in out.splitlines()[1]

    def test_unsupported_scheme(self, capsys):
        code, _, err = call(capsys, "front", "--preset", "fig3e", "--set", "front.schemes=[\"rr\"]")
        assert code == 2 and "rr" in err


class TestOptimize:
    def test_table1_preset(self, capsys):
        out = rows(capsys, "optimize", "--preset", "table1")
        assert len(out) == 8
        assert [r["N_s"] for r in out] == [11, 37, 32, 15, 14, 52, 48, 18]
        for r in out:
            assert r["constraint_value"] <= r["p_th"]

    def test_no_feasible_plan(self, capsys):
        code, _, err = call(capsys, "optimize", "--preset", "table1",
                            "--set", "scenarios=[{\"kind\": \"II\", \"p_th\": 1e-300}]")
        assert code == 3 and "no feasible" in err

    def test_bad_scenario(self, capsys):
        code, _, err = call(capsys, "optimize", "--preset", "table1",
                            "--set", "scenarios=[{\"kind\": \"I\", \"p_th\": 0.001}]")
        assert code == 2 and "scenarios[0]" in err

    def test_bad_weights(self, capsys):
        code, _, err = call(capsys, "optimize", "--preset", "table1", "--set", "classes=[{\"weight\": 0.5, \"p_e\": 0.1}]")
        assert code == 2 and "classes" in err

    @pytest.mark.slow
    def test_table2_scenario_iii(self, capsys):
        (r,) = rows(capsys, "optimize", "--preset", "table2",
                    "--set", "scenarios=[{\"kind\": \"III\", \"p_th\": 0.001}]")
        assert (r["M"], r["N_s"], r["q"]) == (44, 158, 8)


class TestSimulate:
    def test_seeded_and_analytic(self, capsys):
        args = ("simulate", "--preset", "v_b_defaults", "--set", "plan.N_s=13", "--episodes", "3000")
        a = call(capsys, *args, "--seed", "9")[1]
        b = call(capsys, *args, "--seed", "9")[1]
        assert a == b
        (r,) = cli.parse_results(a, "csv")
        assert abs(r["mean_throughput_bps"] - r["analytic_throughput_bps"]) < 5 * r["mean_throughput_se"]

    @pytest.mark.parametrize("flag", [("--episodes", "0"), ("--set", "simulation.episodes=0")])
    def test_zero_episodes_rejected(self, capsys, flag):
        code, _, err = call(capsys, "simulate", "--preset", "v_b_defaults", *flag)
        assert code == 2 and "episodes" in err


class TestSweep:
    def test_fig5_rows(self, capsys):
        out = rows(capsys, "sweep", "--preset", "fig5", "--set", "sweep.N_s_max=40")
        rr = [r for r in out if r["scheme"] == "rr"]
        assert {r["N_s"] for r in rr} == {10, 20, 30, 40}
        for r in out:
            if r["N_s"] == 10:
                assert r["pdr"] == pytest.approx(r["p_e"], rel=1e-12)

    def test_round_trip(self, capsys):
        for fmt in ("csv", "json"):
            code, out, _ = call(capsys, "sweep", "--preset", "fig5", "--set", "sweep.N_s_max=15", "--format", fmt)
            parsed = cli.parse_results(out, fmt)
            assert code == 0 and len(parsed) == 2 * (6 + 1 + 6)


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "tddnc", "eval", "--preset", "v_b_defaults"],
                         capture_output=True, text=True)
    assert res.returncode == 0 and res.stdout.startswith("scheme,")
