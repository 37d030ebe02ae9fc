"""Command-line front end: ``tddnc {eval,front,optimize,simulate,sweep}``.

A run is described by one JSON document, taken from ``--preset`` (shipped
with the package), ``--config`` (a file, merged over the preset) and then
individual flags. Times are given in milliseconds.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from importlib import resources
from pathlib import Path

from . import broadcast, pareto, schemes, simulator
from .errors import InfeasiblePlanError, NoFeasiblePlanError, NumericalError

EXIT_OK, EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_NUMERIC = 0, 2, 3, 4
COMMANDS = ("eval", "front", "optimize", "simulate", "sweep")


class ConfigError(ValueError):
    pass


# -- config loading -----------------------------------------------------------

def preset_names() -> list[str]:
    root = resources.files("tddnc") / "presets"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def _parse_json(text: str, source: str) -> dict:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{source}: line {e.lineno}, column {e.colno}: {e.msg}") from None
    if not isinstance(doc, dict):
        raise ConfigError(f"{source}: top level must be a JSON object")
    return doc


def load_preset(name: str) -> dict:
    path = resources.files("tddnc") / "presets" / f"{name}.json"
    if not path.is_file():
        raise ConfigError(f"unknown preset {name!r}; available: {', '.join(preset_names())}")
    return _parse_json(path.read_text(), f"preset {name}")


def merge(base: dict, over: dict) -> dict:
    out = dict(base)
    for k, v in over.items():
        out[k] = merge(out[k], v) if isinstance(v, dict) and isinstance(out.get(k), dict) else v
    return out


def _get(d: dict, key: str, path: str, kind=None, default=...):
    if key not in d:
        if default is ...:
            raise ConfigError(f"missing required field '{path}{key}'")
        return default
    v = d[key]
    if kind is not None and (not isinstance(v, kind) or (isinstance(v, bool) and kind is not bool)):
        raise ConfigError(f"field '{path}{key}' has the wrong type ({type(v).__name__})")
    return v


NUM = (int, float)


def parse_link(cfg: dict) -> schemes.LinkParams:
    d = _get(cfg, "link", "", dict)
    try:
        return schemes.LinkParams.from_ms(
            _get(d, "R", "link.", NUM), _get(d, "n", "link.", int), _get(d, "h", "link.", int),
            _get(d, "n_fb", "link.", int), _get(d, "T_rt_ms", "link.", NUM), _get(d, "T_d_ms", "link.", NUM))
    except ValueError as e:
        if isinstance(e, ConfigError):
            raise
        raise ConfigError(f"link: {e}") from None


def _channel(d: dict, path: str) -> schemes.ChannelParams:
    try:
        return schemes.ChannelParams(_get(d, "p_e", path, NUM), _get(d, "p_e_fb", path, NUM, 0.0))
    except ConfigError:
        raise
    except ValueError as e:
        raise ConfigError(f"{path.rstrip('.')}: {e}") from None


def parse_channels(cfg: dict) -> list[schemes.ChannelParams]:
    if "channels" in cfg:
        items = _get(cfg, "channels", "", list)
        if not items:
            raise ConfigError("field 'channels' must not be empty")
        return [_channel(c, f"channels[{i}].") for i, c in enumerate(items)]
    return [_channel(_get(cfg, "channel", "", dict), "channel.")]


def parse_classes(cfg: dict) -> list[broadcast.UserClass]:
    items = _get(cfg, "classes", "", list)
    out = []
    for i, c in enumerate(items):
        path = f"classes[{i}]."
        try:
            out.append(broadcast.UserClass(_get(c, "weight", path, NUM), c.get("p_e"), c.get("ber")))
        except ConfigError:
            raise
        except ValueError as e:
            raise ConfigError(f"{path.rstrip('.')}: {e}") from None
    try:
        broadcast.check_weights(out)
    except ValueError as e:
        raise ConfigError(f"classes: {e}") from None
    return out


def parse_scenarios(cfg: dict) -> list[broadcast.ScenarioSpec]:
    items = _get(cfg, "scenarios", "", list)
    out = []
    for i, s in enumerate(items):
        path = f"scenarios[{i}]."
        try:
            out.append(broadcast.ScenarioSpec(_get(s, "kind", path, str), _get(s, "p_th", path, NUM),
                                              _get(s, "user_of_interest", path, int, None)))
        except ConfigError:
            raise
        except ValueError as e:
            raise ConfigError(f"{path.rstrip('.')}: {e}") from None
    return out


def parse_scheme(d: dict, path="") -> str:
    s = _get(d, "scheme", path, str)
    if s not in schemes.SCHEMES:
        raise ConfigError(f"field '{path}scheme' must be one of {', '.join(schemes.SCHEMES)}")
    return s


def parse_plan(cfg: dict, scheme: str):
    d = _get(cfg, "plan", "", dict)
    M = _get(d, "M", "plan.", int)
    try:
        if scheme in ("rlnc", "srlnc"):
            return schemes.OneRoundPlan(M, _get(d, "q", "plan.", int), _get(d, "N_s", "plan.", int))
        if scheme in ("rlnc2", "srlnc2"):
            return schemes.TwoRoundPlan(M, _get(d, "q", "plan.", int), _get(d, "N_s", "plan.", int),
                                        tuple(_get(d, "N", "plan.", list)))
        if scheme == "rr":
            if "K" in d:
                return schemes.RoundRobinPlan(M, _get(d, "K", "plan.", int))
            N_s = _get(d, "N_s", "plan.", int)
            if N_s % M:
                raise ConfigError("plan.N_s must be a multiple of plan.M for round robin")
            return schemes.RoundRobinPlan(M, N_s // M)
        return schemes.IsrlncPlan(M, _get(d, "N_s", "plan.", int))
    except ConfigError:
        raise
    except (ValueError, TypeError) as e:
        raise ConfigError(f"plan: {e}") from None


# -- output -------------------------------------------------------------------

def _cell(v):
    if v is None:
        return ""
    if isinstance(v, (list, tuple)):
        return ";".join(_cell(x) for x in v)
    return repr(v) if isinstance(v, float) else str(v)


def format_rows(rows: list[dict], fmt: str) -> str:
    if fmt == "json":
        return json.dumps(rows, indent=1) + "\n"
    buf = io.StringIO()
    fields = list(dict.fromkeys(k for r in rows for k in r))
    w = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: _cell(v) for k, v in r.items()})
    return buf.getvalue()


_INT_FIELDS = {"M", "N_s", "K", "q", "episodes", "seed", "user", "user_of_interest", "n_users"}
_PROB_FIELDS = {"pdr", "mean_pdr", "constraint_value", "p_e", "p_e_fb", "p_th", "analytic_pdr"}


def _typed(k, v):
    if v == "" or v is None:
        return None
    if isinstance(v, str) and ";" in v:
        return [_typed(k, x) for x in v.split(";")]
    if k in _INT_FIELDS:
        return int(v)
    if isinstance(v, str):
        try:
            return float(v)
        except ValueError:
            return v
    return v


def _is_prob(v):
    return isinstance(v, (int, float)) and not isinstance(v, bool) and 0.0 <= v <= 1.0


def _is_rate(v):
    return isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v) and v >= 0


def parse_results(text: str, fmt: str) -> list[dict]:
    """Re-read emitted results and validate their value ranges."""
    rows = json.loads(text) if fmt == "json" else list(csv.DictReader(io.StringIO(text)))
    if not isinstance(rows, list):
        raise ValueError("results must be a list of rows")
    out = []
    for i, r in enumerate(rows):
        r = {k: _typed(k, v) for k, v in r.items()}
        for k, v in r.items():
            vals = v if isinstance(v, list) else [v]
            if k in _PROB_FIELDS or k.endswith("_pdr") or k == "class_per":
                check = _is_prob
            elif k.endswith("_bps"):
                check = _is_rate
            else:
                continue
            bad = [x for x in vals if x is not None and not check(x)]
            if bad:
                raise ValueError(f"row {i}: {k}={bad[0]!r} is out of range")
        out.append(r)
    return out


def _plan_fields(plan) -> dict:
    return {
        "M": plan.M,
        "q": getattr(plan, "q", None),
        "N_s": plan.N_s,
        "N_vector": list(getattr(plan, "N", ())) or None,
    }


# -- commands -----------------------------------------------------------------

def cmd_eval(cfg: dict, opts) -> list[dict]:
    link, scheme = parse_link(cfg), parse_scheme(cfg)
    plan = parse_plan(cfg, scheme)
    chans = parse_channels(cfg)
    rows = []
    if scheme == "isrlnc":
        for u, (ch, m) in enumerate(zip(chans, schemes.isrlnc_metrics(plan.M, plan.N_s, chans, link))):
            rows.append({"scheme": scheme, **_plan_fields(plan), "user": u, "p_e": ch.p_e, "p_e_fb": ch.p_e_fb,
                         "mean_throughput_bps": m.mean_throughput, "pdr": m.pdr})
        return rows
    for ch in chans:
        m = schemes.evaluate(scheme, plan, ch, link)
        rows.append({"scheme": scheme, **_plan_fields(plan), "p_e": ch.p_e, "p_e_fb": ch.p_e_fb,
                     "mean_throughput_bps": m.mean_throughput, "pdr": m.pdr})
    return rows


def cmd_front(cfg: dict, opts) -> list[dict]:
    link = parse_link(cfg)
    d = _get(cfg, "front", "", dict)
    names = _get(d, "schemes", "front.", list)
    bad = [s for s in names if s not in ("rlnc", "srlnc", "rlnc2", "srlnc2")]
    if bad:
        raise ConfigError(f"front.schemes: unsupported {bad}; fronts exist for rlnc, srlnc, rlnc2, srlnc2")
    M, q = _get(d, "M", "front.", int), _get(d, "q", "front.", int)
    count = opts.lambdas if opts.lambdas is not None else _get(d, "lambdas", "front.", int, 360)
    seed = opts.seed if opts.seed is not None else _get(d, "seed", "front.", int, 0)
    lams = pareto.sample_lambdas(count, seed)
    rows = []
    for ch in parse_channels(cfg):
        for s in names:
            if s in ("rlnc", "srlnc"):
                pts = pareto.one_round_front(s, M, q, ch, link)
            else:
                pts = pareto.pareto_filter(pareto.two_round_front(s, M, q, ch, link, lams))
            for p in pts:
                rows.append({"scheme": s, **_plan_fields(p.plan), "mean_throughput_bps": p.metrics.mean_throughput,
                             "pdr": p.metrics.pdr, "p_e": ch.p_e, "p_e_fb": ch.p_e_fb})
    return rows


def cmd_optimize(cfg: dict, opts) -> list[dict]:
    link = parse_link(cfg)
    classes = parse_classes(cfg)
    specs = parse_scenarios(cfg)
    d = _get(cfg, "search", "", dict)
    modes = _get(d, "modes", "search.", list, ["ns"])
    scheme = _get(d, "scheme", "search.", str, "srlnc")
    if scheme not in ("rlnc", "srlnc"):
        raise ConfigError("search.scheme must be rlnc or srlnc")
    rows = []
    for mode in modes:
        for spec in specs:
            if mode == "ns":
                r = broadcast.optimize_ns(spec, classes, _get(d, "M", "search.", int), _get(d, "q", "search.", int),
                                          link, scheme)
                name = scheme
            elif mode == "full":
                r = broadcast.optimize_full(spec, classes, link,
                                            tuple(_get(d, "q_grid", "search.", list, list(broadcast.DEFAULT_Q_GRID))),
                                            scheme, _get(d, "M_max", "search.", int, None), opts.parallel)
                name = scheme
            elif mode == "rr":
                r, name = broadcast.optimize_rr(spec, classes, link), "rr"
            elif mode == "isrlnc":
                r = broadcast.optimize_isrlnc(spec, classes, link, _get(d, "n_users", "search.", int, 10))
                name = "isrlnc"
            else:
                raise ConfigError(f"search.modes: unknown mode {mode!r} (ns, full, rr, isrlnc)")
            rows.append({
                "mode": mode, "scheme": name, "kind": spec.kind, "p_th": spec.p_th,
                "user_of_interest": spec.user_of_interest,
                **_plan_fields(r.plan), "K": getattr(r.plan, "K", None),
                "objective_bps": r.objective, "constraint_value": r.constraint_value,
                "mean_throughput_bps": r.mean_throughput, "mean_pdr": r.mean_pdr,
                "class_per": list(r.pers),
                "class_throughput_bps": [m.mean_throughput for m in r.per_class],
                "class_pdr": [m.pdr for m in r.per_class],
                "ties": [str(t) for t in r.ties] or None,
            })
    return rows


def cmd_simulate(cfg: dict, opts) -> list[dict]:
    link, scheme = parse_link(cfg), parse_scheme(cfg)
    plan = parse_plan(cfg, scheme)
    chans = parse_channels(cfg)
    d = cfg.get("simulation", {})
    episodes = opts.episodes if opts.episodes is not None else _get(d, "episodes", "simulation.", int, 100_000)
    seed = opts.seed if opts.seed is not None else _get(d, "seed", "simulation.", int, 0)
    if episodes < 1:
        raise ConfigError("simulation.episodes must be >= 1")
    groups = [chans] if scheme == "isrlnc" else [[c] for c in chans]
    rows = []
    for group in groups:
        est = simulator.estimate_metrics(scheme, plan, group, link, episodes, seed, opts.parallel)
        if scheme == "isrlnc":
            ana = schemes.isrlnc_metrics(plan.M, plan.N_s, group, link)
        else:
            ana = [schemes.evaluate(scheme, plan, group[0], link)]
        for u, (ch, (m, se), a) in enumerate(zip(group, est, ana)):
            rows.append({"scheme": scheme, **_plan_fields(plan), "user": u, "p_e": ch.p_e, "p_e_fb": ch.p_e_fb,
                         "episodes": episodes, "seed": seed,
                         "mean_throughput_bps": m.mean_throughput, "mean_throughput_se": se.mean_throughput,
                         "pdr": m.pdr, "pdr_se": se.pdr,
                         "analytic_throughput_bps": a.mean_throughput, "analytic_pdr": a.pdr})
    return rows


def cmd_sweep(cfg: dict, opts) -> list[dict]:
    """Metrics versus ``N_s`` for one-round style schemes at fixed ``M`` and ``q``."""
    link = parse_link(cfg)
    d = _get(cfg, "sweep", "", dict)
    names = _get(d, "schemes", "sweep.", list)
    M, q = _get(d, "M", "sweep.", int), _get(d, "q", "sweep.", int)
    lo = _get(d, "N_s_min", "sweep.", int, M)
    hi = _get(d, "N_s_max", "sweep.", int, None)
    rows = []
    for ch in parse_channels(cfg):
        for s in names:
            if s in ("rlnc", "srlnc"):
                top = schemes.max_one_round_ns(M, q, link)
                make = lambda N: schemes.OneRoundPlan(M, q, N)  # noqa: E731
            elif s == "rr":
                top = math.floor((link.T_d - link.T_rt / 2) * link.R / (link.h + link.n))
                make = lambda N: schemes.RoundRobinPlan(M, N // M) if N % M == 0 else None  # noqa: E731
            elif s == "isrlnc":
                top = math.floor((link.T_d - link.T_rt / 2) * link.R / (link.h + link.n))
                make = lambda N: schemes.IsrlncPlan(M, N)  # noqa: E731
            else:
                raise ConfigError(f"sweep.schemes: {s!r} is not sweepable (rlnc, srlnc, rr, isrlnc)")
            for N_s in range(lo, (top if hi is None else min(hi, top)) + 1):
                plan = make(N_s)
                if plan is None:
                    continue
                m = schemes.evaluate(s, plan, ch, link)
                rows.append({"scheme": s, "M": M, "q": None if s in ("rr", "isrlnc") else q, "N_s": N_s,
                             "K": getattr(plan, "K", None), "p_e": ch.p_e,
                             "mean_throughput_bps": m.mean_throughput, "pdr": m.pdr})
    return rows


HANDLERS = {"eval": cmd_eval, "front": cmd_front, "optimize": cmd_optimize,
            "simulate": cmd_simulate, "sweep": cmd_sweep}


# -- entry point --------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="tddnc", description="Coded broadcast over TDD erasure links.")
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", type=Path, help="JSON config file (merged over the preset)")
    ap.add_argument("--preset", help="shipped preset name; see --list-presets")
    ap.add_argument("--list-presets", action="store_true")
    ap.add_argument("--format", choices=("csv", "json"), default="csv")
    ap.add_argument("--out", type=Path, help="output file (default: stdout)")
    ap.add_argument("--seed", type=int)
    ap.add_argument("--episodes", type=int)
    ap.add_argument("--lambdas", type=int)
    ap.add_argument("--parallel", type=int, default=1)
    ap.add_argument("--set", action="append", default=[], metavar="KEY=JSON",
                    help="override one config key, e.g. --set plan.N_s=12")
    return ap


def _apply_set(cfg, item):
    key, sep, raw = item.partition("=")
    if not sep:
        raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
    try:
        val = json.loads(raw)
    except json.JSONDecodeError:
        val = raw
    node = cfg
    parts = key.split(".")
    for p in parts[:-1]:
        node = node.setdefault(p, {})
        if not isinstance(node, dict):
            raise ConfigError(f"--set {key}: '{p}' is not an object")
    node[parts[-1]] = val


def load_config(opts) -> dict:
    cfg = load_preset(opts.preset) if opts.preset else {}
    if opts.config:
        try:
            text = opts.config.read_text()
        except OSError as e:
            raise ConfigError(f"cannot read config: {e}") from None
        cfg = merge(cfg, _parse_json(text, str(opts.config)))
    for item in opts.set:
        _apply_set(cfg, item)
    if not cfg:
        raise ConfigError("no configuration given (use --preset and/or --config)")
    return cfg


def run(argv=None) -> tuple[str, argparse.Namespace]:
    opts = build_parser().parse_args(argv)
    if opts.list_presets:
        return "\n".join(preset_names()) + "\n", opts
    if opts.episodes is not None and opts.episodes < 1:
        raise ConfigError("--episodes must be >= 1")
    if opts.parallel < 1:
        raise ConfigError("--parallel must be >= 1")
    cfg = load_config(opts)
    rows = HANDLERS[opts.command](cfg, opts)
    text = format_rows(rows, opts.format)
    try:
        parse_results(text, opts.format)
    except ValueError as e:
        raise NumericalError(f"emitted results failed validation: {e}") from None
    return text, opts


def main(argv=None) -> int:
    try:
        text, opts = run(argv)
    except (NoFeasiblePlanError, InfeasiblePlanError) as e:
        print(f"no feasible plan: {e}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (NumericalError, ArithmeticError, FloatingPointError) as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as e:  # includes ConfigError
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    if opts.out and not opts.list_presets:
        opts.out.write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
