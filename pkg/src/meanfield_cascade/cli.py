"""Command-line experiment runner.

    meanfield-cascade <command> [--config FILE] [--preset NAME] [--set key=value]...
                      [--seed N] [--workers N] [--out DIR] [--beta X] [--alpha X] [--N LIST] [--regime R]

Configs are flat JSON objects (see ``SCHEMA``); ``initial`` and ``strategy`` are
nested objects addressed with dotted keys in ``--set``. Later sources win:
preset, then config file, then direct flags, then ``--set``.

Exit status: 0 on success, 2 on configuration errors, 3 on runtime errors.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import platform
import sys
import time
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .analytics import (
    EconomyParams,
    budget_bound_negative,
    limit_survival_fraction,
    p_alpha_eps_delta,
    scaling_constants,
    t_alpha_eps,
)
from .control import ControlStrategy, ScalingExperiment, run_scaling
from .core import ConfigError, DomainError, InitialDistribution, LossFunction, RngConfig, TimeGrid
from .mkv import MkvModel, RegularizedConfig, epsilon_sweep, minimal_solution_picard
from .parallel import resolve_workers
from .particle import SimConfig, simulate
from .presets import PRESETS

COMMANDS = ("simulate", "solve-mkv", "solve-reg", "sweep-eps", "scaling", "analytics")

# key -> (kind, default); a default of REQUIRED must be supplied by the user
REQUIRED = object()
SCHEMA = {
    "beta": ("float", REQUIRED),
    "alpha": ("float", 0.0),
    "loss": ("str", "linear"),
    "loss_knots": ("list", None),
    "loss_eta": ("float", 1e-6),
    "initial": ("dict", {"kind": "dirac", "z0": 1.0}),
    "shift": ("float", 0.0),
    "horizon": ("float", 5.0),
    "step": ("float", 0.01),
    "growth": ("float", 0.0),
    "horizon_per_n": ("float", 0.0),
    "N": ("ints", 100),
    "replications": ("ints", 100),
    "batch_size": ("int", None),
    "strategy": ("dict", {"kind": "zero"}),
    "bridge": ("bool", True),
    "stop_when_resolved": ("bool", False),
    "keep_paths": ("bool", False),
    "volatility": ("float", 1.0),
    "mc_paths": ("int", 100000),
    "max_iters": ("int", 50),
    "tol": ("float", 5e-3),
    "epsilon": ("float", 0.1),
    "epsilons": ("floats", [0.5, 0.2, 0.1, 0.05]),
    "reference": ("bool", True),
    "regime": ("str", None),
    "eps": ("float", None),
    "delta": ("float", None),
    "seed": ("int", 0),
}
NESTED = {
    "initial": {"kind", "z0", "a", "b", "quantiles"},
    "strategy": {"kind", "m", "target_level", "rate", "theta"},
}
NEEDS_BETA = {"simulate", "solve-mkv", "solve-reg", "sweep-eps", "scaling"}


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------


def _coerce(key: str, value):
    kind = SCHEMA[key][0]
    if value is None:
        return None
    try:
        if kind == "float":
            if isinstance(value, bool):
                raise TypeError
            return float(value)
        if kind == "int":
            if isinstance(value, bool) or float(value) != int(float(value)):
                raise TypeError
            return int(float(value))
        if kind == "bool":
            if isinstance(value, str):
                if value.lower() in ("true", "1", "yes"):
                    return True
                if value.lower() in ("false", "0", "no"):
                    return False
                raise TypeError
            return bool(value)
        if kind == "str":
            return str(value)
        if kind == "ints":
            if isinstance(value, str):
                value = [v for v in value.split(",") if v]
            vals = value if isinstance(value, (list, tuple)) else [value]
            out = [int(float(v)) for v in vals]
            if any(o != float(v) for o, v in zip(out, vals)):
                raise TypeError
            return out if isinstance(value, (list, tuple)) else out[0]
        if kind == "floats":
            if isinstance(value, str):
                value = [v for v in value.split(",") if v]
            return [float(v) for v in (value if isinstance(value, (list, tuple)) else [value])]
        if kind == "list":
            if not isinstance(value, list):
                raise TypeError
            return value
        if kind == "dict":
            if not isinstance(value, dict):
                raise TypeError
            extra = set(value) - NESTED[key]
            if extra:
                raise ConfigError(f"unknown key '{key}.{sorted(extra)[0]}'")
            return dict(value)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"invalid value for '{key}': {value!r} (expected {kind})") from None
    raise AssertionError(kind)


def _merge(cfg: dict, src: dict, origin: str):
    for k, v in src.items():
        if k not in SCHEMA:
            raise ConfigError(f"unknown key '{k}' in {origin}")
        cfg[k] = _coerce(k, v)


def _parse_set(item: str):
    if "=" not in item:
        raise ConfigError(f"--set expects key=value, got {item!r}")
    key, raw = item.split("=", 1)
    try:
        val = json.loads(raw)
    except json.JSONDecodeError:
        val = raw
    return key.strip(), val


def resolve_config(command: str, args) -> dict:
    cfg: dict = {}
    if args.preset:
        if args.preset not in PRESETS:
            raise ConfigError(f"unknown preset '{args.preset}' (choose from {', '.join(sorted(PRESETS))})")
        pcmd, pcfg = PRESETS[args.preset]
        if pcmd != command:
            raise ConfigError(f"preset '{args.preset}' is for command '{pcmd}', not '{command}'")
        _merge(cfg, pcfg, f"preset {args.preset}")
    if args.config:
        try:
            data = json.loads(Path(args.config).read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read config '{args.config}': {exc.strerror}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config '{args.config}' is not valid JSON: {exc.msg}") from None
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        _merge(cfg, data, args.config)
    direct = {k: getattr(args, k) for k in ("beta", "alpha", "N", "regime", "seed") if getattr(args, k) is not None}
    _merge(cfg, direct, "command-line flags")
    for item in args.set or []:
        key, val = _parse_set(item)
        head, _, tail = key.partition(".")
        if head not in SCHEMA:
            raise ConfigError(f"unknown key '{key}' in --set")
        if tail:
            if SCHEMA[head][0] != "dict":
                raise ConfigError(f"key '{head}' has no sub-keys")
            sub = dict(cfg.get(head) or SCHEMA[head][1])
            sub[tail] = val
            cfg[head] = _coerce(head, sub)
        else:
            cfg[head] = _coerce(head, val)
    for k, (_, default) in SCHEMA.items():
        if k not in cfg:
            if default is REQUIRED:
                if k == "beta" and command not in NEEDS_BETA:
                    cfg[k] = None
                    continue
                raise ConfigError(f"missing required key '{k}'")
            cfg[k] = default
    return cfg


def build_loss(cfg) -> LossFunction:
    kind = cfg["loss"]
    if kind == "linear":
        return LossFunction.linear(cfg["alpha"])
    if kind == "log":
        return LossFunction.log(cfg["alpha"], cfg["loss_eta"])
    if kind == "tabulated":
        if not cfg["loss_knots"]:
            raise ConfigError("key 'loss_knots' is required for a tabulated loss")
        return LossFunction.tabulated(cfg["loss_knots"])
    raise ConfigError(f"invalid value for 'loss': {kind!r}")


def build_initial(cfg) -> InitialDistribution:
    d = cfg["initial"]
    kind = d.get("kind", "dirac")
    shift = cfg["shift"]
    try:
        if kind == "dirac":
            return InitialDistribution.dirac(d.get("z0", 1.0), shift)
        if kind == "uniform":
            return InitialDistribution.uniform(d["a"], d["b"], shift)
        if kind == "tabulated":
            return InitialDistribution.tabulated(d["quantiles"], shift)
    except KeyError as exc:
        raise ConfigError(f"missing required key 'initial.{exc.args[0]}'") from None
    raise ConfigError(f"invalid value for 'initial.kind': {kind!r}")


def build_strategy(cfg) -> ControlStrategy:
    d = dict(cfg["strategy"])
    kind = d.pop("kind", "zero")
    if kind not in ("zero", "uniform", "threshold"):
        raise ConfigError(f"invalid value for 'strategy.kind': {kind!r}")
    if kind != "threshold" and d:
        raise ConfigError(f"key 'strategy.{sorted(d)[0]}' only applies to threshold strategies")
    return ControlStrategy(kind, **d)


def _economy(cfg) -> EconomyParams:
    return EconomyParams(cfg["beta"], cfg["alpha"])


def _grid(cfg, N: int = 0) -> TimeGrid:
    return TimeGrid(max(cfg["horizon"], cfg["horizon_per_n"] * N), cfg["step"], cfg["growth"])


def _single(cfg, key):
    v = cfg[key]
    if isinstance(v, list):
        if len(v) != 1:
            raise ConfigError(f"key '{key}' must be a single value for this command")
        return v[0]
    return v


def _mkv_model(cfg) -> MkvModel:
    return MkvModel(_economy(cfg), build_loss(cfg), build_initial(cfg), _grid(cfg), cfg["volatility"])


# ---------------------------------------------------------------------------
# output
# ---------------------------------------------------------------------------


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if math.isnan(x):
        return "nan"
    return repr(x)


def write_csv(path: Path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])


def write_json(path: Path, obj):
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=_jsonable) + "\n")


def _jsonable(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    raise TypeError(type(o).__name__)


def _curve_rows(curve):
    se = curve.stderr if curve.stderr is not None else np.zeros_like(curve.values)
    return zip(curve.times, curve.values, se)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_simulate(cfg, out: Path, workers: int) -> dict:
    N = _single(cfg, "N")
    reps = _single(cfg, "replications")
    sim = SimConfig(N=N, economy=_economy(cfg), G=build_loss(cfg), theta=build_initial(cfg), grid=_grid(cfg, N),
                    rng=RngConfig(cfg["seed"]), strategy=build_strategy(cfg), replications=reps,
                    batch_size=cfg["batch_size"], bridge=cfg["bridge"], keep_paths=cfg["keep_paths"],
                    stop_when_resolved=cfg["stop_when_resolved"])
    r = simulate(sim, workers)
    write_csv(out / "loss_curve.csv", ["t", "value", "stderr"], zip(r.times, r.loss_mean, r.loss_stderr))
    write_csv(out / "survivors.csv", ["replication", "survivors_T", "S_lower", "S_mid", "S_upper"],
              zip(range(r.replications), r.survivors_T, r.lower, r.midpoint, r.upper))
    write_json(out / "plot_loss_curve.json", {"x": r.times, "y": r.loss_mean, "yerr": r.loss_stderr,
                                              "xlabel": "t", "ylabel": "mean loss fraction"})
    est = r.estimate()
    return {"files": ["loss_curve.csv", "survivors.csv", "plot_loss_curve.json"],
            "summary": {"S_lower": est.lower, "S_mid": est.midpoint, "S_upper": est.upper,
                        "stderr": r.stderr(), "survivors_T_mean": float(r.survivors_T.mean())},
            "seeds": r.seeds, "timings": r.timings}


def cmd_solve_mkv(cfg, out: Path, workers: int) -> dict:
    model = _mkv_model(cfg)
    curve, rep = minimal_solution_picard(model, cfg["max_iters"], cfg["tol"], cfg["mc_paths"],
                                         RngConfig(cfg["seed"]), workers)
    write_csv(out / "loss_curve.csv", ["t", "value", "stderr"], _curve_rows(curve))
    report = {"sup_deltas": rep.sup_deltas, "converged": rep.converged, "iterations": len(rep.sup_deltas),
              "mc_paths": rep.mc_paths, "mc_stderr_max": rep.mc_stderr_max,
              "terminal_interval": list(rep.terminal_interval),
              "max_jump": {"t": rep.max_jump[0], "size": rep.max_jump[1]}}
    write_json(out / "picard_report.json", report)
    write_json(out / "plot_loss_curve.json", {"x": curve.times, "y": curve.values, "yerr": curve.stderr,
                                              "xlabel": "t", "ylabel": "limit loss"})
    return {"files": ["loss_curve.csv", "picard_report.json", "plot_loss_curve.json"], "summary": report}


def cmd_solve_reg(cfg, out: Path, workers: int) -> dict:
    model = _mkv_model(cfg)
    sweep = epsilon_sweep([cfg["epsilon"]], model, cfg["mc_paths"], RngConfig(cfg["seed"]), cfg["max_iters"],
                          cfg["tol"], workers=workers)
    curve = sweep.curves[0]
    write_csv(out / "loss_curve.csv", ["t", "value", "stderr"], _curve_rows(curve))
    report = {"epsilon": cfg["epsilon"], "iterations": sweep.iterations, "converged": sweep.converged,
              "sup_deltas": sweep.reports[0].sup_deltas}
    write_json(out / "report.json", report)
    write_json(out / "plot_loss_curve.json", {"x": curve.times, "y": curve.values, "yerr": curve.stderr,
                                              "xlabel": "t", "ylabel": "regularized loss"})
    return {"files": ["loss_curve.csv", "report.json", "plot_loss_curve.json"], "summary": report}


def cmd_sweep_eps(cfg, out: Path, workers: int) -> dict:
    model = _mkv_model(cfg)
    rng = RngConfig(cfg["seed"])
    ref = None
    files = []
    if cfg["reference"]:
        ref, _ = minimal_solution_picard(model, cfg["max_iters"], cfg["tol"], cfg["mc_paths"], rng, workers)
        write_csv(out / "loss_curve_minimal.csv", ["t", "value", "stderr"], _curve_rows(ref))
        files.append("loss_curve_minimal.csv")
    sweep = epsilon_sweep(cfg["epsilons"], model, cfg["mc_paths"], rng, cfg["max_iters"], cfg["tol"], ref, workers)
    series = []
    for e, c in zip(sweep.eps, sweep.curves):
        name = f"loss_curve_eps_{e!r}.csv"
        write_csv(out / name, ["t", "value", "stderr"], _curve_rows(c))
        files.append(name)
        series.append({"label": f"eps={e!r}", "x": c.times, "y": c.values})
    report = {"epsilons": sweep.eps, "monotone": sweep.monotone, "violations": sweep.violations,
              "gaps_to_minimal": sweep.gaps, "iterations": sweep.iterations, "converged": sweep.converged}
    write_json(out / "sweep_report.json", report)
    write_json(out / "plot_sweep.json", {"series": series, "xlabel": "t", "ylabel": "loss"})
    return {"files": files + ["sweep_report.json", "plot_sweep.json"], "summary": report}


def cmd_scaling(cfg, out: Path, workers: int) -> dict:
    if not cfg["regime"]:
        raise ConfigError("missing required key 'regime'")
    Ns = cfg["N"] if isinstance(cfg["N"], list) else [cfg["N"]]
    reps = cfg["replications"]
    exp = ScalingExperiment(
        regime=cfg["regime"], N_grid=tuple(Ns), economy=_economy(cfg), G=build_loss(cfg), theta=build_initial(cfg),
        strategy=build_strategy(cfg), replications=tuple(reps) if isinstance(reps, list) else reps,
        step=cfg["step"], growth=cfg["growth"], horizon=cfg["horizon"], horizon_per_n=cfg["horizon_per_n"],
        seed=cfg["seed"], bridge=cfg["bridge"], stop_when_resolved=cfg["stop_when_resolved"],
    )
    tab = run_scaling(exp, workers)
    write_csv(out / "scaling.csv", ["N", "S_lower", "S_mid", "S_upper", "stderr", "reference"], tab.rows())
    report = {"regime": tab.regime, "slope": tab.slope, "slope_stderr": tab.slope_stderr,
              "references": tab.references}
    write_json(out / "scaling_report.json", report)
    write_json(out / "plot_scaling.json", {"x": tab.N, "y": tab.S_mid, "yerr": tab.stderr, "reference": tab.reference,
                                           "xlabel": "N", "ylabel": "expected survivors", "log": True})
    return {"files": ["scaling.csv", "scaling_report.json", "plot_scaling.json"], "summary": report}


def cmd_analytics(cfg, out: Path, workers: int) -> dict:
    alpha = cfg["alpha"]
    c = scaling_constants(alpha)
    doc = {"alpha": alpha, "scaling_constants": c.__dict__}
    if cfg["eps"] is not None:
        doc["T_alpha_eps"] = t_alpha_eps(alpha, cfg["eps"])
        if cfg["delta"] is not None:
            doc["p_alpha_eps_delta"] = p_alpha_eps_delta(alpha, cfg["eps"], cfg["delta"])
    beta = cfg["beta"]
    if beta is not None:
        doc["beta"] = beta
        if beta < 0:
            doc["budget_bound_negative"] = budget_bound_negative(beta)
        elif beta > 0:
            doc["limit_survival_fraction"] = limit_survival_fraction(beta, build_initial(cfg))
    write_json(out / "analytics.json", doc)
    return {"files": ["analytics.json"], "summary": doc}


HANDLERS = {
    "simulate": cmd_simulate,
    "solve-mkv": cmd_solve_mkv,
    "solve-reg": cmd_solve_reg,
    "sweep-eps": cmd_sweep_eps,
    "scaling": cmd_scaling,
    "analytics": cmd_analytics,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="meanfield-cascade", description="Default-cascade particle and mean-field experiments.")
    p.add_argument("command", choices=COMMANDS + ("presets",))
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--preset", help="named configuration (see the 'presets' command)")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one key; dotted keys for nested objects")
    p.add_argument("--seed", type=int, help="master seed (unsigned 64-bit)")
    p.add_argument("--workers", type=int, help="worker processes (default: $MFC_WORKERS or 1)")
    p.add_argument("--out", default="out", help="output directory")
    p.add_argument("--beta", type=float)
    p.add_argument("--alpha", type=float)
    p.add_argument("--N", help="particle count, or comma-separated list for scaling")
    p.add_argument("--regime", choices=("negative", "neutral", "positive"))
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.command == "presets":
        for name in sorted(PRESETS):
            print(f"{name}\t{PRESETS[name][0]}")
        return 0
    try:
        cfg = resolve_config(args.command, args)
        workers = resolve_workers(args.workers)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        t0 = time.perf_counter()
        info = HANDLERS[args.command](cfg, out, workers)
    except (ConfigError, DomainError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3
    manifest = {
        "command": args.command,
        "config": cfg,
        "seed": cfg["seed"],
        "workers": workers,
        "preset": args.preset,
        "versions": {"meanfield_cascade": __version__, "python": platform.python_version(),
                     "numpy": np.__version__, "scipy": scipy.__version__},
        "wall_time_s": time.perf_counter() - t0,
        "outputs": info.get("files", []),
        "summary": info.get("summary"),
        "argv": list(argv) if argv is not None else sys.argv[1:],
        "cwd": os.getcwd(),
    }
    for k in ("seeds", "timings"):
        if k in info:
            manifest[k] = info[k]
    write_json(out / "manifest.json", manifest)
    print(json.dumps(manifest["summary"], default=_jsonable, sort_keys=True))
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
