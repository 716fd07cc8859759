"""Command line interface.

Subcommands cover the whole pipeline: ``simulate`` draws jump-process data
sets, ``fit`` estimates parameters from an observation CSV, ``profile``
computes a profile likelihood interval, ``ppcheck`` writes predictive
percentile bands, and ``bench`` runs the simulate-and-refit study that
summarizes estimator behaviour over many replicates.

Configuration comes from a JSON file (``--config``) overlaid by flags.
Unknown keys are rejected. Every run writes ``manifest.json`` with the fully
resolved configuration, and rerunning from a manifest reproduces the outputs
byte for byte. Exit codes: 0 success, 2 configuration error, 3 simulation
failure, 4 degenerate fit.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .datasets import boarding_school
from .errors import ConfigError, DegenerateDataError, SimulationError
from .inference import (
    PROFILE_THRESHOLD,
    band_coverage,
    fit,
    make_space,
    post_predictive,
    profile_ci,
)
from .io import read_json, read_series, write_json, write_series, write_trajectory
from .kalman import filter_forward
from .model import get_model
from .simulate import (
    design_grid,
    final_size,
    observe,
    proportions_to_counts,
    simulate_nonextinct,
)
from .state_space import ApproxSettings, build_system

_FMT = "%.17g"

_COMMON_KEYS = {"command", "model", "seed", "out", "threads"}
_FIT_KEYS = _COMMON_KEYS | {
    "data", "builtin", "N", "obs_map", "free", "fixed", "start", "n_starts",
    "max_evals", "step", "ftol", "ode_h", "quad_nodes", "t0_scale",
    "dump_system", "dump_filter",
}
_SCHEMAS: dict[str, set[str]] = {
    "simulate": _COMMON_KEYS | {"zeta", "i0", "e0", "N", "p", "tau",
                                "n_target", "times", "replicates",
                                "write_events"},
    "fit": _FIT_KEYS,
    "profile": _FIT_KEYS | {"param", "n_grid", "profile_starts", "span",
                            "threshold"},
    "ppcheck": _FIT_KEYS | {"params", "n_sims", "nonextinct_only"},
    "bench": _COMMON_KEYS | {"zeta", "i0", "e0", "N", "p", "tau", "n_target",
                             "replicates", "free", "fixed", "start",
                             "n_starts", "max_evals", "step", "ftol",
                             "ode_h", "quad_nodes", "t0_scale"},
}

_BASE_DEFAULTS = {"model": "sir", "seed": 0, "out": "epikalman-out",
                  "threads": 1}
_FIT_DEFAULTS = {
    "data": None, "builtin": None, "N": None, "obs_map": None,
    "n_starts": 8, "max_evals": None, "step": 0.25, "ftol": 1e-8,
    "ode_h": None, "quad_nodes": None, "t0_scale": 1e-6,
    "dump_system": None, "dump_filter": None,
}
_CMD_DEFAULTS: dict[str, dict] = {
    "simulate": {"e0": 0.0, "tau": 0.0, "n_target": None, "times": None,
                 "replicates": 1, "write_events": True},
    "fit": dict(_FIT_DEFAULTS),
    "profile": {**_FIT_DEFAULTS, "n_grid": 20, "profile_starts": 10,
                "span": None, "threshold": PROFILE_THRESHOLD},
    "ppcheck": {**_FIT_DEFAULTS, "params": None, "n_sims": 200,
                "nonextinct_only": True},
    "bench": {"e0": 0.0, "tau": 0.0, "replicates": 50, "n_starts": 8,
              "max_evals": None, "step": 0.25, "ftol": 1e-8, "ode_h": None,
              "quad_nodes": None, "t0_scale": 1e-6},
}
_REQUIRED: dict[str, tuple[str, ...]] = {
    "simulate": ("zeta", "i0", "N", "p"),
    "fit": ("free", "fixed", "start"),
    "profile": ("free", "fixed", "start", "param"),
    "ppcheck": (),
    "bench": ("zeta", "i0", "N", "p", "n_target", "free", "fixed", "start"),
}

# flags shown on every subcommand; per-command mirrors listed separately
_MIRROR_FLAGS: dict[str, list[tuple[str, str, type]]] = {
    "simulate": [("--replicates", "replicates", int),
                 ("--n-target", "n_target", int)],
    "fit": [("--data", "data", str)],
    "profile": [("--data", "data", str), ("--param", "param", str)],
    "ppcheck": [("--data", "data", str), ("--n-sims", "n_sims", int)],
    "bench": [("--replicates", "replicates", int),
              ("--n-target", "n_target", int)],
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="epikalman",
        description="Simulate and fit epidemic jump-process models with a "
                    "Gaussian filter likelihood.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    help_lines = {
        "simulate": "draw jump-process data sets and write observation CSVs",
        "fit": "maximum likelihood fit on an observation CSV",
        "profile": "profile likelihood confidence interval for one parameter",
        "ppcheck": "predictive percentile bands under given parameters",
        "bench": "simulate-and-refit study over many replicates",
    }
    for name in ("simulate", "fit", "profile", "ppcheck", "bench"):
        sp = sub.add_parser(name, help=help_lines[name])
        sp.add_argument("--config", help="JSON configuration file")
        sp.add_argument("--seed", type=int, help="random seed")
        sp.add_argument("--out", help="output directory")
        sp.add_argument("--threads", type=int, help="worker process count")
        sp.add_argument("--model", choices=("sir", "seir"))
        for flag, dest, typ in _MIRROR_FLAGS[name]:
            sp.add_argument(flag, dest=dest, type=typ)
    return parser


def _resolve(command: str, args: argparse.Namespace) -> dict:
    allowed = _SCHEMAS[command]
    cfg = dict(_BASE_DEFAULTS)
    cfg.update(_CMD_DEFAULTS[command])
    if args.config:
        try:
            file_cfg = read_json(args.config)
        except OSError as err:
            raise ConfigError(f"cannot read config file: {err}") from None
        except json.JSONDecodeError as err:
            raise ConfigError(f"{args.config} is not valid JSON: {err}") from None
        if not isinstance(file_cfg, dict):
            raise ConfigError(f"{args.config}: top level must be an object")
        unknown = sorted(set(file_cfg) - allowed)
        if unknown:
            raise ConfigError(f"unknown config keys for {command}: {unknown}")
        recorded = file_cfg.get("command")
        if recorded is not None and recorded != command:
            raise ConfigError(
                f"config was written for command {recorded!r}, not {command!r}"
            )
        cfg.update({k: v for k, v in file_cfg.items() if k != "command"})
    for attr in ("model", "seed", "out", "threads"):
        value = getattr(args, attr, None)
        if value is not None:
            cfg[attr] = value
    for _, dest, _ in _MIRROR_FLAGS[command]:
        value = getattr(args, dest, None)
        if value is not None:
            cfg[dest] = value
    missing = [k for k in _REQUIRED[command] if cfg.get(k) is None]
    if missing:
        raise ConfigError(f"missing required config keys: {missing}")
    cfg["command"] = command
    return cfg


def _settings(cfg) -> ApproxSettings:
    return ApproxSettings(
        ode_h=cfg["ode_h"],
        quad_nodes=None if cfg["quad_nodes"] is None else int(cfg["quad_nodes"]),
        t0_scale=float(cfg["t0_scale"]),
    )


def _zeta_from_config(model, cfg) -> np.ndarray:
    zeta_cfg = cfg["zeta"]
    missing = [k for k in model.zeta_names if k not in zeta_cfg]
    if missing:
        raise ConfigError(f"zeta is missing rates {missing}")
    extra = sorted(set(zeta_cfg) - set(model.zeta_names))
    if extra:
        raise ConfigError(f"zeta has unknown rates {extra}")
    return np.array([float(zeta_cfg[k]) for k in model.zeta_names])


def _x0_fractions(model, cfg) -> np.ndarray:
    i0 = float(cfg["i0"])
    e0 = float(cfg.get("e0") or 0.0)
    if not 0.0 < i0 < 1.0:
        raise ConfigError(f"i0={i0} outside (0, 1)")
    if model.name == "sir":
        return np.array([1.0 - i0, i0])
    if e0 < 0.0 or e0 + i0 >= 1.0:
        raise ConfigError(f"e0={e0}, i0={i0} leave no susceptibles")
    return np.array([1.0 - e0 - i0, e0, i0])


def _seed_ints(seed, n: int) -> list[int]:
    state = np.random.SeedSequence(int(seed)).generate_state(n, dtype=np.uint64)
    return [int(s) for s in state]


def _load_series(cfg):
    has_data = cfg.get("data") is not None
    has_builtin = cfg.get("builtin") is not None
    if has_data == has_builtin:
        raise ConfigError("exactly one of 'data' and 'builtin' is required")
    if has_builtin:
        if cfg["builtin"] != "boarding_school":
            raise ConfigError(f"unknown builtin data set {cfg['builtin']!r}")
        series = boarding_school()
    else:
        obs_map = None if cfg["obs_map"] is None else tuple(cfg["obs_map"])
        series = read_series(cfg["data"], N=cfg["N"], model=cfg["model"],
                             obs_map=obs_map)
    recorded = series.meta.get("model") if series.meta else series.model_name
    if recorded and recorded != cfg["model"]:
        raise ConfigError(
            f"data set records model {recorded!r} but the run requests "
            f"{cfg['model']!r}"
        )
    return series


def _run_fit(cfg, series):
    model = get_model(cfg["model"])
    return fit(
        model, series.times, series.values, series.N,
        free=tuple(cfg["free"]),
        fixed={k: float(v) for k, v in cfg["fixed"].items()},
        start={k: float(v) for k, v in cfg["start"].items()},
        n_starts=int(cfg["n_starts"]),
        seed=int(cfg["seed"]),
        settings=_settings(cfg),
        obs_map=series.obs_map,
        step=cfg["step"],
        ftol=float(cfg["ftol"]),
        max_evals=None if cfg["max_evals"] is None else int(cfg["max_evals"]),
    )


def _fit_report(cfg, series, result) -> dict:
    return {
        "status": result.status,
        "params": result.params,
        "loglik": result.loglik,
        "converged": result.converged,
        "n_evals": result.n_evals,
        "at_boundary": list(result.at_boundary),
        "free": list(cfg["free"]),
        "fixed": cfg["fixed"],
        "start": cfg["start"],
        "mu": result.mu,
        "model": cfg["model"],
        "N": series.N,
        "n_obs": series.n_obs,
    }


def _write_fit_outputs(cfg, out: Path, series, result) -> None:
    write_json(out / "fit.json", _fit_report(cfg, series, result))
    lines = [f"status: {result.status}", f"loglik: {result.loglik:.6f}"]
    for name, value in result.params.items():
        mark = "  (at boundary)" if name in result.at_boundary else ""
        lines.append(f"{name} = {value:.6g}{mark}")
    (out / "summary.txt").write_text("\n".join(lines) + "\n")
    if result.status != "ok":
        return
    if cfg["dump_system"] or cfg["dump_filter"]:
        model = get_model(cfg["model"])
        system = build_system(model, result.theta, series.times, series.N,
                              settings=_settings(cfg), obs_map=series.obs_map)
        if cfg["dump_system"]:
            write_json(out / cfg["dump_system"], {
                "times": system.times, "obs_mask": system.obs_mask,
                "F": system.F, "A": system.A, "T": system.T, "B": system.B,
                "Qdiag": system.Qdiag, "xi0": system.xi0, "T0": system.T0,
                "N": system.N,
            })
        if cfg["dump_filter"]:
            steps = filter_forward(system, series.values)
            rows = ["k,t,obs_mean,obs_var,innovation"]
            for step, t in zip(steps, system.times):
                innov = ("" if step.innovation is None
                         else _FMT % step.innovation[0])
                rows.append(
                    f"{step.k},{_FMT % t},{_FMT % step.obs_mean[0]},"
                    f"{_FMT % step.obs_cov[0, 0]},{innov}"
                )
            (out / cfg["dump_filter"]).write_text("\n".join(rows) + "\n")


def cmd_simulate(cfg, out: Path) -> int:
    model = get_model(cfg["model"])
    zeta = _zeta_from_config(model, cfg)
    N = int(cfg["N"])
    try:
        x0_counts = proportions_to_counts(_x0_fractions(model, cfg), N)
    except ValueError as err:
        raise ConfigError(str(err)) from None
    if (cfg["n_target"] is None) == (cfg["times"] is None):
        raise ConfigError("exactly one of 'n_target' and 'times' is required")
    replicates = int(cfg["replicates"])
    summary = {"delta": None, "n_points": [], "final_sizes": []}
    if replicates > 0:
        sim_seed, obs_seed = _seed_ints(cfg["seed"], 2)
        if cfg["times"] is not None:
            times = np.asarray(cfg["times"], dtype=float)
            trajs = simulate_nonextinct(model, zeta, N, x0_counts,
                                        n_keep=replicates, seed=sim_seed,
                                        t_max=float(times[-1]))
            grids = [times] * replicates
        else:
            trajs = simulate_nonextinct(model, zeta, N, x0_counts,
                                        n_keep=replicates, seed=sim_seed)
            delta, grids = design_grid(model, trajs, int(cfg["n_target"]))
            summary["delta"] = delta
        obs_children = np.random.SeedSequence(obs_seed).spawn(replicates)
        for i, (traj, grid, child) in enumerate(zip(trajs, grids, obs_children)):
            series = observe(traj, grid, p=float(cfg["p"]),
                             tau=float(cfg["tau"]), rng=child)
            write_series(out / f"replicate_{i:03d}.csv", series)
            if cfg["write_events"]:
                write_trajectory(out / f"replicate_{i:03d}_events.csv", traj)
            summary["n_points"].append(len(grid))
            summary["final_sizes"].append(final_size(model, traj))
    write_json(out / "summary.json", summary)
    print(f"wrote {replicates} replicate(s) to {out}")
    return 0


def cmd_fit(cfg, out: Path) -> int:
    series = _load_series(cfg)
    result = _run_fit(cfg, series)
    _write_fit_outputs(cfg, out, series, result)
    if result.status != "ok":
        print("fit is degenerate: the likelihood never left the invalid "
              "region", file=sys.stderr)
        return 4
    shown = ", ".join(f"{k}={v:.4g}" for k, v in result.params.items())
    print(f"fit ok: loglik={result.loglik:.4f}, {shown}")
    return 0


def cmd_profile(cfg, out: Path) -> int:
    series = _load_series(cfg)
    result = _run_fit(cfg, series)
    _write_fit_outputs(cfg, out, series, result)
    if result.status != "ok":
        print("cannot profile a degenerate fit", file=sys.stderr)
        return 4
    model = get_model(cfg["model"])
    prof = profile_ci(
        model, series.times, series.values, series.N, result, cfg["param"],
        n_grid=int(cfg["n_grid"]),
        n_starts=int(cfg["profile_starts"]),
        span=None if cfg["span"] is None else float(cfg["span"]),
        seed=int(cfg["seed"]),
        settings=_settings(cfg),
        threshold=float(cfg["threshold"]),
        step=cfg["step"],
        ftol=float(cfg["ftol"]),
        max_evals=None if cfg["max_evals"] is None else int(cfg["max_evals"]),
    )
    rows = [f"{prof.param},loglik"]
    for g, v in zip(prof.grid, prof.values):
        rows.append(f"{_FMT % g},{_FMT % v}")
    (out / f"profile_{prof.param}.csv").write_text("\n".join(rows) + "\n")
    write_json(out / f"profile_{prof.param}.json", {
        "param": prof.param,
        "lo": prof.lo,
        "hi": prof.hi,
        "threshold": prof.threshold,
        "loglik_ref": prof.loglik_ref,
        "at_lower_edge": prof.at_lower_edge,
        "at_upper_edge": prof.at_upper_edge,
        "n_evals": prof.n_evals,
    })
    flag = ""
    if prof.at_lower_edge or prof.at_upper_edge:
        flag = "  (interval clipped by the search grid)"
    print(f"profile {prof.param}: [{prof.lo:.4g}, {prof.hi:.4g}]{flag}")
    return 0


def cmd_ppcheck(cfg, out: Path) -> int:
    series = _load_series(cfg)
    model = get_model(cfg["model"])
    if cfg["params"] is not None:
        space = make_space(model, free=(),
                           fixed={k: float(v) for k, v in cfg["params"].items()},
                           obs_map=series.obs_map)
        theta = space.decode(np.empty(0))
    else:
        for key in ("free", "fixed", "start"):
            if cfg.get(key) is None:
                raise ConfigError(
                    "ppcheck needs either 'params' or a full fit block "
                    "(free/fixed/start)"
                )
        result = _run_fit(cfg, series)
        if result.status != "ok":
            print("cannot run a predictive check on a degenerate fit",
                  file=sys.stderr)
            return 4
        theta = result.theta
    pp = post_predictive(
        model, theta, series.times, series.N,
        n_sims=int(cfg["n_sims"]),
        seed=int(cfg["seed"]),
        obs_map=series.obs_map,
        nonextinct_only=bool(cfg["nonextinct_only"]),
    )
    q = pp.mean.shape[1]
    if q == 1:
        rows = ["t,mean,p05,p50,p95"]
        for k, t in enumerate(pp.times):
            rows.append(",".join(_FMT % v for v in (
                t, pp.mean[k, 0], pp.q05[k, 0], pp.q50[k, 0], pp.q95[k, 0],
            )))
    else:
        cols = ["t"]
        for j in range(q):
            cols += [f"mean_{j + 1}", f"p05_{j + 1}", f"p50_{j + 1}",
                     f"p95_{j + 1}"]
        rows = [",".join(cols)]
        for k, t in enumerate(pp.times):
            cells = [_FMT % t]
            for j in range(q):
                cells += [_FMT % pp.mean[k, j], _FMT % pp.q05[k, j],
                          _FMT % pp.q50[k, j], _FMT % pp.q95[k, j]]
            rows.append(",".join(cells))
    (out / "ppcheck.csv").write_text("\n".join(rows) + "\n")
    cover = band_coverage(pp, series.values)
    (out / "summary.txt").write_text(
        f"n_sims: {pp.n_sims}\nband_coverage: {cover:.4f}\n"
    )
    print(f"predictive band covers {cover:.1%} of the observations")
    return 0


def _bench_worker(payload: dict) -> dict:
    model = get_model(payload["model"])
    settings = ApproxSettings(**payload["settings"])
    result = fit(
        model,
        np.asarray(payload["times"]),
        np.asarray(payload["values"]),
        payload["N"],
        free=tuple(payload["free"]),
        fixed=payload["fixed"],
        start=payload["start"],
        n_starts=payload["n_starts"],
        seed=payload["seed"],
        settings=settings,
        step=payload["step"],
        ftol=payload["ftol"],
        max_evals=payload["max_evals"],
    )
    return {"params": result.params, "loglik": result.loglik,
            "status": result.status, "n_evals": result.n_evals}


def _run_tasks(payloads: list[dict], threads: int) -> list[dict]:
    if threads <= 1 or len(payloads) <= 1:
        return [_bench_worker(p) for p in payloads]
    from concurrent.futures import ProcessPoolExecutor

    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(_bench_worker, payloads))


def cmd_bench(cfg, out: Path) -> int:
    model = get_model(cfg["model"])
    zeta = _zeta_from_config(model, cfg)
    N = int(cfg["N"])
    x0_counts = proportions_to_counts(_x0_fractions(model, cfg), N)
    replicates = int(cfg["replicates"])
    free = tuple(cfg["free"])
    header = "replicate,n_points,status,loglik," + ",".join(free)
    if replicates == 0:
        (out / "bench.csv").write_text(header + "\n")
        write_json(out / "bench_report.json",
                   {"n_ok": 0, "n_degenerate": 0, "delta": None,
                    "estimates": {}})
        (out / "report.txt").write_text("no replicates requested\n")
        print("bench: nothing to do (replicates=0)")
        return 0
    sim_seed, obs_seed, fit_base = _seed_ints(cfg["seed"], 3)
    trajs = simulate_nonextinct(model, zeta, N, x0_counts,
                                n_keep=replicates, seed=sim_seed)
    delta, grids = design_grid(model, trajs, int(cfg["n_target"]))
    obs_children = np.random.SeedSequence(obs_seed).spawn(replicates)
    fit_seeds = _seed_ints(fit_base, replicates)
    settings_dict = {
        "ode_h": cfg["ode_h"],
        "quad_nodes": None if cfg["quad_nodes"] is None else int(cfg["quad_nodes"]),
        "t0_scale": float(cfg["t0_scale"]),
    }
    payloads = []
    for traj, grid, child, fseed in zip(trajs, grids, obs_children, fit_seeds):
        series = observe(traj, grid, p=float(cfg["p"]), tau=float(cfg["tau"]),
                         rng=child)
        payloads.append({
            "model": model.name,
            "times": grid.tolist(),
            "values": series.values.tolist(),
            "N": N,
            "free": list(free),
            "fixed": {k: float(v) for k, v in cfg["fixed"].items()},
            "start": {k: float(v) for k, v in cfg["start"].items()},
            "n_starts": int(cfg["n_starts"]),
            "seed": fseed,
            "settings": settings_dict,
            "step": cfg["step"],
            "ftol": float(cfg["ftol"]),
            "max_evals": None if cfg["max_evals"] is None else int(cfg["max_evals"]),
        })
    results = _run_tasks(payloads, int(cfg["threads"]))

    rows = [header]
    for i, (grid, res) in enumerate(zip(grids, results)):
        cells = [str(i), str(len(grid)), res["status"], _FMT % res["loglik"]]
        for name in free:
            cells.append("" if res["status"] != "ok"
                         else _FMT % res["params"][name])
        rows.append(",".join(cells))
    (out / "bench.csv").write_text("\n".join(rows) + "\n")

    ok = [r for r in results if r["status"] == "ok"]
    estimates = {}
    report_lines = [
        f"replicates: {replicates} (ok {len(ok)}, degenerate "
        f"{replicates - len(ok)})",
        f"sampling interval: {delta:.6g}",
    ]
    for name in free:
        vals = np.array([r["params"][name] for r in ok])
        mean = float(vals.mean()) if vals.size else float("nan")
        sd = float(vals.std(ddof=1)) if vals.size > 1 else float("nan")
        estimates[name] = {"mean": mean, "sd": sd}
        report_lines.append(f"{name}: {mean:.3f} ({sd:.3f})")
    write_json(out / "bench_report.json", {
        "n_ok": len(ok),
        "n_degenerate": replicates - len(ok),
        "delta": delta,
        "estimates": estimates,
    })
    (out / "report.txt").write_text("\n".join(report_lines) + "\n")
    print("\n".join(report_lines))
    return 0


_DISPATCH = {
    "simulate": cmd_simulate,
    "fit": cmd_fit,
    "profile": cmd_profile,
    "ppcheck": cmd_ppcheck,
    "bench": cmd_bench,
}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = _resolve(args.command, args)
        out = Path(cfg["out"])
        out.mkdir(parents=True, exist_ok=True)
        write_json(out / "manifest.json", cfg)
        return _DISPATCH[args.command](cfg, out)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return 2
    except (SimulationError, DegenerateDataError) as err:
        print(f"simulation error: {err}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
