"""Command-line front end: ``evokan {fit-ic,evolve,benchmark,compare,render,table}``.

Exit codes: 0 success, 2 invalid configuration or arguments, 3 numerical
blow-up, 4 file I/O failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import platform
import sys
import time
from contextlib import nullcontext
from pathlib import Path

import numpy as np
import scipy

from . import __version__, io
from .bench import IMEX, SAV, ac_benchmark, nse_benchmark
from .config import NSE2D, ConfigError, RunConfig, from_dict, load
from .evolution import SingularSystemError, fit_initial, run
from .metrics import ComparisonError, energy_trace, format_error_table, time_averaged_error
from .network import init_params
from .problems import AllenCahnResidual, ContractError, NavierStokesResidual, make_initial_condition
from .render import snapshot_image, strip_image, write_pgm
from .spectral import BlowUpError, SpectralGrid, vorticity

log = logging.getLogger("evokan")

EXIT_OK, EXIT_CONFIG, EXIT_BLOWUP, EXIT_IO = 0, 2, 3, 4


class UsageError(ValueError):
    pass


# ---------------------------------------------------------------- helpers


def _versions() -> dict:
    return {"evokan": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "python": platform.python_version()}


def _manifest(cfg: RunConfig, command: str, **extra) -> dict:
    return {
        "command": command,
        "config": cfg.resolved,
        "config_hash": cfg.config_hash(),
        "seeds": {"network": cfg.network_seed, "fit": cfg.fit.seed, "collocation": cfg.collocation["seed"]},
        "versions": _versions(),
        **extra,
    }


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _out_dir(args, cfg: RunConfig) -> Path:
    out = args.out or cfg.out
    if out is None:
        raise UsageError("no output directory: pass --out or set \"out\" in the configuration")
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _load_config(args) -> RunConfig:
    if not args.config:
        raise UsageError("--config is required")
    cfg = load(args.config)
    if args.seed is not None:
        d = json.loads(json.dumps(cfg.resolved))
        d["network"]["seed"] = d["fit"]["seed"] = d["collocation"]["seed"] = args.seed
        cfg = from_dict(d)
    return cfg


def _operator(cfg: RunConfig):
    return NavierStokesResidual(cfg.problem) if cfg.kind == NSE2D else AllenCahnResidual(cfg.problem)


def _snapshot_times(cfg: RunConfig) -> list[float]:
    e = cfg.evolution
    steps = list(range(0, e.n_steps + 1, e.snapshot_every))
    if steps[-1] != e.n_steps:
        steps.append(e.n_steps)
    return [s * e.dt for s in steps]


def _for_each_child(cfg: RunConfig, out: Path, fn, command: str) -> None:
    """Run ``fn(child, child_dir)`` per sweep value, or once in ``out`` without a sweep."""
    if not cfg.sweep:
        fn(cfg, out)
        return
    children = []
    for child in cfg.children():
        d = out / child.child_name()
        d.mkdir(parents=True, exist_ok=True)
        fn(child, d)
        children.append({"dir": d.name, cfg.sweep_parameter: child.parameter_value})
    _write_json(out / "sweep.json", _manifest(cfg, command, sweep_parameter=cfg.sweep_parameter, children=children))


# --------------------------------------------------------------- commands


def cmd_fit_ic(args) -> int:
    cfg = _load_config(args)
    out = _out_dir(args, cfg)

    def one(c: RunConfig, d: Path):
        params0 = init_params(c.network, c.network_seed)
        res = fit_initial(c.network, make_initial_condition(c.problem), c.make_collocation(), c.fit, params0)
        io.save_network(d / "network.evkn", c.network, res.params)
        io.write_csv(d / "fit.csv", ["iteration", "rms"], enumerate(res.history))
        _write_json(d / "manifest.json", _manifest(c, "fit-ic", fit={"rms": res.rms, "iterations": res.iterations,
                                                                     "converged": bool(res.converged)}))
        _say(args, f"{d}: fit RMS {res.rms:.3e} after {res.iterations} iterations")

    _for_each_child(cfg, out, one, "fit-ic")
    return EXIT_OK


def cmd_evolve(args) -> int:
    cfg = _load_config(args)
    out = _out_dir(args, cfg)

    def one(c: RunConfig, d: Path):
        colloc = c.make_collocation()
        params0 = init_params(c.network, c.network_seed)
        t0 = time.perf_counter()
        fit = fit_initial(c.network, make_initial_condition(c.problem), colloc, c.fit, params0)
        res = run(_operator(c), c.network, c.evolution, colloc, params0=fit.params, out_dir=d, raise_errors=False)
        io.save_network(d / "network.evkn", c.network, res.state.params)
        io.write_csv(d / "fit.csv", ["iteration", "rms"], enumerate(fit.history))
        if c.kind != NSE2D:
            energy_trace(res.trajectory, c.problem).to_csv(d / "energy.csv")
        status = "ok" if res.error is None else f"stopped: {res.error}"
        _write_json(d / "manifest.json", _manifest(
            c, "evolve", method=c.method, fit={"rms": fit.rms, "iterations": fit.iterations},
            steps=res.state.step, status=status, wall_seconds=round(time.perf_counter() - t0, 3)))
        _say(args, f"{d}: {c.method} reached t={res.state.t:.6g} ({status})")
        if res.error is not None:
            raise res.error

    _for_each_child(cfg, out, one, "evolve")
    return EXIT_OK


def cmd_benchmark(args) -> int:
    cfg = _load_config(args)
    out = _out_dir(args, cfg)

    def one(c: RunConfig, d: Path):
        times = _snapshot_times(c)
        n = c.collocation["n"]
        grid = SpectralGrid(n, c.problem.dim, c.problem.half_width, min_n=4)
        b = c.benchmark
        kw = {k: v for k, v in (("n_ref", b["n_ref"]), ("dt", b["dt"])) if v is not None}
        if c.kind == NSE2D:
            snaps = nse_benchmark(c.problem, times, grid, **kw)
            rows = []
            for s in snaps:
                w = vorticity(s.values, grid)
                rows.append([s.t, 0.5 * grid.integrate(np.sum(s.values**2, axis=0)), 0.5 * grid.integrate(w * w)])
            io.write_csv(d / "energy.csv", ["t", "kinetic_energy", "enstrophy"], rows)
        else:
            snaps, modified = ac_benchmark(c.problem, times, grid, scheme=SAV if b["scheme"] == "sav" else IMEX, **kw)
            trace = energy_trace(snaps, c.problem)
            trace.to_csv(d / "energy.csv")
            if modified:
                io.write_csv(d / "modified_energy.csv", ["t", "modified_energy"], zip(times, modified))
        (d / "snapshots").mkdir(exist_ok=True)
        for s in snaps:
            io.save_snapshot(d / "snapshots" / f"snap_{int(round(s.t / c.evolution.dt)):06d}.evks", s)
        _write_json(d / "manifest.json", _manifest(c, "benchmark", method="benchmark"))
        _say(args, f"{d}: {len(snaps)} benchmark snapshots")

    _for_each_child(cfg, out, one, "benchmark")
    return EXIT_OK


def _load_trajectory(run_dir: Path):
    files = sorted((run_dir / "snapshots").glob("snap_*.evks"))
    if not files:
        raise UsageError(f"{run_dir} has no snapshots")
    return [io.load_snapshot(f) for f in files]


def _read_manifest(run_dir: Path) -> dict:
    for name in ("sweep.json", "manifest.json"):
        if (run_dir / name).exists():
            return json.loads((run_dir / name).read_text())
    raise UsageError(f"{run_dir} has no manifest")


def _compare_pair(a: Path, b: Path, d: Path) -> dict:
    ma, mb = _read_manifest(a), _read_manifest(b)
    cfg_a = ma["config"]
    kind = cfg_a["problem"]["kind"]
    param = "nu" if kind == NSE2D else "eps"
    cfg_b = mb["config"]
    if cfg_b["problem"]["kind"] != kind or cfg_b["problem"][param] != cfg_a["problem"][param]:
        raise ComparisonError(f"{a} and {b} solve different problems "
                              f"({kind} {param}={cfg_a['problem'][param]} vs "
                              f"{cfg_b['problem']['kind']} {param}={cfg_b['problem'].get(param)})")
    ta, tb = _load_trajectory(a), _load_trajectory(b)
    if len(ta) != len(tb):
        # an evolution that stopped early is compared over the snapshots it has
        tb = tb[: len(ta)] if len(ta) < len(tb) else tb
        ta = ta[: len(tb)]
    T = cfg_a["evolution"]["T"]
    rep = time_averaged_error(ta, tb, T=T if abs(ta[-1].t - T) < 1e-9 else None, problem=kind,
                              method=ma.get("method", "?"), parameter=param, value=cfg_a["problem"][param])
    d.mkdir(parents=True, exist_ok=True)
    rep.to_csv(d / "errors.csv")
    summary = {"time_averaged_error": rep.time_averaged, "max_error": rep.max_error,
               "final_relative_error": rep.relative[-1], "final_time": rep.times[-1], **rep.metadata,
               "run_a": str(a), "run_b": str(b)}
    _write_json(d / "summary.json", summary)
    return summary


def cmd_compare(args) -> int:
    a, b = Path(args.run_a), Path(args.run_b)
    out = Path(args.out) if args.out else a / "compare"
    ma = _read_manifest(a)
    summaries = []
    if "children" in ma:
        mb = _read_manifest(b)
        if "children" not in mb:
            raise UsageError("cannot compare a sweep with a single run")
        for child in ma["children"]:
            summaries.append(_compare_pair(a / child["dir"], b / child["dir"], out / child["dir"]))
    else:
        summaries.append(_compare_pair(a, b, out))
    table = {summaries[0]["method"]: {s["value"]: s["time_averaged_error"] for s in summaries}}
    text = format_error_table(table, summaries[0]["parameter"])
    (out / "table.txt").write_text(text)
    for s in summaries:
        _say(args, f"{s['method']} {s['parameter']}={s['value']:g}: time-averaged L2 error {s['time_averaged_error']:.4e}")
    return EXIT_OK


def cmd_table(args) -> int:
    values: dict[str, dict[float, float]] = {}
    param = "eps"
    for path in args.reports:
        p = Path(path)
        files = [p] if p.is_file() else sorted(p.rglob("summary.json"))
        if not files:
            raise UsageError(f"no summary.json under {p}")
        for f in files:
            s = json.loads(f.read_text())
            param = s["parameter"]
            values.setdefault(s["method"], {})[s["value"]] = s["time_averaged_error"]
    text = format_error_table(values, param)
    if args.out:
        Path(args.out).write_text(text)
    if not args.quiet:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_render(args) -> int:
    src = Path(args.input)
    out = Path(args.out) if args.out else src.with_suffix(".pgm")
    if src.is_dir():
        traj = _load_trajectory(src)
        if traj[0].dim == 1:
            img = strip_image(traj, args.component)
            label = "space-time strip"
        else:
            snap = traj[-1]
            img, label = _field_image(snap, args), f"t={snap.t!r}"
    else:
        snap = io.load_snapshot(src)
        img, label = _field_image(snap, args), f"t={snap.t!r}"
    lo, hi = write_pgm(out, img, label)
    _say(args, f"{out}: range [{lo:.6g}, {hi:.6g}]")
    return EXIT_OK


def _field_image(snap, args):
    if args.vorticity:
        if snap.components != 2:
            raise UsageError("--vorticity needs a two-component velocity snapshot")
        w = vorticity(snap.values, snap.grid())
        return w.T[::-1]
    if args.component >= snap.components:
        raise UsageError(f"snapshot has {snap.components} component(s)")
    return snapshot_image(snap, args.component)


def _say(args, msg: str) -> None:
    if not getattr(args, "quiet", False):
        print(msg)


# ------------------------------------------------------------------- main


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="evokan", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"evokan {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", help="output directory (or file for render/table)")
    common.add_argument("--quiet", action="store_true", help="suppress progress messages")
    runp = argparse.ArgumentParser(add_help=False, parents=[common])
    runp.add_argument("--config", help="JSON run configuration (or a run manifest)")
    runp.add_argument("--seed", type=int, help="override every seed in the configuration")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("fit-ic", parents=[runp], help="fit the network to the initial condition").set_defaults(
        func=cmd_fit_ic)
    sub.add_parser("evolve", parents=[runp], help="fit and evolve the network").set_defaults(func=cmd_evolve)
    sub.add_parser("benchmark", parents=[runp], help="spectral reference trajectory").set_defaults(
        func=cmd_benchmark)
    c = sub.add_parser("compare", parents=[common], help="errors of run A against run B")
    c.add_argument("run_a")
    c.add_argument("run_b")
    c.set_defaults(func=cmd_compare)
    r = sub.add_parser("render", parents=[common], help="grayscale PGM of a snapshot or run")
    r.add_argument("input", help="EVKS snapshot or run directory")
    r.add_argument("--component", type=int, default=0)
    r.add_argument("--vorticity", action="store_true", help="render the vorticity of a velocity snapshot")
    r.set_defaults(func=cmd_render)
    t = sub.add_parser("table", parents=[common], help="collect comparison summaries into one table")
    t.add_argument("reports", nargs="+", help="summary.json files or directories containing them")
    t.set_defaults(func=cmd_table)
    return p


def _thread_limit():
    n = os.environ.get("EVOKAN_THREADS")
    if not n:
        return nullcontext()
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=max(1, int(n)))


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO, format="%(levelname)s %(message)s")
    try:
        with _thread_limit():
            return args.func(args)
    except (ConfigError, UsageError, ContractError, ComparisonError) as err:
        print(f"evokan: error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except (BlowUpError, SingularSystemError, ArithmeticError) as err:
        print(f"evokan: numerical failure: {err}", file=sys.stderr)
        return EXIT_BLOWUP
    except (OSError, io.FormatError) as err:
        print(f"evokan: I/O error: {err}", file=sys.stderr)
        return EXIT_IO
    except ValueError as err:
        print(f"evokan: error: {err}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
