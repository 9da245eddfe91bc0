"""``delta6`` command line.

Every subcommand resolves a configuration (preset or JSON file plus
flags), writes a ``<command>.config.json`` snapshot with its content hash
next to its artifacts, prints one summary line and exits 0 on success, 1
on a pipeline error and 2 on a usage error.
"""
from __future__ import annotations

import argparse
import math
import sys
import time
from dataclasses import asdict

import numpy as np

from . import io

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


def _common(p):
    p.add_argument("--config", default=None, help="preset name or JSON file (default: baseline)")
    p.add_argument("--seed", type=int, default=None, help="root seed (overrides the config)")
    p.add_argument("--out", default=None, help="output directory (default: $DELTA6_OUT or ./delta6_out)")
    p.add_argument("--force", action="store_true", help="overwrite existing artifacts")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="delta6", description="Delta6 force/torque end-effector twin")
    sub = ap.add_subparsers(dest="command", metavar="command", parser_class=_Parser)

    p = sub.add_parser("calibrate", help="fit spring stiffness from (theta, tau) samples")
    _common(p)
    p.add_argument("--input", help="CSV with columns theta,tau (rad, N·m); synthetic if omitted")
    p.add_argument("--k-true", type=float, default=0.6392, help="stiffness of the synthetic rig")
    p.add_argument("--samples", type=int, default=61)
    p.add_argument("--noise", type=float, default=2e-3, help="torque noise sigma, N·m")

    p = sub.add_parser("estimate", help="analytic (or learned) wrench for a dataset CSV")
    _common(p)
    p.add_argument("--input", required=True)
    p.add_argument("--weights", help="weights JSON; analytic estimator if omitted")

    p = sub.add_parser("design", help="workspace, wrench ranges and resolution of a design")
    _common(p)
    p.add_argument("--grid", type=int, default=None, help="proximal grid points per axis")
    p.add_argument("--wrist", type=int, default=None, help="wrist grid points per axis")
    p.add_argument("--backend", default=None, help="kernel backend (compiled or python)")

    p = sub.add_parser("simulate", help="synthetic dataset from the non-ideal plant")
    _common(p)
    p.add_argument("--duration", type=float, default=2000.0, help="seconds")
    p.add_argument("--rate", type=float, default=None, help="sample rate, Hz")

    p = sub.add_parser("train", help="train a sequence model on a dataset")
    _common(p)
    p.add_argument("--data", help="dataset CSV; simulated from the config if omitted")
    p.add_argument("--duration", type=float, default=2000.0, help="simulated seconds when --data is omitted")
    p.add_argument("--model", choices=("gru", "lstm", "transformer"), default=None)
    p.add_argument("--split", type=float, default=0.8, help="chronological train fraction")
    p.add_argument("--budget", type=float, default=None, help="time budget per fit, seconds")
    p.add_argument("--max-epochs", type=int, default=None)

    p = sub.add_parser("eval", help="percentile errors of analytic and learned estimators")
    _common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--weights", help="weights JSON")
    p.add_argument("--split", type=float, default=0.8,
                   help="evaluate on the rows after this fraction (0 for all)")

    p = sub.add_parser("bench", help="estimator latency and kernel backend timings")
    _common(p)
    p.add_argument("--iterations", type=int, default=10_000)
    p.add_argument("--kinds", default="analytic", help="comma list: analytic,analytic_scalar,gru,...")
    p.add_argument("--weights", help="weights JSON for a network kind")

    p = sub.add_parser("bode", help="frequency response of the estimate through plant dynamics")
    _common(p)
    p.add_argument("--fmin", type=float, default=None)
    p.add_argument("--fmax", type=float, default=None)
    p.add_argument("--points", type=int, default=None)
    p.add_argument("--amplitude", type=float, default=None, help="F_z amplitude, N")

    p = sub.add_parser("task", help="closed-loop toy task trials")
    _common(p)
    p.add_argument("--task", choices=("buffing", "peg_in_hole"), required=True)
    p.add_argument("--trials", type=int, default=1)
    p.add_argument("--no-feedback", action="store_true", help="run without force feedback")
    return ap


# -- helpers -----------------------------------------------------------------------

def _run_config(args) -> io.RunConfig:
    return io.RunConfig.from_raw(io.load_config(args.config), seed=args.seed)


def _begin(args, run, names):
    out = io.output_dir(args.out)
    paths = [out / n for n in names] + [out / f"{args.command}.config.json"]
    io.claim_paths(paths, args.force)
    out.mkdir(parents=True, exist_ok=True)
    io.write_json(out / f"{args.command}.config.json", io.snapshot(run, args.argv))
    return out


def _full_scale(params):
    from .design import compute_spec
    from .evaluation import full_scale_from_spec
    return full_scale_from_spec(compute_spec(params, 21, 5))


def _model_spec(run, kind=None):
    from .seqnet import ModelSpec
    sec = dict(run.model)
    kind = kind or sec.pop("kind", "gru")
    sec.pop("kind", None)
    try:
        return ModelSpec.from_dict({**ModelSpec.default(kind).to_dict(), **sec})
    except (TypeError, ValueError) as exc:
        raise io.ConfigError(f"model section: {exc}") from None


# -- subcommands ----------------------------------------------------------------------

def cmd_calibrate(args, run):
    from .estimator import calibrate_spring
    out = _begin(args, run, ["calibration.json"])
    if args.input:
        rows = np.loadtxt(args.input, delimiter=",", skiprows=1, ndmin=2)
        theta, tau = rows[:, 0], rows[:, 1]
    else:
        rng = np.random.default_rng(io.derive_seed(run.seed, "calibrate"))
        theta = np.linspace(-run.design.joint_range, run.design.joint_range, args.samples)
        tau = args.k_true * theta + rng.normal(0, args.noise, theta.size)
    fit = calibrate_spring(theta, tau)
    io.write_json(out / "calibration.json", {**asdict(fit), "valid": fit.valid})
    return f"calibrate: k={fit.k:.6g} N·m/rad mse={fit.mse:.3g} mae={fit.mae:.3g} n={fit.sample_count}"


def cmd_estimate(args, run):
    from .estimator import estimate_wrench_batch
    from .plant import TimeSeriesDataset
    ds = io.read_dataset(args.input)
    out = _begin(args, run, ["estimate.csv", "estimate.csv.json"])
    if args.weights:
        from .seqnet import load_weights, predict_series, window_ends
        ws, std = load_weights(args.weights)
        ends = window_ends(ds.t, ds.rate, ws.spec.T_w)
        W = predict_series(ws, std, ds.theta_e, ends)
        rows = ends + 1
    else:
        rows = np.arange(len(ds))
        W = estimate_wrench_batch(ds.theta_e, run.design, strict=False)
    bad = int((~np.all(np.isfinite(W), axis=1)).sum())
    W = np.nan_to_num(W)
    est = TimeSeriesDataset(ds.t[rows], ds.theta_e[rows], W, ds.rate,
                            {"source": "estimate", "input": str(args.input),
                             "estimator": "network" if args.weights else "analytic",
                             "invalid_rows": bad})
    io.write_dataset(out / "estimate.csv", est, overwrite=True)
    return f"estimate: {len(est)} rows -> {out / 'estimate.csv'} ({bad} invalid)"


def cmd_design(args, run):
    from .design import compare_variants, compute_spec
    grid = run.extra.get("design_grid", {})
    gd = args.grid or grid.get("grid_density", 41)
    wd = args.wrist or grid.get("wrist_density", 7)
    out = _begin(args, run, ["design.csv", "design.json"])
    variants = run.extra.get("variants")
    if variants:
        params = [run.design.scaled(v.get("scale", 1.0))
                  .with_stiffness(run.design.k * v.get("k_factor", 1.0)) for v in variants]
        reports, ratios = compare_variants(params, gd, wd, backend=args.backend)
        ids = [v.get("id", i) for i, v in enumerate(variants)]
    else:
        reports, ratios, ids = [compute_spec(run.design, gd, wd, backend=args.backend)], [None], [0]
    rows = []
    for i, r, ratio in zip(ids, reports, ratios):
        row = {"id": i, **r.flat(), "elapsed_s": r.elapsed_s}
        if ratio:
            row.update({f"ratio_{k}": v for k, v in ratio.items()})
        rows.append(row)
    io.write_table(out / "design.csv", rows)
    io.write_json(out / "design.json", {"reports": [r.to_dict() for r in reports], "ratios": ratios})
    r = reports[0]
    ws = "x".join(f"{v * 1e3:.2f}" for v in r.workspace_aabb)
    return (f"design: {len(reports)} variant(s); Fz [{r.f_range[2][0]:.3f}, {r.f_range[2][1]:.3f}] N "
            f"f_res {r.f_res:.5f} N m_res {r.m_res:.6f} N·m workspace {ws} mm "
            f"({sum(x.elapsed_s for x in reports):.2f} s)")


def cmd_simulate(args, run):
    from dataclasses import replace
    from .plant import simulate_dataset
    cfg = run.plant if args.rate is None else replace(run.plant, sample_rate=args.rate)
    out = _begin(args, run, ["dataset.csv", "dataset.csv.json"])
    ds = simulate_dataset(cfg, args.duration)
    io.write_dataset(out / "dataset.csv", ds)
    return (f"simulate: {len(ds)} rows at {ds.rate:g} Hz -> {out / 'dataset.csv'} "
            f"(clamped {ds.meta['clamped']}, config {ds.meta['config_hash'][:12]})")


def cmd_train(args, run):
    from dataclasses import replace
    from .plant import simulate_dataset
    from .seqnet import save_weights, train
    spec = _model_spec(run, args.model)
    cfg = run.train
    if args.budget is not None:
        cfg = replace(cfg, time_budget_s=args.budget)
    if args.max_epochs is not None:
        cfg = replace(cfg, max_epochs=args.max_epochs)
    out = _begin(args, run, [f"weights_{spec.kind}.json", f"train_{spec.kind}.json"])
    ds = io.read_dataset(args.data) if args.data else simulate_dataset(run.plant, args.duration)
    tr, _ = ds.split(args.split)
    t0 = time.perf_counter()
    ws, std, log = train(spec, tr, cfg, params=run.design)
    elapsed = time.perf_counter() - t0
    save_weights(out / f"weights_{spec.kind}.json", ws, std)
    io.write_json(out / f"train_{spec.kind}.json", {"log": log.to_dict(), "elapsed_s": elapsed,
                                                     "rows": len(tr), "spec": spec.to_dict()})
    return (f"train: {spec.kind} best epoch {log.best_epoch} val {ws.meta['best_val']:.4g} "
            f"in {elapsed:.1f} s -> {out / f'weights_{spec.kind}.json'}")


def cmd_eval(args, run):
    from .evaluation import compare_estimators
    ds = io.read_dataset(args.data)
    if args.split > 0:
        _, ds = ds.split(args.split)
    out = _begin(args, run, ["eval.json", "eval.csv"])
    ws = std = None
    if args.weights:
        from .seqnet import load_weights
        ws, std = load_weights(args.weights)
    fs = _full_scale(run.design)
    res = compare_estimators(ds, run.design, fs, ws, std)
    rows = []
    for name in ("analytic", "network"):
        if name in res:
            rep = res[name]
            for q, vals in zip(rep.percentiles, rep.values):
                rows.append({"estimator": name, "percentile": q,
                             **dict(zip(("fx", "fy", "fz", "mx", "my", "mz"), vals.tolist()))})
    io.write_table(out / "eval.csv", rows)
    io.write_json(out / "eval.json", {k: (v.to_dict() if hasattr(v, "to_dict") else v)
                                      for k, v in res.items()})
    msg = f"eval: {res['samples']} samples; analytic p99 max {res['analytic'].at(99).max():.3f} %FS"
    if "network" in res:
        msg += (f"; network p99 max {res['network'].at(99).max():.3f} %FS "
                f"(worst-axis ratio {res['ratio_p99'].max():.3f})")
    return msg


def cmd_bench(args, run):
    from .bench import kernel_bench
    from .evaluation import latency_bench
    out = _begin(args, run, ["bench.json"])
    ws = None
    if args.weights:
        from .seqnet import load_weights
        ws, _ = load_weights(args.weights)
    lat = {}
    for kind in [k.strip() for k in args.kinds.split(",") if k.strip()]:
        w = ws if ws is not None and ws.spec.kind == kind else None
        iters = args.iterations if kind.startswith("analytic") else min(args.iterations, 500)
        lat[kind] = latency_bench(kind, iters, params=run.design, weights=w, seed=run.seed)
    kern = kernel_bench(seed=run.seed)
    io.write_json(out / "bench.json", {"latency": lat, "kernels": kern})
    parts = [f"{k} {v['rate_hz']:.0f} Hz" for k, v in lat.items()]
    sp = kern["kernels"]["wrench_batch"].get("speedup")
    if sp:
        parts.append(f"wrench_batch compiled x{sp:.1f}")
    return "bench: " + ", ".join(parts)


def cmd_bode(args, run):
    from dataclasses import replace
    from .plant import Dynamics, bode_sweep
    b = run.extra.get("bode", {})
    fmin = args.fmin or b.get("f_min", 10.0)
    fmax = args.fmax or b.get("f_max", 33.0)
    n = args.points or b.get("points", 24)
    amp = args.amplitude or b.get("amplitude", 5.0)
    cfg = run.plant
    if cfg.dynamics is None:
        cfg = replace(cfg, dynamics=Dynamics())
    if cfg.sample_rate <= 2 * fmax:
        cfg = replace(cfg, sample_rate=150.0)
    out = _begin(args, run, ["bode.csv", "bode.json"])
    res = bode_sweep(cfg, np.linspace(fmin, fmax, n), amplitude=amp)
    io.write_table(out / "bode.csv", [{"freq_hz": f, "gain_db": g, "phase_deg": p}
                                      for f, g, p in zip(res.freqs, res.gain_db, res.phase_deg)])
    fc = res.cutoff_hz()
    ph = res.phase_at(fc) if math.isfinite(fc) else float("nan")
    io.write_json(out / "bode.json", {"cutoff_hz": fc, "phase_at_cutoff_deg": ph,
                                      "freqs": res.freqs, "gain_db": res.gain_db,
                                      "phase_deg": res.phase_deg, "sample_rate": cfg.sample_rate,
                                      "amplitude": amp})
    return f"bode: -3 dB at {fc:.2f} Hz, phase {ph:.1f} deg ({n} points {fmin:g}-{fmax:g} Hz)"


def cmd_task(args, run):
    from .control.env import ContactEnvironment
    from .control.tasks import TRACE_COLUMNS, run_task
    env_d = dict(run.env)
    want = "height_field_surface" if args.task == "buffing" else "peg_hole"
    if env_d.get("kind", want) != want:
        env_d = {"kind": want}
    env_d["kind"] = want
    env = ContactEnvironment.from_dict(env_d)
    feedback = not args.no_feedback
    names = [f"task_{args.task}.json"] + [f"trace_{args.task}_{i}.csv" for i in range(args.trials)]
    out = _begin(args, run, names)
    reports = []
    for i in range(args.trials):
        rep = run_task(args.task, env, run.task, seed=io.derive_seed(run.seed, f"task{i}"),
                       feedback=feedback)
        reports.append(rep.to_dict())
        tr = rep.trace
        lines = [",".join(TRACE_COLUMNS)] + [",".join("%.10g" % v for v in row) for row in tr]
        io.atomic_write_text(out / f"trace_{args.task}_{i}.csv", "\n".join(lines) + "\n")
    ok = sum(r["success"] for r in reports)
    io.write_json(out / f"task_{args.task}.json", {"trials": reports, "successes": ok,
                                                   "feedback": feedback, "env": env.to_dict()})
    return f"task: {args.task} {'with' if feedback else 'without'} feedback {ok}/{args.trials} succeeded"


COMMANDS = {"calibrate": cmd_calibrate, "estimate": cmd_estimate, "design": cmd_design,
            "simulate": cmd_simulate, "train": cmd_train, "eval": cmd_eval, "bench": cmd_bench,
            "bode": cmd_bode, "task": cmd_task}


def main(argv=None) -> int:
    ap = build_parser()
    try:
        argv = list(sys.argv[1:] if argv is None else argv)
        args = ap.parse_args(argv)
        args.argv = argv
        if args.command is None:
            raise UsageError(ap.format_usage() + "delta6: error: a command is required")
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:          # --help
        return int(exc.code or 0)
    try:
        run = _run_config(args)
        print(COMMANDS[args.command](args, run))
    except (io.ConfigError, io.FormatError, io.OutputExists) as exc:
        print(f"delta6 {args.command}: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except (ValueError, ArithmeticError, OSError, RuntimeError) as exc:
        print(f"delta6 {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAIL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
