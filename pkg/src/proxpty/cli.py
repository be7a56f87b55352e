"""Command line: ``proxpty {simulate,reconstruct,evaluate,benchmark}``.

Exit codes: 0 success, 1 runtime failure, 2 bad arguments.
"""

import argparse
import json
import math
import platform
import sys
import threading
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np
import scipy

from . import __version__, kernels
from .dataset import BadMagicError, Dataset, read_dataset, write_dataset
from .engines import ALGORITHMS, EngineConfig, run
from .estimators import DEFAULT_EPSILON, NoiseModel
from .files import export_field, load_field, read_pgm, write_manifest, write_trace
from .metrics import fit_ambiguity, illuminated_mask, rmse
from .sim import SimulationSpec, phantom_images, simulate


class UsageError(Exception):
    """Bad combination of otherwise well-formed flags (exit code 2)."""


def _float_list(raw):
    return [float(v) for v in raw.split(",") if v.strip()]


def _name_list(raw):
    names = [v.strip().lower() for v in raw.split(",") if v.strip()]
    for name in names:
        if name not in ALGORITHMS:
            raise argparse.ArgumentTypeError(f"unknown algorithm {name!r}")
    return names


def _fmt(value, digits=10):
    if value is None:
        return ""
    if math.isinf(value):
        return "inf" if value > 0 else "-inf"
    if math.isnan(value):
        return "nan"
    return repr(round(float(value), digits) + 0.0)


def _add_sim_flags(p, with_counts=True):
    p.add_argument("--amp", help="amplitude source image (PGM); default: built-in phantom")
    p.add_argument("--phase", help="phase source image (PGM); default: built-in phantom")
    p.add_argument("--phantom-size", type=int, default=128, help="size of the built-in phantom")
    p.add_argument("--phase-range", type=float, default=1.0, help="radians spanned by the phase image")
    p.add_argument("--probe-kind", choices=("focused", "disk"), default="focused")
    p.add_argument("--probe-radius", type=float, default=3.7, help="probe half width (pixels)")
    p.add_argument("--probe-size", type=int, default=32, help="probe window / detector size")
    p.add_argument("--c", type=float, default=4.0, help="Fermat scan constant (pixels)")
    p.add_argument("--k", type=int, default=300, help="number of scan positions")
    if with_counts:
        p.add_argument("--max-counts", type=float, default=1e4)
    p.add_argument("--noise", choices=("poisson", "none"), default="poisson")
    p.add_argument("--amp-min", type=float, default=0.1)
    p.add_argument("--no-pad", action="store_true",
                   help="fail instead of mirror-padding images the scan does not fit in")
    p.add_argument("--seed", type=int, default=0)


def _add_engine_flags(p, single=True):
    if single:
        p.add_argument("--algo", choices=ALGORITHMS, default="apg")
    p.add_argument("--model", choices=("gaussian", "poisson"), default="poisson")
    p.add_argument("--lambda", dest="lam", type=float, default=None, help="initial lambda (default 1)")
    p.add_argument("--beta", type=float, default=None)
    p.add_argument("--delta", type=float, default=None)
    p.add_argument("--tmax", type=int, default=100)
    p.add_argument("--inner-iters", type=int, default=1)
    p.add_argument("--no-momentum", action="store_true")
    p.add_argument("--max-backtracks", type=int, default=20)
    p.add_argument("--epsilon", type=float, default=DEFAULT_EPSILON)
    p.add_argument("--init-probe-radius", type=float, default=None,
                   help="radius of the disk initial probe (default window/4)")
    p.add_argument("--probe-update-start", type=int, default=0,
                   help="iteration from which the probe is refined")


def build_parser():
    parser = argparse.ArgumentParser(prog="proxpty", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"proxpty {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="simulate a noisy ptychography dataset")
    _add_sim_flags(p)
    p.add_argument("--out", required=True, help="output .ptyx dataset")
    p.add_argument("--truth-prefix", help="also export the true object/probe with this path prefix")

    p = sub.add_parser("reconstruct", help="run a reconstruction engine on a dataset")
    p.add_argument("--config", help="JSON file of flag defaults (keys as flag names)")
    p.add_argument("--data", required=True)
    _add_engine_flags(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", required=True)

    p = sub.add_parser("evaluate", help="RMSE of a reconstruction against the truth")
    p.add_argument("--recon", required=True, help="raw field prefix or .ptyx file")
    p.add_argument("--truth", required=True, help="raw field prefix or .ptyx file with a true object")
    p.add_argument("--crop", choices=("illuminated", "full"), default=None)
    p.add_argument("--data", help="dataset supplying the scan geometry for --crop illuminated")

    p = sub.add_parser("benchmark", help="RMSE over a grid of algorithms and signal levels")
    p.add_argument("--algos", type=_name_list, default=["pm", "madmm", "apg"])
    p.add_argument("--max-counts", type=_float_list, default=[1e2, 1e3, 1e4, 1e5, 1e6])
    _add_sim_flags(p, with_counts=False)
    _add_engine_flags(p, single=False)
    p.add_argument("--out", required=True, help="output CSV")
    return parser


def _load_images(args):
    if (args.amp is None) != (args.phase is None):
        raise UsageError("--amp and --phase must be given together")
    if args.amp is None:
        return phantom_images(args.phantom_size, args.seed)
    return read_pgm(args.amp), read_pgm(args.phase)


def _sim_spec(args, max_counts):
    return SimulationSpec(
        phase_range=args.phase_range, probe_kind=args.probe_kind, probe_radius=args.probe_radius,
        probe_size=args.probe_size, c=args.c, K=args.k, max_counts=max_counts, noise=args.noise,
        seed=args.seed, amp_min=args.amp_min, pad_to_fit=not args.no_pad,
    )


def _engine_config(args, algo):
    return EngineConfig(
        algorithm=algo,
        noise_model=NoiseModel.parse(args.model, args.epsilon),
        lambda0=1.0 if args.lam is None else args.lam,
        beta=args.beta, delta=args.delta, t_max=args.tmax, inner_iters=args.inner_iters,
        momentum=not args.no_momentum, max_backtracks=args.max_backtracks,
        seed=getattr(args, "seed", 0), probe_radius=args.init_probe_radius,
        probe_update_start=args.probe_update_start,
    )


def cmd_simulate(args):
    amp, phase = _load_images(args)
    ds = simulate(_sim_spec(args, args.max_counts), amp, phase)
    write_dataset(args.out, ds)
    if args.truth_prefix:
        export_field(args.truth_prefix + "_object", ds.truth_object)
        export_field(args.truth_prefix + "_probe", ds.truth_probe)
    print(f"snr_db={_fmt(ds.snr_db, 4)}")
    print(f"K={ds.K} object={ds.positions.object_shape[0]}x{ds.positions.object_shape[1]}")
    return 0


def _lambda_warning(args, algo):
    if args.lam is not None and algo in ("dm", "er"):
        print(f"warning: --lambda is ignored by {algo} (no lambda parameter)", file=sys.stderr)


def _versions():
    return {
        "proxpty_version": __version__,
        "numpy_version": np.__version__,
        "scipy_version": scipy.__version__,
        "python_version": platform.python_version(),
        "kernel_backend": kernels.BACKEND,
    }


def cmd_reconstruct(args):
    _lambda_warning(args, args.algo)
    ds = read_dataset(args.data)
    cfg = _engine_config(args, args.algo)
    truth = None if ds.truth_object is None else ds.truth_object.astype(np.complex128)
    state, trace = run(ds, cfg, ground_truth=truth)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    export_field(out / "object", state.obj)
    export_field(out / "probe", state.probe)
    if state.best_obj is not None:
        export_field(out / "best_object", state.best_obj)
        export_field(out / "best_probe", state.best_probe)
    write_trace(out / "trace.csv", trace)
    manifest = {"command": "reconstruct"}
    manifest.update({f"flag.{k}": v for k, v in sorted(vars(args).items()) if k not in ("func", "command")})
    manifest.update(_versions())
    manifest.update({
        "iterations": state.t,
        "final_nll": trace[-1].nll if trace else "",
        "final_rmse": "" if not trace or trace[-1].rmse is None else trace[-1].rmse,
        "final_lambda": state.lambda_t,
        "best_nll": state.best_nll if trace else "",
        "exhausted_backtracks": sum(r.exhausted for r in trace),
    })
    write_manifest(out / "manifest.txt", manifest)
    if trace:
        print(f"final_nll={trace[-1].nll!r}")
        if trace[-1].rmse is not None:
            print(f"final_rmse={trace[-1].rmse!r}")
    return 0


def _is_dataset(path):
    try:
        with open(path, "rb") as fh:
            return fh.read(4) == b"PTYX"
    except (IsADirectoryError, FileNotFoundError):
        return False


def _load_object(path, role):
    if _is_dataset(path):
        ds = read_dataset(path)
        if ds.truth_object is None:
            raise UsageError(f"{path}: dataset has no true object to use as {role}")
        return ds.truth_object.astype(np.complex128), ds
    return load_field(path), None


def cmd_evaluate(args):
    truth, truth_ds = _load_object(args.truth, "truth")
    recon, _ = _load_object(args.recon, "reconstruction")
    if truth.shape != recon.shape:
        print(f"error: shape mismatch {recon.shape} vs {truth.shape}", file=sys.stderr)
        return 1
    geometry = read_dataset(args.data) if args.data else truth_ds
    crop = args.crop or ("illuminated" if geometry is not None else "full")
    mask = None
    if crop == "illuminated":
        if geometry is None:
            raise UsageError("--crop illuminated needs --data or a .ptyx truth file")
        if geometry.positions.object_shape != truth.shape:
            raise UsageError("dataset geometry does not match the field shape")
        if geometry.truth_probe is not None:
            mask = illuminated_mask(geometry.truth_probe, geometry.positions)
        else:
            mask = geometry.positions.coverage()
    ref = truth if mask is None else truth[mask]
    obs = recon if mask is None else recon[mask]
    a = fit_ambiguity(ref, obs)
    # raw fields are float32, so digits past the sixth decimal are storage noise
    print(f"rmse={_fmt(rmse(truth, recon, mask), 6)}")
    print(f"a_real={_fmt(a.real, 6)}")
    print(f"a_imag={_fmt(a.imag, 6)}")
    print(f"crop={crop}")
    return 0


BENCH_COLUMNS = ("algo", "max_counts", "snr_db", "final_rmse", "iterations", "wall_time", "error")


def benchmark_rows(args, images=None):
    """Simulate once per signal level, reconstruct with every algorithm.

    Rows come back in grid order (signal level major, algorithm minor)
    whatever the number of worker threads.
    """
    amp, phase = images if images is not None else _load_images(args)
    datasets = {}
    for mc in args.max_counts:
        datasets[mc] = simulate(_sim_spec(args, mc), amp, phase)
    cells = [(mc, algo) for mc in args.max_counts for algo in args.algos]

    def cell(item):
        mc, algo = item
        ds = datasets[mc]
        row = {"algo": algo, "max_counts": mc, "snr_db": ds.snr_db, "final_rmse": None,
               "iterations": 0, "wall_time": 0.0, "error": ""}
        start = time.perf_counter()
        try:
            cfg = _engine_config(args, algo)
            state, trace = run(ds, cfg, ground_truth=ds.truth_object.astype(np.complex128))
            row["final_rmse"] = trace[-1].rmse if trace else None
            row["iterations"] = state.t
        except Exception as exc:  # recorded per row, reported via exit code
            row["error"] = f"{type(exc).__name__}: {exc}"
        row["wall_time"] = time.perf_counter() - start
        return row

    workers = 1 if kernels.deterministic() else min(kernels.thread_count(), len(cells))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(cell, cells))
    return [cell(c) for c in cells]


def write_benchmark(path, rows):
    with open(path, "w") as fh:
        fh.write(",".join(BENCH_COLUMNS) + "\n")
        for row in rows:
            cells = []
            for key in BENCH_COLUMNS:
                v = row[key]
                if v is None:
                    cells.append("")
                elif isinstance(v, float):
                    cells.append(_fmt(v, 17) if math.isinf(v) or math.isnan(v) else repr(v))
                else:
                    cells.append(str(v).replace(",", ";").replace("\n", " "))
            fh.write(",".join(cells) + "\n")


def cmd_benchmark(args):
    for algo in args.algos:
        _lambda_warning(args, algo)
    rows = benchmark_rows(args)
    write_benchmark(args.out, rows)
    failed = [r for r in rows if r["error"]]
    for r in rows:
        status = r["error"] or f"rmse={_fmt(r['final_rmse'], 6)}"
        print(f"{r['algo']:6s} max_counts={r['max_counts']:g} snr_db={_fmt(r['snr_db'], 2)} {status}")
    return 1 if failed else 0


COMMANDS = {
    "simulate": cmd_simulate,
    "reconstruct": cmd_reconstruct,
    "evaluate": cmd_evaluate,
    "benchmark": cmd_benchmark,
}


def _apply_config(parser, argv):
    """Re-parse with defaults from ``--config`` so explicit flags still win."""
    args = parser.parse_args(argv)
    path = getattr(args, "config", None)
    if not path:
        return args
    try:
        overrides = json.loads(Path(path).read_text())
    except (OSError, ValueError) as exc:
        parser.error(f"cannot read config {path}: {exc}")
    if not isinstance(overrides, dict):
        parser.error("config file must hold a JSON object")
    sub = parser._subparsers._group_actions[0].choices[args.command]
    known = {a.dest for a in sub._actions}
    defaults = {}
    for key, value in overrides.items():
        dest = key.lstrip("-").replace("-", "_")
        dest = "lam" if dest == "lambda" else dest
        if dest not in known:
            parser.error(f"unknown config key {key!r}")
        defaults[dest] = value
    sub.set_defaults(**defaults)
    return parser.parse_args(argv)


def main(argv=None):
    parser = build_parser()
    args = _apply_config(parser, argv)
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
