"""Command-line front end.

Subcommands: gen-data, train, eval, invert, simulate, loci, export-maps.
All numeric flags are per-unit. Every command writes a machine-readable
run summary (JSON) beside its primary output and is deterministic given
its flags and --seed.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import dataio, dynamics, inversion, loci, magnetics, training
from .dataio import GridFormatError
from .dynamics import SimulationError
from .gradnet import ModelFormatError
from .inversion import InversionError
from .training import TrainConfig, TrainingDiverged

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _parse_dims(text):
    try:
        dims = tuple(int(v) for v in text.lower().split("x"))
    except ValueError:
        raise UsageError(f"bad grid spec {text!r}; expected e.g. 21x13 or 13x13x12")
    if not dims or any(d < 1 for d in dims) or len(dims) not in (2, 3):
        raise UsageError(f"bad grid spec {text!r}; expected e.g. 21x13 or 13x13x12")
    return dims


def _parse_pair(text, name):
    parts = text.split(",")
    if len(parts) != 2:
        raise UsageError(f"{name} expects 'lo,hi', got {text!r}")
    return float(parts[0]), float(parts[1])


def _parse_floats(text):
    return [float(v) for v in text.split(",") if v.strip()]


def _write_summary(out_path, command, args, outputs, extra=None):
    doc = {"command": command,
           "args": {k: v for k, v in vars(args).items() if k != "func"},
           "outputs": [str(o) for o in outputs]}
    if extra:
        doc.update(extra)
    path = Path(out_path).with_suffix(".run.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1, default=str)
        fh.write("\n")
    return path


def _report_to_dict(report):
    return {name: {"e_rms": r.e_rms, "e_max": r.e_max, "e_std": r.e_std}
            for name, r in report.items()}


# -- subcommands ----------------------------------------------------------------


def cmd_gen_data(args):
    dims = _parse_dims(args.grid)
    d_range = _parse_pair(args.d_range, "--d-range")
    q_range = _parse_pair(args.q_range, "--q-range")
    if args.kind == "saturable":
        if len(dims) != 2:
            raise UsageError("saturable grids are 2-D, e.g. --grid 21x13")
        params = dataio.SaturableParams(
            L_d=args.Ld, L_q=args.Lq, psi_f=args.psif, c_x=args.cx)
        grid = dataio.synth_saturable(dims, params, d_range, q_range,
                                      coords=args.coords)
    elif args.kind == "linear":
        if len(dims) != 2:
            raise UsageError("linear grids are 2-D, e.g. --grid 21x13")
        model = magnetics.MagneticModel("linear", L_d=args.Ld, L_q=args.Lq,
                                        psi_f=args.psif)
        grid = dataio.grid_from_model(model, dims, d_range, q_range,
                                      coords=args.coords)
    else:  # harmonic
        if len(dims) != 3:
            raise UsageError("harmonic grids are 3-D, e.g. --grid 13x13x12")
        teacher = dataio.reference_harmonic_flux_model(
            seed=args.teacher_seed, n_hidden=args.teacher_hidden, k=args.k)
        grid = dataio.grid_from_model(teacher, dims[:2], d_range, q_range,
                                      n_theta=dims[2], coords="current")
    if args.mirror:
        grid = dataio.mirror_q_axis(grid)
    dataio.save_grid(grid, args.out)
    _write_summary(args.out, "gen-data", args, [args.out],
                   {"samples": len(grid), "grid_shape": list(grid.grid_shape)})
    print(f"wrote {len(grid)} samples to {args.out}")
    return EXIT_OK


_UNSUITABLE = {("squareplus", "flux"), ("squareplus", "flux-sym"),
               ("squareplus", "harmonic-flux"),
               ("sigmoid", "current"), ("sigmoid", "current-sym"),
               ("sigmoid", "harmonic-current")}


def cmd_train(args):
    grid = dataio.load_grid(args.data)
    train_grid, holdout = training.subsample(grid, args.stride)
    if (args.activation, args.variant) in _UNSUITABLE:
        print(f"warning: {args.activation} saturates like the wrong map family "
              f"for variant {args.variant}; expect reduced accuracy", file=sys.stderr)
    harmonic = args.variant.startswith("harmonic")
    epochs = args.epochs if args.epochs is not None else (20000 if harmonic else 5000)
    model = magnetics.build_model(args.variant, args.activation, args.hidden,
                                  p=args.p, k=args.k, grid=train_grid, seed=args.seed)
    config = TrainConfig(learning_rate=args.lr, weight_decay=args.decay,
                         epochs=epochs, batch_size=args.batch, seed=args.seed)
    fitted, trace = training.fit(model, train_grid, config, holdout=holdout)
    magnetics.save_model(fitted, args.out)
    trace_path = str(Path(args.out).with_suffix("")) + "_trace.csv"
    trace.to_csv(trace_path)
    full_report = training.evaluate(fitted, grid)
    _write_summary(args.out, "train", args, [args.out, trace_path], {
        "parameter_count": fitted.parameter_count(),
        "train_samples": len(train_grid), "holdout_samples": len(holdout),
        "final_loss": float(trace.loss[-1]) if len(trace) else None,
        "errors_full_dataset": _report_to_dict(full_report)})
    print(f"trained {args.variant}/{args.activation} N={args.hidden} "
          f"({fitted.parameter_count()} parameters) on {len(train_grid)} samples")
    for name, rep in full_report.items():
        print(f"  {name}: e_rms={rep.e_rms:.5f} e_max={rep.e_max:.5f} "
              f"e_std={rep.e_std:.5f} (full dataset)")
    return EXIT_OK


def cmd_eval(args):
    model = magnetics.load_model(args.model)
    grid = dataio.load_grid(args.data)
    report = training.evaluate(model, grid)
    doc = _report_to_dict(report)
    text = json.dumps(doc, indent=1)
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
        _write_summary(args.out, "eval", args, [args.out], {"errors": doc})
    print(text)
    return EXIT_OK


def cmd_invert(args):
    model = magnetics.load_model(args.model)
    target = np.array(_parse_floats(args.target))
    if target.shape != (2,):
        raise UsageError("--target expects 'd,q'")
    direction = args.map
    if direction == "auto":
        direction = "current" if model.is_current_map else "flux"
    if direction == "current":
        x = inversion.invert_current_map(model, target, theta_m=args.theta,
                                         tol=args.tol)
        out = magnetics.current_map(model, x, args.theta)
        doc = {"psi": x.tolist(), "i": out.primal.tolist(), "torque": out.torque}
    else:
        x = inversion.invert_flux_map(model, target, theta_m=args.theta,
                                      tol=args.tol)
        out = magnetics.flux_map(model, x, args.theta)
        doc = {"i": x.tolist(), "psi": out.primal.tolist(), "torque": out.torque}
    text = json.dumps(doc, indent=1)
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
        _write_summary(args.out, "invert", args, [args.out], doc)
    print(text)
    return EXIT_OK


def cmd_simulate(args):
    model = magnetics.load_model(args.model)
    control = magnetics.load_model(args.control_model)
    config = dynamics.SimConfig(R_s=args.rs, inertia_H=args.inertia,
                                load_torque=args.load, dt=args.dt,
                                t_end=args.t_end, max_current=args.imax,
                                speed_ref=args.speed_ref)
    trace = dynamics.run_acceleration(model, control, config)
    trace.to_csv(args.out)
    residual = dynamics.energy_balance_residual(model, config, trace)
    extra = {"final_speed": float(trace.omega[-1]),
             "energy_balance_residual": residual}
    try:
        extra["ripple_peak_order"] = dynamics.ripple_peak_order(trace)
    except ValueError:
        extra["ripple_peak_order"] = None
    _write_summary(args.out, "simulate", args, [args.out], extra)
    print(f"simulated {config.t_end:.1f} p.u. time, final speed "
          f"{extra['final_speed']:.4f}, energy residual {residual:.2e}")
    return EXIT_OK


def cmd_loci(args):
    model = magnetics.load_model(args.model)
    outputs = []
    prefix = args.out
    if args.torque_levels:
        pts = loci.mtpa_locus(model, _parse_floats(args.torque_levels),
                              i_max=args.search_imax)
        path = f"{prefix}_mtpa.csv"
        _write_locus_csv(path, pts)
        outputs.append(path)
    if args.flux_levels:
        pts = loci.mtpv_locus(model, _parse_floats(args.flux_levels))
        path = f"{prefix}_mtpv.csv"
        _write_locus_csv(path, pts)
        outputs.append(path)
    for i_max in _parse_floats(args.imax) if args.imax else []:
        cur, psi, tau = loci.current_limit_curve(model, i_max, n_points=args.points)
        path = f"{prefix}_limit_{i_max:g}.csv"
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("i_d,i_q,psi_d,psi_q,tau\n")
            for j in range(len(tau)):
                fh.write(",".join(repr(float(v)) for v in
                                  (cur[j, 0], cur[j, 1], psi[j, 0], psi[j, 1],
                                   tau[j])) + "\n")
        outputs.append(path)
    if not outputs:
        raise UsageError("nothing to do: give --torque-levels, --flux-levels "
                         "and/or --imax")
    _write_summary(outputs[0], "loci", args, outputs)
    print(f"wrote {len(outputs)} locus file(s) with prefix {prefix}")
    return EXIT_OK


def _write_locus_csv(path, points):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("i_d,i_q,psi_d,psi_q,tau\n")
        for p in points:
            fh.write(",".join(repr(float(v)) for v in
                              (p.i[0], p.i[1], p.psi[0], p.psi[1], p.tau)) + "\n")


def cmd_export_maps(args):
    model = magnetics.load_model(args.model)
    dims = _parse_dims(args.grid)
    d_range = _parse_pair(args.d_range, "--d-range")
    q_range = _parse_pair(args.q_range, "--q-range")
    n_theta = dims[2] if len(dims) == 3 else None
    if model.is_harmonic and n_theta is None:
        raise UsageError("harmonic models need a 3-D grid, e.g. 61x61x30")
    grid = dataio.grid_from_model(model, dims[:2], d_range, q_range,
                                  n_theta=n_theta)
    dataio.save_grid(grid, args.out)
    _write_summary(args.out, "export-maps", args, [args.out],
                   {"samples": len(grid)})
    print(f"exported {len(grid)} model predictions to {args.out}")
    return EXIT_OK


# -- parser ----------------------------------------------------------------------


def build_parser():
    parser = _Parser(prog="gradmag", description=__doc__,
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate synthetic ground-truth grids",
                       description="Dataset CSV schema: '# gradmag-grid v1 "
                                   "kind=... dims=...' header, then columns "
                                   "psi_d,psi_q,i_d,i_q[,theta_m][,tau].")
    p.add_argument("--kind", choices=("saturable", "linear", "harmonic"),
                   required=True)
    p.add_argument("--grid", required=True, help="e.g. 21x13 or 13x13x12")
    p.add_argument("--out", required=True)
    p.add_argument("--d-range", default="-1.5,1.5")
    p.add_argument("--q-range", default="0.0,1.5")
    p.add_argument("--coords", choices=("current", "flux"), default="current")
    p.add_argument("--Ld", type=float, default=0.36)
    p.add_argument("--Lq", type=float, default=0.84)
    p.add_argument("--psif", type=float, default=0.40)
    p.add_argument("--cx", type=float, default=0.10,
                   help="cross-saturation strength (saturable)")
    p.add_argument("--k", type=int, default=6)
    p.add_argument("--teacher-seed", type=int, default=2024)
    p.add_argument("--teacher-hidden", type=int, default=24)
    p.add_argument("--mirror", action="store_true",
                   help="complete a q>=0 half grid by reflection")
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="fit a magnetic model to a grid dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True, help="model document (JSON) path")
    p.add_argument("--variant", required=True, choices=(
        "current", "current-sym", "flux", "flux-sym",
        "harmonic-current", "harmonic-flux"))
    p.add_argument("--activation", required=True,
                   choices=("squareplus", "sigmoid", "softmax", "pnorm"))
    p.add_argument("--hidden", type=int, required=True, help="hidden units N")
    p.add_argument("--p", type=int, default=8)
    p.add_argument("--k", type=int, default=6)
    p.add_argument("--stride", type=int, default=1,
                   help="train on every stride-th sample, hold out the rest")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epochs", type=int, default=None,
                   help="default 5000 (2-D) or 20000 (harmonic)")
    p.add_argument("--lr", type=float, default=1e-2)
    p.add_argument("--decay", type=float, default=1e-4)
    p.add_argument("--batch", type=int, default=0, help="0 = full batch")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="error metrics of a model over a dataset")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("invert", help="solve the map for the given target")
    p.add_argument("--model", required=True)
    p.add_argument("--target", required=True, help="'d,q' target vector")
    p.add_argument("--theta", type=float, default=0.0)
    p.add_argument("--tol", type=float, default=1e-9)
    p.add_argument("--map", choices=("auto", "current", "flux"), default="auto")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_invert)

    p = sub.add_parser("simulate", help="closed-loop acceleration run")
    p.add_argument("--model", required=True, help="plant (current-map variant)")
    p.add_argument("--control-model", required=True, help="flux-map variant")
    p.add_argument("--out", required=True, help="trace CSV path")
    p.add_argument("--speed-ref", type=float, default=1.0)
    p.add_argument("--imax", type=float, default=2.0)
    p.add_argument("--t-end", type=float, default=377.0)
    p.add_argument("--dt", type=float, default=2.0 * np.pi / 1000.0)
    p.add_argument("--rs", type=float, default=0.04)
    p.add_argument("--inertia", type=float, default=18.85)
    p.add_argument("--load", type=float, default=0.0)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("loci", help="MTPA/MTPV trajectories and current limits")
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True, help="output path prefix")
    p.add_argument("--torque-levels", default=None, help="comma-separated")
    p.add_argument("--flux-levels", default=None, help="comma-separated")
    p.add_argument("--imax", default=None, help="comma-separated current limits")
    p.add_argument("--points", type=int, default=181)
    p.add_argument("--search-imax", type=float, default=3.0,
                   help="current-magnitude search bound for MTPA")
    p.set_defaults(func=cmd_loci)

    p = sub.add_parser("export-maps", help="dense model predictions for plotting")
    p.add_argument("--model", required=True)
    p.add_argument("--grid", required=True, help="e.g. 61x61 or 61x61x30")
    p.add_argument("--out", required=True)
    p.add_argument("--d-range", default="-1.0,1.0")
    p.add_argument("--q-range", default="-1.0,1.0")
    p.set_defaults(func=cmd_export_maps)

    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args) or EXIT_OK
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (GridFormatError, ModelFormatError, FileNotFoundError, IsADirectoryError,
            PermissionError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (TrainingDiverged, InversionError, SimulationError,
            np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
