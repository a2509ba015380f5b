"""Command-line surface emitting CSV artifacts for the testbed experiments.

Subcommands: `filterbank` (radial gain profiles), `sweep` (policy / ratio /
seed grids with PSNR against full compute), `replay` (distance curves over
a recorded SEATRAJ file), and `gate-trace` (per-step decisions and refresh
heatmaps).  Every output CSV gets a `<out>.manifest.json` sidecar capturing
the resolved configuration.

Exit codes: 0 success, 1 usage error, 2 capability or format error,
3 internal error.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys

import numpy as np

from . import __version__
from .gate import delta_for_target_ratio, refresh_heatmap, simulate_gate, trace_timesteps
from .metric import DEFAULT_CUTOFF_FRACTION, DEFAULT_POLY_DEGREE, DEFAULT_XI, DistanceSeries, MetricKind, fit_poly, series_from_features
from .schedule import ScheduleKind, make_dpm_schedule, make_rf_schedule
from .spectrum import GridRank, PowerLawPrior, build_filter_bank, radial_grid
from .synthetic import FullCompute, MetricPolicy, OraclePolicy, SamplerConfig, make_run_inputs, psnr, run_sampler
from .trajectory import CapabilityError, FeatureSide, TrajectoryFormatError, read_trajectory, replay_distances

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_CAPABILITY = 2
EXIT_INTERNAL = 3

_METRIC_NAMES = {
    "raw": MetricKind.raw,
    "sea": MetricKind.sea,
    "one-minus-sea": MetricKind.one_minus_sea,
    "sea-unnorm": MetricKind.sea_unnormalized,
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _csv_list(text: str) -> list[str]:
    return [item.strip() for item in text.split(",") if item.strip()]


def _float_list(text: str) -> list[float]:
    return [float(item) for item in _csv_list(text)]


def _int_list(text: str) -> list[int]:
    return [int(item) for item in _csv_list(text)]


def _make_schedule(name: str, T: int):
    kind = {
        "rf": ScheduleKind.RECTIFIED_FLOW,
        "dpm-linear": ScheduleKind.DPM_LINEAR,
        "dpm-cosine": ScheduleKind.DPM_COSINE,
    }.get(name)
    if kind is None:
        raise UsageError(f"unknown schedule {name!r}")
    if kind is ScheduleKind.RECTIFIED_FLOW:
        return make_rf_schedule(T)
    return make_dpm_schedule(kind, T)


def _make_grid(args):
    if args.frames is not None:
        return radial_grid(GridRank.SPATIOTEMPORAL_3D, (args.frames, args.height, args.width))
    return radial_grid(GridRank.SPATIAL_2D, (args.height, args.width))


def _make_prior(args, grid):
    beta = args.beta
    if beta is None:
        beta = 2.0 if grid.rank is GridRank.SPATIAL_2D else 3.0
    return PowerLawPrior(A=args.amp, beta=beta)


def _parse_metric_kind(name: str, args) -> MetricKind:
    if name in _METRIC_NAMES:
        return _METRIC_NAMES[name]()
    if name.startswith("lpf"):
        digits = name[3:]
        if digits:
            return MetricKind.lpf_cutoff(int(digits) / 100.0)
        return MetricKind.lpf_cutoff(args.cutoff)
    if name == "poly":
        if getattr(args, "poly_coeffs", None):
            return MetricKind.poly_fitted(args.poly_coeffs)
        return None  # resolved later against a fitted polynomial
    raise UsageError(f"unknown metric kind {name!r}")


def _write_manifest(out_path: str, subcommand: str, params: dict) -> None:
    manifest = {"subcommand": subcommand, "parameters": params, "tool_version": __version__}
    with open(out_path + ".manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True, default=str)
        fh.write("\n")


def _write_csv(out_path: str, header: list[str], rows: list[list]) -> None:
    with open(out_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _resolve_seeds(args) -> list[int]:
    if args.seed_list is not None:
        return args.seed_list
    return list(range(args.seeds))


# --------------------------------------------------------------------------
# filterbank


def cmd_filterbank(args) -> int:
    schedule = _make_schedule(args.schedule, args.steps)
    grid = _make_grid(args)
    prior = _make_prior(args, grid)
    bank = build_filter_bank(schedule, grid, prior)
    timesteps = args.t if args.t is not None else list(range(schedule.T + 1))
    bad = [t for t in timesteps if not 0 <= t <= schedule.T]
    if bad:
        raise UsageError(f"timesteps {bad} outside [0, {schedule.T}]")
    radius = grid.bin_radius()
    rows = []
    for t in timesteps:
        raw_profile = grid.bin_mean(bank.gains_raw[t])
        norm_profile = grid.bin_mean(bank.filters[t])
        for bin_idx in range(grid.L):
            rows.append([t, bin_idx, f"{radius[bin_idx]:.10g}",
                         f"{raw_profile[bin_idx]:.10g}", f"{norm_profile[bin_idx]:.10g}"])
    _write_csv(args.out, ["t", "bin", "radius", "gain_raw", "gain_norm"], rows)
    _write_manifest(args.out, "filterbank", {
        "schedule": args.schedule, "steps": args.steps, "beta": prior.beta, "amp": prior.A,
        "shape": list(grid.shape), "t": timesteps,
    })
    return EXIT_OK


# --------------------------------------------------------------------------
# sweep


def _parse_policies(names: list[str], args):
    policies = []
    for name in names:
        if name == "full":
            policies.append(("full", None))
        elif name in ("oracle-sea", "oracle-raw"):
            policies.append((name, None))
        else:
            kind = _parse_metric_kind(name, args)
            policies.append((name, kind))
    return policies


def cmd_sweep(args) -> int:
    schedule = _make_schedule(args.schedule, args.steps)
    grid = _make_grid(args)
    prior = _make_prior(args, grid)
    bank = build_filter_bank(schedule, grid, prior)
    seeds = _resolve_seeds(args)
    policies = _parse_policies(args.policy, args)
    deltas = args.delta if args.delta is not None else [None]
    ratios = args.target_ratio if args.target_ratio is not None else [None]
    if args.delta is not None and args.target_ratio is not None:
        raise UsageError("give either --delta or --target-ratio, not both")

    rows = []
    for seed in seeds:
        x0, noise = make_run_inputs(seed, grid, args.channels, prior)
        full_cfg = SamplerConfig(schedule=schedule, bank=bank, policy=FullCompute(), xi=args.xi, seed=seed)
        full = run_sampler(full_cfg, x0, noise)
        for name, kind in policies:
            if name == "full":
                rows.append([seed, name, "", 1.0, f"{psnr(full.final, full.final):.6f}"])
                continue
            for delta in deltas:
                for ratio in ratios:
                    if name.startswith("oracle"):
                        if ratio is None:
                            raise UsageError("oracle policies need --target-ratio")
                        policy = OraclePolicy(filtered=name == "oracle-sea", target_ratio=ratio)
                    else:
                        resolved_kind = kind
                        if resolved_kind is None:  # poly without explicit coefficients
                            raw_in = series_from_features(full.inputs, bank, MetricKind.raw(), args.xi)
                            raw_out = series_from_features(full.outputs, bank, MetricKind.raw(), args.xi)
                            coeffs = fit_poly(raw_in, raw_out, args.poly_degree)
                            resolved_kind = MetricKind.poly_fitted(coeffs)
                        if delta is not None:
                            policy = MetricPolicy(kind=resolved_kind, delta=delta)
                        elif ratio is not None:
                            policy = MetricPolicy(kind=resolved_kind, target_ratio=ratio)
                        else:
                            raise UsageError("metric policies need --delta or --target-ratio")
                    cfg = SamplerConfig(schedule=schedule, bank=bank, policy=policy, xi=args.xi, seed=seed)
                    result = run_sampler(cfg, x0, noise)
                    rows.append([seed, name, f"{result.delta:.10g}",
                                 f"{result.trace.refresh_ratio:.6f}",
                                 f"{psnr(result.final, full.final):.6f}"])
    _write_csv(args.out, ["seed", "policy", "delta", "refresh_ratio", "psnr_db"], rows)
    _write_manifest(args.out, "sweep", {
        "schedule": args.schedule, "steps": args.steps, "beta": prior.beta, "amp": prior.A,
        "shape": list(grid.shape), "channels": args.channels, "xi": args.xi,
        "policies": args.policy, "delta": args.delta, "target_ratio": args.target_ratio,
        "seeds": seeds, "cutoff": args.cutoff, "poly_degree": args.poly_degree,
    })
    return EXIT_OK


# --------------------------------------------------------------------------
# replay


def _replay_kinds(args, traj, bank):
    names = args.policy if args.policy != ["all"] else ["raw", "sea", "one-minus-sea", "sea-unnorm", "lpf"]
    explicit_poly = "poly" in args.policy
    want_poly = explicit_poly or args.policy == ["all"]
    kinds = []
    for name in names:
        if name == "poly":
            continue
        kinds.append(_parse_metric_kind(name, args))
    poly_kind = None
    if want_poly:
        if args.poly_coeffs:
            poly_kind = MetricKind.poly_fitted(args.poly_coeffs)
        else:
            have_outputs = all(s.output is not None for s in traj.steps)
            if have_outputs:
                series = replay_distances(traj, bank, [MetricKind.raw()], FeatureSide.INPUT, args.xi)
                out_series = replay_distances(traj, bank, [MetricKind.raw()], FeatureSide.OUTPUT, args.xi)
                coeffs = fit_poly(series[MetricKind.raw()], out_series[MetricKind.raw()], args.poly_degree)
                poly_kind = MetricKind.poly_fitted(coeffs)
            elif explicit_poly:
                raise UsageError("poly kind needs --poly-coeffs or a trajectory with outputs to fit against")
    if poly_kind is not None:
        kinds.append(poly_kind)
    return kinds


def cmd_replay(args) -> int:
    traj = read_trajectory(args.traj)
    rank = GridRank.SPATIAL_2D if traj.rank == 2 else GridRank.SPATIOTEMPORAL_3D
    grid = radial_grid(rank, traj.grid_shape)
    beta = args.beta if args.beta is not None else (2.0 if traj.rank == 2 else 3.0)
    prior = PowerLawPrior(A=args.amp, beta=beta)
    bank = build_filter_bank(traj.schedule, grid, prior)
    feature = FeatureSide(args.feature)
    kinds = _replay_kinds(args, traj, bank)
    series = replay_distances(traj, bank, kinds, feature, args.xi)
    rows = []
    for kind in kinds:
        ds = series[kind]
        for t, value in zip(ds.t, ds.values):
            rows.append([int(t), kind.name, f"{value:.10g}"])
    _write_csv(args.out, ["t", "kind", "value"], rows)

    if args.target_ratio and all(s.output is not None for s in traj.steps):
        sched_rows = []
        out_series = replay_distances(traj, bank, [MetricKind.sea(), MetricKind.raw()], FeatureSide.OUTPUT, args.xi)
        for ratio in args.target_ratio:
            for kind, label in ((MetricKind.sea(), "oracle-sea"), (MetricKind.raw(), "oracle-raw")):
                inv = delta_for_target_ratio(out_series[kind], ratio)
                trace = simulate_gate(out_series[kind], inv.delta, force_first=True)
                for t, decision in zip(trace_timesteps(trace, out_series[kind]), trace.decisions):
                    sched_rows.append([f"{ratio:.6g}", label, int(t), decision.value])
        _write_csv(args.out + ".schedules.csv", ["target_ratio", "criterion", "t", "decision"], sched_rows)

    _write_manifest(args.out, "replay", {
        "traj": args.traj, "beta": prior.beta, "amp": prior.A, "xi": args.xi,
        "feature": args.feature, "policies": args.policy,
        "target_ratio": args.target_ratio, "cutoff": args.cutoff,
        "poly_degree": args.poly_degree, "poly_coeffs": args.poly_coeffs,
    })
    return EXIT_OK


# --------------------------------------------------------------------------
# gate-trace


def _series_from_csv(path: str) -> list[tuple[str, DistanceSeries]]:
    by_kind: dict[str, tuple[list[int], list[float]]] = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"t", "kind", "value"} <= set(reader.fieldnames):
            raise CapabilityError(f"{path}: expected CSV columns t, kind, value")
        for row in reader:
            ts, vs = by_kind.setdefault(row["kind"], ([], []))
            ts.append(int(row["t"]))
            vs.append(float(row["value"]))
    out = []
    for kind_name, (ts, vs) in sorted(by_kind.items()):
        order = np.argsort(ts)[::-1]  # sampling order: descending t
        series = DistanceSeries(values=np.asarray(vs)[order], kind=MetricKind.raw(), t=np.asarray(ts)[order])
        out.append((f"{path}:{kind_name}", series))
    return out


def cmd_gate_trace(args) -> int:
    # each run is (run_id, series, trace); trace is None when it still needs gating
    runs = []
    if args.distances:
        for path in args.distances:
            for run_id, series in _series_from_csv(path):
                runs.append((run_id, series, None))
    elif args.traj:
        traj = read_trajectory(args.traj)
        rank = GridRank.SPATIAL_2D if traj.rank == 2 else GridRank.SPATIOTEMPORAL_3D
        grid = radial_grid(rank, traj.grid_shape)
        beta = args.beta if args.beta is not None else (2.0 if traj.rank == 2 else 3.0)
        bank = build_filter_bank(traj.schedule, grid, PowerLawPrior(A=args.amp, beta=beta))
        kind = _parse_metric_kind(args.policy[0], args)
        series = replay_distances(traj, bank, [kind], FeatureSide(args.feature), args.xi)[kind]
        runs.append((f"{args.traj}:{kind.name}", series, None))
    elif args.synthetic:
        schedule = _make_schedule(args.schedule, args.steps)
        grid = _make_grid(args)
        prior = _make_prior(args, grid)
        bank = build_filter_bank(schedule, grid, prior)
        kind = _parse_metric_kind(args.policy[0], args)
        for seed in _resolve_seeds(args):
            x0, noise = make_run_inputs(seed, grid, args.channels, prior)
            if args.delta is not None:
                policy = MetricPolicy(kind=kind, delta=args.delta[0])
            elif args.target_ratio is not None:
                policy = MetricPolicy(kind=kind, target_ratio=args.target_ratio[0])
            else:
                raise UsageError("synthetic gate traces need --delta or --target-ratio")
            cfg = SamplerConfig(schedule=schedule, bank=bank, policy=policy, xi=args.xi, seed=seed)
            result = run_sampler(cfg, x0, noise)
            runs.append((f"seed{seed}:{kind.name}", result.distances, result.trace))
    else:
        raise UsageError("gate-trace needs --distances, --traj, or --synthetic")

    rows = []
    traces = []
    for run_id, series, trace in runs:
        if trace is None:
            if args.delta is None:
                raise UsageError("--delta is required to gate recorded distance series")
            trace = simulate_gate(series, args.delta[0], force_first=not args.no_force_first)
        traces.append(trace)
        for t, decision, acc in zip(trace_timesteps(trace, series), trace.decisions, trace.accumulator_after):
            rows.append([run_id, int(t), decision.value, f"{acc:.10g}"])
    _write_csv(args.out, ["run", "t", "decision", "accumulator_after"], rows)

    if len(traces) > 1 and len({len(tr) for tr in traces}) == 1:
        heat = refresh_heatmap(traces)
        ts = trace_timesteps(traces[0], runs[0][1])
        heat_rows = [[int(t), f"{frac:.6f}"] for t, frac in zip(ts, heat)]
        _write_csv(args.out + ".heatmap.csv", ["t", "refresh_fraction"], heat_rows)

    _write_manifest(args.out, "gate-trace", {
        "distances": args.distances, "traj": args.traj, "synthetic": args.synthetic,
        "schedule": args.schedule, "steps": args.steps, "policies": args.policy,
        "delta": args.delta, "target_ratio": args.target_ratio,
        "seeds": args.seed_list if args.seed_list is not None else args.seeds,
        "xi": args.xi, "no_force_first": args.no_force_first,
    })
    return EXIT_OK


# --------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="seacache", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"seacache {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    def add_common(p, *, shape=True):
        p.add_argument("--schedule", default="rf", choices=["rf", "dpm-linear", "dpm-cosine"])
        p.add_argument("--steps", type=int, default=50, help="solver step count T")
        p.add_argument("--beta", type=float, default=None, help="spectral exponent (default 2 for 2D, 3 for 3D)")
        p.add_argument("--amp", type=float, default=1.0, help="spectral amplitude A")
        if shape:
            p.add_argument("--height", type=int, default=64)
            p.add_argument("--width", type=int, default=64)
            p.add_argument("--frames", type=int, default=None, help="frame count for 3D grids")
            p.add_argument("--channels", type=int, default=1)
        p.add_argument("--xi", type=float, default=DEFAULT_XI)
        p.add_argument("--cutoff", type=float, default=DEFAULT_CUTOFF_FRACTION, help="low-pass cutoff fraction")
        p.add_argument("--poly-degree", type=int, default=DEFAULT_POLY_DEGREE)
        p.add_argument("--out", required=True, help="output CSV path")

    p = sub.add_parser("filterbank", help="emit radial gain profiles per timestep")
    add_common(p)
    p.add_argument("--t", type=_int_list, default=None, help="comma-separated timesteps (default: all)")
    p.set_defaults(func=cmd_filterbank)

    p = sub.add_parser("sweep", help="run policy/ratio/seed grids against full compute")
    add_common(p)
    p.add_argument("--policy", type=_csv_list, required=True,
                   help="comma-separated: full, raw, sea, one-minus-sea, sea-unnorm, lpf[NN], poly, oracle-sea, oracle-raw")
    p.add_argument("--delta", type=_float_list, default=None)
    p.add_argument("--target-ratio", type=_float_list, default=None)
    p.add_argument("--seeds", type=int, default=10, help="use seeds 0..N-1")
    p.add_argument("--seed-list", type=_int_list, default=None)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("replay", help="distance curves over a recorded SEATRAJ file")
    add_common(p, shape=False)
    p.add_argument("--traj", required=True)
    p.add_argument("--policy", type=_csv_list, default=["all"])
    p.add_argument("--feature", default="input", choices=["input", "output"])
    p.add_argument("--target-ratio", type=_float_list, default=None,
                   help="also emit oracle schedules at these ratios (needs outputs)")
    p.add_argument("--poly-coeffs", type=_float_list, default=None)
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("gate-trace", help="gate decisions and refresh heatmaps")
    add_common(p)
    p.add_argument("--distances", type=_csv_list, default=None, help="distance CSV path(s) with columns t,kind,value")
    p.add_argument("--traj", default=None)
    p.add_argument("--synthetic", action="store_true", help="generate live synthetic runs")
    p.add_argument("--policy", type=_csv_list, default=["sea"])
    p.add_argument("--feature", default="input", choices=["input", "output"])
    p.add_argument("--delta", type=_float_list, default=None)
    p.add_argument("--target-ratio", type=_float_list, default=None)
    p.add_argument("--seeds", type=int, default=10)
    p.add_argument("--seed-list", type=_int_list, default=None)
    p.add_argument("--no-force-first", action="store_true",
                   help="gate every decision instead of forcing the first refresh")
    p.set_defaults(func=cmd_gate_trace)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (CapabilityError, TrajectoryFormatError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CAPABILITY
    except ValueError as exc:
        # library-level config validation; almost always a bad flag value
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # pragma: no cover
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
