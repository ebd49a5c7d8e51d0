"""Command-line entry point.

Subcommands: generate (build an instance file), route (solve one station
configuration and print the tour, score and battery trace), bocs (full
surrogate-guided campaign), baseline (random-search campaign at the same
budget), report (recompute the summary from exported history tables).
Every command exits 0 on success and prints a one-line diagnostic to
stderr with a nonzero exit on configuration errors.
"""

from __future__ import annotations

import argparse
import functools
import sys
from pathlib import Path

from .anneal import SaSchedule
from .bocs import BocsParams, PriorConfig
from .evaluator import EvalParams, StationConfig, evaluate_config, simulate_battery
from .harness import (
    ExperimentConfig,
    Summary,
    run_experiment,
    run_random_baseline,
    summarize,
    summary_from_history_files,
    SUMMARY_COLUMNS,
    _FORMATS,
)
from .instance import (
    BatteryParams,
    GenParams,
    generate_instance,
    load_instance,
    save_instance,
)
from .qubo import PenaltyWeights, default_penalty_weights


def _add_generator_args(p: argparse.ArgumentParser, require: bool = False) -> None:
    g = p.add_argument_group("instance generation")
    g.add_argument("--n", type=int, required=require, help="number of locations")
    g.add_argument("--m", type=int, required=require,
                   help="number of candidate station locations")
    g.add_argument("--start", type=int, default=0, help="fixed start location id")
    g.add_argument("--gen-seed", type=int, default=0,
                   help="seed for instance generation")
    g.add_argument("--elevation-scale", type=float, default=1.0)
    g.add_argument("--distance-scale", type=float, default=1.0)
    g.add_argument("--q-max", type=float, default=None, help="battery capacity")
    g.add_argument("--q-charge", type=float, default=None,
                   help="charge added per station visit")
    g.add_argument("--q-standard", type=float, default=None,
                   help="reference battery level")
    g.add_argument("--q-init", type=float, default=None,
                   help="initial battery level")


def _add_instance_source(p: argparse.ArgumentParser) -> None:
    p.add_argument("--instance", type=str, default=None,
                   help="path to an instance file (otherwise --n/--m generate one)")
    _add_generator_args(p)


def _add_weight_args(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("penalty weights (defaults derived from the instance)")
    g.add_argument("--lambda1", type=float, default=None, help="visit-once weight")
    g.add_argument("--lambda2", type=float, default=None, help="continuity weight")
    g.add_argument("--lambda3", type=float, default=None, help="start/closure weight")
    g.add_argument("--lambda4", type=float, default=None, help="battery term weight")


def _add_schedule_args(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("annealing schedule")
    g.add_argument("--sweeps", type=int, default=2000)
    g.add_argument("--restarts", type=int, default=4)
    g.add_argument("--beta-initial", type=float, default=0.01)
    g.add_argument("--beta-final", type=float, default=None,
                   help="default: scaled to the model's mean coefficient size")


def _add_eval_args(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("evaluation")
    g.add_argument("--y-penalty", type=float, default=10.0,
                   help="penalty added per violated battery check")
    g.add_argument("--close-tour", action=argparse.BooleanOptionalAction,
                   default=True, help="require the tour to return to the start")
    g.add_argument("--check-final", action=argparse.BooleanOptionalAction,
                   default=False, help="also battery-check the final move")
    g.add_argument("--charge-at-arrival", action=argparse.BooleanOptionalAction,
                   default=False, help="charge on arrival instead of at departure")


def _battery_from_args(args) -> BatteryParams | None:
    fields = (args.q_max, args.q_charge, args.q_standard, args.q_init)
    if all(v is None for v in fields):
        return None
    base = BatteryParams()
    return BatteryParams(
        q_max=base.q_max if args.q_max is None else args.q_max,
        q_charge=base.q_charge if args.q_charge is None else args.q_charge,
        q_standard=base.q_standard if args.q_standard is None else args.q_standard,
        q_init=base.q_init if args.q_init is None else args.q_init,
    )


def _gen_params_from_args(args) -> GenParams:
    if args.n is None or args.m is None:
        raise ValueError("--n and --m are required when no --instance is given")
    return GenParams(n=args.n, m=args.m, elevation_scale=args.elevation_scale,
                     distance_scale=args.distance_scale, seed=args.gen_seed,
                     start=args.start)


def _resolve_instance(args):
    if args.instance is not None:
        if _battery_from_args(args) is not None:
            raise ValueError("battery flags apply to generated instances only; "
                             "edit the instance file instead")
        if args.n is not None or args.m is not None:
            raise ValueError("--instance and --n/--m are mutually exclusive")
        return load_instance(args.instance)
    return generate_instance(_gen_params_from_args(args), _battery_from_args(args))


def _weights_from_args(args, inst) -> PenaltyWeights | None:
    given = (args.lambda1, args.lambda2, args.lambda3, args.lambda4)
    if all(v is None for v in given):
        return None
    base = default_penalty_weights(inst)
    return PenaltyWeights(
        lambda1=base.lambda1 if args.lambda1 is None else args.lambda1,
        lambda2=base.lambda2 if args.lambda2 is None else args.lambda2,
        lambda3=base.lambda3 if args.lambda3 is None else args.lambda3,
        lambda4=base.lambda4 if args.lambda4 is None else args.lambda4,
    )


def _schedule_from_args(args, seed: int = 0) -> SaSchedule:
    return SaSchedule(sweeps=args.sweeps, beta_initial=args.beta_initial,
                      beta_final=args.beta_final, restarts=args.restarts,
                      seed=seed)


def _parse_seed_list(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(part) for part in text.split(",") if part.strip() != "")
    except ValueError:
        raise ValueError(f"--seeds expects comma-separated integers, got {text!r}")


def _bocs_params_from_args(args, seed: int = 0) -> BocsParams:
    return BocsParams(
        n_search=args.n_search,
        n_init=args.n_init,
        y_penalty=args.y_penalty,
        prior=PriorConfig(kind=args.prior, gibbs_steps=args.gibbs_steps),
        acquisition=args.acquisition,
        seed=seed,
        station_cost_weight=args.station_cost_weight,
        close_tour=args.close_tour,
        check_final=args.check_final,
        charge_at_arrival=args.charge_at_arrival,
    )


def _print_summary(s: Summary) -> None:
    parts = [f"{name}={value!r}" for name, value in
             zip(SUMMARY_COLUMNS, (s.worst, s.best, s.mean, s.variance))]
    print(f"summary over {s.n_runs} runs: " + " ".join(parts))


def _cmd_generate(args) -> int:
    battery = _battery_from_args(args)
    inst = generate_instance(_gen_params_from_args(args), battery)
    save_instance(inst, args.out)
    print(f"wrote {args.out} (n={inst.n}, m={inst.m}, start={inst.start})")
    return 0


def _cmd_route(args) -> int:
    inst = _resolve_instance(args)
    config = StationConfig.from_bitstring(args.stations)
    if len(config) != inst.m:
        raise ValueError(f"--stations has {len(config)} bits, instance has "
                         f"{inst.m} candidates")
    weights = _weights_from_args(args, inst)
    schedule = _schedule_from_args(args, seed=args.seed)
    params = EvalParams(y_penalty=args.y_penalty, close_tour=args.close_tour,
                        check_final=args.check_final,
                        charge_at_arrival=args.charge_at_arrival)
    ev = evaluate_config(inst, config, weights, schedule, params)
    if ev.tour is None:
        print("tour: none (no decodable assignment found)")
        print(f"y={ev.y!r} a={ev.a!r} b={ev.b!r} feasible={str(ev.feasible).lower()}")
        return 0
    stops = list(ev.tour.order) + ([ev.tour.order[0]] if ev.tour.closed else [])
    print("tour: " + " -> ".join(str(i) for i in stops))
    print(f"y={ev.y!r} a={ev.a!r} b={ev.b!r} feasible={str(ev.feasible).lower()}")
    trace = simulate_battery(inst, ev.tour, config.as_array(),
                             charge_at_arrival=args.charge_at_arrival)
    print("step,before_charge,after_charge,after_move,"
          "charge_overflow,move_underflow,move_overflow")
    for t in range(trace.n_steps):
        print(f"{t},{float(trace.before_charge[t])!r},"
              f"{float(trace.after_charge[t])!r},{float(trace.after_move[t])!r},"
              f"{int(trace.charge_overflow[t])},{int(trace.move_underflow[t])},"
              f"{int(trace.move_overflow[t])}")
    return 0


def _campaign_config(args) -> ExperimentConfig:
    seeds = _parse_seed_list(args.seeds)
    instance_path = args.instance
    gen = None
    battery = None
    if instance_path is None:
        gen = _gen_params_from_args(args)
        battery = _battery_from_args(args)
    elif _battery_from_args(args) is not None:
        raise ValueError("battery flags apply to generated instances only; "
                         "edit the instance file instead")
    elif args.n is not None or args.m is not None:
        raise ValueError("--instance and --n/--m are mutually exclusive")
    probe = load_instance(instance_path) if instance_path else \
        generate_instance(gen, battery)
    weights = _weights_from_args(args, probe)
    return ExperimentConfig(
        instance_path=instance_path,
        gen=gen,
        battery=battery,
        params=_bocs_params_from_args(args),
        weights=weights,
        schedule=_schedule_from_args(args),
        seeds=seeds,
        out_dir=args.out_dir,
        table_format=args.format,
        emit_history=args.emit_history,
        emit_traces=args.emit_traces,
        emit_summary=args.emit_summary,
    )


def _run_campaign(args, baseline: bool) -> int:
    cfg = _campaign_config(args)
    report = run_random_baseline(cfg) if baseline else run_experiment(cfg)
    for run in report.runs:
        ev = run.history.best_evaluation
        print(f"seed {run.seed}: best y={run.history.final_best!r} "
              f"s={run.history.best_config.to_bitstring()} "
              f"feasible={str(ev.feasible).lower()}")
    _print_summary(summarize(report))
    if cfg.out_dir is not None:
        print(f"tables written to {cfg.out_dir}")
    return 0


def _cmd_report(args) -> int:
    ext = args.format
    paths = sorted(Path(args.dir).glob(f"history_seed*.{ext}"))
    if not paths:
        raise ValueError(f"no history_seed*.{ext} files in {args.dir}")
    s = summary_from_history_files(paths, table_format=ext)
    _print_summary(s)
    delim = _FORMATS[ext]
    out = Path(args.dir) / f"summary.{ext}"
    row = delim.join(repr(v) for v in (s.worst, s.best, s.mean, s.variance))
    out.write_text(delim.join(SUMMARY_COLUMNS) + "\n" + row + "\n",
                   encoding="utf-8")
    print(f"wrote {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="evroute",
        description="Joint charging-station placement and battery-aware routing.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_gen = sub.add_parser("generate", help="generate an instance file")
    _add_generator_args(p_gen, require=True)
    p_gen.add_argument("--out", type=str, required=True, help="output path")
    p_gen.set_defaults(func=_cmd_generate)

    p_route = sub.add_parser(
        "route", help="solve one station configuration and print the result")
    _add_instance_source(p_route)
    p_route.add_argument("--stations", type=str, required=True,
                         help="bitstring over the candidate list, e.g. 0110")
    p_route.add_argument("--seed", type=int, default=0, help="solver seed")
    _add_weight_args(p_route)
    _add_schedule_args(p_route)
    _add_eval_args(p_route)
    p_route.set_defaults(func=_cmd_route)

    for name, baseline, help_text in (
        ("bocs", False, "run the surrogate-guided search campaign"),
        ("baseline", True, "run the uniform-random campaign at the same budget"),
    ):
        p = sub.add_parser(name, help=help_text)
        _add_instance_source(p)
        g = p.add_argument_group("search")
        g.add_argument("--n-search", type=int, default=300,
                       help="guided iterations after the initial samples")
        g.add_argument("--n-init", type=int, default=10,
                       help="uniform-random initial samples")
        g.add_argument("--prior", choices=("horseshoe", "ridge"),
                       default="horseshoe")
        g.add_argument("--gibbs-steps", type=int, default=300)
        g.add_argument("--acquisition", choices=("exhaustive", "sa"),
                       default="exhaustive")
        g.add_argument("--station-cost-weight", type=float, default=0.0,
                       help="per-station linear cost added during acquisition")
        g.add_argument("--seeds", type=str, default="0",
                       help="comma-separated outer seeds, e.g. 0,1,2")
        _add_weight_args(p)
        _add_schedule_args(p)
        _add_eval_args(p)
        out = p.add_argument_group("output")
        out.add_argument("--out-dir", type=str, default=None,
                         help="directory for history/trace/summary tables")
        out.add_argument("--format", choices=sorted(_FORMATS), default="csv")
        out.add_argument("--emit-history", action=argparse.BooleanOptionalAction,
                         default=True)
        out.add_argument("--emit-traces", action=argparse.BooleanOptionalAction,
                         default=True)
        out.add_argument("--emit-summary", action=argparse.BooleanOptionalAction,
                         default=True)
        p.set_defaults(func=functools.partial(_run_campaign, baseline=baseline))

    p_rep = sub.add_parser(
        "report", help="recompute the summary from exported history tables")
    p_rep.add_argument("--dir", type=str, required=True)
    p_rep.add_argument("--format", choices=sorted(_FORMATS), default="csv")
    p_rep.set_defaults(func=_cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
