"""Command-line surface.

Exit codes: 0 ok, 2 configuration error (bad arguments, unreadable inputs),
3 infeasible instance, 4 time limit reached with no feasible result.
PLANARFAB_SEED overrides the instance seed.  --threads is accepted for
forward compatibility; the current engine is single-process and results are
identical for any value.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import ordergen, packing, routing, scheduling
from . import placement as placement_mod
from .core import (
    InstanceConfig,
    instance_from_json,
    instance_to_json,
    orders_from_csv,
    orders_to_csv,
    build_layout,
    validate_instance,
)
from .pipeline import (
    PipelineConfig,
    StageError,
    packing_from_json,
    packing_to_json,
    paths_to_csv,
    plan_to_json,
    run_pipeline,
    schedule_batched,
)
from .placement import GaParams, Placement
from .render import render_gantt, render_layout

OK, CONFIG_ERROR, INFEASIBLE, NO_FEASIBLE = 0, 2, 3, 4


class CliError(Exception):
    def __init__(self, message, code):
        super().__init__(message)
        self.code = code


def _load_instance(path):
    try:
        layout, catalog, config = instance_from_json(Path(path).read_text())
    except (OSError, json.JSONDecodeError, KeyError) as e:
        raise CliError(f"cannot read instance {path}: {e}", CONFIG_ERROR)
    seed_override = os.environ.get("PLANARFAB_SEED")
    if seed_override is not None:
        config = InstanceConfig(
            n_dispensers=config.n_dispensers,
            d_max=config.d_max,
            m_max=config.m_max,
            n_movers=config.n_movers,
            eta_interface=config.eta_interface,
            dispensing_speed=config.dispensing_speed,
            seed=int(seed_override),
        )
    return layout, catalog, config


def _load_orders(path):
    try:
        return orders_from_csv(Path(path).read_text())
    except (OSError, ValueError) as e:
        raise CliError(f"cannot read orders {path}: {e}", CONFIG_ERROR)


def _load_placement(path):
    try:
        return Placement.from_json(Path(path).read_text())
    except (OSError, json.JSONDecodeError, KeyError) as e:
        raise CliError(f"cannot read placement {path}: {e}", CONFIG_ERROR)


def _write(path, text):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(text)


def cmd_init_instance(args):
    layout = build_layout(args.topology, _size_params(args), args.interfaces)
    marg = [float(x) for x in args.marginals.split(",")] if args.marginals else []
    drugs = args.drugs.split(",") if args.drugs else [f"drug{i}" for i in range(len(marg))]
    if not marg:
        raise CliError("provide --marginals", CONFIG_ERROR)
    import numpy as np

    corr = np.zeros((len(drugs), len(drugs)))
    from .core import DrugCatalog

    catalog = DrugCatalog(tuple(drugs), tuple(marg), corr)
    config = InstanceConfig(
        n_dispensers=args.dispensers,
        d_max=args.d_max,
        m_max=args.m_max,
        n_movers=args.movers,
        eta_interface=args.eta,
        dispensing_speed=args.speed,
        seed=args.seed,
    )
    issues = validate_instance(layout, catalog, config)
    if issues:
        raise CliError("; ".join(issues), INFEASIBLE)
    _write(args.out, instance_to_json(layout, catalog, config))
    print(f"wrote {args.out}")
    return OK


def _size_params(args):
    if args.topology == "square":
        r, c = (args.size.split("x") + [args.size])[:2] if "x" in args.size else (args.size, args.size)
        return (int(r), int(c))
    return int(args.size)


def cmd_gen_orders(args):
    layout, catalog, config = _load_instance(args.instance)
    try:
        oset = ordergen.sample_orders(
            catalog,
            args.n,
            (args.size_min, args.size_max),
            duration_rule=args.duration_rule,
            seed=args.seed if args.seed is not None else config.seed,
            dispensing_speed=config.dispensing_speed,
            copula_mode=args.copula,
        )
    except (ValueError, RuntimeError) as e:
        raise CliError(str(e), INFEASIBLE)
    _write(args.orders_out, orders_to_csv(oset.orders))
    print(f"wrote {args.orders_out} ({len(oset.orders)} orders)")
    return OK


def cmd_pack(args):
    layout, catalog, config = _load_instance(args.instance)
    orders = _load_orders(args.orders)
    demand = ordergen.estimate_demand(orders)
    try:
        stage1 = packing.pack_min_load(demand, layout.n_tiles, config, drugs=catalog.drugs)
        packed = stage1
        if not args.skip_correlation:
            packed = packing.pack_correlation(stage1, catalog, config)
    except packing.PackingInfeasible as e:
        raise CliError(str(e), INFEASIBLE)
    _write(args.out, packing_to_json(packed))
    print(
        f"wrote {args.out} (mu_max={packed.mu_max:.2f}, lb={packed.lower_bound:.2f}, "
        f"exact={packed.exact})"
    )
    return OK


def cmd_place(args):
    layout, catalog, config = _load_instance(args.instance)
    orders = _load_orders(args.orders)
    packed = packing_from_json(Path(args.packing).read_text())
    params = GaParams(
        population=args.population,
        max_evaluations=args.max_evaluations,
        episodes=args.episodes,
    )
    result = placement_mod.ga_place(
        packed, layout, orders, params, args.seed if args.seed is not None else config.seed
    )
    _write(args.out, result.placement.to_json())
    if args.trace_out:
        _write(args.trace_out, placement_mod.trace_to_csv(result.trace))
    print(f"wrote {args.out} (fitness={result.best_fitness:.3f})")
    return OK


def cmd_schedule(args):
    layout, catalog, config = _load_instance(args.instance)
    orders = _load_orders(args.orders)
    placed = _load_placement(args.placement)
    movers = args.movers or config.n_movers
    seed = args.seed if args.seed is not None else config.seed
    try:
        if args.batch_size and len(orders) > args.batch_size:
            sched, _ = schedule_batched(
                orders, placed, config, args.batch_size, seed,
                time_limit=args.time_limit, iterations=args.iterations,
            )
        else:
            warm = None
            if args.warm_start:
                lb = scheduling.lower_bound(orders, placed, movers, config.eta_interface)
                warm = lb.assignment
            sched = scheduling.schedule(
                orders, placed, movers,
                time_limit=args.time_limit,
                warm_start=warm,
                seed=seed,
                eta=config.eta_interface,
                max_iterations=args.iterations,
            )
    except ValueError as e:
        raise CliError(str(e), INFEASIBLE)
    _write(args.out, sched.to_json())
    if args.csv_out:
        _write(args.csv_out, sched.to_csv())
    print(f"wrote {args.out} (makespan={sched.makespan})")
    return OK


def cmd_lower_bound(args):
    layout, catalog, config = _load_instance(args.instance)
    orders = _load_orders(args.orders)
    placed = _load_placement(args.placement)
    movers = args.movers or config.n_movers
    lb = scheduling.lower_bound(orders, placed, movers, config.eta_interface)
    doc = {
        "value": lb.value,
        "exact": lb.exact,
        "t_values": {str(k): v for k, v in sorted(lb.t_values.items())},
        "assignment": {str(k): v for k, v in sorted(lb.assignment.items())},
    }
    if args.out:
        _write(args.out, json.dumps(doc, indent=2))
    if args.dump_gtsp:
        from . import shppn

        dumps = [shppn.transform_dump(o, placed) for o in orders]
        _write(args.dump_gtsp, json.dumps(dumps, indent=2))
    print(json.dumps(doc if args.verbose else {"value": lb.value, "exact": lb.exact}))
    return OK


def cmd_route(args):
    layout, catalog, config = _load_instance(args.instance)
    placed = _load_placement(args.placement)
    sched = scheduling.Schedule.from_json(Path(args.schedule).read_text())
    try:
        plan = routing.route_schedule(sched, placed)
    except routing.RoutingInfeasible as e:
        raise CliError(str(e), INFEASIBLE)
    _write(args.out, plan_to_json(plan))
    if args.paths_csv:
        _write(args.paths_csv, paths_to_csv(plan))
    overhead = 100.0 * (plan.makespan - sched.makespan) / max(1, sched.makespan)
    print(
        f"wrote {args.out} (makespan {sched.makespan} -> {plan.makespan}, "
        f"overhead {overhead:.2f}%, iterations {plan.iterations})"
    )
    return OK


def cmd_merge(args):
    layout, catalog, config = _load_instance(args.instance)
    placed = _load_placement(args.placement)
    batches = [scheduling.Schedule.from_json(Path(p).read_text()) for p in args.schedules]
    try:
        merged = routing.merge_batches(batches, placed, n_movers=config.n_movers)
        plan = routing.route_schedule(merged, placed)
    except (ValueError, routing.RoutingInfeasible) as e:
        raise CliError(str(e), INFEASIBLE)
    _write(args.out, plan_to_json(plan))
    print(f"wrote {args.out} (merged makespan={plan.makespan})")
    return OK


def cmd_pipeline(args):
    layout, catalog, config = _load_instance(args.instance)
    pc = PipelineConfig(
        layout=layout,
        catalog=catalog,
        config=config,
        n_orders=args.n_orders,
        size_range=(args.size_min, args.size_max),
        ga=GaParams(
            population=args.population,
            max_evaluations=args.max_evaluations,
            episodes=args.episodes,
        ),
        schedule_time_limit=args.time_limit,
        schedule_iterations=args.iterations,
        batch_size=args.batch_size,
        out_dir=Path(args.out_dir),
    )
    try:
        report = run_pipeline(pc)
    except StageError as e:
        code = INFEASIBLE if isinstance(e.cause, (packing.PackingInfeasible, routing.RoutingInfeasible, ValueError)) else CONFIG_ERROR
        raise CliError(str(e), code)
    print(report.to_json())
    return OK


def cmd_render(args):
    if args.placement:
        placed = _load_placement(args.placement)
        sites = None
        if args.sites:
            sites = routing.generate_resting_sites(placed.layout, placed.interfaces).sites
        _write(args.out, render_layout(placed, sites=sites))
    elif args.schedule:
        sched = scheduling.Schedule.from_json(Path(args.schedule).read_text())
        _write(args.out, render_gantt(sched))
    else:
        raise CliError("render needs --placement or --schedule", CONFIG_ERROR)
    print(f"wrote {args.out}")
    return OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="planarfab",
        description="Planar-grid capsule manufacturing planner: packing, placement, "
        "scheduling, lower bounds and conflict-free routing.",
    )
    p.add_argument("--threads", type=int, default=1,
                   help="worker hint (engine is single-process; output is identical)")
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("init-instance", help="write an instance JSON for the four topologies")
    sp.add_argument("--topology", required=True, choices=["line", "doubleline", "ring", "square"])
    sp.add_argument("--size", required=True, help="length, ring side, or RxC for square")
    sp.add_argument("--interfaces", type=int, default=2)
    sp.add_argument("--drugs", help="comma-separated drug names")
    sp.add_argument("--marginals", required=True, help="comma-separated probabilities")
    sp.add_argument("--dispensers", type=int, required=True)
    sp.add_argument("--d-max", type=int, default=4)
    sp.add_argument("--m-max", type=int, default=12)
    sp.add_argument("--movers", type=int, default=4)
    sp.add_argument("--eta", type=int, default=2)
    sp.add_argument("--speed", type=int, default=100)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", required=True)
    sp.set_defaults(fn=cmd_init_instance)

    sp = sub.add_parser("gen-orders", help="sample synthetic prescriptions")
    sp.add_argument("--instance", required=True)
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--size-min", type=int, default=3)
    sp.add_argument("--size-max", type=int, default=8)
    sp.add_argument("--duration-rule", choices=["fixed", "dose"], default="fixed")
    sp.add_argument("--copula", choices=["raw", "tetrachoric"], default="raw")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--orders-out", required=True)
    sp.set_defaults(fn=cmd_gen_orders)

    sp = sub.add_parser("pack", help="two-stage dispenser packing")
    sp.add_argument("--instance", required=True)
    sp.add_argument("--orders", required=True)
    sp.add_argument("--skip-correlation", action="store_true")
    sp.add_argument("--out", required=True)
    sp.set_defaults(fn=cmd_pack)

    sp = sub.add_parser("place", help="GA placement of packed tiles and interfaces")
    sp.add_argument("--instance", required=True)
    sp.add_argument("--orders", required=True)
    sp.add_argument("--packing", required=True)
    sp.add_argument("--population", type=int, default=150)
    sp.add_argument("--max-evaluations", type=int, default=50_000)
    sp.add_argument("--episodes", type=int, default=20)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--trace-out")
    sp.add_argument("--out", required=True)
    sp.set_defaults(fn=cmd_place)

    sp = sub.add_parser("schedule", help="operational scheduling (LNS)")
    sp.add_argument("--instance", required=True)
    sp.add_argument("--orders", required=True)
    sp.add_argument("--placement", required=True)
    sp.add_argument("--movers", type=int)
    sp.add_argument("--time-limit", type=float, default=60.0)
    sp.add_argument("--iterations", type=int, help="deterministic iteration budget")
    sp.add_argument("--warm-start", action="store_true",
                    help="seed mover assignment from the lower bound")
    sp.add_argument("--batch-size", type=int)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--csv-out")
    sp.add_argument("--out", required=True)
    sp.set_defaults(fn=cmd_schedule)

    sp = sub.add_parser("lower-bound", help="relaxation lower bound on the makespan")
    sp.add_argument("--instance", required=True)
    sp.add_argument("--orders", required=True)
    sp.add_argument("--placement", required=True)
    sp.add_argument("--movers", type=int)
    sp.add_argument("--verbose", action="store_true")
    sp.add_argument("--dump-gtsp", help="write the transformed per-order matrices (debug)")
    sp.add_argument("--out")
    sp.set_defaults(fn=cmd_lower_bound)

    sp = sub.add_parser("route", help="conflict-free routing of a schedule")
    sp.add_argument("--instance", required=True)
    sp.add_argument("--placement", required=True)
    sp.add_argument("--schedule", required=True)
    sp.add_argument("--paths-csv")
    sp.add_argument("--out", required=True)
    sp.set_defaults(fn=cmd_route)

    sp = sub.add_parser("merge", help="stitch batch schedules and route the result")
    sp.add_argument("--instance", required=True)
    sp.add_argument("--placement", required=True)
    sp.add_argument("--schedules", nargs="+", required=True)
    sp.add_argument("--out", required=True)
    sp.set_defaults(fn=cmd_merge)

    sp = sub.add_parser("pipeline", help="run every stage and write a report")
    sp.add_argument("--instance", required=True)
    sp.add_argument("--n-orders", type=int, default=20)
    sp.add_argument("--size-min", type=int, default=3)
    sp.add_argument("--size-max", type=int, default=8)
    sp.add_argument("--population", type=int, default=30)
    sp.add_argument("--max-evaluations", type=int, default=600)
    sp.add_argument("--episodes", type=int, default=10)
    sp.add_argument("--time-limit", type=float, default=30.0)
    sp.add_argument("--iterations", type=int)
    sp.add_argument("--batch-size", type=int)
    sp.add_argument("--out-dir", required=True)
    sp.set_defaults(fn=cmd_pipeline)

    sp = sub.add_parser("render", help="SVG of a placement or a schedule")
    sp.add_argument("--placement")
    sp.add_argument("--schedule")
    sp.add_argument("--sites", action="store_true", help="overlay resting sites")
    sp.add_argument("--out", required=True)
    sp.set_defaults(fn=cmd_render)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.threads < 1:
        parser.error("--threads must be >= 1")
    try:
        return args.fn(args)
    except CliError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.code
    except (OSError, json.JSONDecodeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return CONFIG_ERROR


if __name__ == "__main__":
    sys.exit(main())
