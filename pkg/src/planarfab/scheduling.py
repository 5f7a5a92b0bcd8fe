"""Operational scheduling: orders onto movers, operations onto dispensers and ticks.

Movers are take-give resources: an order's operations run contiguously on one
mover (cartridge load first, collection last) and no other order may interleave
on that mover.  Travel times between consecutive operations of a mover equal
the tile distance; every placed tile serves one mover at a time.  Rather than
shipping a constraint engine, the feasibility semantics live in an explicit
validator (the validator IS the model) and are searched by constructive
insertion plus seeded large-neighborhood search; instances small enough to
enumerate are solved exhaustively.

Timing policy (shared by construction, search and the exhaustive mode): given
per-mover order sequences and per-order routes, repeatedly commit, among every
mover's next pending operation, the one with the earliest feasible start (ties
by mover index); an operation's feasible start is the first instant at or
after mover-ready + travel for which its tile has a free slot of the required
length.  Start times are therefore left-shifted for the chosen decisions.

The makespan lower bound follows the relaxation route: exact per-order path
values feed a parallel-machines problem whose optimum (or, above the guard,
the load bound max(max T, ceil(sum T / m))) bounds every valid schedule from
below; its machine assignment doubles as the scheduler warm start.
"""

from __future__ import annotations

import itertools
import json
import math
import random
import time
from dataclasses import dataclass

from . import shppn
from .core import INTERFACE, Coord, Order

START = "start"
DISPENSING = "dispensing"
FINISH = "finish"

EXHAUSTIVE_CAP = 300_000
ROUTE_ENUM_CAP = 4_000
P_CMAX_EXACT_LIMIT = 20
LOWER_BOUND_EXACT_ORDERS = 20


@dataclass(frozen=True)
class OperationSpec:
    op_id: int
    order_id: int
    target: str  # drug name or "interface"
    duration: int
    kind: str  # start | dispensing | finish


@dataclass(frozen=True)
class AlternativeSpec:
    mover: int
    op_id: int
    tile: Coord


@dataclass(frozen=True)
class ScheduledOp:
    op: OperationSpec
    mover: int
    tile: Coord
    start: int

    @property
    def end(self) -> int:
        return self.start + self.op.duration


@dataclass(frozen=True)
class Schedule:
    ops: tuple[ScheduledOp, ...]
    makespan: int
    incumbent_trace: tuple[int, ...] = ()

    def by_mover(self) -> dict[int, list[ScheduledOp]]:
        out: dict[int, list[ScheduledOp]] = {}
        for so in sorted(self.ops, key=lambda s: (s.mover, s.start, s.op.op_id)):
            out.setdefault(so.mover, []).append(so)
        return out

    def mover_of_order(self) -> dict[int, int]:
        return {so.op.order_id: so.mover for so in self.ops}

    def to_csv(self) -> str:
        lines = ["op_id,order,drug,mover,tile_x,tile_y,start,end"]
        for so in sorted(self.ops, key=lambda s: (s.start, s.mover, s.op.op_id)):
            lines.append(
                f"{so.op.op_id},{so.op.order_id},{so.op.target},{so.mover},"
                f"{so.tile.x},{so.tile.y},{so.start},{so.end}"
            )
        return "\n".join(lines) + "\n"

    def to_json(self) -> str:
        return json.dumps(
            {
                "makespan": self.makespan,
                "ops": [
                    {
                        "op_id": so.op.op_id,
                        "order": so.op.order_id,
                        "target": so.op.target,
                        "kind": so.op.kind,
                        "duration": so.op.duration,
                        "mover": so.mover,
                        "tile": [so.tile.x, so.tile.y],
                        "start": so.start,
                    }
                    for so in sorted(self.ops, key=lambda s: (s.start, s.mover, s.op.op_id))
                ],
            },
            indent=2,
        )

    @staticmethod
    def from_json(text: str) -> "Schedule":
        doc = json.loads(text)
        ops = tuple(
            ScheduledOp(
                OperationSpec(o["op_id"], o["order"], o["target"], o["duration"], o["kind"]),
                o["mover"],
                Coord(*o["tile"]),
                o["start"],
            )
            for o in doc["ops"]
        )
        return Schedule(ops, doc["makespan"])


@dataclass(frozen=True)
class SchedulingInstance:
    orders: tuple[Order, ...]
    placement: object
    n_movers: int
    eta: int


@dataclass(frozen=True)
class LowerBoundResult:
    t_values: dict[int, int]  # order id -> T_p
    assignment: dict[int, int]  # order id -> mover (warm-start quality)
    value: int
    exact: bool


def build_operations(orders, eta: int = 2) -> list[OperationSpec]:
    """Start + one dispensing per (order, drug) + finish, ids in listing order."""
    ops = []
    oid = 0
    for order in orders:
        ops.append(OperationSpec(oid, order.id, INTERFACE, eta, START))
        oid += 1
        for g, dur in order.items:
            ops.append(OperationSpec(oid, order.id, g, dur, DISPENSING))
            oid += 1
        ops.append(OperationSpec(oid, order.id, INTERFACE, eta, FINISH))
        oid += 1
    return ops


def build_alternatives(ops, placement, n_movers: int) -> list[AlternativeSpec]:
    alts = []
    for op in ops:
        if op.kind in (START, FINISH):
            tiles = sorted(placement.interfaces)
        else:
            tiles = list(placement.dispensers_for(op.target))
        for m in range(n_movers):
            for h in tiles:
                alts.append(AlternativeSpec(m, op.op_id, h))
    return alts


# --- validator (the model) -------------------------------------------------------

def validate_schedule(schedule: Schedule, instance: SchedulingInstance) -> list[str]:
    """The eight validity rules; an empty report certifies the schedule."""
    issues = []
    orders = {o.id: o for o in instance.orders}
    placement = instance.placement
    dist = placement.layout.distance

    expected = build_operations(instance.orders, instance.eta)
    want_ids = {op.op_id for op in expected}
    got_ids = [so.op.op_id for so in schedule.ops]
    if sorted(got_ids) != sorted(want_ids):
        issues.append("rule 1: operations not scheduled exactly once")
    spec_by_id = {op.op_id: op for op in expected}
    for so in schedule.ops:
        spec = spec_by_id.get(so.op.op_id)
        if spec is not None and (spec.kind, spec.target, spec.order_id, spec.duration) != (
            so.op.kind,
            so.op.target,
            so.op.order_id,
            so.op.duration,
        ):
            issues.append(f"rule 1: op {so.op.op_id} does not match the instance")
        if so.mover < 0 or so.mover >= instance.n_movers:
            issues.append(f"rule 1: op {so.op.op_id} on unknown mover {so.mover}")
        if so.op.kind == DISPENSING:
            if so.tile not in placement.dispensers_for(so.op.target):
                issues.append(
                    f"rule 1: op {so.op.op_id} tile {so.tile} lacks a {so.op.target} dispenser"
                )
        elif so.tile not in placement.interfaces:
            issues.append(f"rule 5: op {so.op.op_id} ({so.op.kind}) off-interface")

    for mover, seq in schedule.by_mover().items():
        for a, b in zip(seq, seq[1:]):
            need = dist(a.tile, b.tile)
            if b.start < a.end + need:
                issues.append(
                    f"rule 2: mover {mover} ops {a.op.op_id}->{b.op.op_id} "
                    f"gap {b.start - a.end} < travel {need}"
                )
        # take-give: orders must form contiguous blocks, start first, finish last
        seen_done: set[int] = set()
        current = None
        block: list[ScheduledOp] = []

        def close(block):
            if not block:
                return
            kinds = [s.op.kind for s in block]
            oid = block[0].op.order_id
            n_items = len(orders[oid].items) if oid in orders else -1
            if kinds[0] != START or kinds[-1] != FINISH or len(block) != n_items + 2:
                issues.append(f"rule 3: order {oid} block malformed on mover {block[0].mover}")

        for so in seq:
            if so.op.order_id != current:
                if current is not None:
                    close(block)
                    seen_done.add(current)
                if so.op.order_id in seen_done:
                    issues.append(
                        f"rule 3: order {so.op.order_id} interleaved on mover {mover}"
                    )
                current = so.op.order_id
                block = []
            block.append(so)
        close(block)

    per_order: dict[int, list[ScheduledOp]] = {}
    for so in schedule.ops:
        per_order.setdefault(so.op.order_id, []).append(so)
    for oid, sos in per_order.items():
        if len({s.mover for s in sos}) != 1:
            issues.append(f"rule 3: order {oid} split across movers")

    by_tile: dict[Coord, list[ScheduledOp]] = {}
    for so in schedule.ops:
        by_tile.setdefault(so.tile, []).append(so)
    for tile, sos in by_tile.items():
        sos.sort(key=lambda s: s.start)
        for a, b in zip(sos, sos[1:]):
            if b.start < a.end:
                issues.append(
                    f"rule 4: tile {tile} ops {a.op.op_id},{b.op.op_id} overlap"
                )

    for so in schedule.ops:
        if so.end - so.start != so.op.duration:
            issues.append(f"rule 6: op {so.op.op_id} duration violated")
        if so.start < 0:
            issues.append(f"rule 8: op {so.op.op_id} starts before tick 0")
    if schedule.ops and schedule.makespan != max(so.end for so in schedule.ops):
        issues.append("rule 7: stored makespan is not the latest finish")
    return issues


# --- P||Cmax ----------------------------------------------------------------------

def p_cmax(times, m: int, mode: str = "exact") -> tuple[int, list[int]]:
    """Makespan scheduling on identical machines.

    Returns (value, machine index per job).  mode "exact" (n <= 20) gives the
    optimum, "bound" the valid lower bound max(max, ceil(sum/m)) with no
    meaningful assignment, "lpt" the longest-processing-time heuristic (an
    upper estimate: warm-start quality only, never a bound).
    """
    times = [int(t) for t in times]
    n = len(times)
    if m < 1:
        raise ValueError("need at least one machine")
    if n == 0:
        return 0, []
    if mode == "bound":
        return max(max(times), math.ceil(sum(times) / m)), [0] * n
    if mode == "lpt":
        return _lpt(times, m)
    if mode != "exact":
        raise ValueError(f"unknown mode {mode!r}")
    if n > P_CMAX_EXACT_LIMIT:
        raise ValueError(f"exact mode guard exceeded: {n} > {P_CMAX_EXACT_LIMIT}")

    order = sorted(range(n), key=lambda i: -times[i])
    best_val, lpt_assign = _lpt(times, m)
    best = {"val": best_val, "assign": lpt_assign}
    floor = max(max(times), math.ceil(sum(times) / m))
    if best_val == floor:
        return best_val, lpt_assign

    loads = [0] * m
    assign = [0] * n
    suffix = [0] * (n + 1)
    for i in range(n - 1, -1, -1):
        suffix[i] = suffix[i + 1] + times[order[i]]

    def dfs(i):
        if best["val"] == floor:
            return
        cur_max = max(loads)
        if cur_max >= best["val"]:
            return
        if max(cur_max, math.ceil((sum(loads) + suffix[i]) / m)) >= best["val"]:
            return
        if i == n:
            best["val"] = cur_max
            best["assign"] = assign.copy()
            return
        t = times[order[i]]
        tried = set()
        for mi in range(m):
            if loads[mi] in tried:
                continue
            tried.add(loads[mi])
            loads[mi] += t
            assign[order[i]] = mi
            dfs(i + 1)
            loads[mi] -= t
        assign[order[i]] = 0

    dfs(0)
    return best["val"], best["assign"]


def _lpt(times, m):
    n = len(times)
    loads = [0] * m
    assign = [0] * n
    for i in sorted(range(n), key=lambda i: (-times[i], i)):
        mi = min(range(m), key=lambda j: (loads[j], j))
        loads[mi] += times[i]
        assign[i] = mi
    return max(loads), assign


def lower_bound(orders, placement, n_movers: int, eta: int) -> LowerBoundResult:
    """Relaxation bound: exact per-order path times fed into parallel machines.

    Valid because any schedule also satisfies every relaxed constraint: it only
    drops tile exclusivity and the travel between consecutive orders' interfaces.
    """
    orders = list(orders)
    kcache: dict[tuple, int] = {}
    t_values: dict[int, int] = {}
    for o in orders:
        key = o.drugs
        if key not in kcache:
            kcache[key] = shppn.kappa(o, placement).kappa
        t_values[o.id] = 2 * eta + kcache[key] + o.total_dispensing

    ids = [o.id for o in orders]
    times = [t_values[i] for i in ids]
    if len(orders) <= LOWER_BOUND_EXACT_ORDERS:
        value, assign = p_cmax(times, n_movers, mode="exact")
        exact = True
    else:
        value, _ = p_cmax(times, n_movers, mode="bound")
        _, assign = p_cmax(times, n_movers, mode="lpt")
        exact = False
    assignment = {oid: assign[i] for i, oid in enumerate(ids)}
    return LowerBoundResult(t_values, assignment, int(value), exact)


# --- routes -----------------------------------------------------------------------

@dataclass(frozen=True)
class Route:
    start_iface: Coord
    stops: tuple[tuple[str, Coord], ...]  # (drug, tile) visit order
    end_iface: Coord

    def length(self, dist, prev_loc=None) -> int:
        total = 0 if prev_loc is None else dist(prev_loc, self.start_iface)
        cur = self.start_iface
        for _, t in self.stops:
            total += dist(cur, t)
            cur = t
        return total + dist(cur, self.end_iface)


def _route_count(order, placement, n_if: int) -> int:
    count = math.factorial(len(order.drugs)) * n_if * n_if
    for g in order.drugs:
        count *= max(1, len(placement.dispensers_for(g)))
        if count > 10 * ROUTE_ENUM_CAP:
            return count
    return count


def enumerate_routes(order, placement) -> list[Route]:
    interfaces = sorted(placement.interfaces)
    alts = [(g, sorted(placement.dispensers_for(g))) for g in order.drugs]
    routes = []
    for perm in itertools.permutations(range(len(alts))):
        for combo in itertools.product(*(alts[i][1] for i in perm)):
            stops = tuple((alts[i][0], c) for i, c in zip(perm, combo))
            for si in interfaces:
                for ei in interfaces:
                    routes.append(Route(si, stops, ei))
    return routes


def greedy_routes(order, placement, prev_loc, rng: random.Random | None = None) -> list[Route]:
    """Nearest-neighbor route from each start interface (cheap, always available)."""
    interfaces = sorted(placement.interfaces)
    dist = placement.layout.distance
    out = []
    for si in interfaces:
        remaining = list(order.drugs)
        if rng is not None:
            rng.shuffle(remaining)
        cur = si
        stops = []
        while remaining:
            cands = []
            for g in remaining:
                for t in placement.dispensers_for(g):
                    cands.append((dist(cur, t), t, g))
            d0, t0, g0 = min(cands)
            if rng is not None and len(cands) > 1 and rng.random() < 0.3:
                d0, t0, g0 = sorted(cands)[1]
            served = [g for g in remaining if t0 in placement.dispensers_for(g)]
            for g in served:
                stops.append((g, t0))
                remaining.remove(g)
            cur = t0
        ei = min(interfaces, key=lambda i: (dist(cur, i), i))
        out.append(Route(si, tuple(stops), ei))
    return out


def candidate_routes(order, placement, prev_loc, limit: int = 6,
                     rng: random.Random | None = None) -> list[Route]:
    dist = placement.layout.distance
    if _route_count(order, placement, len(placement.interfaces)) <= ROUTE_ENUM_CAP:
        routes = enumerate_routes(order, placement)
    else:
        routes = greedy_routes(order, placement, prev_loc, rng)
    routes.sort(key=lambda r: (r.length(dist, prev_loc), r.start_iface, r.stops, r.end_iface))
    seen = set()
    out = []
    for r in routes:
        key = (r.start_iface, r.stops, r.end_iface)
        if key not in seen:
            seen.add(key)
            out.append(r)
        if len(out) >= limit:
            break
    return out


# --- timing engine ----------------------------------------------------------------

class _Plan:
    """Per-mover sequences of (order, route); the search state."""

    __slots__ = ("seqs",)

    def __init__(self, n_movers: int):
        self.seqs: list[list[tuple[Order, Route]]] = [[] for _ in range(n_movers)]

    def copy(self) -> "_Plan":
        p = _Plan(len(self.seqs))
        p.seqs = [list(s) for s in self.seqs]
        return p


def _timing(plan: _Plan, instance: SchedulingInstance, op_ids):
    """Deterministic left-shift timing; returns [(op_id, mover, tile, start)]."""
    dist = instance.placement.layout.distance
    eta = instance.eta

    chains = []
    for seq in plan.seqs:
        chain = []
        for order, route in seq:
            chain.append((op_ids[(order.id, START, INTERFACE)], eta, route.start_iface))
            dur = dict(order.items)
            for g, t in route.stops:
                chain.append((op_ids[(order.id, DISPENSING, g)], dur[g], t))
            chain.append((op_ids[(order.id, FINISH, INTERFACE)], eta, route.end_iface))
        chains.append(chain)

    tile_busy: dict[Coord, list[tuple[int, int]]] = {}
    ptr = [0] * len(chains)
    ready = [0] * len(chains)
    loc: list[Coord | None] = [None] * len(chains)
    placed: list[tuple[int, int, Coord, int]] = []

    def earliest(tile, t0, dur):
        t = t0
        for s, e in tile_busy.get(tile, ()):
            if t + dur <= s:
                break
            t = max(t, e)
        return t

    total = sum(len(c) for c in chains)
    while len(placed) < total:
        cand = None
        for m, chain in enumerate(chains):
            if ptr[m] >= len(chain):
                continue
            op_id, dur, tile = chain[ptr[m]]
            t0 = ready[m] + (dist(loc[m], tile) if loc[m] is not None else 0)
            t = earliest(tile, t0, dur)
            if cand is None or (t, m) < cand[:2]:
                cand = (t, m, op_id, dur, tile)
        t, m, op_id, dur, tile = cand
        busy = tile_busy.setdefault(tile, [])
        busy.append((t, t + dur))
        busy.sort()
        placed.append((op_id, m, tile, t))
        ptr[m] += 1
        ready[m] = t + dur
        loc[m] = tile
    return placed


def _plan_to_schedule(plan, instance, ops_by_id, op_ids, trace=()) -> Schedule:
    placed = _timing(plan, instance, op_ids)
    sos = tuple(
        ScheduledOp(ops_by_id[op_id], m, tile, start) for op_id, m, tile, start in placed
    )
    makespan = max(s.end for s in sos) if sos else 0
    return Schedule(sos, makespan, tuple(trace))


def _plan_makespan(plan, instance, op_ids, durations) -> tuple[int, int]:
    placed = _timing(plan, instance, op_ids)
    makespan = 0
    flow = 0
    for op_id, _m, _tile, start in placed:
        end = start + durations[op_id]
        flow += end
        if end > makespan:
            makespan = end
    return makespan, flow


# --- scheduler --------------------------------------------------------------------

def schedule(
    orders,
    placement,
    n_movers: int,
    time_limit: float | None = None,
    warm_start: dict[int, int] | None = None,
    seed: int = 0,
    eta: int = 2,
    max_iterations: int | None = None,
) -> Schedule:
    """Best-found valid schedule for the order set.

    Search: warm-started constructive insertion followed by seeded LNS
    (remove-and-reinsert up to 4 orders, roulette over destroy sizes, restart
    after 500 stale iterations).  Tiny instances are enumerated exhaustively.
    Deterministic for a fixed (seed, max_iterations); time_limit is wall-clock.
    """
    orders = list(orders)
    if not orders:
        raise ValueError("no orders to schedule")
    if n_movers < 1:
        raise ValueError("need at least one mover")
    for o in orders:
        for g in o.drugs:
            if not placement.dispensers_for(g):
                raise ValueError(f"no dispenser placed for drug {g!r}")
    if not placement.interfaces:
        raise ValueError("placement has no interfaces")

    instance = SchedulingInstance(tuple(orders), placement, n_movers, eta)
    specs = build_operations(orders, eta)
    ops_by_id = {op.op_id: op for op in specs}
    op_ids = {}
    for op in specs:
        key = (op.order_id, op.kind, op.target if op.kind == DISPENSING else INTERFACE)
        op_ids[key] = op.op_id
    durations = {op.op_id: op.duration for op in specs}

    exhaustive = _exhaustive_count(orders, placement, n_movers)
    if exhaustive is not None and exhaustive <= EXHAUSTIVE_CAP:
        plan, trace = _exhaustive_search(
            orders, placement, instance, n_movers, op_ids, durations
        )
        return _plan_to_schedule(plan, instance, ops_by_id, op_ids, trace)

    plan, trace = _lns_search(
        orders, placement, instance, n_movers, op_ids, durations,
        warm_start, seed, time_limit, max_iterations,
    )
    return _plan_to_schedule(plan, instance, ops_by_id, op_ids, trace)


def _exhaustive_count(orders, placement, n_movers):
    if len(orders) > 3 or n_movers > 2:
        return None
    total = 0
    route_counts = []
    for o in orders:
        c = _route_count(o, placement, len(placement.interfaces))
        if c > 64:
            return None
        route_counts.append(c)
    # timing tie-breaks by mover index, so relabelled assignments are NOT
    # interchangeable; every one of the n_movers^n maps is enumerated
    for assign in itertools.product(range(n_movers), repeat=len(orders)):
        groups: dict[int, list[int]] = {}
        for oi, m in enumerate(assign):
            groups.setdefault(m, []).append(oi)
        combos = 1
        for m, members in groups.items():
            combos *= math.factorial(len(members))
        for oi in range(len(orders)):
            combos *= route_counts[oi]
        total += combos
        if total > EXHAUSTIVE_CAP:
            return total
    return total


def _exhaustive_search(orders, placement, instance, n_movers, op_ids, durations):
    all_routes = [enumerate_routes(o, placement) for o in orders]
    best = None
    best_key = (math.inf, math.inf)
    for assign in itertools.product(range(n_movers), repeat=len(orders)):
        groups: dict[int, list[int]] = {}
        for oi, m in enumerate(assign):
            groups.setdefault(m, []).append(oi)
        movers = sorted(groups)
        perms_by_mover = [list(itertools.permutations(groups[m])) for m in movers]
        for perm_combo in itertools.product(*perms_by_mover):
            flat = [oi for perm in perm_combo for oi in perm]
            for route_combo in itertools.product(*(all_routes[oi] for oi in flat)):
                plan = _Plan(n_movers)
                ri = 0
                for m, perm in zip(movers, perm_combo):
                    for oi in perm:
                        plan.seqs[m].append((orders[oi], route_combo[ri]))
                        ri += 1
                key = _plan_makespan(plan, instance, op_ids, durations)
                if key < best_key:
                    best_key = key
                    best = plan.copy()
    return best, (best_key[0],)


class _RouteCache:
    """Insertion candidates per (order, previous location)."""

    def __init__(self, placement, rng):
        self.placement = placement
        self.rng = rng
        self.store: dict[tuple, list[Route]] = {}

    def get(self, order, prev_loc, limit=4):
        key = (order.id, prev_loc)
        if key not in self.store:
            self.store[key] = candidate_routes(
                order, self.placement, prev_loc, limit=limit, rng=self.rng
            )
        return self.store[key]


def _lns_search(orders, placement, instance, n_movers, op_ids, durations,
                warm_start, seed, time_limit, max_iterations):
    rng = random.Random(seed)
    dist = placement.layout.distance
    deadline = None if time_limit is None else time.monotonic() + time_limit
    if max_iterations is None:
        max_iterations = 10_000_000 if time_limit is not None else 2_000
    routes = _RouteCache(placement, random.Random(seed + 1))

    if warm_start is None:
        rough = {
            o.id: min(r.length(dist) for r in routes.get(o, None))
            + o.total_dispensing + 2 * instance.eta
            for o in orders
        }
        _, assign = p_cmax([rough[o.id] for o in orders], n_movers, mode="lpt")
        warm_start = {o.id: assign[i] for i, o in enumerate(orders)}

    plan = _Plan(n_movers)
    for o in sorted(orders, key=lambda o: (-(o.total_dispensing), o.id)):
        m = warm_start.get(o.id, 0) % n_movers
        _insert_best(plan, o, instance, op_ids, durations, routes, movers=[m])
    best = plan.copy()
    best_key = _plan_makespan(best, instance, op_ids, durations)
    trace = [best_key[0]]

    stale = 0
    size_weights = {k: 1.0 for k in range(1, min(4, len(orders)) + 1)}
    it = 0
    while it < max_iterations:
        it += 1
        if deadline is not None and time.monotonic() > deadline:
            break
        sizes = sorted(size_weights)
        weights = [size_weights[k] for k in sizes]
        k = rng.choices(sizes, weights=weights)[0]
        removed = rng.sample(orders, min(k, len(orders)))
        work = plan.copy()
        removed_ids = {o.id for o in removed}
        for m in range(n_movers):
            work.seqs[m] = [(o, r) for o, r in work.seqs[m] if o.id not in removed_ids]
        for o in sorted(removed, key=lambda o: (-(o.total_dispensing), o.id)):
            _insert_best(work, o, instance, op_ids, durations, routes)
        key = _plan_makespan(work, instance, op_ids, durations)
        if key < best_key:
            best, best_key = work.copy(), key
            plan = work
            size_weights[k] = min(8.0, size_weights[k] * 1.3)
            stale = 0
        else:
            size_weights[k] = max(0.25, size_weights[k] * 0.98)
            stale += 1
            if key[0] <= best_key[0]:
                plan = work  # sideways moves on equal makespan keep diversity
            if stale >= 500:
                plan = best.copy()
                stale = 0
        trace.append(best_key[0])
    return best, trace


def _insert_best(plan: _Plan, order: Order, instance, op_ids, durations,
                 routes: _RouteCache, movers=None):
    best = None
    best_key = None
    candidates = range(len(plan.seqs)) if movers is None else movers
    for m in candidates:
        seq = plan.seqs[m]
        for pos in range(len(seq) + 1):
            prev_loc = seq[pos - 1][1].end_iface if pos > 0 else None
            for route in routes.get(order, prev_loc):
                seq.insert(pos, (order, route))
                key = _plan_makespan(plan, instance, op_ids, durations)
                seq.pop(pos)
                if best_key is None or key < best_key:
                    best_key = key
                    best = (m, pos, route)
    m, pos, route = best
    plan.seqs[m].insert(pos, (order, route))
