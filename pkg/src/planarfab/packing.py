"""Tactical dispenser packing.

Stage 1 decides each drug's dispenser multiplicity and groups dispensers onto
unplaced tiles so the maximum expected tile load is minimal.  The bilinear
load-split constraint (per-dispenser load x multiplicity = demand) is handled
by enumerating integer multiplicities, which turns every candidate into a
min-max bin-packing subproblem that is solved exactly at desk scale and by
seeded local search above it.  A certified lower bound is always reported.

Stage 2 keeps the multiplicities, per-dispenser loads and the achieved maximum
load fixed and re-groups dispensers to maximize the sum of pairwise drug
correlations on shared tiles (unordered pairs counted once; the doubled sum is
available for reporting).

Empty tiles are permitted: when fewer dispensers than tiles exist the model's
one-dispenser-per-tile floor is unsatisfiable, so tiles are treated as "up to
n_tiles usable".
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass

from .core import DrugCatalog, InstanceConfig

EPS = 1e-9


class PackingInfeasible(ValueError):
    pass


@dataclass(frozen=True)
class Packing:
    """Grouping of dispensers onto unplaced tiles."""

    tiles: tuple[tuple[str, ...], ...]  # used tiles, drugs sorted within a tile
    z: dict[str, int]
    pi: dict[str, float]
    mu: tuple[float, ...]
    mu_max: float
    lower_bound: float
    exact: bool
    n_tiles_available: int
    correlation_objective: float | None = None

    @property
    def n_dispensers_used(self) -> int:
        return sum(len(t) for t in self.tiles)


def _canonical(tiles: list[tuple[str, ...]]) -> tuple[tuple[str, ...], ...]:
    return tuple(sorted(tuple(sorted(t)) for t in tiles if t))


def _loads(tiles, pi) -> list[float]:
    return [sum(pi[g] for g in t) for t in tiles]


def _make_packing(tiles, z, pi, lower, exact, n_tiles, corr=None) -> Packing:
    tiles = _canonical(list(tiles))
    mu = _loads(tiles, pi)
    return Packing(
        tiles,
        dict(z),
        dict(pi),
        tuple(mu),
        max(mu) if mu else 0.0,
        lower,
        exact,
        n_tiles,
        corr,
    )


def validate_packing(packing: Packing, config: InstanceConfig, demand=None) -> list[str]:
    """Machine check of every Packing invariant; empty list means consistent."""
    issues = []
    counts: dict[str, int] = {}
    for t in packing.tiles:
        if not 1 <= len(t) <= config.d_max:
            issues.append(f"tile {t} holds {len(t)} dispensers (1..{config.d_max})")
        if len(set(t)) != len(t):
            issues.append(f"tile {t} repeats a drug")
        for g in t:
            counts[g] = counts.get(g, 0) + 1
    for g, zg in packing.z.items():
        if counts.get(g, 0) != zg:
            issues.append(f"drug {g}: {counts.get(g, 0)} placed dispensers != z={zg}")
        if zg > config.m_max:
            issues.append(f"drug {g}: z={zg} exceeds m_max={config.m_max}")
        if zg < 1:
            issues.append(f"drug {g}: z={zg} < 1 (every drug must be purchasable)")
        if demand is not None and zg >= 1:
            want = float(demand[g])
            if abs(packing.pi[g] * zg - want) > 1e-6 * max(1.0, want):
                issues.append(f"drug {g}: pi*z != demand")
    if packing.n_dispensers_used > config.n_dispensers:
        issues.append("dispenser budget exceeded")
    if len(packing.tiles) > packing.n_tiles_available:
        issues.append("more used tiles than available")
    loads = _loads(packing.tiles, packing.pi)
    for got, want in zip(loads, packing.mu):
        if abs(got - want) > 1e-6:
            issues.append("stored tile load disagrees with recomputation")
    if loads and abs(max(loads) - packing.mu_max) > 1e-6:
        issues.append("stored mu_max disagrees with recomputation")
    return issues


def tile_utilization(packing: Packing, demand) -> list[tuple[list[tuple[str, float]], float]]:
    """Per-tile (drug, contribution) breakdown and its sum."""
    out = []
    for t in packing.tiles:
        parts = [(g, float(demand[g]) / packing.z[g] if packing.z[g] else 0.0) for g in t]
        out.append((parts, sum(c for _, c in parts)))
    return out


def correlation_sum(tiles, catalog: DrugCatalog, ordered: bool = False) -> float:
    """Sum of pairwise correlations of drugs sharing a tile."""
    total = 0.0
    for t in tiles:
        for i in range(len(t)):
            for j in range(i + 1, len(t)):
                total += catalog.correlation[catalog.index(t[i]), catalog.index(t[j])]
    return 2.0 * total if ordered else total


# --- stage 1: minimize the maximum expected tile load ----------------------------

def pack_min_load(
    demand,
    n_tiles: int,
    config: InstanceConfig,
    drugs=None,
    mode: str = "auto",
    seed: int = 0,
    restarts: int = 20,
) -> Packing:
    """Choose multiplicities and tile groups minimizing the peak tile load.

    mode: "exact" forces branch and bound, "heuristic" forces local search,
    "auto" is exact up to 12 drugs x 12 tiles.
    """
    if drugs is None:
        drugs = sorted(demand.u)
    drugs = sorted(set(drugs))
    u = {g: float(demand[g]) for g in drugs}
    n_drugs = len(drugs)
    if n_drugs == 0:
        raise PackingInfeasible("no drugs to pack")
    if config.n_dispensers < n_drugs:
        raise PackingInfeasible(
            f"insufficient dispensers: {config.n_dispensers} < {n_drugs} drugs"
        )
    if n_tiles * config.d_max < n_drugs:
        raise PackingInfeasible(
            f"coverage impossible: {n_tiles} tiles x d_max={config.d_max} < {n_drugs} drugs"
        )

    z_cap = max(1, min(config.m_max, n_tiles))
    budget = min(config.n_dispensers, n_tiles * config.d_max)
    lower = _certified_lower_bound(u, drugs, n_tiles, z_cap, budget)

    use_exact = mode == "exact" or (mode == "auto" and n_drugs <= 12 and n_tiles <= 12)
    if use_exact:
        result = _exact_min_load(u, drugs, n_tiles, config.d_max, z_cap, budget, lower)
        if result is not None:
            tiles, z = result
            pi = {g: (u[g] / z[g] if z[g] else 0.0) for g in drugs}
            return _make_packing(tiles, z, pi, lower, True, n_tiles)
    tiles, z = _heuristic_min_load(
        u, drugs, n_tiles, config.d_max, z_cap, budget, seed, restarts
    )
    pi = {g: (u[g] / z[g] if z[g] else 0.0) for g in drugs}
    return _make_packing(tiles, z, pi, lower, False, n_tiles)


def _certified_lower_bound(u, drugs, n_tiles, z_cap, budget) -> float:
    per_drug_cap = min(z_cap, budget - (len(drugs) - 1))
    lb1 = max((u[g] / max(1, per_drug_cap) for g in drugs), default=0.0)
    lb2 = sum(u.values()) / n_tiles
    return max(lb1, lb2)


def _exact_min_load(u, drugs, n_tiles, d_max, z_cap, budget, lower, node_cap=500_000):
    order = sorted(drugs, key=lambda g: (-u[g], g))
    best = {"mu": math.inf, "tiles": None, "z": None, "nodes": 0}

    def z_bound(z_partial, idx, spent):
        cur = max((u[g] / z_partial[g] for g in order[:idx]), default=0.0)
        rest = len(order) - idx
        opt = 0.0
        if rest:
            room = budget - spent - (rest - 1)
            cap = min(z_cap, max(1, room))
            opt = max(u[g] / cap for g in order[idx:])
        return max(cur, opt, lower)

    def dfs_z(idx, z_partial, spent):
        if best["nodes"] > node_cap:
            return
        if best["mu"] <= lower + EPS:
            return
        if idx == len(order):
            if spent > n_tiles * d_max:
                return
            quick = max((u[g] / z_partial[g] for g in order), default=0.0)
            quick = max(quick, sum(u.values()) / min(n_tiles, spent) if spent else 0.0)
            if quick >= best["mu"] - EPS:
                return
            pi = {g: u[g] / z_partial[g] for g in order}
            packed = _exact_bin_pack(
                order, z_partial, pi, n_tiles, d_max, best["mu"], best, node_cap
            )
            if packed is not None:
                mu, tiles = packed
                if mu < best["mu"] - EPS:
                    best["mu"] = mu
                    best["tiles"] = tiles
                    best["z"] = dict(z_partial)
            return
        g = order[idx]
        rest = len(order) - idx - 1
        hi = min(z_cap, budget - spent - rest)
        for zg in range(hi, 0, -1):
            z_partial[g] = zg
            if z_bound(z_partial, idx + 1, spent + zg) < best["mu"] - EPS:
                dfs_z(idx + 1, z_partial, spent + zg)
        del z_partial[g]

    dfs_z(0, {}, 0)
    if best["tiles"] is None or best["nodes"] > node_cap:
        return None
    return best["tiles"], best["z"]


def _exact_bin_pack(order, z, pi, n_tiles, d_max, incumbent_mu, counter, node_cap):
    """Exact min-max packing of dispenser copies into at most n_tiles tiles."""
    items = []
    for g in order:
        items.extend([g] * z[g])
    items.sort(key=lambda g: (-pi[g], g))
    total = sum(pi[g] for g in items)
    best = {"mu": incumbent_mu, "tiles": None}
    bins: list[list[str]] = []
    loads: list[float] = []

    def dfs(i, cur_max, remaining):
        counter["nodes"] += 1
        if counter["nodes"] > node_cap:
            return
        used = sum(1 for b in bins if b)
        lb = max(cur_max, (sum(loads) + remaining) / n_tiles)
        if lb >= best["mu"] - EPS:
            return
        if i == len(items):
            best["mu"] = cur_max
            best["tiles"] = [tuple(b) for b in bins if b]
            return
        g = items[i]
        tried = set()
        for bi in range(len(bins)):
            b = bins[bi]
            if len(b) >= d_max or g in b:
                continue
            key = (round(loads[bi], 12), len(b), frozenset(b))
            if key in tried:
                continue
            tried.add(key)
            new_load = loads[bi] + pi[g]
            if new_load >= best["mu"] - EPS:
                continue
            b.append(g)
            loads[bi] += pi[g]
            dfs(i + 1, max(cur_max, new_load), remaining - pi[g])
            b.pop()
            loads[bi] -= pi[g]
        if len(bins) < n_tiles:
            if pi[g] < best["mu"] - EPS:
                bins.append([g])
                loads.append(pi[g])
                dfs(i + 1, max(cur_max, pi[g]), remaining - pi[g])
                bins.pop()
                loads.pop()

    dfs(0, 0.0, total)
    if best["tiles"] is None:
        return None
    return best["mu"], best["tiles"]


def _heuristic_min_load(u, drugs, n_tiles, d_max, z_cap, budget, seed, restarts):
    # multiplicity: repeatedly add a dispenser to the currently heaviest drug
    z = {g: 1 for g in drugs}
    spent = len(drugs)
    while spent < budget:
        cand = max(drugs, key=lambda g: (u[g] / z[g], g))
        if z[cand] >= z_cap or u[cand] == 0.0:
            break
        z[cand] += 1
        spent += 1
    pi = {g: u[g] / z[g] for g in drugs}
    items = [g for g in drugs for _ in range(z[g])]

    rng = random.Random(seed)
    best_tiles, best_profile = None, None
    for attempt in range(max(1, restarts)):
        ordered = sorted(items, key=lambda g: (-pi[g], g))
        if attempt:
            rng.shuffle(ordered)
        tiles = _lpt_fill(ordered, pi, n_tiles, d_max)
        if tiles is None:
            continue
        tiles = _improve_min_load(tiles, pi, n_tiles, d_max)
        profile = tuple(sorted((_loads(tiles, pi)), reverse=True))
        if best_profile is None or profile < best_profile:
            best_profile, best_tiles = profile, tiles
    if best_tiles is None:
        raise PackingInfeasible("could not fit dispensers into tiles")
    return best_tiles, z


def _lpt_fill(items, pi, n_tiles, d_max):
    bins: list[list[str]] = []
    loads: list[float] = []
    for g in items:
        cands = [
            i for i in range(len(bins)) if len(bins[i]) < d_max and g not in bins[i]
        ]
        if len(bins) < n_tiles:
            cands.append(-1)
        if not cands:
            return None
        pick = min(
            cands, key=lambda i: (loads[i] if i >= 0 else 0.0, i if i >= 0 else len(bins))
        )
        if pick == -1:
            bins.append([g])
            loads.append(pi[g])
        else:
            bins[pick].append(g)
            loads[pick] += pi[g]
    return [tuple(b) for b in bins]


def _improve_min_load(tiles, pi, n_tiles, d_max, max_passes=200):
    tiles = [list(t) for t in tiles]

    def profile():
        return tuple(sorted((sum(pi[g] for g in t) for t in tiles), reverse=True))

    for _ in range(max_passes):
        cur = profile()
        improved = False
        loads = [sum(pi[g] for g in t) for t in tiles]
        peak = max(range(len(tiles)), key=loads.__getitem__)
        # relocate one dispenser off the peak tile
        for g in sorted(tiles[peak], key=lambda g: (-pi[g], g)):
            for ti in range(len(tiles) + (1 if len(tiles) < n_tiles else 0)):
                if ti == peak:
                    continue
                if ti < len(tiles) and (len(tiles[ti]) >= d_max or g in tiles[ti]):
                    continue
                tiles[peak].remove(g)
                if ti == len(tiles):
                    tiles.append([g])
                else:
                    tiles[ti].append(g)
                if profile() < cur:
                    improved = True
                else:
                    if ti == len(tiles) - 1 and len(tiles[ti]) == 1 and tiles[ti][0] == g:
                        tiles.pop()
                    else:
                        tiles[ti].remove(g)
                    tiles[peak].append(g)
                if improved:
                    break
            if improved:
                break
        if improved:
            continue
        # pairwise swap involving the peak tile
        for g in list(tiles[peak]):
            for ti in range(len(tiles)):
                if ti == peak:
                    continue
                for h in list(tiles[ti]):
                    if h == g or pi[h] >= pi[g]:
                        continue
                    if h in tiles[peak] or g in tiles[ti]:
                        continue
                    tiles[peak].remove(g)
                    tiles[peak].append(h)
                    tiles[ti].remove(h)
                    tiles[ti].append(g)
                    if profile() < cur:
                        improved = True
                    else:
                        tiles[peak].remove(h)
                        tiles[peak].append(g)
                        tiles[ti].remove(g)
                        tiles[ti].append(h)
                    if improved:
                        break
                if improved:
                    break
            if improved:
                break
        if not improved:
            break
    tiles = [t for t in tiles if t]
    return [tuple(t) for t in tiles]


# --- stage 2: maximize pairwise correlations at fixed load -----------------------

def pack_correlation(
    stage1: Packing,
    catalog: DrugCatalog,
    config: InstanceConfig,
    mode: str = "auto",
    seed: int = 0,
    node_cap: int = 500_000,
) -> Packing:
    """Re-group dispensers to maximize co-located drug correlation.

    Multiplicities, per-dispenser loads and the stage-1 peak load are frozen;
    the result's objective never falls below the stage-1 grouping's own score.
    """
    issues = validate_packing(stage1, config)
    if issues:
        raise ValueError(f"stage-1 packing invalid: {issues}")
    drugs = sorted(stage1.z)
    z, pi = stage1.z, stage1.pi
    mu_cap = stage1.mu_max + EPS
    n_tiles = stage1.n_tiles_available
    d_max = config.d_max

    baseline = correlation_sum(stage1.tiles, catalog)
    use_exact = mode == "exact" or (mode == "auto" and len(drugs) <= 12)
    tiles, objective, exact = None, baseline, False
    if use_exact:
        found = _exact_correlation(
            drugs, z, pi, catalog, n_tiles, d_max, mu_cap, baseline, stage1.tiles, node_cap
        )
        if found is not None:
            tiles, objective, exact = found
    if tiles is None:
        tiles, objective = _local_search_correlation(
            stage1.tiles, z, pi, catalog, n_tiles, d_max, mu_cap, seed
        )
        exact = False
    if objective < baseline - EPS:
        tiles, objective = stage1.tiles, baseline

    return Packing(
        _canonical(list(tiles)),
        dict(z),
        dict(pi),
        tuple(_loads(_canonical(list(tiles)), pi)),
        stage1.mu_max,
        stage1.lower_bound,
        exact,
        n_tiles,
        correlation_objective=objective,
    )


def _exact_correlation(
    drugs, z, pi, catalog, n_tiles, d_max, mu_cap, baseline, fallback_tiles, node_cap
):
    items = [g for g in sorted(drugs, key=lambda g: (-pi[g], g)) for _ in range(z[g])]
    corr = catalog.correlation
    idx = {g: catalog.index(g) for g in drugs}
    # admissible per-item optimism: the d_max-1 best positive partners
    best_gain = {}
    for g in drugs:
        partners = sorted((max(0.0, corr[idx[g], idx[h]]) for h in drugs if h != g), reverse=True)
        best_gain[g] = sum(partners[: max(0, d_max - 1)])
    suffix = [0.0] * (len(items) + 1)
    for i in range(len(items) - 1, -1, -1):
        suffix[i] = suffix[i + 1] + best_gain[items[i]]

    best = {"obj": baseline, "tiles": list(fallback_tiles), "nodes": 0, "capped": False}
    bins: list[list[str]] = []
    loads: list[float] = []

    def dfs(i, score):
        best["nodes"] += 1
        if best["nodes"] > node_cap:
            best["capped"] = True
            return
        if score + suffix[i] <= best["obj"] + EPS:
            return
        if i == len(items):
            best["obj"] = score
            best["tiles"] = [tuple(b) for b in bins if b]
            return
        g = items[i]
        tried = set()
        for bi in range(len(bins)):
            b = bins[bi]
            if len(b) >= d_max or g in b or loads[bi] + pi[g] > mu_cap:
                continue
            key = frozenset(b)
            if key in tried:
                continue
            tried.add(key)
            gain = sum(corr[idx[g], idx[h]] for h in b)
            b.append(g)
            loads[bi] += pi[g]
            dfs(i + 1, score + gain)
            b.pop()
            loads[bi] -= pi[g]
        if len(bins) < n_tiles and pi[g] <= mu_cap:
            bins.append([g])
            loads.append(pi[g])
            dfs(i + 1, score)
            bins.pop()
            loads.pop()

    dfs(0, 0.0)
    if best["capped"]:
        return None
    return best["tiles"], best["obj"], True


def _local_search_correlation(tiles, z, pi, catalog, n_tiles, d_max, mu_cap, seed):
    corr = catalog.correlation
    idx = {g: catalog.index(g) for t in tiles for g in t}
    tiles = [list(t) for t in tiles]

    def tile_score(t):
        return sum(
            corr[idx[t[i]], idx[t[j]]] for i in range(len(t)) for j in range(i + 1, len(t))
        )

    def total():
        return sum(tile_score(t) for t in tiles)

    def load(t):
        return sum(pi[g] for g in t)

    improved = True
    while improved:
        improved = False
        cur = total()
        for a in range(len(tiles)):
            for g in list(tiles[a]):
                # relocation
                for b in range(len(tiles) + (1 if len(tiles) < n_tiles else 0)):
                    if b == a:
                        continue
                    if b < len(tiles) and (
                        len(tiles[b]) >= d_max or g in tiles[b] or load(tiles[b]) + pi[g] > mu_cap
                    ):
                        continue
                    tiles[a].remove(g)
                    new_tile = b == len(tiles)
                    if new_tile:
                        tiles.append([g])
                    else:
                        tiles[b].append(g)
                    if total() > cur + EPS and all(len(t) >= 1 for t in tiles if t):
                        improved = True
                        tiles[:] = [t for t in tiles if t]
                        break
                    if new_tile:
                        tiles.pop()
                    else:
                        tiles[b].remove(g)
                    tiles[a].append(g)
                if improved:
                    break
                # swaps
                for b in range(len(tiles)):
                    if b == a:
                        continue
                    for h in list(tiles[b]):
                        if h == g or h in tiles[a] or g in tiles[b]:
                            continue
                        if load(tiles[a]) - pi[g] + pi[h] > mu_cap:
                            continue
                        if load(tiles[b]) - pi[h] + pi[g] > mu_cap:
                            continue
                        tiles[a].remove(g)
                        tiles[a].append(h)
                        tiles[b].remove(h)
                        tiles[b].append(g)
                        if total() > cur + EPS:
                            improved = True
                            break
                        tiles[a].remove(h)
                        tiles[a].append(g)
                        tiles[b].remove(g)
                        tiles[b].append(h)
                    if improved:
                        break
                if improved:
                    break
            if improved:
                break
    return [tuple(t) for t in tiles if t], total()
