"""Actor-to-tile assignment, buffer-constrained evaluation, and exploration.

Finite tile buffers become back-edge channels: a data channel's producer
claims its per-firing production from the back-edge when it starts and the
consumer releases it when it finishes, so buffer pressure is ordinary token
accounting.  Evaluation orders co-mapped actors with the max-plus static
order and reads the iteration period off the resulting graph; energy counts
spike generation per tile plus hop-weighted traffic on the interconnect.

The explorer is a restarted local search: from a random feasible assignment,
each cluster is tried on every other tile and moves that shrink the joint
metric (energy x period) are kept.  Local optima across restarts form the
returned Pareto front.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from fractions import Fraction

from . import schedule
from .errors import (
    CapacityError,
    DeadlockError,
    FitError,
    InfeasibleError,
    ValidationError,
)
from .hardware import HardwareGraph
from .maxplus import iteration_period
from .sdfg import BUFFER, DATA, ActorMeta, Channel, Sdfg


@dataclass(frozen=True)
class Mapping:
    """Binary actor-to-tile assignment; each actor sits on exactly one tile."""

    assignment: dict[int, int]  # actor id -> tile id

    def tile_actors(self) -> dict[int, list[int]]:
        tiles: dict[int, list[int]] = {}
        for aid in sorted(self.assignment):
            tiles.setdefault(self.assignment[aid], []).append(aid)
        return tiles

    def matrix(self, g: Sdfg, hw: HardwareGraph) -> list[list[int]]:
        actor_ids = sorted(a.id for a in g.actors)
        tile_ids = sorted(t.id for t in hw.tiles)
        return [
            [1 if self.assignment.get(aid) == tid else 0 for tid in tile_ids]
            for aid in actor_ids
        ]

    def validate(self, g: Sdfg, hw: HardwareGraph) -> None:
        actor_ids = {a.id for a in g.actors}
        tile_ids = {t.id for t in hw.tiles}
        if set(self.assignment) != actor_ids:
            raise ValidationError("mapping must assign every actor exactly once")
        unknown = {t for t in self.assignment.values() if t not in tile_ids}
        if unknown:
            raise ValidationError(f"mapping references unknown tiles {sorted(unknown)}")


def fits_tile(g: Sdfg, hw: HardwareGraph, actor_id: int, tile_id: int) -> bool:
    meta = g.actor_meta.get(actor_id, ActorMeta())
    tile = hw.tile(tile_id)
    n = tile.crossbar_n
    return meta.inputs <= n and meta.outputs <= n and meta.synapses <= n * n


@dataclass(frozen=True)
class ConstrainedSdfg:
    """SDFG augmented with buffer back-edges for one concrete mapping."""

    graph: Sdfg
    mapping: Mapping
    hw: HardwareGraph


def constrain(g: Sdfg, hw: HardwareGraph, m: Mapping) -> ConstrainedSdfg:
    """Add per-channel buffer back-edges for the given mapping.

    Every data channel gets a reverse channel holding the producing tile's
    output-buffer capacity in initial tokens.  Raises
    :class:`CapacityError` when a single firing's production cannot fit the
    buffer at all (the mapping would deadlock unconditionally) and
    :class:`FitError` when a cluster exceeds its tile's crossbar.
    """
    m.validate(g, hw)
    for aid in sorted(m.assignment):
        if not fits_tile(g, hw, aid, m.assignment[aid]):
            raise FitError(
                f"actor {aid} does not fit the crossbar of tile {m.assignment[aid]}"
            )
    channels = list(g.channels)
    next_id = max((c.id for c in channels), default=-1) + 1
    for c in g.channels:
        if c.kind != DATA:
            continue
        tile = hw.tile(m.assignment[c.src])
        if c.production > tile.out_buffer:
            raise CapacityError(
                f"channel {c.id}: actor {c.src} produces {c.production} tokens per "
                f"firing but tile {tile.id} buffers only {tile.out_buffer}"
            )
        channels.append(
            Channel(next_id, c.dst, c.src, c.production, c.production, tile.out_buffer, BUFFER)
        )
        next_id += 1
    return ConstrainedSdfg(g.with_channels(channels), m, hw)


@dataclass(frozen=True)
class EvaluatedMapping:
    mapping: Mapping
    order: schedule.StaticOrder
    period: Fraction               # ticks per iteration
    throughput: Fraction           # iterations per tick, = 1/period
    energy: Fraction               # pJ per iteration
    metric: Fraction               # joint metric: energy x period

    def as_dict(self) -> dict:
        return {
            "assignment": {str(a): t for a, t in sorted(self.mapping.assignment.items())},
            "order": {str(t): list(seq) for t, seq in sorted(self.order.orders.items())},
            "period_ticks": str(self.period),
            "throughput_per_tick": str(self.throughput),
            "energy_pj": str(self.energy),
            "metric": str(self.metric),
        }


def mapping_energy(g: Sdfg, hw: HardwareGraph, m: Mapping) -> Fraction:
    """Energy per iteration: spike generation plus hop-weighted routing.

    Depends only on the assignment and spike counts, never on firing order.
    """
    spike_pj = Fraction(hw.spike_energy_pj)
    route_pj = Fraction(hw.route_energy_pj)
    total = Fraction(0)
    for a in g.actors:
        total += g.actor_meta.get(a.id, ActorMeta()).spikes_generated * spike_pj
    for c in g.channels:
        if c.kind != DATA:
            continue
        src_tile, dst_tile = m.assignment[c.src], m.assignment[c.dst]
        if src_tile == dst_tile:
            continue
        hops = hw.hop_distance(src_tile, dst_tile)
        total += c.spikes * hops * route_pj
    return total


def evaluate(g: Sdfg, hw: HardwareGraph, m: Mapping, order_policy: str = "timed") -> EvaluatedMapping:
    """Throughput and energy of one mapping.

    The period is the max cycle mean of the constrained graph with the
    per-tile static order applied; ``order_policy`` selects the max-plus
    order ("timed") or the dependency-only baseline order ("topo").
    """
    con = constrain(g, hw, m)
    if order_policy == "timed":
        order = schedule.static_order(con.graph, m)
    elif order_policy == "topo":
        order = schedule.topological_order(con.graph, m)
    else:
        raise ValidationError(f"unknown order policy {order_policy!r}")
    ordered = schedule.apply_static_order(con.graph, order)
    period = iteration_period(ordered)
    if period is None:
        raise InfeasibleError(
            "iteration period is unbounded; the graph has no inter-iteration "
            "dependencies (serialize sources first)"
        )
    energy = mapping_energy(g, hw, m)
    return EvaluatedMapping(m, order, period, 1 / period, energy, energy * period)


# ---------------------------------------------------------------------------
# Baseline mappers
# ---------------------------------------------------------------------------

def random_mapping(g: Sdfg, hw: HardwareGraph, rng: random.Random, max_tries: int = 1000) -> Mapping:
    actor_ids = sorted(a.id for a in g.actors)
    tile_ids = sorted(t.id for t in hw.tiles)
    for _ in range(max_tries):
        assignment = {aid: rng.choice(tile_ids) for aid in actor_ids}
        if all(fits_tile(g, hw, aid, tid) for aid, tid in assignment.items()):
            return Mapping(assignment)
    raise InfeasibleError(f"no feasible random mapping found in {max_tries} tries")


def load_balanced_mapping(g: Sdfg, hw: HardwareGraph) -> Mapping:
    """Round-robin assignment spreading actors evenly over tiles."""
    actor_ids = sorted(a.id for a in g.actors)
    tile_ids = sorted(t.id for t in hw.tiles)
    assignment = {}
    cursor = 0
    for aid in actor_ids:
        for offset in range(len(tile_ids)):
            tid = tile_ids[(cursor + offset) % len(tile_ids)]
            if fits_tile(g, hw, aid, tid):
                assignment[aid] = tid
                cursor = (cursor + offset + 1) % len(tile_ids)
                break
        else:
            raise InfeasibleError(f"actor {aid} fits no tile")
    return Mapping(assignment)


# ---------------------------------------------------------------------------
# Design-space exploration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ParetoFront:
    points: tuple[EvaluatedMapping, ...]  # non-dominated, throughput-descending
    best: EvaluatedMapping                # maximum-throughput member
    explored: int                         # distinct mappings evaluated

    def validate(self) -> None:
        for p in self.points:
            for q in self.points:
                if p is q:
                    continue
                if (
                    q.throughput >= p.throughput
                    and q.energy <= p.energy
                    and (q.throughput > p.throughput or q.energy < p.energy)
                ):
                    raise ValidationError("pareto front contains a dominated point")


def _pareto_filter(points: list[EvaluatedMapping]) -> list[EvaluatedMapping]:
    kept = []
    for p in points:
        dominated = any(
            q.throughput >= p.throughput
            and q.energy <= p.energy
            and (q.throughput > p.throughput or q.energy < p.energy)
            for q in points
        )
        if not dominated:
            kept.append(p)
    # Deduplicate identical (throughput, energy) pairs deterministically.
    kept.sort(key=lambda e: (-e.throughput, e.energy, sorted(e.mapping.assignment.items())))
    unique = []
    for p in kept:
        if not unique or (p.throughput, p.energy) != (unique[-1].throughput, unique[-1].energy):
            unique.append(p)
    return unique


def explore(
    g: Sdfg,
    hw: HardwareGraph,
    eta: int,
    seed: int,
    max_sweeps: int = 20,
    jobs: int = 1,
) -> ParetoFront:
    """Restarted local search over actor-to-tile assignments.

    Each of the ``eta`` restarts draws a random feasible assignment and
    greedily relocates single clusters while the joint metric improves,
    sweeping until a full pass accepts no move (at most ``max_sweeps``
    passes, each trying every cluster on every other tile).  One extra
    descent starts from the load-balanced assignment so the front never
    falls below that baseline's local optimum.  Deterministic given seed;
    ``jobs`` bounds how many restarts run concurrently (results are merged
    by restart index, so parallelism never changes the outcome).
    """
    if eta < 1:
        raise ValidationError("eta must be at least 1")
    actor_ids = sorted(a.id for a in g.actors)
    tile_ids = sorted(t.id for t in hw.tiles)
    cache: dict[tuple, EvaluatedMapping | None] = {}
    last_failure: list[str] = []

    def cached_eval(assignment: dict[int, int]) -> EvaluatedMapping | None:
        key = tuple(assignment[a] for a in actor_ids)
        if key not in cache:
            try:
                cache[key] = evaluate(g, hw, Mapping(dict(assignment)), "timed")
            except (CapacityError, InfeasibleError, FitError, DeadlockError) as exc:
                cache[key] = None  # infeasible mapping: skipped by the search
                last_failure[:] = [f"{type(exc).__name__}: {exc}"]
        return cache[key]

    def descend(start: dict[int, int]) -> EvaluatedMapping | None:
        current = dict(start)
        best = cached_eval(current)
        if best is None:
            return None
        for _ in range(max_sweeps):
            improved = False
            for aid in actor_ids:
                home = current[aid]
                for tid in tile_ids:
                    if tid == home:
                        continue
                    if not fits_tile(g, hw, aid, tid):
                        continue
                    current[aid] = tid
                    candidate = cached_eval(current)
                    if candidate is not None and candidate.metric < best.metric:
                        best = candidate
                        home = tid
                        improved = True
                    else:
                        current[aid] = home
            if not improved:
                break
        return best

    starts: list[dict[int, int]] = []
    try:
        starts.append(load_balanced_mapping(g, hw).assignment)
    except InfeasibleError:
        pass
    feasible_start_missing = False
    for r in range(eta):
        rng = random.Random(f"{seed}:{r}")
        try:
            starts.append(random_mapping(g, hw, rng).assignment)
        except InfeasibleError:
            feasible_start_missing = True
    if not starts:
        raise InfeasibleError("no feasible random mapping exists within the retry budget")

    if jobs > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(descend, starts))
    else:
        outcomes = [descend(s) for s in starts]
    results = [r for r in outcomes if r is not None]
    if not results:
        if feasible_start_missing:
            raise InfeasibleError("no feasible random mapping exists within the retry budget")
        detail = f" (last failure: {last_failure[0]})" if last_failure else ""
        raise InfeasibleError(f"exploration found no feasible mapping{detail}")
    front = _pareto_filter(results)
    best = max(front, key=lambda e: (e.throughput, -e.energy))
    pf = ParetoFront(tuple(front), best, explored=len(cache))
    pf.validate()
    return pf
