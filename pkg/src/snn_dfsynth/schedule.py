"""Static-order schedules and self-timed execution.

A static order fixes, per tile, the firing sequence of co-mapped actors; it
is materialized as a ring of rate-one channels whose single circulating token
makes the tile's firings mutually exclusive and ordered.  Self-timed
execution then fires every actor as soon as its tokens allow, which settles
into a transient phase followed by a periodic phase; the measured throughput
is the firing rate inside the periodic phase.
"""

from __future__ import annotations

import heapq
import json
from dataclasses import dataclass
from fractions import Fraction
from typing import Mapping as MappingABC

from .errors import (
    InfeasibleError,
    NoPeriodError,
    SimulationDeadlockError,
    ValidationError,
)
from .maxplus import event_edges, first_iteration_end_times
from .sdfg import ORDER, Channel, Sdfg


@dataclass(frozen=True)
class StaticOrder:
    orders: dict[int, tuple[int, ...]]  # tile id -> actor firing order

    def position(self) -> dict[int, int]:
        return {aid: pos for seq in self.orders.values() for pos, aid in enumerate(seq)}

    def tile_of(self) -> dict[int, int]:
        return {aid: tile for tile, seq in self.orders.items() for aid in seq}


def _assignment(m) -> dict[int, int]:
    if isinstance(m, MappingABC):
        return dict(m)
    return dict(m.assignment)


def static_order(g: Sdfg, m) -> StaticOrder:
    """Per-tile firing order: ascending first-iteration firing end times.

    ``g`` is the buffer-constrained graph; ties break on actor id.  The
    resulting order is always consistent with intra-iteration dependencies
    because end times strictly increase along token-free channels.
    """
    assignment = _assignment(m)
    end = first_iteration_end_times(g)
    orders: dict[int, list[int]] = {}
    for aid in sorted(assignment):
        orders.setdefault(assignment[aid], []).append(aid)
    return StaticOrder(
        {
            tile: tuple(sorted(actors, key=lambda a: (end[a], a)))
            for tile, actors in sorted(orders.items())
        }
    )


def topological_order(g: Sdfg, m) -> StaticOrder:
    """Throughput-agnostic but dependency-safe order (baseline schedulers).

    Actors are ranked by a global topological sort of the token-free
    dependency edges (lowest actor id first among ready ones) and each tile
    takes the induced subsequence.
    """
    assignment = _assignment(m)
    edges = event_edges(g)
    ids = sorted(a.id for a in g.actors)
    succ: dict[int, list[int]] = {a: [] for a in ids}
    indeg = {a: 0 for a in ids}
    for e in edges:
        if e.delay == 0:
            succ[e.src].append(e.dst)
            indeg[e.dst] += 1
    heap = [a for a in ids if indeg[a] == 0]
    heapq.heapify(heap)
    rank: dict[int, int] = {}
    while heap:
        u = heapq.heappop(heap)
        rank[u] = len(rank)
        for v in succ[u]:
            indeg[v] -= 1
            if indeg[v] == 0:
                heapq.heappush(heap, v)
    if len(rank) != len(ids):
        raise ValidationError("token-free dependency cycle; break cycles first")
    orders: dict[int, list[int]] = {}
    for aid in sorted(assignment):
        orders.setdefault(assignment[aid], []).append(aid)
    return StaticOrder(
        {
            tile: tuple(sorted(actors, key=lambda a: (rank[a], a)))
            for tile, actors in sorted(orders.items())
        }
    )


def apply_static_order(g: Sdfg, order: StaticOrder) -> Sdfg:
    """Materialize per-tile orders as rings of rate-one channels.

    Tiles holding a single actor stay unchanged: succeeding firings of one
    cluster may pipeline, only distinct co-mapped actors must exclude each
    other.
    """
    next_id = max((c.id for c in g.channels), default=-1) + 1
    channels = list(g.channels)
    for tile in sorted(order.orders):
        seq = order.orders[tile]
        if len(seq) < 2:
            continue
        for a, b in zip(seq, seq[1:]):
            channels.append(Channel(next_id, a, b, 1, 1, 0, ORDER))
            next_id += 1
        channels.append(Channel(next_id, seq[-1], seq[0], 1, 1, 1, ORDER))
        next_id += 1
    return g.with_channels(channels)


def derive_from_single_tile(single: StaticOrder, m) -> StaticOrder:
    """Project a single-tile order onto a mapping (run-time derivation).

    Each tile's order is the subsequence of the single-tile order restricted
    to the actors mapped there, preserving relative positions.
    """
    if len(single.orders) != 1:
        raise ValidationError("reference order must cover exactly one tile")
    sequence = next(iter(single.orders.values()))
    assignment = _assignment(m)
    missing = sorted(set(assignment) - set(sequence))
    if missing:
        raise ValidationError(f"actors {missing} missing from the single-tile order")
    orders: dict[int, tuple[int, ...]] = {}
    for tile in sorted(set(assignment.values())):
        orders[tile] = tuple(a for a in sequence if assignment.get(a) == tile)
    return StaticOrder(orders)


def single_tile_reference_order(g: Sdfg) -> StaticOrder:
    """Design-time reference order: everything on one tile, unbounded buffers.

    Computed from the max-plus firing end times of the unconstrained graph.
    """
    end = first_iteration_end_times(g)
    seq = tuple(sorted((a.id for a in g.actors), key=lambda a: (end[a], a)))
    return StaticOrder({0: seq})


# ---------------------------------------------------------------------------
# Self-timed discrete-event execution
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FiringEvent:
    actor: int
    start: int
    end: int
    iteration: int  # per-actor firing count, starting at 0


@dataclass(frozen=True)
class SelfTimedTrace:
    events: tuple[FiringEvent, ...]
    transient_iterations: int
    period_ticks: int
    period_iterations: int
    throughput: Fraction  # iterations per tick in the periodic phase

    @property
    def period(self) -> Fraction:
        return Fraction(self.period_ticks, self.period_iterations)


def self_timed_simulate(g: Sdfg, order: StaticOrder, max_iterations: int | None = None) -> SelfTimedTrace:
    """Fire ready actors in static order until the token state recurs.

    Tokens are consumed when a firing starts and produced when it ends, on
    buffer back-edges as much as on data channels, so back-pressure and tile
    mutual exclusion fall out of ordinary token accounting.  The periodic
    phase is detected by exact recurrence of (channel tokens, in-flight
    remainders) at end-of-tick snapshots.
    """
    ordered = apply_static_order(g, order)
    ids = sorted(a.id for a in ordered.actors)
    if not ids:
        raise ValidationError("cannot simulate an empty graph")
    tau = {a.id: a.execution_time for a in ordered.actors}
    in_ch: dict[int, list[Channel]] = {a: [] for a in ids}
    for c in ordered.channels:
        in_ch[c.dst].append(c)
    for aid in ids:
        if not in_ch[aid]:
            raise InfeasibleError(
                f"actor {aid} has no input channel; its self-timed firing rate is unbounded"
            )
    out_ch: dict[int, list[Channel]] = {a: [] for a in ids}
    for c in ordered.channels:
        out_ch[c.src].append(c)

    if max_iterations is None:
        max_iterations = 10 * len(ids)
    position = order.position()
    scan = sorted(ids, key=lambda a: (position.get(a, 0), a))
    reference = ids[0]

    tokens = {c.id: c.tokens for c in ordered.channels}
    channel_order = sorted(tokens)
    completions: list[tuple[int, int, int]] = []  # (end, seq, actor)
    seq = 0
    fire_count = {a: 0 for a in ids}
    events: list[FiringEvent] = []
    ready_since: dict[int, int] = {}
    seen: dict[tuple, tuple[int, int]] = {}
    now = 0

    def ready(aid: int) -> bool:
        return all(tokens[c.id] >= c.consumption for c in in_ch[aid])

    # Hard event cap so malformed graphs (e.g. a starving reference actor next
    # to a free-running component) cannot spin forever.
    event_cap = (max_iterations + 2) * max(len(ids), 1) * 8

    while True:
        if len(events) > event_cap:
            raise NoPeriodError(
                f"no periodic phase within {event_cap} firings; "
                "the reference actor may be starving"
            )
        # Retire all firings completing now, releasing their tokens.
        while completions and completions[0][0] == now:
            _, _, aid = heapq.heappop(completions)
            for c in out_ch[aid]:
                tokens[c.id] += c.production

        # Start everything that can start, earliest-ready actors first.
        ref_started = False
        started = True
        while started:
            started = False
            for aid in scan:
                if ready(aid):
                    ready_since.setdefault(aid, now)
            for aid in sorted(
                (a for a in scan if ready(a)),
                key=lambda a: (ready_since.get(a, now), position.get(a, 0), a),
            ):
                if not ready(aid):
                    continue
                for c in in_ch[aid]:
                    tokens[c.id] -= c.consumption
                ready_since.pop(aid, None)
                seq += 1
                heapq.heappush(completions, (now + tau[aid], seq, aid))
                events.append(FiringEvent(aid, now, now + tau[aid], fire_count[aid]))
                fire_count[aid] += 1
                if aid == reference:
                    ref_started = True
                started = True

        if ref_started:
            in_flight = tuple(sorted((aid, end - now) for end, _, aid in completions))
            key = (tuple(tokens[cid] for cid in channel_order), in_flight)
            if key in seen:
                ref_before, tick_before = seen[key]
                period_iters = fire_count[reference] - ref_before
                period_ticks = now - tick_before
                return SelfTimedTrace(
                    tuple(events),
                    transient_iterations=ref_before,
                    period_ticks=period_ticks,
                    period_iterations=period_iters,
                    throughput=Fraction(period_iters, period_ticks),
                )
            seen[key] = (fire_count[reference], now)
            if fire_count[reference] > max_iterations:
                raise NoPeriodError(
                    f"no periodic phase within {max_iterations} iterations"
                )

        if not completions:
            raise SimulationDeadlockError(
                "self-timed execution stalled with no firing in flight",
                actors=[a for a in ids if not ready(a)],
            )
        now = completions[0][0]


def trace_to_jsonl(trace: SelfTimedTrace) -> str:
    lines = [
        json.dumps(
            {"actor": e.actor, "start": e.start, "end": e.end, "iteration": e.iteration},
            sort_keys=True,
        )
        for e in trace.events
    ]
    return "\n".join(lines) + "\n"


def trace_to_gantt_csv(trace: SelfTimedTrace, order: StaticOrder) -> str:
    tile_of = order.tile_of()
    rows = ["tile,actor,start,end,iteration"]
    for e in trace.events:
        rows.append(f"{tile_of.get(e.actor, 0)},{e.actor},{e.start},{e.end},{e.iteration}")
    return "\n".join(rows) + "\n"
