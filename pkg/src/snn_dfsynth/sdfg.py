"""Synchronous dataflow IR for clustered workloads.

Actors fire by consuming a fixed token count from every input channel at
start and producing a fixed count on every output channel at completion.
Ports exist one-to-one with channel endpoints, so the port/channel bijection
holds by construction.  Channels carry a ``kind`` tag distinguishing workload
data from the structural channels added later in the pipeline (source
serialization loops, buffer back-edges, static-order edges).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from fractions import Fraction
from math import gcd

from .cluster import ClusteredGraph
from .errors import (
    DeadlockError,
    FormatError,
    InconsistentRatesError,
    RateOverflowError,
    ValidationError,
)
from .hardware import ExecTimeModel

DATA = "data"      # clustered-workload connection
LOOP = "loop"      # source serialization self-loop
BUFFER = "buffer"  # tile buffer back-edge
ORDER = "order"    # static-order ring edge

MAX_RATE_DEFAULT = 10**9


@dataclass(frozen=True)
class Actor:
    id: int
    execution_time: int  # integer ticks, >= 1

    def __post_init__(self):
        if self.execution_time < 1:
            raise ValidationError(f"actor {self.id}: execution time must be at least one tick")


@dataclass(frozen=True)
class ActorMeta:
    """Crossbar footprint and spike statistics of the cluster behind an actor."""

    inputs: int = 0
    outputs: int = 0
    synapses: int = 0
    spikes_generated: Fraction = Fraction(0)


@dataclass(frozen=True)
class Channel:
    id: int
    src: int
    dst: int
    production: int
    consumption: int
    tokens: int = 0
    kind: str = DATA
    spikes: Fraction = Fraction(0)  # physical spikes per iteration, for energy

    def __post_init__(self):
        if self.production < 1 or self.consumption < 1:
            raise ValidationError(f"channel {self.id}: rates must be positive")
        if self.tokens < 0:
            raise ValidationError(f"channel {self.id}: initial tokens must be non-negative")


@dataclass(frozen=True)
class Sdfg:
    actors: tuple[Actor, ...]
    channels: tuple[Channel, ...]
    actor_meta: dict[int, ActorMeta] = field(default_factory=dict)
    frame_scale: int = 1

    def actor(self, actor_id: int) -> Actor:
        return self._actors_by_id()[actor_id]

    def _actors_by_id(self) -> dict[int, Actor]:
        return {a.id: a for a in self.actors}

    def in_channels(self, actor_id: int) -> list[Channel]:
        return [c for c in self.channels if c.dst == actor_id]

    def out_channels(self, actor_id: int) -> list[Channel]:
        return [c for c in self.channels if c.src == actor_id]

    def input_ports(self, actor_id: int) -> list[str]:
        return [f"a{actor_id}.in{c.id}" for c in self.in_channels(actor_id)]

    def output_ports(self, actor_id: int) -> list[str]:
        return [f"a{actor_id}.out{c.id}" for c in self.out_channels(actor_id)]

    def state_space(self, actor_id: int) -> int:
        """Buffer tokens the actor touches per firing across all its channels."""
        return sum(c.consumption for c in self.in_channels(actor_id)) + sum(
            c.production for c in self.out_channels(actor_id)
        )

    def with_channels(self, channels) -> "Sdfg":
        return replace(self, channels=tuple(channels))

    def validate(self) -> None:
        ids = set()
        for a in self.actors:
            if a.id in ids:
                raise ValidationError(f"duplicate actor id {a.id}")
            ids.add(a.id)
        seen = set()
        for c in self.channels:
            if c.id in seen:
                raise ValidationError(f"duplicate channel id {c.id}")
            seen.add(c.id)
            if c.src not in ids or c.dst not in ids:
                raise ValidationError(f"channel {c.id} references an unknown actor")


def _round_half_up(x: Fraction) -> int:
    return int((x + Fraction(1, 2)).__floor__())


def build_sdfg(
    c: ClusteredGraph,
    exec_model: ExecTimeModel,
    frame_scale: int = 1,
    max_rate: int = MAX_RATE_DEFAULT,
) -> Sdfg:
    """Model a clustered workload as an SDFG: one actor per cluster, one
    channel per connection.

    Production equals consumption on every channel (all spikes produced in a
    frame are consumed in the same iteration), so the repetition vector is all
    ones.  Fractional spikes-per-frame averages are scaled by ``frame_scale``
    and rounded to the nearest positive integer to satisfy integral rates.
    """
    if frame_scale < 1:
        raise ValidationError("frame_scale must be at least 1")
    exec_model.validate()
    actors = []
    meta = {}
    spikes_in: dict[int, Fraction] = {cl.id: Fraction(0) for cl in c.clusters}
    for conn in c.connections:
        spikes_in[conn.dst] += conn.spikes
    for cl in c.clusters:
        tau = exec_model.execution_time(cl.inputs, spikes_in[cl.id])
        actors.append(Actor(cl.id, tau))
        meta[cl.id] = ActorMeta(cl.inputs, cl.outputs, cl.synapses, cl.spikes_generated * frame_scale)
    channels = []
    for i, conn in enumerate(c.connections):
        scaled = conn.spikes * frame_scale
        rate = max(1, _round_half_up(scaled))
        if rate > max_rate:
            raise RateOverflowError(
                f"connection {conn.src}->{conn.dst}: scaled rate {rate} exceeds maximum {max_rate}"
            )
        channels.append(Channel(i, conn.src, conn.dst, rate, rate, 0, DATA, scaled))
    g = Sdfg(tuple(actors), tuple(channels), meta, frame_scale)
    g.validate()
    return g


def with_source_self_loops(g: Sdfg) -> Sdfg:
    """Serialize source actors with a one-token self-loop.

    Frames arrive as a sequential stream, so an actor with no incoming data
    channel cannot overlap its own firings.  The loop makes the firing-time
    recurrence of such actors well defined.
    """
    has_in = {c.dst for c in g.channels}
    next_id = max((c.id for c in g.channels), default=-1) + 1
    new = list(g.channels)
    for a in g.actors:
        if a.id not in has_in:
            new.append(Channel(next_id, a.id, a.id, 1, 1, 1, LOOP))
            next_id += 1
    return g.with_channels(new)


# ---------------------------------------------------------------------------
# Consistency analysis
# ---------------------------------------------------------------------------

def repetition_vector(g: Sdfg) -> dict[int, int]:
    """Smallest positive per-actor firing counts balancing every channel.

    Raises :class:`InconsistentRatesError` naming a violating channel cycle
    when no positive solution exists.  Disconnected graphs are normalized per
    weakly connected component.
    """
    ratio: dict[int, Fraction] = {}
    adjacency: dict[int, list[tuple[int, Fraction, Channel]]] = {a.id: [] for a in g.actors}
    for c in g.channels:
        # r[dst] = r[src] * production / consumption
        adjacency[c.src].append((c.dst, Fraction(c.production, c.consumption), c))
        adjacency[c.dst].append((c.src, Fraction(c.consumption, c.production), c))

    parent_channel: dict[int, Channel | None] = {}
    for root in sorted(adjacency):
        if root in ratio:
            continue
        ratio[root] = Fraction(1)
        parent_channel[root] = None
        parent: dict[int, int] = {root: root}
        stack = [root]
        component = [root]
        while stack:
            u = stack.pop()
            for v, factor, ch in adjacency[u]:
                want = ratio[u] * factor
                if v in ratio:
                    if ratio[v] != want:
                        cycle = [ch.id]
                        for node in (u, v):
                            while parent[node] != node:
                                cycle.append(parent_channel[node].id)
                                node = parent[node]
                        raise InconsistentRatesError(
                            f"no positive repetition vector: channel {ch.id} "
                            f"({ch.src}->{ch.dst}) conflicts with rates fixed earlier",
                            cycle=sorted(set(cycle)),
                        )
                else:
                    ratio[v] = want
                    parent[v] = u
                    parent_channel[v] = ch
                    stack.append(v)
                    component.append(v)
        scale = 1
        for node in component:
            scale = scale * ratio[node].denominator // gcd(scale, ratio[node].denominator)
        counts = [int(ratio[node] * scale) for node in component]
        common = 0
        for value in counts:
            common = gcd(common, value)
        for node, value in zip(component, counts):
            ratio[node] = Fraction(value // common)
    return {a.id: int(ratio[a.id]) for a in g.actors}


def strongly_connected_subgraphs(g: Sdfg) -> list[list[int]]:
    """Maximal strongly connected components, lowest actor id first."""
    adjacency = {a.id: sorted({c.dst for c in g.channels if c.src == a.id}) for a in g.actors}
    return _tarjan(adjacency)


def _tarjan(adjacency: dict[int, list[int]]) -> list[list[int]]:
    index: dict[int, int] = {}
    low: dict[int, int] = {}
    on_stack: set[int] = set()
    stack: list[int] = []
    components: list[list[int]] = []
    counter = [0]

    for start in sorted(adjacency):
        if start in index:
            continue
        work = [(start, iter(adjacency[start]))]
        index[start] = low[start] = counter[0]
        counter[0] += 1
        stack.append(start)
        on_stack.add(start)
        while work:
            node, it = work[-1]
            advanced = False
            for nxt in it:
                if nxt not in index:
                    index[nxt] = low[nxt] = counter[0]
                    counter[0] += 1
                    stack.append(nxt)
                    on_stack.add(nxt)
                    work.append((nxt, iter(adjacency[nxt])))
                    advanced = True
                    break
                if nxt in on_stack:
                    low[node] = min(low[node], index[nxt])
            if advanced:
                continue
            work.pop()
            if work:
                parent = work[-1][0]
                low[parent] = min(low[parent], low[node])
            if low[node] == index[node]:
                comp = []
                while True:
                    member = stack.pop()
                    on_stack.discard(member)
                    comp.append(member)
                    if member == node:
                        break
                components.append(sorted(comp))
    return sorted(components, key=lambda comp: comp[0])


def _is_nontrivial(g: Sdfg, component: list[int], channels) -> bool:
    if len(component) > 1:
        return True
    node = component[0]
    return any(c.src == node and c.dst == node for c in channels)


def break_cycles(g: Sdfg) -> tuple[Sdfg, list[Channel]]:
    """Reduce strongly connected subgraphs to acyclic ones by pulling out
    inter-iteration edges.

    A channel can be removed when its initial tokens cover its sink's
    consumption for a whole iteration; removal repeats until no strongly
    connected subgraph is left.  Raises :class:`DeadlockError` when a
    subgraph has no removable edge.  Removed edges still constrain execution
    across iterations and must be restored for simulation.
    """
    rv = repetition_vector(g)
    remaining = list(g.channels)
    removed: list[Channel] = []
    while True:
        adjacency = {a.id: sorted({c.dst for c in remaining if c.src == a.id}) for a in g.actors}
        nontrivial = [
            comp for comp in _tarjan(adjacency) if _is_nontrivial(g, comp, remaining)
        ]
        if not nontrivial:
            break
        for comp in nontrivial:
            comp_set = set(comp)
            removable = [
                c
                for c in remaining
                if c.src in comp_set
                and c.dst in comp_set
                and c.tokens >= c.consumption * rv[c.dst]
            ]
            if not removable:
                raise DeadlockError(
                    f"strongly connected subgraph {comp} has no edge with enough "
                    "initial tokens for a full iteration",
                    actors=comp,
                )
            removed.extend(removable)
            removable_ids = {c.id for c in removable}
            remaining = [c for c in remaining if c.id not in removable_ids]
    return g.with_channels(remaining), removed


# ---------------------------------------------------------------------------
# Interchange
# ---------------------------------------------------------------------------

def sdfg_to_json(g: Sdfg) -> dict:
    return {
        "actors": [
            {
                "id": a.id,
                "execution_time": a.execution_time,
                "meta": {
                    "inputs": g.actor_meta.get(a.id, ActorMeta()).inputs,
                    "outputs": g.actor_meta.get(a.id, ActorMeta()).outputs,
                    "synapses": g.actor_meta.get(a.id, ActorMeta()).synapses,
                    "spikes_generated": str(g.actor_meta.get(a.id, ActorMeta()).spikes_generated),
                },
            }
            for a in g.actors
        ],
        "channels": [
            {
                "id": c.id,
                "src": c.src,
                "dst": c.dst,
                "production": c.production,
                "consumption": c.consumption,
                "tokens": c.tokens,
                "kind": c.kind,
                "spikes": str(c.spikes),
            }
            for c in g.channels
        ],
        "frame_scale": g.frame_scale,
    }


def sdfg_from_json(doc: dict) -> Sdfg:
    def expect(cond, msg, locus):
        if not cond:
            raise FormatError(msg, locus)

    expect(isinstance(doc, dict), "sdfg document must be an object", "$")
    expect("actors" in doc and "channels" in doc, "missing actors/channels", "$")
    actors = []
    meta = {}
    for i, a in enumerate(doc["actors"]):
        locus = f"actors[{i}]"
        expect(isinstance(a, dict) and {"id", "execution_time"} <= set(a), "needs id and execution_time", locus)
        actors.append(Actor(a["id"], a["execution_time"]))
        m = a.get("meta", {})
        meta[a["id"]] = ActorMeta(
            int(m.get("inputs", 0)),
            int(m.get("outputs", 0)),
            int(m.get("synapses", 0)),
            Fraction(m.get("spikes_generated", "0")),
        )
    channels = []
    for i, c in enumerate(doc["channels"]):
        locus = f"channels[{i}]"
        fields = {"id", "src", "dst", "production", "consumption"}
        expect(isinstance(c, dict) and fields <= set(c), f"needs fields {sorted(fields)}", locus)
        channels.append(
            Channel(
                c["id"],
                c["src"],
                c["dst"],
                c["production"],
                c["consumption"],
                c.get("tokens", 0),
                c.get("kind", DATA),
                Fraction(c.get("spikes", "0")),
            )
        )
    g = Sdfg(tuple(actors), tuple(channels), meta, int(doc.get("frame_scale", 1)))
    g.validate()
    return g


def load_sdfg(path) -> Sdfg:
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise FormatError(f"invalid JSON: {exc.msg}", f"{path}:{exc.lineno}:{exc.colno}") from None
    return sdfg_from_json(doc)


def save_sdfg(g: Sdfg, path) -> None:
    with open(path, "w") as fh:
        json.dump(sdfg_to_json(g), fh, indent=2, sort_keys=True)
        fh.write("\n")


def to_dot(g: Sdfg) -> str:
    lines = ["digraph sdfg {"]
    for a in g.actors:
        lines.append(f'  a{a.id} [label="A{a.id}\\ntau={a.execution_time}"];')
    for c in g.channels:
        label = f"{c.production}:{c.consumption}"
        if c.tokens:
            label += f" ({c.tokens})"
        style = "" if c.kind == DATA else " style=dashed"
        lines.append(f'  a{c.src} -> a{c.dst} [label="{label}"{style}];')
    lines.append("}")
    return "\n".join(lines)
