"""Packing FIT units into crossbar-sized clusters.

Crossbar accounting: a unit with at least one input occupies one output
column (it is a post-synaptic neuron of the crossbar); each distinct producer
feeding a member unit occupies one input row, whether that producer sits
inside or outside the cluster; every input link of a member is one synapse
crosspoint.  Pure-source units (no inputs) inject spikes on rows of the
clusters that consume them and occupy no column of their own.

Two clusterers are provided: the utilization-greedy packer used by the main
pipeline, and a cut-minimizing baseline built on local moves and swaps from a
random feasible start.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from fractions import Fraction

from .decompose import DecomposedGraph
from .errors import InfeasibleError, ValidationError


@dataclass(frozen=True)
class Cluster:
    id: int
    units: tuple[int, ...]
    inputs: int      # occupied crossbar rows (distinct pre-synaptic sources)
    outputs: int     # occupied crossbar columns (member units with inputs)
    synapses: int    # programmed crosspoints
    spikes_generated: Fraction  # per frame, summed over column units


@dataclass(frozen=True)
class Connection:
    src: int
    dst: int
    spikes: Fraction  # per frame, summed over cut links


@dataclass(frozen=True)
class ClusteredGraph:
    clusters: tuple[Cluster, ...]
    connections: tuple[Connection, ...]
    crossbar_n: int

    def cluster_of(self) -> dict[int, int]:
        return {u: c.id for c in self.clusters for u in c.units}

    def validate(self, g: DecomposedGraph) -> None:
        n = self.crossbar_n
        seen: set[int] = set()
        for c in self.clusters:
            if c.inputs > n or c.outputs > n or c.synapses > n * n:
                raise ValidationError(f"cluster {c.id} exceeds {n}x{n} crossbar capacity")
            overlap = seen.intersection(c.units)
            if overlap:
                raise ValidationError(f"units {sorted(overlap)} assigned to more than one cluster")
            seen.update(c.units)
        if seen != {u.id for u in g.units}:
            raise ValidationError("clusters do not partition the unit set")


def _usage(g: DecomposedGraph, members: set[int]) -> tuple[int, int, int]:
    rows: set[int] = set()
    cols = 0
    syn = 0
    for uid in members:
        ins = g.units[uid].inputs
        if ins:
            cols += 1
        syn += len(ins)
        rows.update(i.producer for i in ins)
    return len(rows), cols, syn


def _fits(g: DecomposedGraph, members: set[int], uid: int, n: int) -> bool:
    rows, cols, syn = _usage(g, members | {uid})
    return rows <= n and cols <= n and syn <= n * n


def _spikes_generated(g: DecomposedGraph, members: set[int]) -> Fraction:
    # Spikes emitted by the crossbar's own neurons: the firing cadence of
    # every column unit.  Pure sources inject from outside and count zero.
    return sum(
        (g.units[uid].out_spikes for uid in members if g.units[uid].inputs),
        Fraction(0),
    )


def _finalize(g: DecomposedGraph, groups: list[set[int]], crossbar_n: int) -> ClusteredGraph:
    groups = [grp for grp in groups if grp]
    clusters = []
    member_of: dict[int, int] = {}
    for cid, grp in enumerate(groups):
        rows, cols, syn = _usage(g, grp)
        clusters.append(
            Cluster(cid, tuple(sorted(grp)), rows, cols, syn, _spikes_generated(g, grp))
        )
        for uid in grp:
            member_of[uid] = cid
    cut: dict[tuple[int, int], Fraction] = {}
    for link in g.links:
        a, b = member_of[link.src], member_of[link.dst]
        if a != b:
            cut[(a, b)] = cut.get((a, b), Fraction(0)) + link.spikes
    connections = tuple(Connection(a, b, s) for (a, b), s in sorted(cut.items()))
    clustered = ClusteredGraph(tuple(clusters), connections, crossbar_n)
    clustered.validate(g)
    return clustered


def cluster_greedy(g: DecomposedGraph, crossbar_n: int) -> ClusteredGraph:
    """Utilization-aware greedy packing.

    Units are visited in id order; existing clusters are tried in descending
    (synapse utilization, neuron utilization) order, ties broken by lowest
    cluster id, and the unit lands in the first cluster with room.  A new
    cluster is opened only when none fits.
    """
    if crossbar_n < 2:
        raise ValidationError("crossbar dimension must be at least 2")
    groups: list[set[int]] = []
    usages: list[tuple[int, int, int]] = []
    n2 = crossbar_n * crossbar_n

    def sort_key(idx: int):
        rows, cols, syn = usages[idx]
        return (
            -Fraction(syn, n2),
            -Fraction(rows + cols, 2 * crossbar_n),
            idx,
        )

    for u in g.units:
        placed = False
        for idx in sorted(range(len(groups)), key=sort_key):
            if _fits(g, groups[idx], u.id, crossbar_n):
                groups[idx].add(u.id)
                usages[idx] = _usage(g, groups[idx])
                placed = True
                break
        if not placed:
            if not _fits(g, set(), u.id, crossbar_n):
                raise InfeasibleError(
                    f"unit {u.id} cannot fit an empty {crossbar_n}x{crossbar_n} crossbar"
                )
            groups.append({u.id})
            usages.append(_usage(g, groups[-1]))
    return _finalize(g, groups, crossbar_n)


def _cut_spikes(g: DecomposedGraph, member_of: dict[int, int]) -> Fraction:
    return sum(
        (link.spikes for link in g.links if member_of[link.src] != member_of[link.dst]),
        Fraction(0),
    )


def cluster_mincut(g: DecomposedGraph, crossbar_n: int, seed: int, max_passes: int = 20) -> ClusteredGraph:
    """Cut-minimizing baseline clusterer.

    Starts from a random feasible first-fit partition, then repeats passes of
    single-unit moves and pairwise swaps that strictly reduce the total
    cut-spike count while keeping every cluster within crossbar capacity.
    Deterministic for a given seed.
    """
    if crossbar_n < 2:
        raise ValidationError("crossbar dimension must be at least 2")
    rng = random.Random(seed)
    order = [u.id for u in g.units]
    rng.shuffle(order)

    groups: list[set[int]] = []
    for uid in order:
        for grp in groups:
            if _fits(g, grp, uid, crossbar_n):
                grp.add(uid)
                break
        else:
            if not _fits(g, set(), uid, crossbar_n):
                raise InfeasibleError(
                    f"unit {uid} cannot fit an empty {crossbar_n}x{crossbar_n} crossbar"
                )
            groups.append({uid})

    member_of = {uid: idx for idx, grp in enumerate(groups) for uid in grp}

    # Recomputing the full cut after each tentative move is simpler than
    # incremental deltas and still fast at tool scale.
    for _ in range(max_passes):
        improved = False
        current = _cut_spikes(g, member_of)
        for uid in sorted(member_of):
            home = member_of[uid]
            for target in range(len(groups)):
                if target == home:
                    continue
                if not _fits(g, groups[target], uid, crossbar_n):
                    continue
                member_of[uid] = target
                candidate = _cut_spikes(g, member_of)
                if candidate < current:
                    groups[home].discard(uid)
                    groups[target].add(uid)
                    current = candidate
                    home = target
                    improved = True
                else:
                    member_of[uid] = home
        # Pairwise swap pass.
        ids = sorted(member_of)
        for i, a in enumerate(ids):
            for b in ids[i + 1:]:
                ca, cb = member_of[a], member_of[b]
                if ca == cb:
                    continue
                if not _fits(g, (groups[cb] - {b}), a, crossbar_n):
                    continue
                if not _fits(g, (groups[ca] - {a}), b, crossbar_n):
                    continue
                member_of[a], member_of[b] = cb, ca
                candidate = _cut_spikes(g, member_of)
                if candidate < current:
                    groups[ca].discard(a)
                    groups[cb].discard(b)
                    groups[ca].add(b)
                    groups[cb].add(a)
                    current = candidate
                    improved = True
                else:
                    member_of[a], member_of[b] = ca, cb
        if not improved:
            break
    return _finalize(g, groups, crossbar_n)


@dataclass(frozen=True)
class UtilizationReport:
    per_cluster: tuple[tuple[int, float, float], ...]  # (cluster id, synapse %, neuron %)
    mean_synapse: float
    mean_neuron: float


def utilization_report(c: ClusteredGraph, crossbar_n: int | None = None) -> UtilizationReport:
    """Synapse and neuron utilization per cluster and averaged.

    Synapse utilization is crosspoints / N^2; neuron utilization is
    (rows + columns) / 2N.
    """
    n = crossbar_n or c.crossbar_n
    rows = []
    for cl in c.clusters:
        syn = 100.0 * cl.synapses / (n * n)
        neu = 100.0 * (cl.inputs + cl.outputs) / (2 * n)
        rows.append((cl.id, syn, neu))
    if not rows:
        return UtilizationReport((), 0.0, 0.0)
    return UtilizationReport(
        tuple(rows),
        sum(r[1] for r in rows) / len(rows),
        sum(r[2] for r in rows) / len(rows),
    )


def csnn_to_json(c: ClusteredGraph) -> dict:
    return {
        "crossbar_n": c.crossbar_n,
        "clusters": [
            {
                "id": cl.id,
                "units": list(cl.units),
                "inputs": cl.inputs,
                "outputs": cl.outputs,
                "synapses": cl.synapses,
                "spikes_generated": str(cl.spikes_generated),
            }
            for cl in c.clusters
        ],
        "connections": [
            {"src": conn.src, "dst": conn.dst, "spikes": str(conn.spikes)}
            for conn in c.connections
        ],
    }


def csnn_from_json(doc: dict) -> ClusteredGraph:
    from .errors import FormatError

    if not isinstance(doc, dict) or "clusters" not in doc or "crossbar_n" not in doc:
        raise FormatError("clustered graph document needs crossbar_n and clusters", "$")
    clusters = tuple(
        Cluster(
            cl["id"],
            tuple(cl["units"]),
            cl["inputs"],
            cl["outputs"],
            cl["synapses"],
            Fraction(cl["spikes_generated"]),
        )
        for cl in doc["clusters"]
    )
    connections = tuple(
        Connection(conn["src"], conn["dst"], Fraction(conn["spikes"]))
        for conn in doc.get("connections", [])
    )
    return ClusteredGraph(clusters, connections, doc["crossbar_n"])


def to_dot(c: ClusteredGraph) -> str:
    lines = ["digraph csnn {"]
    for cl in c.clusters:
        lines.append(f'  c{cl.id} [label="C{cl.id}\\n{len(cl.units)} units"];')
    for conn in c.connections:
        lines.append(f'  c{conn.src} -> c{conn.dst} [label="{conn.spikes}"];')
    lines.append("}")
    return "\n".join(lines)
