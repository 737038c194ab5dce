"""Spatial decomposition of high-fanin neurons into fanin-of-two (FIT) chains.

A neuron with m >= 2 inputs becomes a chain of m-1 two-input units: the first
unit absorbs two original inputs, every later unit absorbs one original input
plus the running partial sum from its predecessor (forwarded with weight 1.0).
Neurons with 0 or 1 inputs pass through as single units so that input layers
survive the transformation.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

from .errors import ValidationError
from .workload import SnnWorkload, channel_spike_counts


@dataclass(frozen=True)
class UnitInput:
    """One of the (at most two) inputs of a FIT unit.

    ``producer`` is the unit whose output feeds this input.  For an original
    synapse that is the last chain unit of the source neuron; for the chained
    partial-sum input it is the preceding unit of the same chain.
    """

    producer: int
    weight: float
    spikes: Fraction
    source_neuron: int | None  # None for the chained partial-sum input


@dataclass(frozen=True)
class FitUnit:
    id: int
    parent: int  # neuron this unit was carved from
    chain_index: int
    inputs: tuple[UnitInput, ...]
    out_spikes: Fraction = Fraction(0)  # firing cadence per frame (the parent's)


@dataclass(frozen=True)
class Link:
    src: int  # producer unit
    dst: int  # consumer unit
    spikes: Fraction
    chained: bool


@dataclass(frozen=True)
class DecomposedGraph:
    units: tuple[FitUnit, ...]
    links: tuple[Link, ...]
    output_unit: dict[int, int]  # neuron id -> unit emitting its final output

    def unit(self, unit_id: int) -> FitUnit:
        return self.units[unit_id]

    def validate(self) -> None:
        by_parent: dict[int, list[FitUnit]] = {}
        for pos, u in enumerate(self.units):
            if u.id != pos:
                raise ValidationError("unit ids must be dense and ordered")
            if len(u.inputs) > 2:
                raise ValidationError(f"unit {u.id} has more than two inputs")
            by_parent.setdefault(u.parent, []).append(u)
        for parent, chain in by_parent.items():
            chain.sort(key=lambda u: u.chain_index)
            for j, u in enumerate(chain):
                if u.chain_index != j:
                    raise ValidationError(f"neuron {parent}: chain indices not contiguous")
                if j > 0:
                    chained = [i for i in u.inputs if i.source_neuron is None]
                    original = [i for i in u.inputs if i.source_neuron is not None]
                    if len(chained) != 1 or len(original) != 1:
                        raise ValidationError(
                            f"neuron {parent}: unit {u.id} must take one original and one chained input"
                        )
                    if chained[0].producer != chain[j - 1].id:
                        raise ValidationError(f"neuron {parent}: chain order broken at unit {u.id}")


def decompose(w: SnnWorkload) -> DecomposedGraph:
    """Transform a workload into its fanin-of-two decomposition.

    Chain input order follows the synapse list order, so the result is
    deterministic.  Link spike counts on original synapses are carried over
    from the workload; intra-chain links run at the parent neuron's own
    firing cadence (the chain carries its partial sum).
    """
    w.validate()
    counts = channel_spike_counts(w)
    frames = w.frames

    in_synapses: dict[int, list] = {n.id: [] for n in w.neurons}
    for s in w.synapses:
        in_synapses[s.dst].append(s)

    units: list[FitUnit] = []
    output_unit: dict[int, int] = {}
    pending: dict[int, list[tuple[int, object]]] = {}  # unit id -> original synapses to attach

    # First pass: lay out units and chain links; original-synapse inputs are
    # resolved in a second pass once every neuron's output unit is known.
    for n in w.neurons:
        fan_in = in_synapses[n.id]
        m = len(fan_in)
        n_units = max(m - 1, 1)
        first_id = len(units)
        for j in range(n_units):
            uid = first_id + j
            if m <= 1:
                attach = list(fan_in)
            elif j == 0:
                attach = fan_in[0:2]
            else:
                attach = [fan_in[j + 1]]
            pending[uid] = [(j, s) for s in attach]
            units.append(FitUnit(uid, n.id, j, ()))
        output_unit[n.id] = first_id + n_units - 1
        # Chain links carry the partial sum at the parent's cadence.
        for j in range(1, n_units):
            pending[first_id + j].append((j, None))

    resolved: list[FitUnit] = []
    links: list[Link] = []
    for u in units:
        ins: list[UnitInput] = []
        parent_rate = Fraction(w.spike_count(u.parent)) / frames
        for _, s in pending[u.id]:
            if s is None:
                producer = u.id - 1
                ins.append(UnitInput(producer, 1.0, parent_rate, None))
                links.append(Link(producer, u.id, parent_rate, True))
            else:
                producer = output_unit[s.src]
                spikes = counts[(s.src, s.dst)]
                ins.append(UnitInput(producer, s.weight, spikes, s.src))
                links.append(Link(producer, u.id, spikes, False))
        resolved.append(FitUnit(u.id, u.parent, u.chain_index, tuple(ins), parent_rate))

    g = DecomposedGraph(tuple(resolved), tuple(links), output_unit)
    g.validate()
    return g


def decomposition_cost(w: SnnWorkload) -> int:
    """Number of FIT units created for neurons with fan-in >= 2.

    This is sum over neurons of max(fan_in - 1, 0) and must equal the unit
    count of :func:`decompose` minus its pass-through units.
    """
    fan_in: dict[int, int] = {n.id: 0 for n in w.neurons}
    for s in w.synapses:
        fan_in[s.dst] += 1
    return sum(max(m - 1, 0) for m in fan_in.values())


def dsnn_to_json(g: DecomposedGraph) -> dict:
    return {
        "units": [
            {
                "id": u.id,
                "parent": u.parent,
                "chain_index": u.chain_index,
                "out_spikes": str(u.out_spikes),
                "inputs": [
                    {
                        "producer": i.producer,
                        "weight": i.weight,
                        "spikes": str(i.spikes),
                        "source_neuron": i.source_neuron,
                    }
                    for i in u.inputs
                ],
            }
            for u in g.units
        ],
        "output_unit": {str(n): u for n, u in sorted(g.output_unit.items())},
    }


def dsnn_from_json(doc: dict) -> DecomposedGraph:
    from .errors import FormatError

    if not isinstance(doc, dict) or "units" not in doc or "output_unit" not in doc:
        raise FormatError("decomposed graph document needs units and output_unit", "$")
    units = []
    links = []
    for u in doc["units"]:
        ins = tuple(
            UnitInput(i["producer"], float(i["weight"]), Fraction(i["spikes"]), i["source_neuron"])
            for i in u["inputs"]
        )
        units.append(FitUnit(u["id"], u["parent"], u["chain_index"], ins, Fraction(u["out_spikes"])))
    for u in units:
        for i in u.inputs:
            links.append(Link(i.producer, u.id, i.spikes, i.source_neuron is None))
    g = DecomposedGraph(
        tuple(units),
        tuple(links),
        {int(k): v for k, v in doc["output_unit"].items()},
    )
    g.validate()
    return g


def to_dot(g: DecomposedGraph) -> str:
    lines = ["digraph dsnn {"]
    for u in g.units:
        lines.append(f'  u{u.id} [label="n{u.parent}/{u.chain_index}"];')
    for link in g.links:
        style = " style=dashed" if link.chained else ""
        lines.append(f'  u{link.src} -> u{link.dst} [label="{link.spikes}"{style}];')
    lines.append("}")
    return "\n".join(lines)
