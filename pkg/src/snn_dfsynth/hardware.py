"""Neuromorphic platform model: tile mesh, buffers, interconnect, energy.

Hop counts follow XY dimension-ordered routing on the mesh, so the distance
between two tiles is their Manhattan distance.  Interconnect latency does not
enter the timing recurrence; link bandwidth is surfaced as a post-hoc
validation warning only.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from fractions import Fraction

from .errors import FormatError, ValidationError

# Tile energy/bandwidth figures for the DYNAP-SE-style preset.
PRESET_SPIKE_ENERGY_PJ = 50.0
PRESET_ROUTE_ENERGY_PJ = 147.0
PRESET_BANDWIDTH_EVENTS_S = 1.8e9
PRESET_BUFFER_TOKENS_PER_ROW = 64


@dataclass(frozen=True)
class Tile:
    id: int
    x: int
    y: int
    crossbar_n: int
    in_buffer: int   # tokens
    out_buffer: int  # tokens


@dataclass(frozen=True)
class HardwareGraph:
    tiles: tuple[Tile, ...]
    links: tuple[tuple[int, int], ...]  # bidirectional tile pairs
    bandwidth: float                    # events/s per link
    spike_energy_pj: float
    route_energy_pj: float

    def tile(self, tile_id: int) -> Tile:
        return self._by_id()[tile_id]

    def _by_id(self) -> dict[int, Tile]:
        return {t.id: t for t in self.tiles}

    def hop_distance(self, a: int, b: int) -> int:
        ta, tb = self.tile(a), self.tile(b)
        return abs(ta.x - tb.x) + abs(ta.y - tb.y)

    def validate(self) -> None:
        coords = set()
        ids = set()
        for t in self.tiles:
            if t.id in ids:
                raise ValidationError(f"duplicate tile id {t.id}")
            ids.add(t.id)
            if (t.x, t.y) in coords:
                raise ValidationError(f"tile {t.id}: duplicate mesh coordinate ({t.x}, {t.y})")
            coords.add((t.x, t.y))
            if t.crossbar_n < 2:
                raise ValidationError(f"tile {t.id}: crossbar dimension must be at least 2")
            if t.in_buffer < 1 or t.out_buffer < 1:
                raise ValidationError(f"tile {t.id}: buffer sizes must be at least 1")
        for a, b in self.links:
            if a not in ids or b not in ids:
                raise ValidationError(f"link ({a}, {b}) references an unknown tile")
        if self.bandwidth <= 0:
            raise ValidationError("link bandwidth must be positive")


@dataclass(frozen=True)
class ExecTimeModel:
    """Worst-case cluster execution time in integer ticks.

    tau = base + per_input_row * rows + per_spike * input spikes per firing,
    never below one tick.
    """

    base: int = 100
    per_input_row: int = 1
    per_spike: int = 0

    def validate(self) -> None:
        if self.base < 0 or self.per_input_row < 0 or self.per_spike < 0:
            raise ValidationError("execution-time coefficients must be non-negative")

    def execution_time(self, inputs: int, spikes_in: Fraction | int = 0) -> int:
        tau = self.base + self.per_input_row * inputs + self.per_spike * math.ceil(spikes_in)
        return max(int(tau), 1)


def dynapse_preset(mesh_w: int, mesh_h: int, crossbar_n: int = 128) -> HardwareGraph:
    """Mesh of identical tiles with the published DYNAP-SE energy figures.

    Buffer depths are not published for the silicon; the preset allots
    64 tokens per crossbar row, which is configurable via the JSON format.
    """
    if mesh_w < 1 or mesh_h < 1:
        raise ValidationError("mesh dimensions must be at least 1x1")
    buffers = PRESET_BUFFER_TOKENS_PER_ROW * crossbar_n
    tiles = []
    for y in range(mesh_h):
        for x in range(mesh_w):
            tiles.append(Tile(y * mesh_w + x, x, y, crossbar_n, buffers, buffers))
    links = []
    for t in tiles:
        if t.x + 1 < mesh_w:
            links.append((t.id, t.id + 1))
        if t.y + 1 < mesh_h:
            links.append((t.id, t.id + mesh_w))
    hw = HardwareGraph(
        tuple(tiles),
        tuple(links),
        PRESET_BANDWIDTH_EVENTS_S,
        PRESET_SPIKE_ENERGY_PJ,
        PRESET_ROUTE_ENERGY_PJ,
    )
    hw.validate()
    return hw


def hardware_to_json(hw: HardwareGraph) -> dict:
    return {
        "tiles": [
            {
                "id": t.id,
                "x": t.x,
                "y": t.y,
                "crossbar_n": t.crossbar_n,
                "in_buffer": t.in_buffer,
                "out_buffer": t.out_buffer,
            }
            for t in hw.tiles
        ],
        "links": [{"a": a, "b": b} for a, b in hw.links],
        "bandwidth_events_s": hw.bandwidth,
        "energy": {"spike_pj": hw.spike_energy_pj, "route_pj": hw.route_energy_pj},
    }


def hardware_from_json(doc: dict) -> HardwareGraph:
    def expect(cond, msg, locus):
        if not cond:
            raise FormatError(msg, locus)

    expect(isinstance(doc, dict), "hardware document must be an object", "$")
    for key in ("tiles", "links", "bandwidth_events_s", "energy"):
        expect(key in doc, f"missing required field {key!r}", "$")
    tiles = []
    for i, t in enumerate(doc["tiles"]):
        locus = f"tiles[{i}]"
        fields = ("id", "x", "y", "crossbar_n", "in_buffer", "out_buffer")
        expect(isinstance(t, dict) and set(fields) <= set(t), f"needs fields {fields}", locus)
        expect(all(isinstance(t[f], int) for f in fields), "tile fields must be integers", locus)
        tiles.append(Tile(*(t[f] for f in fields)))
    links = []
    for i, l in enumerate(doc["links"]):
        locus = f"links[{i}]"
        expect(isinstance(l, dict) and {"a", "b"} <= set(l), "needs endpoints a, b", locus)
        links.append((l["a"], l["b"]))
    energy = doc["energy"]
    expect(isinstance(energy, dict) and {"spike_pj", "route_pj"} <= set(energy), "needs spike_pj and route_pj", "energy")
    hw = HardwareGraph(
        tuple(tiles),
        tuple(links),
        float(doc["bandwidth_events_s"]),
        float(energy["spike_pj"]),
        float(energy["route_pj"]),
    )
    hw.validate()
    return hw


def load_hardware(path) -> HardwareGraph:
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise FormatError(f"invalid JSON: {exc.msg}", f"{path}:{exc.lineno}:{exc.colno}") from None
    return hardware_from_json(doc)


def save_hardware(hw: HardwareGraph, path) -> None:
    with open(path, "w") as fh:
        json.dump(hardware_to_json(hw), fh, indent=2, sort_keys=True)
        fh.write("\n")
