"""SNN workload ingestion, generation, and ANN conversion.

A workload is a directed neuron/synapse graph annotated with the spike times
observed for every neuron over a fixed window.  Spike times are stored as
integer microsecond ticks internally so that ordering and per-frame counts are
exact; the JSON interchange format uses real milliseconds.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from fractions import Fraction
from typing import Mapping, Sequence

import numpy as np

from .errors import FormatError, UnsupportedActivationError, ValidationError

ROLES = ("input", "hidden", "output")

US_PER_MS = 1000


def _ms_to_us(ms: float) -> int:
    return int(round(float(ms) * US_PER_MS))


@dataclass(frozen=True)
class Neuron:
    id: int
    role: str  # input | hidden | output


@dataclass(frozen=True)
class Synapse:
    src: int
    dst: int
    weight: float


@dataclass(frozen=True)
class SnnWorkload:
    """Directed neuron/synapse graph with per-neuron spike time lists.

    ``duration_us`` is the observation window; ``frame_us`` partitions it into
    frames for rate normalization (one frame covering the whole window unless
    the source file says otherwise).
    """

    neurons: tuple[Neuron, ...]
    synapses: tuple[Synapse, ...]
    spikes: Mapping[int, tuple[int, ...]]  # neuron id -> sorted microsecond ticks
    duration_us: int
    frame_us: int = 0  # 0 means "one frame = whole window"

    def __post_init__(self):
        if self.frame_us == 0:
            object.__setattr__(self, "frame_us", self.duration_us)

    @property
    def frames(self) -> Fraction:
        return Fraction(self.duration_us, self.frame_us)

    def neuron_ids(self) -> list[int]:
        return [n.id for n in self.neurons]

    def spike_count(self, neuron_id: int) -> int:
        return len(self.spikes.get(neuron_id, ()))

    def in_synapses(self, neuron_id: int) -> list[Synapse]:
        return [s for s in self.synapses if s.dst == neuron_id]

    def validate(self) -> None:
        ids = set()
        for n in self.neurons:
            if n.role not in ROLES:
                raise ValidationError(f"neuron {n.id}: unknown role {n.role!r}")
            if n.id in ids:
                raise ValidationError(f"duplicate neuron id {n.id}")
            ids.add(n.id)
        seen_pairs = set()
        for s in self.synapses:
            if s.src not in ids:
                raise ValidationError(f"synapse ({s.src}->{s.dst}): unknown source neuron {s.src}")
            if s.dst not in ids:
                raise ValidationError(f"synapse ({s.src}->{s.dst}): unknown destination neuron {s.dst}")
            if (s.src, s.dst) in seen_pairs:
                raise ValidationError(f"duplicate synapse ({s.src}->{s.dst})")
            seen_pairs.add((s.src, s.dst))
        if self.duration_us <= 0:
            raise ValidationError("duration must be positive")
        if not 0 < self.frame_us <= self.duration_us:
            raise ValidationError("frame length must lie in (0, duration]")
        for nid, times in self.spikes.items():
            if nid not in ids:
                raise ValidationError(f"spike list for unknown neuron {nid}")
            if any(b < a for a, b in zip(times, times[1:])):
                raise ValidationError(f"neuron {nid}: spike times not sorted ascending")
            if times and (times[0] < 0 or times[-1] > self.duration_us):
                raise ValidationError(f"neuron {nid}: spike time outside [0, duration]")


def channel_spike_counts(w: SnnWorkload) -> dict[tuple[int, int], Fraction]:
    """Average spikes per frame carried by each synapse.

    Every presynaptic spike traverses each outgoing synapse once, so the count
    for (i, j) is the spike count of neuron i normalized to one frame.
    """
    frames = w.frames
    return {(s.src, s.dst): Fraction(w.spike_count(s.src)) / frames for s in w.synapses}


# ---------------------------------------------------------------------------
# JSON interchange
# ---------------------------------------------------------------------------

def workload_to_json(w: SnnWorkload) -> dict:
    doc = {
        "neurons": [{"id": n.id, "role": n.role} for n in w.neurons],
        "synapses": [{"src": s.src, "dst": s.dst, "weight": s.weight} for s in w.synapses],
        "spikes": {str(nid): [t / US_PER_MS for t in times] for nid, times in sorted(w.spikes.items())},
        "duration_ms": w.duration_us / US_PER_MS,
    }
    if w.frame_us != w.duration_us:
        doc["frame_ms"] = w.frame_us / US_PER_MS
    return doc


def workload_from_json(doc: dict) -> SnnWorkload:
    def expect(cond, msg, locus):
        if not cond:
            raise FormatError(msg, locus)

    expect(isinstance(doc, dict), "workload document must be an object", "$")
    for key in ("neurons", "synapses", "spikes", "duration_ms"):
        expect(key in doc, f"missing required field {key!r}", "$")

    neurons = []
    expect(isinstance(doc["neurons"], list), "must be a list", "neurons")
    for i, n in enumerate(doc["neurons"]):
        locus = f"neurons[{i}]"
        expect(isinstance(n, dict) and "id" in n and "role" in n, "needs id and role", locus)
        expect(isinstance(n["id"], int), "id must be an integer", locus)
        expect(n["role"] in ROLES, f"role must be one of {ROLES}", locus)
        neurons.append(Neuron(n["id"], n["role"]))

    synapses = []
    expect(isinstance(doc["synapses"], list), "must be a list", "synapses")
    for i, s in enumerate(doc["synapses"]):
        locus = f"synapses[{i}]"
        expect(isinstance(s, dict) and {"src", "dst", "weight"} <= set(s), "needs src, dst, weight", locus)
        expect(isinstance(s["src"], int) and isinstance(s["dst"], int), "endpoints must be integers", locus)
        expect(isinstance(s["weight"], (int, float)), "weight must be a number", locus)
        synapses.append(Synapse(s["src"], s["dst"], float(s["weight"])))

    expect(isinstance(doc["spikes"], dict), "must be an object", "spikes")
    spikes = {}
    for key, times in doc["spikes"].items():
        locus = f"spikes[{key!r}]"
        try:
            nid = int(key)
        except ValueError:
            raise FormatError("key must be a neuron id", locus) from None
        expect(isinstance(times, list), "spike times must be a list", locus)
        expect(all(isinstance(t, (int, float)) for t in times), "spike times must be numbers", locus)
        spikes[nid] = tuple(_ms_to_us(t) for t in times)

    expect(isinstance(doc["duration_ms"], (int, float)), "must be a number", "duration_ms")
    duration_us = _ms_to_us(doc["duration_ms"])
    frame_us = _ms_to_us(doc.get("frame_ms", 0)) or duration_us

    w = SnnWorkload(tuple(neurons), tuple(synapses), spikes, duration_us, frame_us)
    w.validate()
    return w


def load_workload(path) -> SnnWorkload:
    """Load and validate a workload JSON file."""
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise FormatError(f"invalid JSON: {exc.msg}", f"{path}:{exc.lineno}:{exc.colno}") from None
    return workload_from_json(doc)


def save_workload(w: SnnWorkload, path) -> None:
    with open(path, "w") as fh:
        json.dump(workload_to_json(w), fh, indent=2, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------------------
# Synthetic workload generation
# ---------------------------------------------------------------------------

def generate_poisson_workload(
    topology: Sequence[int],
    rate: float,
    duration_ms: float,
    seed: int,
    weight_scale: float = 1.5,
    frame_ms: float | None = None,
) -> SnnWorkload:
    """Feed-forward workload with Poisson input spike trains.

    Input-layer neurons emit homogeneous Poisson trains at ``rate`` spikes/s.
    Downstream layers are integrate-and-fire units driven through random
    positive weights (``weight_scale``/fan-in each), simulated in 1 ms bins so
    the generated spike data is self-consistent with the connectivity.
    Deterministic for a given seed.
    """
    if not topology or any(n <= 0 for n in topology):
        raise ValidationError("topology must list positive layer sizes")
    if rate < 0:
        raise ValidationError("rate must be non-negative")
    if duration_ms <= 0:
        raise ValidationError("duration must be positive")

    rng = np.random.default_rng(seed)
    n_bins = int(duration_ms)
    duration_us = _ms_to_us(duration_ms)

    layers: list[list[int]] = []
    next_id = 0
    for depth, size in enumerate(topology):
        layers.append(list(range(next_id, next_id + size)))
        next_id += size

    neurons = []
    for depth, layer in enumerate(layers):
        role = "input" if depth == 0 else ("output" if depth == len(layers) - 1 else "hidden")
        neurons.extend(Neuron(nid, role) for nid in layer)

    synapses = []
    weights = []
    for pre, post in zip(layers, layers[1:]):
        w = rng.uniform(0.0, 2.0 * weight_scale / len(pre), size=(len(pre), len(post)))
        weights.append(w)
        for i, src in enumerate(pre):
            for j, dst in enumerate(post):
                synapses.append(Synapse(src, dst, float(w[i, j])))

    spikes: dict[int, tuple[int, ...]] = {}
    # Input trains: Poisson counts, times uniform over the window.
    input_bins = np.zeros((n_bins, len(layers[0])), dtype=np.int64)
    for j, nid in enumerate(layers[0]):
        count = rng.poisson(rate * duration_ms / 1000.0)
        times = np.sort(rng.integers(0, duration_us, size=count))
        spikes[nid] = tuple(int(t) for t in times)
        bins = np.minimum(times // US_PER_MS, n_bins - 1)
        np.add.at(input_bins, (bins, j), 1)

    prev_bins = input_bins
    for depth, layer in enumerate(layers[1:], start=1):
        w = weights[depth - 1]
        v = np.zeros(len(layer))
        fired_bins: list[list[int]] = [[] for _ in layer]
        for b in range(n_bins):
            v += prev_bins[b] @ w
            fired = v >= 1.0
            v[fired] -= 1.0
            for j in np.nonzero(fired)[0]:
                fired_bins[j].append(b)
        cur_bins = np.zeros((n_bins, len(layer)), dtype=np.int64)
        for j, nid in enumerate(layer):
            spikes[nid] = tuple(b * US_PER_MS for b in fired_bins[j])
            for b in fired_bins[j]:
                cur_bins[b, j] += 1
        prev_bins = cur_bins

    workload = SnnWorkload(
        tuple(neurons),
        tuple(synapses),
        spikes,
        duration_us,
        _ms_to_us(frame_ms) if frame_ms else duration_us,
    )
    workload.validate()
    return workload


# ---------------------------------------------------------------------------
# ANN -> SNN conversion (rate encoding, integrate-and-fire)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ReluMlp:
    """Fully connected MLP with per-layer weight matrices and bias vectors.

    ``weights[k]`` has shape (layers[k], layers[k+1]); biases align with the
    post layer.  Activations default to ReLU on every non-input layer.
    """

    layers: tuple[int, ...]
    weights: tuple[tuple[tuple[float, ...], ...], ...]
    biases: tuple[tuple[float, ...], ...]
    activations: tuple[str, ...] = ()

    def __post_init__(self):
        if not self.activations:
            object.__setattr__(self, "activations", ("relu",) * (len(self.layers) - 1))

    def validate(self) -> None:
        if len(self.weights) != len(self.layers) - 1 or len(self.biases) != len(self.layers) - 1:
            raise ValidationError("need one weight matrix and bias vector per layer transition")
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            if len(w) != self.layers[k] or any(len(row) != self.layers[k + 1] for row in w):
                raise ValidationError(f"weight matrix {k} does not chain {self.layers[k]}x{self.layers[k + 1]}")
            if len(b) != self.layers[k + 1]:
                raise ValidationError(f"bias vector {k} has wrong length")

    def forward(self, inputs: Sequence[float]) -> list[float]:
        """Analog forward pass; used as the conversion oracle."""
        x = np.asarray(inputs, dtype=float)
        for w, b in zip(self.weights, self.biases):
            x = np.maximum(0.0, x @ np.asarray(w) + np.asarray(b))
        return [float(v) for v in x]


def convert_relu_mlp(
    net: ReluMlp,
    encoding: str = "rate",
    sim_window_ms: int = 1000,
    inputs: Sequence[float] | None = None,
) -> SnnWorkload:
    """Convert a ReLU MLP into an IF-neuron workload under rate encoding.

    Weights are copied verbatim; biases become constant input current.  The
    spike annotation is produced by simulating the IF network for
    ``sim_window_ms`` with the given input activations (all ones by default),
    so output spike rates are proportional to the analog ReLU outputs.
    """
    net.validate()
    if encoding != "rate":
        raise UnsupportedActivationError(f"unsupported encoding {encoding!r}; only rate encoding is supported")
    for k, act in enumerate(net.activations):
        if act != "relu":
            raise UnsupportedActivationError(f"layer {k + 1} uses {act!r}; only ReLU converts to IF neurons")
    if inputs is None:
        inputs = [1.0] * net.layers[0]
    if len(inputs) != net.layers[0]:
        raise ValidationError("input vector length does not match the input layer")

    layers: list[list[int]] = []
    next_id = 0
    for size in net.layers:
        layers.append(list(range(next_id, next_id + size)))
        next_id += size

    neurons = []
    for depth, layer in enumerate(layers):
        role = "input" if depth == 0 else ("output" if depth == len(layers) - 1 else "hidden")
        neurons.extend(Neuron(nid, role) for nid in layer)

    synapses = []
    for k, (pre, post) in enumerate(zip(layers, layers[1:])):
        w = net.weights[k]
        for i, src in enumerate(pre):
            for j, dst in enumerate(post):
                synapses.append(Synapse(src, dst, float(w[i][j])))

    # Simulate tick by tick to record spike times for every neuron.  Every
    # neuron (input ones included) integrates its drive and fires on crossing
    # threshold 1.0, subtracting the threshold so residual charge is kept (the
    # transfer function has no leak).  Input drive is the constant activation.
    x = np.asarray(inputs, dtype=float)
    spikes: dict[int, list[int]] = {nid: [] for nid in range(next_id)}
    state = [np.zeros(len(layer)) for layer in layers]
    for t in range(sim_window_ms):
        prev_fired = None
        for k, layer in enumerate(layers):
            if k == 0:
                state[0] += x
            else:
                w = np.asarray(net.weights[k - 1])
                b = np.asarray(net.biases[k - 1])
                state[k] += prev_fired @ w + b
            fired = state[k] >= 1.0
            state[k][fired] -= 1.0
            for j in np.nonzero(fired)[0]:
                spikes[layer[j]].append(t * US_PER_MS)
            prev_fired = fired.astype(float)

    workload = SnnWorkload(
        tuple(neurons),
        tuple(synapses),
        {nid: tuple(times) for nid, times in spikes.items()},
        duration_us=sim_window_ms * US_PER_MS,
    )
    workload.validate()
    return workload
