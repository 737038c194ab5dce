"""Command-line driver: per-stage subcommands plus one-shot synthesis.

Exit codes: 0 success, 2 validation, 3 deadlock/infeasible, 4 internal.
"""

from __future__ import annotations

import functools
import json
import sys
import time
from fractions import Fraction
from pathlib import Path

import click

from . import cluster as cluster_mod
from . import decompose as decompose_mod
from . import hardware as hardware_mod
from . import mapping as mapping_mod
from . import maxplus
from . import schedule as schedule_mod
from . import sdfg as sdfg_mod
from . import workload as workload_mod
from .errors import SynthesisError


def _stage_errors(stage):
    def wrap(fn):
        @functools.wraps(fn)
        def inner(*args, **kwargs):
            try:
                return fn(*args, **kwargs)
            except SynthesisError as exc:
                click.echo(f"error [{stage}]: {exc}", err=True)
                sys.exit(exc.exit_code)

        return inner

    return wrap


def _write_json(doc: dict, path) -> None:
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _read_json(path) -> dict:
    with open(path) as fh:
        return json.load(fh)


@click.group()
def main():
    """Synthesize SNN workloads onto crossbar neuromorphic hardware."""


# ---------------------------------------------------------------------------
# workload
# ---------------------------------------------------------------------------

@main.group()
def workload():
    """Validate or generate workloads."""


@workload.command("validate")
@click.argument("path", type=click.Path(exists=True))
@_stage_errors("workload")
def workload_validate(path):
    w = workload_mod.load_workload(path)
    click.echo(f"ok: {len(w.neurons)} neurons, {len(w.synapses)} synapses, "
               f"{sum(len(t) for t in w.spikes.values())} spikes")


@workload.command("gen")
@click.option("--topology", required=True, help="Comma-separated layer sizes, e.g. 784,100,10")
@click.option("--rate", type=float, default=100.0, show_default=True, help="Input Poisson rate (spikes/s)")
@click.option("--duration", type=float, default=1000.0, show_default=True, help="Window length (ms)")
@click.option("--seed", type=int, default=1, show_default=True)
@click.option("-o", "--output", type=click.Path(), required=True)
@_stage_errors("workload")
def workload_gen(topology, rate, duration, seed, output):
    sizes = [int(part) for part in topology.split(",") if part]
    w = workload_mod.generate_poisson_workload(sizes, rate, duration, seed)
    workload_mod.save_workload(w, output)
    click.echo(f"wrote {output}")


# ---------------------------------------------------------------------------
# decompose / cluster
# ---------------------------------------------------------------------------

@main.command("decompose")
@click.argument("workload_path", type=click.Path(exists=True))
@click.option("-o", "--output", type=click.Path(), required=True)
@click.option("--dot", type=click.Path(), default=None, help="Also write a DOT rendering")
@_stage_errors("decompose")
def decompose_cmd(workload_path, output, dot):
    w = workload_mod.load_workload(workload_path)
    g = decompose_mod.decompose(w)
    _write_json(decompose_mod.dsnn_to_json(g), output)
    if dot:
        Path(dot).write_text(decompose_mod.to_dot(g))
    click.echo(f"wrote {output}: {len(g.units)} units, {len(g.links)} links "
               f"(cost {decompose_mod.decomposition_cost(w)})")


@main.command("cluster")
@click.argument("dsnn_path", type=click.Path(exists=True))
@click.option("--crossbar", type=int, default=128, show_default=True)
@click.option("--algo", type=click.Choice(["greedy", "mincut"]), default="greedy", show_default=True)
@click.option("--seed", type=int, default=1, show_default=True, help="Used by the mincut baseline")
@click.option("-o", "--output", type=click.Path(), required=True)
@click.option("--dot", type=click.Path(), default=None)
@_stage_errors("cluster")
def cluster_cmd(dsnn_path, crossbar, algo, seed, output, dot):
    g = decompose_mod.dsnn_from_json(_read_json(dsnn_path))
    if algo == "greedy":
        c = cluster_mod.cluster_greedy(g, crossbar)
    else:
        c = cluster_mod.cluster_mincut(g, crossbar, seed)
    _write_json(cluster_mod.csnn_to_json(c), output)
    if dot:
        Path(dot).write_text(cluster_mod.to_dot(c))
    report = cluster_mod.utilization_report(c)
    click.echo(f"wrote {output}: {len(c.clusters)} clusters, {len(c.connections)} connections, "
               f"mean synapse utilization {report.mean_synapse:.1f}%")


# ---------------------------------------------------------------------------
# sdfg
# ---------------------------------------------------------------------------

def _exec_model(base, per_row, per_spike):
    return hardware_mod.ExecTimeModel(base, per_row, per_spike)


@main.group("sdfg")
def sdfg_group():
    """Build and analyze the dataflow representation."""


@sdfg_group.command("build")
@click.argument("csnn_path", type=click.Path(exists=True))
@click.option("--frame-scale", type=int, default=1, show_default=True)
@click.option("--tau-base", type=int, default=100, show_default=True)
@click.option("--tau-per-row", type=int, default=1, show_default=True)
@click.option("--tau-per-spike", type=int, default=0, show_default=True)
@click.option("--serialize-sources/--no-serialize-sources", default=True, show_default=True,
              help="Add one-token self-loops to source actors (sequential frame stream)")
@click.option("-o", "--output", type=click.Path(), required=True)
@click.option("--dot", type=click.Path(), default=None)
@_stage_errors("sdfg")
def sdfg_build(csnn_path, frame_scale, tau_base, tau_per_row, tau_per_spike, serialize_sources, output, dot):
    c = cluster_mod.csnn_from_json(_read_json(csnn_path))
    g = sdfg_mod.build_sdfg(c, _exec_model(tau_base, tau_per_row, tau_per_spike), frame_scale)
    if serialize_sources:
        g = sdfg_mod.with_source_self_loops(g)
    sdfg_mod.save_sdfg(g, output)
    if dot:
        Path(dot).write_text(sdfg_mod.to_dot(g))
    rv = sdfg_mod.repetition_vector(g)
    click.echo(f"wrote {output}: {len(g.actors)} actors, {len(g.channels)} channels, "
               f"repetition vector {'all ones' if all(v == 1 for v in rv.values()) else rv}")


@sdfg_group.command("check")
@click.argument("sdfg_path", type=click.Path(exists=True))
@_stage_errors("sdfg")
def sdfg_check(sdfg_path):
    g = sdfg_mod.load_sdfg(sdfg_path)
    rv = sdfg_mod.repetition_vector(g)
    sccs = sdfg_mod.strongly_connected_subgraphs(g)
    click.echo(f"consistent; repetition vector {sorted(rv.items())}")
    click.echo(f"strongly connected subgraphs: {sccs}")


@sdfg_group.command("break-cycles")
@click.argument("sdfg_path", type=click.Path(exists=True))
@click.option("-o", "--output", type=click.Path(), default=None, help="Write the acyclic graph")
@_stage_errors("sdfg")
def sdfg_break_cycles(sdfg_path, output):
    g = sdfg_mod.load_sdfg(sdfg_path)
    acyclic, removed = sdfg_mod.break_cycles(g)
    for c in removed:
        click.echo(f"removed inter-iteration edge {c.id}: {c.src}->{c.dst} ({c.tokens} tokens)")
    if not removed:
        click.echo("no inter-iteration edges to remove")
    if output:
        sdfg_mod.save_sdfg(acyclic, output)


@main.command("analyze")
@click.argument("sdfg_path", type=click.Path(exists=True))
@_stage_errors("analyze")
def analyze_cmd(sdfg_path):
    g = sdfg_mod.load_sdfg(sdfg_path)
    t = maxplus.firing_time_matrix(g)
    mean, cycle = maxplus.max_cycle_mean_with_cycle(t)
    actor_ids = sorted(a.id for a in g.actors)
    if mean is None:
        click.echo("maximum cycle mean: -inf (acyclic dependency structure)")
        click.echo("throughput bound: unbounded")
        return
    click.echo(f"maximum cycle mean: {mean} ticks/iteration")
    click.echo(f"throughput bound: {Fraction(1) / mean} iterations/tick")
    labels = [str(v) if v < len(actor_ids) else "(latency)" for v in cycle]
    click.echo(f"critical cycle: {' -> '.join(labels)}")


# ---------------------------------------------------------------------------
# hardware
# ---------------------------------------------------------------------------

@main.group("hw")
def hw_group():
    """Hardware platform models."""


@hw_group.command("preset")
@click.option("--mesh", default="32x32", show_default=True, help="Mesh as WxH")
@click.option("--crossbar", type=int, default=128, show_default=True)
@click.option("-o", "--output", type=click.Path(), required=True)
@_stage_errors("hardware")
def hw_preset(mesh, crossbar, output):
    try:
        w, h = (int(p) for p in mesh.lower().split("x"))
    except ValueError:
        raise SynthesisError(f"bad mesh spec {mesh!r}; expected WxH") from None
    hw = hardware_mod.dynapse_preset(w, h, crossbar)
    hardware_mod.save_hardware(hw, output)
    click.echo(f"wrote {output}: {len(hw.tiles)} tiles, {len(hw.links)} links")


# ---------------------------------------------------------------------------
# mapping / scheduling
# ---------------------------------------------------------------------------

def _front_to_json(front: mapping_mod.ParetoFront) -> dict:
    return {
        "points": [p.as_dict() for p in front.points],
        "best": front.best.as_dict(),
        "explored": front.explored,
    }


def _front_to_csv(front: mapping_mod.ParetoFront) -> str:
    rows = ["throughput_per_tick,period_ticks,energy_pj,metric,assignment"]
    for p in front.points:
        assignment = ";".join(f"{a}:{t}" for a, t in sorted(p.mapping.assignment.items()))
        rows.append(f"{float(p.throughput)},{float(p.period)},{float(p.energy)},{float(p.metric)},{assignment}")
    return "\n".join(rows) + "\n"


def _load_assignment(doc: dict) -> mapping_mod.Mapping:
    if "assignment" in doc:
        raw = doc["assignment"]
    elif "best" in doc:
        raw = doc["best"]["assignment"]
    else:
        raise SynthesisError("mapping file needs an 'assignment' object")
    return mapping_mod.Mapping({int(a): int(t) for a, t in raw.items()})


@main.command("map")
@click.argument("sdfg_path", type=click.Path(exists=True))
@click.argument("hw_path", type=click.Path(exists=True))
@click.option("--eta", type=int, default=20, show_default=True)
@click.option("--seed", type=int, default=7, show_default=True)
@click.option("--jobs", type=int, default=1, show_default=True)
@click.option("-o", "--output", type=click.Path(), required=True)
@click.option("--csv", "csv_path", type=click.Path(), default=None)
@_stage_errors("map")
def map_cmd(sdfg_path, hw_path, eta, seed, jobs, output, csv_path):
    g = sdfg_mod.load_sdfg(sdfg_path)
    hw = hardware_mod.load_hardware(hw_path)
    front = mapping_mod.explore(g, hw, eta, seed, jobs=jobs)
    _write_json(_front_to_json(front), output)
    if csv_path:
        Path(csv_path).write_text(_front_to_csv(front))
    click.echo(f"wrote {output}: {len(front.points)} pareto points "
               f"(best throughput {front.best.throughput} /tick, "
               f"energy {front.best.energy} pJ)")


@main.command("schedule")
@click.argument("sdfg_path", type=click.Path(exists=True))
@click.argument("hw_path", type=click.Path(exists=True))
@click.option("--mapping", "mapping_path", type=click.Path(exists=True), required=True)
@click.option("--from-single-tile", is_flag=True, help="Derive per-tile orders from the single-tile reference")
@click.option("-o", "--output", type=click.Path(), default=None)
@_stage_errors("schedule")
def schedule_cmd(sdfg_path, hw_path, mapping_path, from_single_tile, output):
    g = sdfg_mod.load_sdfg(sdfg_path)
    hw = hardware_mod.load_hardware(hw_path)
    m = _load_assignment(_read_json(mapping_path))
    con = mapping_mod.constrain(g, hw, m)
    if from_single_tile:
        order = schedule_mod.derive_from_single_tile(schedule_mod.single_tile_reference_order(g), m)
    else:
        order = schedule_mod.static_order(con.graph, m)
    doc = {"orders": {str(t): list(seq) for t, seq in sorted(order.orders.items())}}
    if output:
        _write_json(doc, output)
    for tile, seq in sorted(order.orders.items()):
        click.echo(f"tile {tile}: {' '.join(f'A{a}' for a in seq)}")


@main.command("simulate")
@click.argument("sdfg_path", type=click.Path(exists=True))
@click.argument("hw_path", type=click.Path(exists=True))
@click.option("--mapping", "mapping_path", type=click.Path(exists=True), required=True)
@click.option("--max-iterations", type=int, default=None)
@click.option("-o", "--output", type=click.Path(), default=None, help="Trace as JSON lines")
@click.option("--gantt", type=click.Path(), default=None, help="Gantt-style CSV")
@_stage_errors("simulate")
def simulate_cmd(sdfg_path, hw_path, mapping_path, max_iterations, output, gantt):
    g = sdfg_mod.load_sdfg(sdfg_path)
    hw = hardware_mod.load_hardware(hw_path)
    m = _load_assignment(_read_json(mapping_path))
    con = mapping_mod.constrain(g, hw, m)
    order = schedule_mod.static_order(con.graph, m)
    trace = schedule_mod.self_timed_simulate(con.graph, order, max_iterations)
    if output:
        Path(output).write_text(schedule_mod.trace_to_jsonl(trace))
    if gantt:
        Path(gantt).write_text(schedule_mod.trace_to_gantt_csv(trace, order))
    click.echo(f"transient {trace.transient_iterations} iterations; "
               f"period {trace.period_ticks} ticks / {trace.period_iterations} iterations; "
               f"throughput {trace.throughput} iterations/tick")


# ---------------------------------------------------------------------------
# synthesize
# ---------------------------------------------------------------------------

@main.command("synthesize")
@click.argument("workload_path", type=click.Path(exists=True))
@click.argument("hw_path", type=click.Path(exists=True))
@click.option("--eta", type=int, default=10, show_default=True)
@click.option("--seed", type=int, default=1, show_default=True)
@click.option("--frame-scale", type=int, default=1, show_default=True)
@click.option("--tau-base", type=int, default=100, show_default=True)
@click.option("--tau-per-row", type=int, default=1, show_default=True)
@click.option("--tau-per-spike", type=int, default=0, show_default=True)
@click.option("--tick-ns", type=float, default=1.0, show_default=True)
@click.option("--jobs", type=int, default=1, show_default=True)
@click.option("--outdir", type=click.Path(), default="synth-out", show_default=True)
@click.option("--format", "fmt", type=click.Choice(["text", "json", "csv"]), default="text", show_default=True)
@_stage_errors("synthesize")
def synthesize_cmd(workload_path, hw_path, eta, seed, frame_scale, tau_base,
                   tau_per_row, tau_per_spike, tick_ns, jobs, outdir, fmt):
    report = synthesize(
        workload_path, hw_path, eta=eta, seed=seed, frame_scale=frame_scale,
        exec_model=_exec_model(tau_base, tau_per_row, tau_per_spike),
        tick_ns=tick_ns, jobs=jobs, outdir=outdir,
    )
    if report is None:
        click.echo("nothing to synthesize: the workload is empty")
        return
    if fmt == "json":
        click.echo(json.dumps(report, indent=2, sort_keys=True))
    elif fmt == "csv":
        keys = sorted(report)
        click.echo(",".join(keys))
        click.echo(",".join(str(report[k]) for k in keys))
    else:
        for key in sorted(report):
            click.echo(f"{key}: {report[key]}")


def synthesize(workload_path, hw_path, eta=10, seed=1, frame_scale=1,
               exec_model=None, tick_ns=1.0, jobs=1, outdir="synth-out"):
    """Run the full pipeline, writing one artifact per stage.

    Returns the report dict, or None for an empty workload.
    """
    t0 = time.perf_counter()
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    exec_model = exec_model or hardware_mod.ExecTimeModel()

    w = workload_mod.load_workload(workload_path)
    hw = hardware_mod.load_hardware(hw_path)
    if not w.neurons:
        return None

    dsnn = decompose_mod.decompose(w)
    _write_json(decompose_mod.dsnn_to_json(dsnn), out / "dsnn.json")
    (out / "dsnn.dot").write_text(decompose_mod.to_dot(dsnn))

    crossbar_n = min(t.crossbar_n for t in hw.tiles)
    csnn = cluster_mod.cluster_greedy(dsnn, crossbar_n)
    _write_json(cluster_mod.csnn_to_json(csnn), out / "csnn.json")
    (out / "csnn.dot").write_text(cluster_mod.to_dot(csnn))

    g = sdfg_mod.build_sdfg(csnn, exec_model, frame_scale)
    g = sdfg_mod.with_source_self_loops(g)
    sdfg_mod.save_sdfg(g, out / "sdfg.json")
    (out / "sdfg.dot").write_text(sdfg_mod.to_dot(g))
    sdfg_mod.break_cycles(g)  # liveness gate: raises DeadlockError if stuck

    bound = maxplus.throughput_bound(g)

    front = mapping_mod.explore(g, hw, eta, seed, jobs=jobs)
    _write_json(_front_to_json(front), out / "front.json")
    best = front.best

    con = mapping_mod.constrain(g, hw, best.mapping)
    order = schedule_mod.static_order(con.graph, best.mapping)
    _write_json({"orders": {str(t): list(s) for t, s in sorted(order.orders.items())}}, out / "order.json")

    budget = max(10 * len(g.actors), 1000)
    trace = schedule_mod.self_timed_simulate(con.graph, order, budget)
    (out / "trace.jsonl").write_text(schedule_mod.trace_to_jsonl(trace))
    (out / "gantt.csv").write_text(schedule_mod.trace_to_gantt_csv(trace, order))

    report = _build_report(w, csnn, g, hw, best, trace, bound, tick_ns, frame_scale,
                           time.perf_counter() - t0)
    _write_json(report, out / "report.json")
    return report


def _build_report(w, csnn, g, hw, best, trace, bound, tick_ns, frame_scale, elapsed):
    ticks_per_s = 1e9 / tick_ns
    frames_per_s = float(trace.throughput) * ticks_per_s / frame_scale
    assignment = best.mapping.assignment
    used_tiles = sorted(set(assignment.values()))
    n_actors = len(g.actors)

    tile_util = []
    buffer_util = []
    bw_in = []
    bw_out = []
    clamped = False
    for tid in used_tiles:
        tile = hw.tile(tid)
        n = tile.crossbar_n
        members = [a for a, t in assignment.items() if t == tid]
        composite = 0.0
        for aid in members:
            meta = g.actor_meta.get(aid, sdfg_mod.ActorMeta())
            composite = max(
                composite,
                100.0 * (meta.inputs + meta.outputs) / (2 * n),
                100.0 * meta.synapses / (n * n),
            )
        tile_util.append(composite)
        out_rates = [c.production for c in g.channels if c.kind == sdfg_mod.DATA and assignment[c.src] == tid]
        buffer_util.append(100.0 * max(out_rates, default=0) / tile.out_buffer)
        spikes_out = sum(
            float(c.spikes) for c in g.channels
            if c.kind == sdfg_mod.DATA and assignment[c.src] == tid and assignment[c.dst] != tid
        )
        spikes_in = sum(
            float(c.spikes) for c in g.channels
            if c.kind == sdfg_mod.DATA and assignment[c.dst] == tid and assignment[c.src] != tid
        )
        iters_per_s = float(trace.throughput) * ticks_per_s
        for rate, sink in ((spikes_out, bw_out), (spikes_in, bw_in)):
            pct = 100.0 * rate * iters_per_s / hw.bandwidth
            if pct > 100.0:
                clamped = True
                pct = 100.0
            sink.append(pct)

    degree: dict[int, set[int]] = {a.id: set() for a in g.actors}
    for c in g.channels:
        if c.kind == sdfg_mod.DATA and c.src != c.dst:
            degree[c.src].add(c.dst)
            degree[c.dst].add(c.src)
    mean_degree = sum(len(v) for v in degree.values()) / n_actors if n_actors else 0.0

    spike_total = sum(
        float(c.spikes) / frame_scale for c in g.channels
        if c.kind == sdfg_mod.DATA and assignment[c.src] != assignment[c.dst]
    )

    def mean(xs):
        return sum(xs) / len(xs) if xs else 0.0

    report = {
        "throughput_frames_per_s": frames_per_s,
        "throughput_bound_frames_per_s": (
            float(bound) * ticks_per_s / frame_scale if bound is not None else "unbounded"
        ),
        "energy_pj_per_frame": float(best.energy) / frame_scale,
        "cluster_count": len(csnn.clusters),
        "cluster_connections_pct": 100.0 * mean_degree / n_actors if n_actors else 0.0,
        "spike_communication_per_frame": spike_total,
        "tile_utilization_pct": mean(tile_util),
        "buffer_utilization_pct": mean(buffer_util),
        "bandwidth_in_utilization_pct": mean(bw_in),
        "bandwidth_out_utilization_pct": mean(bw_out),
        "bandwidth_clamped": clamped,
        "tiles_used": len(used_tiles),
        "synthesis_seconds": elapsed,
    }
    return report


if __name__ == "__main__":
    main()
