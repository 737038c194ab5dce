"""Max-plus algebra over R union {-inf} and SDFG timing analysis.

The semiring uses max as addition (identity -inf) and + as multiplication
(identity 0); ``float("-inf")`` is the exact additive identity and absorbs
under multiplication, while all finite values stay integers (ticks), so cycle
means come out as exact rationals.

An SDFG with an all-ones repetition vector reduces to an event graph: every
channel becomes a dependency edge from producer to consumer weighted by the
consumer's execution time and carrying delay d = tokens // consumption
iterations.  Collapsing the zero-delay paths between unit-delay edges yields
the firing-time matrix T with t_k = T (x) t_{k-1}; the iteration period is
the maximum cycle mean of T, found with Karp's algorithm per strongly
connected component.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

from .errors import DeadlockError, SynthesisError, ValidationError
from .sdfg import Sdfg, _tarjan, repetition_vector

NEG_INF = float("-inf")
ZERO = NEG_INF  # additive identity
ONE = 0         # multiplicative identity

MAX_EXPANSION_STAGES = 200_000
PRUNE_DELAY_CAP = 64


@dataclass(frozen=True)
class MaxPlusMatrix:
    n: int
    rows: tuple[tuple[object, ...], ...]  # int | Fraction | NEG_INF entries

    def __post_init__(self):
        if len(self.rows) != self.n or any(len(r) != self.n for r in self.rows):
            raise ValidationError("max-plus matrix must be square")

    def __getitem__(self, ij):
        i, j = ij
        return self.rows[i][j]

    @classmethod
    def from_rows(cls, rows) -> "MaxPlusMatrix":
        return cls(len(rows), tuple(tuple(r) for r in rows))

    @classmethod
    def identity(cls, n: int) -> "MaxPlusMatrix":
        return cls(n, tuple(tuple(ONE if i == j else ZERO for j in range(n)) for i in range(n)))

    @classmethod
    def zeros(cls, n: int) -> "MaxPlusMatrix":
        """All entries the additive identity (-inf)."""
        return cls(n, tuple((ZERO,) * n for _ in range(n)))


@dataclass(frozen=True)
class Digraph:
    """Digraph of a matrix: arcs (i, j) wherever T[i][j] is finite."""

    vertices: tuple[int, ...]
    arcs: tuple[tuple[int, int, object], ...]  # (i, j, weight)


def digraph(t: MaxPlusMatrix) -> Digraph:
    arcs = [
        (i, j, t.rows[i][j])
        for i in range(t.n)
        for j in range(t.n)
        if t.rows[i][j] != NEG_INF
    ]
    return Digraph(tuple(range(t.n)), tuple(arcs))


def mp_matvec(t: MaxPlusMatrix, vec: Sequence) -> tuple:
    """t_k = T (x) t_{k-1}: result_i = max_j (T_ij + vec_j)."""
    if len(vec) != t.n:
        raise ValidationError(f"vector length {len(vec)} does not match matrix dimension {t.n}")
    out = []
    for i in range(t.n):
        best = NEG_INF
        row = t.rows[i]
        for j in range(t.n):
            if row[j] == NEG_INF or vec[j] == NEG_INF:
                continue
            val = row[j] + vec[j]
            if val > best:
                best = val
        out.append(best)
    return tuple(out)


# ---------------------------------------------------------------------------
# Maximum cycle mean (Karp's algorithm)
# ---------------------------------------------------------------------------

def _karp_scc(nodes: list[int], succ: dict[int, list[tuple[int, object]]]):
    """Karp on one strongly connected component. Returns (mean, cycle)."""
    local = {v: k for k, v in enumerate(nodes)}
    m = len(nodes)
    d = [[NEG_INF] * m for _ in range(m + 1)]
    pred = [[-1] * m for _ in range(m + 1)]
    d[0][0] = 0
    for k in range(1, m + 1):
        for u in range(m):
            if d[k - 1][u] == NEG_INF:
                continue
            base = d[k - 1][u]
            for v_node, w in succ[nodes[u]]:
                v = local[v_node]
                val = base + w
                if val > d[k][v]:
                    d[k][v] = val
                    pred[k][v] = u

    best = None
    best_v = -1
    for v in range(m):
        if d[m][v] == NEG_INF:
            continue
        worst = None
        for k in range(m):
            if d[k][v] == NEG_INF:
                continue
            mean = Fraction(d[m][v] - d[k][v], m - k)
            if worst is None or mean < worst:
                worst = mean
        if worst is not None and (best is None or worst > best):
            best = worst
            best_v = v
    if best is None:
        return None, []

    # The maximum-weight m-edge walk into best_v contains a critical cycle;
    # scan every repeated-vertex segment for one whose mean matches.
    walk = [best_v]
    for k in range(m, 0, -1):
        walk.append(pred[k][walk[-1]])
    walk.reverse()  # forward vertex sequence of length m+1

    def arc_weight(a: int, b: int):
        for nxt, w in succ[nodes[a]]:
            if local[nxt] == b:
                return w
        return None

    for start in range(len(walk)):
        for stop in range(start + 1, len(walk)):
            if walk[start] != walk[stop]:
                continue
            seg = walk[start: stop + 1]
            weights = [arc_weight(a, b) for a, b in zip(seg, seg[1:])]
            if any(w is None for w in weights):
                continue
            if Fraction(sum(weights), len(seg) - 1) == best:
                return best, [nodes[v] for v in seg]
    return best, []


def max_cycle_mean_with_cycle(t: MaxPlusMatrix):
    """Maximum cycle mean and one critical cycle (vertex sequence).

    Returns (None, []) for an acyclic digraph, i.e. a mean of -inf.
    Cycles are walked in dependency order: arc j -> i for a finite T[i][j].
    """
    succ: dict[int, list[tuple[int, object]]] = {v: [] for v in range(t.n)}
    adjacency: dict[int, list[int]] = {v: [] for v in range(t.n)}
    for i in range(t.n):
        for j in range(t.n):
            w = t.rows[i][j]
            if w != NEG_INF:
                succ[j].append((i, w))
                adjacency[j].append(i)
    best = None
    best_cycle: list[int] = []
    for comp in _tarjan(adjacency):
        comp_set = set(comp)
        if len(comp) == 1:
            v = comp[0]
            if all(nxt != v for nxt, _ in succ[v]):
                continue
        local_succ = {
            v: [(nxt, w) for nxt, w in succ[v] if nxt in comp_set] for v in comp
        }
        mean, cycle = _karp_scc(comp, local_succ)
        if mean is not None and (best is None or mean > best):
            best, best_cycle = mean, cycle
    return best, best_cycle


def max_cycle_mean(t: MaxPlusMatrix) -> Fraction | None:
    """Maximum weight-to-length ratio over all cycles; None when acyclic."""
    mean, _ = max_cycle_mean_with_cycle(t)
    return mean


# ---------------------------------------------------------------------------
# SDFG firing-time analysis
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EventEdge:
    src: int
    dst: int
    weight: int  # execution time of the consumer
    delay: int   # whole iterations of slack provided by initial tokens


def event_edges(g: Sdfg) -> list[EventEdge]:
    """Reduce channels to dependency edges; requires all-ones repetitions."""
    rv = repetition_vector(g)
    if any(v != 1 for v in rv.values()):
        raise ValidationError(
            "firing-time analysis requires an all-ones repetition vector; "
            f"got {sorted(rv.items())}"
        )
    tau = {a.id: a.execution_time for a in g.actors}
    return [
        EventEdge(c.src, c.dst, tau[c.dst], c.tokens // c.consumption)
        for c in g.channels
    ]


def _check_zero_delay_acyclic(g: Sdfg, edges: list[EventEdge]) -> list[int]:
    """Topological order of the zero-delay subgraph, or DeadlockError."""
    ids = sorted(a.id for a in g.actors)
    adjacency = {a: [] for a in ids}
    indeg = {a: 0 for a in ids}
    for e in edges:
        if e.delay == 0:
            adjacency[e.src].append(e.dst)
            indeg[e.dst] += 1
    order = [a for a in ids if indeg[a] == 0]
    head = 0
    while head < len(order):
        u = order[head]
        head += 1
        for v in adjacency[u]:
            indeg[v] -= 1
            if indeg[v] == 0:
                order.append(v)
    if len(order) != len(ids):
        stuck = sorted(a for a in ids if indeg[a] > 0)
        raise DeadlockError(
            f"token-free dependency cycle among actors {stuck}", actors=stuck
        )
    return order


def _collapse(node_ids: list[int], edges: list[EventEdge]) -> MaxPlusMatrix:
    """Build T over the given nodes: unit-delay edges extended by zero-delay paths."""
    index = {a: k for k, a in enumerate(node_ids)}
    n = len(node_ids)
    zero_out: dict[int, list[tuple[int, int]]] = {a: [] for a in node_ids}
    indeg = {a: 0 for a in node_ids}
    for e in edges:
        if e.delay == 0:
            zero_out[e.src].append((e.dst, e.weight))
            indeg[e.dst] += 1
    topo = [a for a in node_ids if indeg[a] == 0]
    head = 0
    while head < len(topo):
        u = topo[head]
        head += 1
        for v, _ in zero_out[u]:
            indeg[v] -= 1
            if indeg[v] == 0:
                topo.append(v)

    # Longest zero-delay path weights from every node, then one unit-delay hop.
    rows = [[NEG_INF] * n for _ in range(n)]
    reach_cache: dict[int, dict[int, int]] = {}

    def longest_from(x: int) -> dict[int, int]:
        if x in reach_cache:
            return reach_cache[x]
        dist = {x: 0}
        for u in topo:
            if u not in dist:
                continue
            base = dist[u]
            for v, w in zero_out[u]:
                if v not in dist or base + w > dist[v]:
                    dist[v] = base + w
        reach_cache[x] = dist
        return dist

    for e in edges:
        if e.delay != 1:
            continue
        dist = longest_from(e.dst)
        j = index[e.src]
        for target, extra in dist.items():
            i = index[target]
            val = e.weight + extra
            if rows[i][j] == NEG_INF or val > rows[i][j]:
                rows[i][j] = val
    return MaxPlusMatrix.from_rows(rows)


def _expand_delays(
    node_ids: list[int], edges: list[EventEdge], cap: int
) -> tuple[list[int], list[EventEdge]]:
    """Split edges with delay >= 2 into chains of unit-delay latency stages."""
    extra = sum(e.delay - 1 for e in edges if e.delay >= 2)
    if extra > cap:
        raise SynthesisError(
            f"firing-time matrix would need {extra} latency stages (cap {cap}); "
            "buffer depths are too large for explicit expansion"
        )
    nodes = list(node_ids)
    out: list[EventEdge] = []
    next_id = max(node_ids, default=-1) + 1
    for e in edges:
        if e.delay <= 1:
            out.append(e)
            continue
        prev = e.src
        for _ in range(e.delay - 1):
            stage = next_id
            next_id += 1
            nodes.append(stage)
            out.append(EventEdge(prev, stage, 0, 1))
            prev = stage
        out.append(EventEdge(prev, e.dst, e.weight, 1))
    return nodes, out


def firing_time_matrix(g: Sdfg, max_stages: int = MAX_EXPANSION_STAGES) -> MaxPlusMatrix:
    """Inter-iteration firing-time matrix T with t_k = T (x) t_{k-1}.

    Index order is ascending actor id; channels whose initial tokens cover
    several iterations contribute internal latency stages appended after the
    actors.  Entry T[i][j] is the longest dependency path from actor j's
    previous-iteration firing to actor i's current firing end, or -inf when
    no such dependency exists.
    """
    edges = event_edges(g)
    _check_zero_delay_acyclic(g, edges)
    ids = sorted(a.id for a in g.actors)
    nodes, expanded = _expand_delays(ids, edges, max_stages)
    return _collapse(nodes, expanded)


def iteration_period(g: Sdfg, prune_delay_cap: int = PRUNE_DELAY_CAP) -> Fraction | None:
    """Exact iteration period: maximum cycle mean of the firing-time matrix.

    Edges with very deep initial-token slack are pruned when a cheap bound
    shows no cycle through them can beat the period of the rest; this keeps
    deep buffers from exploding the expansion while preserving exactness.
    Returns None when nothing constrains successive iterations (acyclic
    dependency structure: unbounded throughput).
    """
    edges = event_edges(g)
    _check_zero_delay_acyclic(g, edges)
    ids = sorted(a.id for a in g.actors)

    small = [e for e in edges if e.delay <= prune_delay_cap]
    big = [e for e in edges if e.delay > prune_delay_cap]
    nodes, expanded = _expand_delays(ids, small, MAX_EXPANSION_STAGES)
    rho = max_cycle_mean(_collapse(nodes, expanded))
    if big:
        # A simple cycle's weight cannot exceed the sum of all execution
        # times, so a cycle through an edge of delay d has mean <= total/d.
        total_weight = sum(a.execution_time for a in g.actors)
        safe = rho is not None and all(
            Fraction(total_weight, e.delay) <= rho for e in big
        )
        if not safe:
            nodes, expanded = _expand_delays(ids, edges, MAX_EXPANSION_STAGES)
            rho = max_cycle_mean(_collapse(nodes, expanded))
    return rho


def throughput_bound(g: Sdfg) -> Fraction | None:
    """Iterations per tick with unlimited hardware: 1 / max cycle mean.

    None means unbounded (the dependency digraph has no cycle).
    """
    rho = iteration_period(g)
    if rho is None:
        return None
    return 1 / rho


def first_iteration_end_times(g: Sdfg) -> dict[int, int]:
    """Earliest firing end times of the first iteration.

    Initial tokens are available at time zero, so any channel with at least
    one whole firing's worth of tokens imposes no first-iteration wait; the
    rest order firings along zero-delay dependency paths.
    """
    edges = event_edges(g)
    order = _check_zero_delay_acyclic(g, edges)
    tau = {a.id: a.execution_time for a in g.actors}
    incoming: dict[int, list[EventEdge]] = {a.id: [] for a in g.actors}
    for e in edges:
        if e.delay == 0:
            incoming[e.dst].append(e)
    end: dict[int, int] = {}
    for v in order:
        start = 0
        for e in incoming[v]:
            start = max(start, end[e.src])
        end[v] = start + tau[v]
    return end
