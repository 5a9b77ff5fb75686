"""Vertex partition by neighborhood growth, the subgraph of edges
touching fast-growing vertices, and the structural property checks that
make the dynamics tractable: near-tree components, bounded path degree
sums, a quota of well-behaved edges on long paths, controlled
self-avoiding walk counts, and the per-vertex regularity events.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError, ResourceLimitError
from .graph import BfsScratch, Graph, connected_components
from .params import ModelParams
from .walks import nb_counts_all_lengths, saw_counts_upto

__all__ = [
    "Partition",
    "partition",
    "Prop1Report",
    "check_prop1",
    "Prop2Report",
    "check_prop2",
    "Prop3Report",
    "check_prop3",
    "Prop4Report",
    "check_prop4",
    "PropertyReport",
    "check_properties",
    "NoTangleReport",
    "check_no_tangle",
]


@dataclass
class Partition:
    """Split of the vertices by worst-case boundary growth.

    growth_stat(v) = max over radii r up to the partition radius of
    |sphere(v, r)| / d^r (r = 0 included, so the statistic is >= 1);
    a vertex sits in B exactly when the statistic is at most C.
    h_edges lists the edges with at least one endpoint outside B, and
    h_components the vertex sets of the connected components of that
    edge set.
    """

    n: int
    radius: int
    C: float
    in_b: np.ndarray
    growth_stat: np.ndarray
    h_edges: np.ndarray
    h_components: list

    @property
    def a_count(self) -> int:
        return int((~self.in_b).sum())

    def a_vertices(self) -> np.ndarray:
        return np.nonzero(~self.in_b)[0]


def partition(g: Graph, p: ModelParams) -> Partition:
    n = g.n
    radius = p.partition_radius(n)
    d = float(p.d)
    stat = np.ones(n)
    if radius >= 1:
        scratch = BfsScratch(g)
        weights = d ** -np.arange(radius + 1)
        for v in range(n):
            _, sizes = scratch.layers(v, max_radius=radius)
            best = 0.0
            for r, sz in enumerate(sizes):
                best = max(best, sz * weights[r])
            stat[v] = best
    in_b = stat <= p.C
    if g.m:
        e = g.edge_array
        mask = ~(in_b[e[:, 0]] & in_b[e[:, 1]])
        h_edges = e[mask]
    else:
        h_edges = np.empty((0, 2), dtype=np.int64)
    return Partition(
        n=n,
        radius=radius,
        C=p.C,
        in_b=in_b,
        growth_stat=stat,
        h_edges=h_edges,
        h_components=_edge_components(h_edges),
    )


def _edge_components(edges: np.ndarray) -> list:
    """Connected components of an edge list, as sorted vertex lists
    ordered by smallest member."""
    adj: dict = {}
    for u, v in edges:
        adj.setdefault(int(u), []).append(int(v))
        adj.setdefault(int(v), []).append(int(u))
    seen = set()
    comps = []
    for start in sorted(adj):
        if start in seen:
            continue
        comp = [start]
        seen.add(start)
        qi = 0
        while qi < len(comp):
            u = comp[qi]
            qi += 1
            for w in adj[u]:
                if w not in seen:
                    seen.add(w)
                    comp.append(w)
        comps.append(sorted(comp))
    return comps


# -- property 1: components of H are at most unicyclic ----------------------


@dataclass
class Prop1Report:
    ok: bool
    max_excess: int
    excesses: list
    witness: list | None  # vertex set of the first offending component


def check_prop1(g: Graph, part: Partition) -> Prop1Report:
    comp_id = {}
    for ci, comp in enumerate(part.h_components):
        for v in comp:
            comp_id[v] = ci
    edge_counts = [0] * len(part.h_components)
    for u, v in part.h_edges:
        edge_counts[comp_id[int(u)]] += 1
    excesses = [
        edge_counts[ci] - len(comp) + 1
        for ci, comp in enumerate(part.h_components)
    ]
    witness = None
    for ci, tx in enumerate(excesses):
        if tx > 1:
            witness = part.h_components[ci]
            break
    return Prop1Report(
        ok=witness is None,
        max_excess=max(excesses, default=0),
        excesses=excesses,
        witness=witness,
    )


# -- property 2: degree sums along paths in H -------------------------------


def _tree_max_weight_path(adj: dict, weights: dict, nodes: list):
    """Maximum-weight self-avoiding path in a tree with positive vertex
    weights, with an argmax path.  Two-pass dynamic program: the best
    descending chain below each node, then the best chain pair joined
    at a top node."""
    root = nodes[0]
    parent = {root: None}
    order = [root]
    for u in order:
        for w in adj[u]:
            if w != parent[u]:
                parent[w] = u
                order.append(w)
    down = {}
    down_child = {}
    for u in reversed(order):
        best, child = 0.0, None
        for w in adj[u]:
            if w != parent[u] and down[w] > best:
                best, child = down[w], w
        down[u] = weights[u] + best
        down_child[u] = child

    def chain(u):
        out = []
        while u is not None:
            out.append(u)
            u = down_child[u]
        return out

    best_val, best_node, best_pair = -math.inf, root, (None, None)
    for u in order:
        kids = sorted(
            ((down[w], w) for w in adj[u] if w != parent[u]), reverse=True
        )[:2]
        val = weights[u] + sum(t for t, _ in kids)
        if val > best_val:
            best_val = val
            best_node = u
            best_pair = tuple(w for _, w in kids) + (None, None)
    left = chain(best_pair[0]) if best_pair[0] is not None else []
    right = chain(best_pair[1]) if len(best_pair) > 1 and best_pair[1] is not None else []
    path = list(reversed(left)) + [best_node] + right
    return best_val, path


def _component_max_path(comp: list, edges: list, weights: dict, budget: int):
    """Max degree-sum path within one component of the edge subgraph.
    Exact: tree DP, extended to one-cycle components by deleting each
    cycle edge in turn (a self-avoiding path always omits at least one
    cycle edge).  Denser components fall back to exhaustive search
    under the step budget.  Returns (value, path, mode)."""
    adj: dict = {v: [] for v in comp}
    for u, v in edges:
        adj[u].append(v)
        adj[v].append(u)
    tx = len(edges) - len(comp) + 1
    if tx <= 0:
        val, path = _tree_max_weight_path(adj, weights, comp)
        return val, path, "exact"
    if tx == 1:
        cycle = _find_cycle_edges(adj, comp)
        best_val, best_path = -math.inf, []
        for drop in cycle:
            pruned = {
                v: [w for w in nbrs if (v, w) != drop and (w, v) != drop]
                for v, nbrs in adj.items()
            }
            val, path = _tree_max_weight_path(pruned, weights, comp)
            if val > best_val:
                best_val, best_path = val, path
        return best_val, best_path, "exact"
    return _exhaustive_max_path(adj, weights, comp, budget)


def _find_cycle_edges(adj: dict, comp: list) -> list:
    """Edges of the unique cycle in a connected one-cycle subgraph."""
    # peel leaves until only the cycle remains
    deg = {v: len(adj[v]) for v in comp}
    stack = [v for v in comp if deg[v] <= 1]
    alive = {v: True for v in comp}
    while stack:
        v = stack.pop()
        alive[v] = False
        for w in adj[v]:
            if alive[w]:
                deg[w] -= 1
                if deg[w] == 1:
                    stack.append(w)
    cycle_nodes = [v for v in comp if alive[v]]
    out = []
    seen = set()
    for v in cycle_nodes:
        for w in adj[v]:
            if alive[w] and (w, v) not in seen:
                seen.add((v, w))
                out.append((v, w))
    return out


def _exhaustive_max_path(adj: dict, weights: dict, comp: list, budget: int):
    """Depth-first enumeration of all self-avoiding paths; exact while
    the budget lasts, after which the best found so far is returned in
    sampled mode.  Explicit stack: paths can be as long as the
    component, far beyond the interpreter recursion limit."""
    best_val = -math.inf
    best_path: list = []
    steps = 0
    exhausted = False
    for v in comp:
        path = [v]
        onpath = {v}
        total = weights[v]
        if total > best_val:
            best_val, best_path = total, [v]
        iters = [iter(adj[v])]
        while iters:
            w = next(iters[-1], None)
            if w is None:
                iters.pop()
                dropped = path.pop()
                onpath.discard(dropped)
                total -= weights[dropped]
                continue
            if w in onpath:
                continue
            steps += 1
            if steps > budget:
                exhausted = True
                break
            onpath.add(w)
            path.append(w)
            total += weights[w]
            if total > best_val:
                best_val, best_path = total, list(path)
            iters.append(iter(adj[w]))
        if exhausted:
            break
    return best_val, best_path, ("sampled" if exhausted else "exact")


@dataclass
class Prop2Report:
    ok: bool
    max_degree_sum: float
    bound: float
    witness_path: list
    mode: str


def check_prop2(
    g: Graph, part: Partition, p: ModelParams, budget: int = 2_000_000
) -> Prop2Report:
    """Maximum over self-avoiding paths in the A-touching edge set of
    the sum of g-degrees along the path, against C log n."""
    bound = p.C * math.log(max(g.n, 2))
    deg = g.degrees()
    comp_id = {}
    for ci, comp in enumerate(part.h_components):
        for v in comp:
            comp_id[v] = ci
    edges_by_comp: list = [[] for _ in part.h_components]
    for u, v in part.h_edges:
        edges_by_comp[comp_id[int(u)]].append((int(u), int(v)))
    best_val, best_path, mode = 0.0, [], "exact"
    for comp, edges in zip(part.h_components, edges_by_comp):
        weights = {v: float(deg[v]) for v in comp}
        val, path, m = _component_max_path(comp, edges, weights, budget)
        if m == "sampled":
            mode = "sampled"
        if val > best_val:
            best_val, best_path = val, path
    return Prop2Report(
        ok=best_val <= bound,
        max_degree_sum=best_val,
        bound=bound,
        witness_path=best_path,
        mode=mode,
    )


# -- property 3: good-edge quota on window-length paths ----------------------


@dataclass
class Prop3Report:
    ok: bool
    min_good_edges: int
    path_length: int
    min_fraction: float
    witness_path: list
    mode: str
    paths_checked: int


def check_prop3(
    g: Graph,
    part: Partition,
    p: ModelParams,
    mode: str = "auto",
    ell: int | None = None,
    k_samples: int = 100_000,
    seed: int = 0,
    node_budget: int = 100_000_000,
) -> Prop3Report:
    """Minimum fraction of B-B edges over self-avoiding paths of the
    window length.

    Exact mode is complete: a path with fraction below one contains an
    A-touching edge, so enumerating the paths through those edges
    (every placement of the edge along the path) visits every path
    that could attain the minimum.  Sampled mode grows k random
    self-avoiding paths instead.  The quota is the exact rational
    comparison 5 * good >= 3 * length.
    """
    if ell is None:
        ell = p.window_length(g.n)
    if ell < 1:
        raise InvalidInputError("window length must be at least 1")
    if mode not in ("auto", "exact", "sampled"):
        raise InvalidInputError(f"unknown mode {mode!r}")
    in_b = part.in_b
    adj = g.adjacency_lists()
    bad = [
        (int(u), int(v))
        for u, v in part.h_edges
    ]
    if mode == "auto":
        # crude work estimate: every bad edge placed at each offset,
        # each side expanding by at most the graph's max degree
        max_deg = int(g.degrees().max()) if g.n else 0
        est = len(bad) * ell * float(max(max_deg - 1, 1)) ** min(ell - 1, 30)
        mode = "exact" if est <= node_budget else "sampled"

    if mode == "exact":
        return _prop3_exact(g, adj, in_b, bad, ell, node_budget)
    return _prop3_sampled(g, adj, in_b, ell, k_samples, seed)


def _good_count(path, in_b) -> int:
    return sum(
        1 for a, b in zip(path, path[1:]) if in_b[a] and in_b[b]
    )


def _prop3_exact(g, adj, in_b, bad_edges, ell, node_budget):
    steps = 0
    best = None  # (good_count, path)
    paths_checked = 0

    def extend(path, onpath, remaining, forward):
        nonlocal steps, best, paths_checked
        if remaining == 0:
            yield list(path)
            return
        tip = path[-1] if forward else path[0]
        for w in adj[tip]:
            if w in onpath:
                continue
            steps += 1
            if steps > node_budget:
                raise ResourceLimitError(
                    "path enumeration exceeded the node budget"
                )
            onpath.add(w)
            if forward:
                path.append(w)
            else:
                path.insert(0, w)
            yield from extend(path, onpath, remaining - 1, forward)
            if forward:
                path.pop()
            else:
                path.pop(0)
            onpath.remove(w)

    for a, b in bad_edges:
        for offset in range(ell):
            # the marked edge occupies positions (offset, offset + 1)
            base = [a, b]
            onpath = {a, b}
            for left_part in extend(base, onpath, offset, forward=False):
                lp = list(left_part)
                for full in extend(lp, set(lp), ell - 1 - offset, forward=True):
                    paths_checked += 1
                    good = _good_count(full, in_b)
                    if best is None or good < best[0]:
                        best = (good, list(full))
                        if good == 0:
                            break
    if best is None:
        # no window-length path meets an A-touching edge: quota holds
        return Prop3Report(
            ok=True,
            min_good_edges=ell,
            path_length=ell,
            min_fraction=1.0,
            witness_path=[],
            mode="exact",
            paths_checked=paths_checked,
        )
    good, path = best
    return Prop3Report(
        ok=5 * good >= 3 * ell,
        min_good_edges=good,
        path_length=ell,
        min_fraction=good / ell,
        witness_path=path,
        mode="exact",
        paths_checked=paths_checked,
    )


def _prop3_sampled(g, adj, in_b, ell, k_samples, seed):
    rng = np.random.default_rng(seed)
    best = None
    checked = 0
    attempts = 0
    max_attempts = 20 * k_samples
    starts = rng.integers(0, g.n, size=max_attempts) if g.n else []
    ai = 0
    while checked < k_samples and attempts < max_attempts:
        attempts += 1
        v = int(starts[ai])
        ai += 1
        path = [v]
        onpath = {v}
        ok_path = True
        for _ in range(ell):
            cands = [w for w in adj[path[-1]] if w not in onpath]
            if not cands:
                ok_path = False
                break
            w = cands[int(rng.integers(0, len(cands)))]
            path.append(w)
            onpath.add(w)
        if not ok_path:
            continue
        checked += 1
        good = _good_count(path, in_b)
        if best is None or good < best[0]:
            best = (good, path)
    if best is None:
        return Prop3Report(
            ok=True,
            min_good_edges=ell,
            path_length=ell,
            min_fraction=1.0,
            witness_path=[],
            mode="sampled",
            paths_checked=0,
        )
    good, path = best
    return Prop3Report(
        ok=5 * good >= 3 * ell,
        min_good_edges=good,
        path_length=ell,
        min_fraction=good / ell,
        witness_path=path,
        mode="sampled",
        paths_checked=checked,
    )


# -- property 4: self-avoiding walk growth -----------------------------------


@dataclass
class Prop4Report:
    ok: bool
    pointwise_ok: bool
    sum_ok: bool
    pointwise_lmax: int
    pointwise_max_ratio: float  # max over l of sup_B S / (d^l), vs C'
    pointwise_witness: int
    cap: int
    sup_counts: list  # exact sup over B of S_v^(l), l = 1..cap
    head_sum: float
    tail_estimate: float
    sum_bound: float
    tail_estimated: bool
    mode: str


def check_prop4(
    g: Graph,
    part: Partition,
    p: ModelParams,
    examine_cap: int = 400,
) -> Prop4Report:
    """Self-avoiding walk growth over B.

    sup over v in B of S_v^(l) is computed exactly for l up to the
    enumeration cap by branch and bound: vertices are tried in order
    of their non-backtracking walk count (an upper bound, since every
    self-avoiding walk is non-backtracking) and the scan stops when
    the bound drops to the best exact count found.  The weighted sum
    over all l up to n keeps the exact head and estimates the tail
    l > cap by the harmonic extension of the measured head constant;
    the tail is flagged as an estimate.
    """
    n = g.n
    d = float(p.d)
    cap = min(p.saw_length_cap(n), max(n - 1, 1))
    lmax_pointwise = p.partition_radius(n)  # same rounding as the radius
    logn = math.log(max(n, 2))
    b_idx = np.nonzero(part.in_b)[0]
    sup_counts = [0] * (cap + 1)
    mode = "exact-head"
    if len(b_idx):
        nb_rows, _ = nb_counts_all_lengths(g, cap)
        memo: dict = {}

        def saws(v: int) -> list:
            if v not in memo:
                memo[v] = saw_counts_upto(g, v, cap)
            return memo[v]

        for ell in range(1, cap + 1):
            col = nb_rows[ell - 1][b_idx]
            order = np.argsort(-col)
            best = 0
            examined = 0
            for oi in order:
                ub = col[oi]
                # counts here stay far below 2^53, so the float compare
                # is exact and ties break the scan immediately
                if ub <= best:
                    break
                s = saws(int(b_idx[oi]))[ell]
                assert s <= ub * (1.0 + 1e-12) + 1e-9
                best = max(best, s)
                examined += 1
                if examined >= examine_cap:
                    # could not close the bound: fall back to the
                    # majorant for this length
                    best = max(best, int(math.ceil(col[order[examined - 1]])))
                    mode = "majorant-tail"
                    break
            sup_counts[ell] = best

    ratios = [
        sup_counts[ell] / d**ell for ell in range(1, lmax_pointwise + 1)
    ]
    pointwise_max = max(ratios, default=0.0)
    pointwise_witness = (
        int(np.argmax(ratios)) + 1 if ratios else 0
    )
    pointwise_ok = pointwise_max <= p.Cp

    head = sum(
        sup_counts[ell] * d**-ell / ell for ell in range(1, cap + 1)
    )
    head_const = max(
        (sup_counts[ell] * d**-ell for ell in range(1, cap + 1)),
        default=0.0,
    )
    if cap < n:
        harmonic = sum(1.0 / ell for ell in range(cap + 1, n + 1))
        tail = head_const * harmonic
        tail_estimated = head_const > 0.0
    else:
        tail = 0.0
        tail_estimated = False
    sum_bound = p.Cpp * logn
    sum_ok = head + tail <= sum_bound
    return Prop4Report(
        ok=pointwise_ok and sum_ok,
        pointwise_ok=pointwise_ok,
        sum_ok=sum_ok,
        pointwise_lmax=lmax_pointwise,
        pointwise_max_ratio=pointwise_max,
        pointwise_witness=pointwise_witness,
        cap=cap,
        sup_counts=sup_counts[1:],
        head_sum=head,
        tail_estimate=tail,
        sum_bound=sum_bound,
        tail_estimated=tail_estimated,
        mode=mode,
    )


@dataclass
class PropertyReport:
    prop1: Prop1Report
    prop2: Prop2Report
    prop3: Prop3Report
    prop4: Prop4Report

    @property
    def all_ok(self) -> bool:
        return (
            self.prop1.ok and self.prop2.ok and self.prop3.ok and self.prop4.ok
        )

    @property
    def verification_mode(self) -> str:
        sampled = self.prop2.mode == "sampled" or self.prop3.mode == "sampled"
        return "sampled" if sampled else "exact"


def check_properties(
    g: Graph,
    part: Partition,
    p: ModelParams,
    prop3_mode: str = "auto",
    seed: int = 0,
) -> PropertyReport:
    return PropertyReport(
        prop1=check_prop1(g, part),
        prop2=check_prop2(g, part, p),
        prop3=check_prop3(g, part, p, mode=prop3_mode, seed=seed),
        prop4=check_prop4(g, part, p),
    )


# -- per-vertex regularity events --------------------------------------------


@dataclass
class NoTangleReport:
    """Four per-vertex regularity events.

    a1: ball growth max_r |B(v,r)| d^-r within c log_d n for r up to
        the partition radius;
    a2: tree excess of the partition-radius ball at most 1;
    a3: tree excess of the critical-radius ball at most 1 (the whole
        component when the critical radius is infinite);
    a4: boundary of the critical-radius ball at least c0 n^(delta/10)
        for vertices whose critical radius is finite.

    The constants c and c0 are measured; flags a1/a4 are only set when
    reference constants are supplied.
    """

    a1_ok: bool | None
    a2_ok: bool
    a3_ok: bool
    a4_ok: bool | None
    measured_c: float
    measured_c0: float
    offenders_a1: list
    offenders_a2: list
    offenders_a3: list
    offenders_a4: list
    finite_radius_count: int


def _induced_edge_count_stamped(g, members, stamp, epoch) -> int:
    adj = g.adjacency_lists()
    for v in members:
        stamp[v] = epoch
    edges = 0
    for v in members:
        for w in adj[v]:
            if stamp[w] == epoch and w > v:
                edges += 1
    return edges


def check_no_tangle(
    g: Graph,
    p: ModelParams,
    c: float | None = None,
    c0: float | None = None,
    offender_cap: int = 20,
) -> NoTangleReport:
    n = g.n
    d = float(p.d)
    radius = p.partition_radius(n)
    log_d_n = math.log(max(n, 2)) / math.log(d)
    threshold = p.ball_threshold(n)
    scale = float(n) ** (p.delta / 10.0)
    scratch = BfsScratch(g)
    stamp = np.full(n, -1, dtype=np.int64)
    epoch = 0

    max_growth = 0.0
    min_boundary_ratio = math.inf
    off_a1: list = []
    off_a2: list = []
    off_a3: list = []
    off_a4: list = []
    finite_count = 0

    comps = connected_components(g)
    comp_of = np.empty(n, dtype=np.int64)
    for ci, comp in enumerate(comps):
        for v in comp:
            comp_of[v] = ci
    comp_tx: dict = {}

    weights = d ** -np.arange(radius + 1)
    for v in range(n):
        members, sizes = scratch.layers(v, max_radius=radius)
        stat = max(
            sz * weights[r] for r, sz in enumerate(sizes)
        )
        max_growth = max(max_growth, stat)
        if c is not None and stat > c * log_d_n and len(off_a1) < offender_cap:
            off_a1.append(v)
        epoch += 1
        tx = (
            _induced_edge_count_stamped(g, members, stamp, epoch)
            - len(members)
            + 1
        )
        if tx > 1 and len(off_a2) < offender_cap:
            off_a2.append(v)

        cmembers, csizes = scratch.layers(v, stop_size=threshold)
        cum = 0
        r_v = None
        for r, sz in enumerate(csizes):
            cum += sz
            if cum >= threshold:
                r_v = r
                break
        if r_v is None:
            # critical ball is the whole component; tree excess cached
            ci = int(comp_of[v])
            if ci not in comp_tx:
                comp = comps[ci]
                epoch += 1
                comp_tx[ci] = (
                    _induced_edge_count_stamped(g, comp, stamp, epoch)
                    - len(comp)
                    + 1
                )
            tx_crit = comp_tx[ci]
        else:
            finite_count += 1
            boundary = csizes[r_v]
            ratio = boundary / scale
            min_boundary_ratio = min(min_boundary_ratio, ratio)
            if (
                c0 is not None
                and boundary < c0 * scale
                and len(off_a4) < offender_cap
            ):
                off_a4.append(v)
            crit_members = cmembers[:cum]
            epoch += 1
            tx_crit = (
                _induced_edge_count_stamped(g, crit_members, stamp, epoch)
                - len(crit_members)
                + 1
            )
        if tx_crit > 1 and len(off_a3) < offender_cap:
            off_a3.append(v)

    measured_c = max_growth / log_d_n if n else 0.0
    measured_c0 = (
        min_boundary_ratio if finite_count else math.inf
    )
    return NoTangleReport(
        a1_ok=(not off_a1) if c is not None else None,
        a2_ok=not off_a2,
        a3_ok=not off_a3,
        a4_ok=(not off_a4) if c0 is not None else None,
        measured_c=measured_c,
        measured_c0=measured_c0,
        offenders_a1=off_a1,
        offenders_a2=off_a2,
        offenders_a3=off_a3,
        offenders_a4=off_a4,
        finite_radius_count=finite_count,
    )
