"""Ising models with per-edge couplings, exact Gibbs tables, and the
self-avoiding-walk tree machinery.

Spins live in {-1,+1}; the measure is proportional to

    exp( sum_e beta_e * s_u * s_v  +  sum_v h_v * s_v ).

Fields may be +-inf, which clamps the spin: clamped vertices are removed
from the enumerated state space and act on their neighbors through the
couplings (their own field term is dropped -- the table represents the
conditional measure given the clamped spins).
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .errors import InvalidInputError, ResourceLimitError
from .graph import Graph, connected_components
from .states import compress_bits, spin_column

__all__ = [
    "IsingModel",
    "GibbsTable",
    "gibbs_exact",
    "susceptibility",
    "susceptibility_sup",
    "tree_correlation",
    "SawTree",
    "build_saw_tree",
    "saw_tree_root_prob",
    "weitz_check",
    "WeitzReport",
    "cov_domination_check",
    "root_conditioning_bound_check",
    "load_model",
    "save_model",
]

_CHUNK = 1 << 20


class IsingModel:
    """Graph + per-edge couplings + per-vertex fields."""

    __slots__ = ("g", "beta_edges", "fields", "_edge_index")

    def __init__(self, g: Graph, beta_edges, fields=None):
        self.g = g
        self.beta_edges = np.asarray(beta_edges, dtype=np.float64)
        if self.beta_edges.shape != (g.m,):
            raise InvalidInputError("beta_edges must align with g.edge_array")
        self.fields = (
            np.zeros(g.n) if fields is None else np.asarray(fields, dtype=np.float64)
        )
        if self.fields.shape != (g.n,):
            raise InvalidInputError("fields must have one entry per vertex")
        self._edge_index = None

    @classmethod
    def uniform(cls, g: Graph, beta: float, fields=None) -> "IsingModel":
        return cls(g, np.full(g.m, float(beta)), fields)

    @classmethod
    def interface(cls, g: Graph, in_b, beta: float, fields=None) -> "IsingModel":
        """Couplings beta on every edge with at least one endpoint outside B,
        zero on edges internal to B."""
        in_b = np.asarray(in_b, dtype=bool)
        e = g.edge_array
        bb = in_b[e[:, 0]] & in_b[e[:, 1]]
        return cls(g, np.where(bb, 0.0, float(beta)), fields)

    def edge_index(self) -> dict:
        if self._edge_index is None:
            self._edge_index = {
                (int(u), int(v)): i for i, (u, v) in enumerate(self.g.edge_array)
            }
        return self._edge_index

    def edge_beta(self, u: int, v: int) -> float:
        key = (u, v) if u < v else (v, u)
        return float(self.beta_edges[self.edge_index()[key]])

    def with_fields(self, fields) -> "IsingModel":
        return IsingModel(self.g, self.beta_edges, fields)

    def with_edge_scale(self, edge_mask, factor: float) -> "IsingModel":
        """Scale couplings on the masked edges by `factor` (used to lower the
        temperature on a chosen edge set, e.g. interior edges of B)."""
        mask = np.asarray(edge_mask, dtype=bool)
        if mask.shape != (self.g.m,):
            raise InvalidInputError("edge_mask must align with g.edge_array")
        return IsingModel(
            self.g, np.where(mask, self.beta_edges * factor, self.beta_edges), self.fields
        )

    def free_vertices(self) -> list[int]:
        return [v for v in range(self.g.n) if math.isfinite(self.fields[v])]

    def clamped_spins(self) -> dict[int, int]:
        out = {}
        for v in range(self.g.n):
            h = self.fields[v]
            if math.isinf(h):
                out[v] = 1 if h > 0 else -1
        return out

    def local_field(self, spins, v: int) -> float:
        """sum_u beta_uv * s_u + h_v for the current spin vector (length n)."""
        total = self.fields[v]
        idx = self.edge_index()
        for w in self.g.neighbors(v):
            key = (v, int(w)) if v < w else (int(w), v)
            total += self.beta_edges[idx[key]] * spins[int(w)]
        return float(total)


# -- exact Gibbs tables -----------------------------------------------------


@dataclass
class GibbsTable:
    """Exact distribution of the free spins of an Ising model.

    sites[i] is the vertex whose spin sits in bit i of the config index;
    probs sums to one; logZ is the log of the (conditional) partition
    function including coupling terms between clamped vertices.
    """

    sites: list
    probs: np.ndarray
    log_probs: np.ndarray
    logZ: float
    clamped: dict

    @property
    def k(self) -> int:
        return len(self.sites)

    def position(self, v: int) -> int:
        try:
            return self.sites.index(v)
        except ValueError:
            raise InvalidInputError(f"vertex {v} is not a free site") from None

    def mean(self, v: int) -> float:
        if v in self.clamped:
            return float(self.clamped[v])
        i = self.position(v)
        c = np.arange(len(self.probs), dtype=np.int64)
        return float(np.dot(self.probs, spin_column(c, i)))

    def pair_mean(self, u: int, v: int) -> float:
        """E[s_u s_v], either argument may be clamped; u == v gives 1."""
        if u == v:
            return 1.0
        cu, cv = u in self.clamped, v in self.clamped
        if cu and cv:
            return float(self.clamped[u] * self.clamped[v])
        if cu:
            return self.clamped[u] * self.mean(v)
        if cv:
            return self.clamped[v] * self.mean(u)
        c = np.arange(len(self.probs), dtype=np.int64)
        su = spin_column(c, self.position(u))
        sv = spin_column(c, self.position(v))
        return float(np.dot(self.probs, su * sv))

    def cov(self, u: int, v: int) -> float:
        return self.pair_mean(u, v) - self.mean(u) * self.mean(v)

    def prob_plus(self, v: int) -> float:
        return 0.5 * (1.0 + self.mean(v))

    def condition(self, assignments: dict) -> "GibbsTable":
        """Condition on {vertex: +-1} for free vertices; returns a new table."""
        for v, s in assignments.items():
            if s not in (-1, 1):
                raise InvalidInputError(f"spin must be +-1, got {s}")
        c = np.arange(len(self.probs), dtype=np.int64)
        mask = np.ones(len(self.probs), dtype=bool)
        for v, s in assignments.items():
            bit = (s + 1) // 2
            mask &= ((c >> self.position(v)) & 1) == bit
        sel = c[mask]
        p = self.probs[mask]
        total = p.sum()
        if total <= 0:
            raise InvalidInputError("conditioning event has zero probability")
        keep = [i for i, v in enumerate(self.sites) if v not in assignments]
        newc = compress_bits(sel, keep)
        k_new = len(keep)
        probs = np.zeros(1 << k_new)
        np.add.at(probs, newc, p / total)
        with np.errstate(divide="ignore"):
            logp = np.log(probs)
        clamped = dict(self.clamped)
        clamped.update({v: int(s) for v, s in assignments.items()})
        return GibbsTable(
            sites=[self.sites[i] for i in keep],
            probs=probs,
            log_probs=logp,
            logZ=self.logZ + math.log(total),
            clamped=clamped,
        )

    def marginal_probs(self, sub_sites: list) -> np.ndarray:
        """Distribution of a subset of sites; bit i of the result indexes
        sub_sites[i]."""
        bits = [self.position(v) for v in sub_sites]
        c = np.arange(len(self.probs), dtype=np.int64)
        proj = compress_bits(c, bits)
        out = np.zeros(1 << len(bits))
        np.add.at(out, proj, self.probs)
        return out


def gibbs_exact(model: IsingModel, max_free: int = 24) -> GibbsTable:
    """Enumerate the free-spin state space exactly (log-space weights)."""
    free = model.free_vertices()
    k = len(free)
    if k > max_free:
        raise ResourceLimitError(
            f"{k} free spins exceed the exact-enumeration cap of {max_free}"
        )
    pos = {v: i for i, v in enumerate(free)}
    clamped = model.clamped_spins()
    size = 1 << k
    logw = np.zeros(size)
    const = 0.0
    for chunk_start in range(0, size, _CHUNK):
        c = np.arange(chunk_start, min(chunk_start + _CHUNK, size), dtype=np.int64)
        acc = logw[chunk_start:chunk_start + len(c)]
        for (u, v), be in zip(model.g.edge_array, model.beta_edges):
            u, v = int(u), int(v)
            if be == 0.0:
                continue
            fu, fv = u in pos, v in pos
            if fu and fv:
                x = ((c >> pos[u]) ^ (c >> pos[v])) & 1
                acc += be * (1.0 - 2.0 * x)
            elif fu:
                acc += be * clamped[v] * spin_column(c, pos[u])
            elif fv:
                acc += be * clamped[u] * spin_column(c, pos[v])
            elif chunk_start == 0:
                const += be * clamped[u] * clamped[v]
        for v in free:
            h = model.fields[v]
            if h != 0.0:
                acc += h * spin_column(c, pos[v])
    logw += const
    logZ = float(logsumexp(logw))
    logp = logw - logZ
    return GibbsTable(
        sites=free,
        probs=np.exp(logp),
        log_probs=logp,
        logZ=logZ,
        clamped=clamped,
    )


# -- susceptibility ---------------------------------------------------------


def susceptibility(model: IsingModel, x: int, max_free: int = 24) -> float:
    """chi(x) = sum over all vertices y (including y = x) of E[s_x s_y]."""
    table = gibbs_exact(model, max_free=max_free)
    return sum(table.pair_mean(x, y) for y in range(model.g.n))


def susceptibility_sup(model: IsingModel, max_free: int = 24) -> float:
    table = gibbs_exact(model, max_free=max_free)
    best = -math.inf
    for x in range(model.g.n):
        val = sum(table.pair_mean(x, y) for y in range(model.g.n))
        best = max(best, val)
    return best


# -- tree formulas ----------------------------------------------------------


def tree_correlation(model: IsingModel, u: int, v: int) -> float:
    """E[s_u s_v] on a zero-field forest: the product of tanh(beta_e) along
    the unique path.  Raises if the graph has a cycle, a nonzero field, or
    u and v are disconnected."""
    g = model.g
    if np.any(model.fields != 0.0):
        raise InvalidInputError("tree correlation formula needs zero fields")
    comps = connected_components(g)
    by_vertex = {}
    for ci, comp in enumerate(comps):
        for w in comp:
            by_vertex[w] = ci
    if g.m != g.n - len(comps):
        raise InvalidInputError("graph contains a cycle")
    if by_vertex[u] != by_vertex[v]:
        raise InvalidInputError("vertices lie in different components")
    if u == v:
        return 1.0
    # BFS path recovery
    parent = {u: None}
    queue = [u]
    qi = 0
    adj = g.adjacency_lists()
    while qi < len(queue):
        w = queue[qi]
        qi += 1
        if w == v:
            break
        for t in adj[w]:
            if t not in parent:
                parent[t] = w
                queue.append(t)
    prod = 1.0
    w = v
    while parent[w] is not None:
        prod *= math.tanh(model.edge_beta(w, parent[w]))
        w = parent[w]
    return prod


# -- self-avoiding-walk tree -------------------------------------------------


@dataclass
class SawTree:
    """Tree of self-avoiding walks from a root vertex.

    Node 0 is the root (the walk consisting of the root vertex alone).
    Each node stores the graph vertex it copies (vertex), its parent,
    the coupling on the edge to the parent, and a forced spin: walks end
    when they close a cycle, and the closing copy is pinned to +1 when
    the closing edge exceeds the opening edge in the local edge order at
    the revisited vertex (edges compared by their far endpoint's index),
    -1 otherwise.
    """

    root_vertex: int
    vertex: list
    parent: list
    coupling: list
    forced: list
    n_nodes: int

    def copies_of(self, y: int, free_only: bool = True) -> list[int]:
        return [
            i
            for i in range(self.n_nodes)
            if self.vertex[i] == y and (not free_only or self.forced[i] == 0)
        ]


def build_saw_tree(
    model: IsingModel,
    root: int,
    depth_cap: int | None = None,
    max_nodes: int = 2_000_000,
) -> SawTree:
    """Unfold the graph into the tree of self-avoiding walks from `root`.

    Children of a walk extend it by one neighbor of its endpoint, skipping
    only the immediate predecessor; a neighbor already on the walk closes
    a cycle and becomes a forced leaf (see SawTree).  depth_cap truncates
    walks at that length; max_nodes guards against explosion.
    """
    g = model.g
    if not 0 <= root < g.n:
        raise InvalidInputError(f"vertex {root} out of range")
    adj = g.adjacency_lists()
    vertex = [root]
    parent = [-1]
    coupling = [math.nan]
    forced = [0]
    # stack entries: (node_id, path list of graph vertices, position map)
    stack = [(0, [root], {root: 0})]
    while stack:
        node, path, posmap = stack.pop()
        u = vertex[node]
        depth = len(path) - 1
        if depth_cap is not None and depth >= depth_cap:
            continue
        pred = path[-2] if len(path) >= 2 else -1
        for w in adj[u]:
            if w == pred:
                continue
            if len(vertex) >= max_nodes:
                raise ResourceLimitError(
                    f"walk tree exceeded the {max_nodes}-node budget"
                )
            be = model.edge_beta(u, w)
            if w in posmap:
                # closing a cycle at w: compare the closing edge (u, w)
                # with the opening edge (w, successor) in w's local order
                succ = path[posmap[w] + 1]
                sign = 1 if u > succ else -1
                vertex.append(w)
                parent.append(node)
                coupling.append(be)
                forced.append(sign)
            else:
                vertex.append(w)
                parent.append(node)
                coupling.append(be)
                forced.append(0)
                child = len(vertex) - 1
                new_path = path + [w]
                new_pos = dict(posmap)
                new_pos[w] = len(path)
                stack.append((child, new_path, new_pos))
    return SawTree(
        root_vertex=root,
        vertex=vertex,
        parent=parent,
        coupling=coupling,
        forced=forced,
        n_nodes=len(vertex),
    )


def saw_tree_root_prob(
    tree: SawTree,
    conditions: dict | None = None,
    base_fields: dict | None = None,
) -> float:
    """P(root spin = +1) on the walk tree.

    conditions maps graph vertices to +-1 and pins every *free* copy of
    that vertex (construction-forced copies keep their construction
    spin).  base_fields optionally supplies a finite field per graph
    vertex.  Evaluated by the standard leaf-to-root field recursion in
    atanh form, which is stable at any depth because each upward message
    is bounded by the edge coupling.
    """
    conditions = conditions or {}
    base_fields = base_fields or {}
    n = tree.n_nodes
    acc = np.zeros(n)
    for node in range(n - 1, 0, -1):
        v = tree.vertex[node]
        if tree.forced[node] != 0:
            h = math.inf * tree.forced[node]
        elif v in conditions:
            h = math.inf * conditions[v]
        else:
            h = base_fields.get(v, 0.0) + acc[node]
        msg = math.atanh(math.tanh(tree.coupling[node]) * math.tanh(h))
        acc[tree.parent[node]] += msg
    v = tree.root_vertex
    if tree.forced[0] != 0:
        h_root = math.inf * tree.forced[0]
    elif v in conditions:
        h_root = math.inf * conditions[v]
    else:
        h_root = base_fields.get(v, 0.0) + acc[0]
    if math.isinf(h_root):
        return 1.0 if h_root > 0 else 0.0
    return 1.0 / (1.0 + math.exp(-2.0 * h_root))


@dataclass
class WeitzReport:
    lhs: float
    rhs: float
    diff: float
    tree_nodes: int


def weitz_check(
    g: Graph,
    v: int,
    y: int,
    beta: float,
    max_nodes: int = 2_000_000,
) -> WeitzReport:
    """Compare P(s_v = + | s_y = +) on the graph against the root marginal
    of the walk tree with every free copy of y pinned to +."""
    model = IsingModel.uniform(g, beta)
    table = gibbs_exact(model)
    lhs = 1.0 if v == y else table.condition({y: 1}).prob_plus(v)
    tree = build_saw_tree(model, v, max_nodes=max_nodes)
    rhs = saw_tree_root_prob(tree, conditions={y: 1})
    return WeitzReport(lhs=lhs, rhs=rhs, diff=abs(lhs - rhs), tree_nodes=tree.n_nodes)


# -- covariance dominations ---------------------------------------------------


def cov_domination_check(model: IsingModel, u: int, v: int):
    """On a zero-or-any-field forest model: covariance under the given
    fields versus the zero-field pair expectation.  Returns
    (cov_with_fields, zero_field_corr, ok)."""
    table = gibbs_exact(model)
    cov = table.cov(u, v)
    zero = gibbs_exact(model.with_fields(np.zeros(model.g.n)))
    e0 = zero.pair_mean(u, v)
    return cov, e0, cov <= e0 + 1e-12


@dataclass
class RootBoundReport:
    applicable: bool
    lhs: float
    rhs: float
    c_const: float
    root_mean: float


def root_conditioning_bound_check(
    model: IsingModel,
    root: int,
    targets: list,
    zero_mean_tol: float = 1e-9,
) -> RootBoundReport:
    """Conditioning several vertices to + against the sum of single-vertex
    zero-field conditionings, scaled by c = (1 + exp(2*beta_max*d'))/2
    where d' bounds the degrees of the conditioned vertices.

    Requires the unconditioned root mean to vanish (reported inapplicable
    otherwise, e.g. for fields that break the spin-flip symmetry).
    """
    table = gibbs_exact(model)
    root_mean = table.mean(root)
    if abs(root_mean) > zero_mean_tol:
        return RootBoundReport(False, math.nan, math.nan, math.nan, root_mean)
    lhs = table.condition({t: 1 for t in targets}).mean(root)
    dprime = max(model.g.degree(t) for t in targets)
    beta_max = float(np.max(np.abs(model.beta_edges))) if model.g.m else 0.0
    c_const = 0.5 * (1.0 + math.exp(2.0 * beta_max * dprime))
    zero = gibbs_exact(model.with_fields(np.zeros(model.g.n)))
    rhs = c_const * sum(zero.pair_mean(root, t) for t in targets)
    return RootBoundReport(True, lhs, rhs, c_const, root_mean)


# -- model files --------------------------------------------------------------


def save_model(model: IsingModel, path: str) -> None:
    payload = {
        "edges": [
            [int(u), int(v), float(b)]
            for (u, v), b in zip(model.g.edge_array, model.beta_edges)
        ],
        "fields": {
            str(v): float(model.fields[v])
            for v in range(model.g.n)
            if model.fields[v] != 0.0
        },
        "n": model.g.n,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_model(path: str) -> IsingModel:
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    edges = payload.get("edges", [])
    fields_raw = payload.get("fields", {})
    implied = 0
    for u, v, _ in edges:
        implied = max(implied, int(u) + 1, int(v) + 1)
    for v in fields_raw:
        implied = max(implied, int(v) + 1)
    n = int(payload.get("n", implied))
    if n < implied:
        raise InvalidInputError(f"{path}: n={n} smaller than the largest index used")
    g = Graph(n, [(int(u), int(v)) for u, v, _ in edges])
    idx = {(int(min(u, v)), int(max(u, v))): float(b) for u, v, b in edges}
    beta_edges = np.array([idx[(int(u), int(v))] for u, v in g.edge_array])
    fields = np.zeros(n)
    for v, h in fields_raw.items():
        fields[int(v)] = float(h)
    return IsingModel(g, beta_edges, fields)
