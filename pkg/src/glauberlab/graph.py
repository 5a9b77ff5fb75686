"""Undirected simple graphs with a fixed vertex enumeration.

Vertices are integers 0..n-1 and that order is *the* enumeration: every
tie-breaking rule in the package (exploration FIFO, cycle-closing spin
signs) refers to it.  Adjacency is stored CSR-style with sorted
neighbor lists, which keeps breadth-first searches cheap at n = 10**6.

The on-disk format is a UTF-8 text file with LF line endings:

    n m
    u v        (m lines, 0-based endpoints, u < v, lexicographic order)

Round-tripping a graph through save/load is byte-exact.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .errors import InvalidInputError

__all__ = [
    "Graph",
    "sample_er",
    "save_graph",
    "load_graph",
    "ball",
    "tree_excess",
    "connected_components",
    "induced_edge_count",
    "explore",
    "ExplorationState",
    "critical_radii",
    "enumerate_connected_graphs",
    "BfsScratch",
]


class Graph:
    """Immutable sparse graph over vertices 0..n-1."""

    __slots__ = ("n", "indptr", "indices", "_edge_array", "_adj_sets", "_adj_lists")

    def __init__(self, n: int, edges: Iterable[tuple[int, int]]):
        if n < 0:
            raise InvalidInputError(f"vertex count must be nonnegative, got {n}")
        edge_arr = np.asarray(list(edges), dtype=np.int64)
        if edge_arr.size == 0:
            edge_arr = edge_arr.reshape(0, 2)
        if edge_arr.ndim != 2 or edge_arr.shape[1] != 2:
            raise InvalidInputError("edges must be pairs of vertices")
        if edge_arr.size:
            if edge_arr.min() < 0 or edge_arr.max() >= n:
                raise InvalidInputError("edge endpoint out of range")
            if np.any(edge_arr[:, 0] == edge_arr[:, 1]):
                raise InvalidInputError("self-loops are not allowed")
            lo = np.minimum(edge_arr[:, 0], edge_arr[:, 1])
            hi = np.maximum(edge_arr[:, 0], edge_arr[:, 1])
            edge_arr = np.stack([lo, hi], axis=1)
            order = np.lexsort((edge_arr[:, 1], edge_arr[:, 0]))
            edge_arr = edge_arr[order]
            dup = np.all(edge_arr[1:] == edge_arr[:-1], axis=1)
            if np.any(dup):
                raise InvalidInputError("duplicate edges are not allowed")
        self.n = int(n)
        self._edge_array = edge_arr
        src = np.concatenate([edge_arr[:, 0], edge_arr[:, 1]])
        dst = np.concatenate([edge_arr[:, 1], edge_arr[:, 0]])
        counts = np.bincount(src, minlength=n).astype(np.int64) if n else np.zeros(0, np.int64)
        self.indptr = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(counts, out=self.indptr[1:])
        order = np.argsort(src * np.int64(max(n, 1)) + dst, kind="stable")
        self.indices = dst[order]
        self._adj_sets = None
        self._adj_lists = None

    # -- basic accessors -------------------------------------------------

    @property
    def m(self) -> int:
        return int(self._edge_array.shape[0])

    def neighbors(self, v: int) -> np.ndarray:
        return self.indices[self.indptr[v]:self.indptr[v + 1]]

    def degree(self, v: int) -> int:
        return int(self.indptr[v + 1] - self.indptr[v])

    def degrees(self) -> np.ndarray:
        return np.diff(self.indptr)

    @property
    def edge_array(self) -> np.ndarray:
        """(m, 2) array, each row (u, v) with u < v, lexicographically sorted."""
        return self._edge_array

    def edges(self):
        for u, v in self._edge_array:
            yield int(u), int(v)

    def has_edge(self, u: int, v: int) -> bool:
        return v in self.adjacency_sets()[u]

    def adjacency_sets(self) -> list[set]:
        if self._adj_sets is None:
            sets = [set() for _ in range(self.n)]
            for u, v in self._edge_array:
                sets[u].add(int(v))
                sets[v].add(int(u))
            self._adj_sets = sets
        return self._adj_sets

    def adjacency_lists(self) -> list[list[int]]:
        """Sorted python-list adjacency; cached for tight pure-python loops."""
        if self._adj_lists is None:
            self._adj_lists = [
                self.indices[self.indptr[v]:self.indptr[v + 1]].tolist()
                for v in range(self.n)
            ]
        return self._adj_lists

    def __repr__(self):
        return f"Graph(n={self.n}, m={self.m})"


# -- generation ---------------------------------------------------------


def _pair_to_row(n: int, k: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Invert the lexicographic linear index over unordered pairs of 0..n-1."""
    kf = k.astype(np.float64)
    disc = (2.0 * n - 1.0) ** 2 - 8.0 * kf
    i = np.floor(((2.0 * n - 1.0) - np.sqrt(np.maximum(disc, 0.0))) / 2.0).astype(np.int64)
    i = np.clip(i, 0, max(n - 2, 0))

    def row_start(row):
        return row * (2 * n - row - 1) // 2

    # float sqrt can land one row off near block boundaries; fix exactly
    for _ in range(2):
        i = np.where(row_start(i) > k, i - 1, i)
        i = np.where((i < n - 2) & (row_start(i + 1) <= k), i + 1, i)
    j = k - row_start(i) + i + 1
    return i, j


def sample_er(n: int, d: float, seed: int) -> Graph:
    """Sample G(n, d/n): every unordered pair is an edge independently
    with probability d/n.

    Walks the lexicographic pair sequence with geometric gap skipping, so
    the cost is O(m) rather than O(n**2).  Deterministic given the seed.
    """
    if n < 1:
        raise InvalidInputError(f"n must be >= 1, got {n}")
    if not 0.0 < d < n:
        raise InvalidInputError(f"d must lie in (0, n), got d={d}, n={n}")
    rng = np.random.default_rng(seed)
    p = d / n
    total = n * (n - 1) // 2
    if total == 0:
        return Graph(n, [])
    log1mp = math.log1p(-p)
    hits = []
    pos = 0
    batch = max(16, int(total * p * 1.1) + 64)
    while pos < total:
        u = rng.random(batch)
        gaps = np.floor(np.log(u) / log1mp).astype(np.int64)
        here = pos + np.cumsum(gaps + 1) - 1
        inside = here < total
        hits.append(here[inside])
        if not inside.all():
            break
        pos = int(here[-1]) + 1
    k = np.concatenate(hits) if hits else np.array([], dtype=np.int64)
    if k.size:
        i, j = _pair_to_row(n, k)
        edges = np.stack([i, j], axis=1)
    else:
        edges = np.zeros((0, 2), dtype=np.int64)
    return Graph(n, edges)


# -- file format ---------------------------------------------------------


def save_graph(g: Graph, path: str) -> None:
    lines = [f"{g.n} {g.m}\n"]
    lines.extend(f"{u} {v}\n" for u, v in g.edge_array)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.writelines(lines)


def load_graph(path: str) -> Graph:
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise InvalidInputError(f"{path}: malformed header")
        n, m = int(header[0]), int(header[1])
        edges = []
        for line in fh:
            if not line.strip():
                continue
            u, v = line.split()
            edges.append((int(u), int(v)))
    if len(edges) != m:
        raise InvalidInputError(f"{path}: header says {m} edges, found {len(edges)}")
    for u, v in edges:
        if not u < v:
            raise InvalidInputError(f"{path}: edge ({u}, {v}) violates u < v")
    return Graph(n, edges)


# -- breadth-first machinery ----------------------------------------------


class BfsScratch:
    """Reusable BFS workspace: O(n) arrays allocated once, invalidated by
    a stamp counter instead of clearing, so per-vertex sweeps at n = 10**5
    stay cheap."""

    def __init__(self, g: Graph):
        self.g = g
        self.dist = np.zeros(g.n, dtype=np.int64)
        self.stamp = np.full(g.n, -1, dtype=np.int64)
        self.epoch = 0
        self.queue = np.zeros(max(g.n, 1), dtype=np.int64)

    def layers(self, v: int, max_radius=None, stop_size=None):
        """BFS from v.  Returns (members, layer_sizes): reached vertices in
        discovery order and the count of vertices at each exact distance.

        max_radius stops expansion past that depth.  stop_size ends the
        search at the first layer boundary where the discovered count has
        reached stop_size; all reported layers are complete either way.
        """
        adj = self.g.adjacency_lists()
        self.epoch += 1
        ep = self.epoch
        dist = self.dist
        stamp = self.stamp
        q = self.queue
        q[0] = v
        stamp[v] = ep
        dist[v] = 0
        head, tail = 0, 1
        layer_sizes = [1]
        cur_r = 0
        while head < tail:
            u = int(q[head])
            du = int(dist[u])
            if du > cur_r:
                cur_r = du
                if stop_size is not None and tail >= stop_size:
                    break
            head += 1
            if max_radius is not None and du >= max_radius:
                continue
            for w in adj[u]:
                if stamp[w] != ep:
                    stamp[w] = ep
                    dist[w] = du + 1
                    q[tail] = w
                    tail += 1
                    if len(layer_sizes) <= du + 1:
                        layer_sizes.append(0)
                    layer_sizes[du + 1] += 1
        members = q[:tail].tolist()
        return members, layer_sizes


def ball(g: Graph, v: int, r: int, scratch: BfsScratch | None = None):
    """Return (members, boundary): the radius-r ball around v as a set and
    the sphere of vertices at distance exactly r."""
    if not 0 <= v < g.n:
        raise InvalidInputError(f"vertex {v} out of range")
    if r < 0:
        raise InvalidInputError(f"radius must be nonnegative, got {r}")
    scratch = scratch or BfsScratch(g)
    members, layer_sizes = scratch.layers(v, max_radius=r)
    members_set = set(members)
    if len(layer_sizes) <= r:
        boundary = set()
    else:
        start = sum(layer_sizes[:r])
        boundary = set(members[start:])
    return members_set, boundary


def connected_components(g: Graph) -> list[list[int]]:
    """Connected components as sorted vertex lists, ordered by minimum vertex."""
    seen = np.zeros(g.n, dtype=bool)
    adj = g.adjacency_lists()
    comps = []
    for s in range(g.n):
        if seen[s]:
            continue
        comp = [s]
        seen[s] = True
        dq = deque([s])
        while dq:
            u = dq.popleft()
            for w in adj[u]:
                if not seen[w]:
                    seen[w] = True
                    comp.append(w)
                    dq.append(w)
        comps.append(sorted(comp))
    return comps


def induced_edge_count(g: Graph, vertices) -> int:
    """Number of edges of g with both endpoints in `vertices`."""
    vs = set(int(v) for v in vertices)
    adj = g.adjacency_sets()
    twice = sum(len(adj[v] & vs) for v in vs)
    return twice // 2


def tree_excess(g: Graph, component) -> int:
    """|E| - |V| + 1 of the subgraph induced by a connected vertex set.

    Raises InvalidInputError when the induced subgraph is disconnected:
    the excess of a disconnected set is not the quantity any structural
    check wants, so asking for it is a caller bug.
    """
    vs = sorted(set(int(v) for v in component))
    if not vs:
        raise InvalidInputError("component must be nonempty")
    vset = set(vs)
    adj = g.adjacency_sets()
    seen = {vs[0]}
    dq = deque([vs[0]])
    while dq:
        u = dq.popleft()
        for w in adj[u]:
            if w in vset and w not in seen:
                seen.add(w)
                dq.append(w)
    if len(seen) != len(vs):
        raise InvalidInputError("vertex set induces a disconnected subgraph")
    e = induced_edge_count(g, vset)
    return e - len(vs) + 1


# -- exploration process ---------------------------------------------------

NEUTRAL, ACTIVE, INACTIVE = 0, 1, 2


@dataclass
class ExplorationState:
    """Outcome of the active/inactive/neutral neighborhood exploration.

    status holds one code per vertex (0 neutral, 1 active, 2 inactive);
    queue is the remaining active FIFO; discovered_edges lists edges in
    discovery order with endpoints normalized (min, max); depth maps each
    discovered vertex to its BFS depth; boundary_sizes[r] counts
    discovered vertices at depth exactly r (complete through
    complete_depth, possibly partial beyond it when a stop rule fired).
    r_v / r_v_small are the critical radii when thresholds were supplied:
    the first depth whose completed ball reaches the threshold, math.inf
    when exploration exhausted the component first, None when a stop rule
    fired before the threshold was resolved.
    """

    status: np.ndarray
    queue: deque
    discovered_edges: list
    depth: dict
    boundary_sizes: list
    complete_depth: int
    steps: int
    r_v: float | None = None
    r_v_small: float | None = None


def explore(
    g: Graph,
    v: int,
    avoid: Iterable[int] = (),
    stop: str | tuple = "exhaustion",
    thresholds: tuple[int, int] | None = None,
) -> ExplorationState:
    """Run the exploration process of the neighborhood of v avoiding a set.

    Every vertex starts neutral except those in `avoid` (inactive) and v
    (active).  Repeatedly the earliest-activated active vertex (ties by
    vertex index, which the sorted adjacency provides) is processed: its
    neutral neighbors become active, each incident edge whose far
    endpoint is not avoided is recorded on first sight, and the vertex
    itself becomes inactive.

    stop: "exhaustion" runs until no active vertex remains;
          ("radius", r) leaves vertices at depth >= r unprocessed;
          ("count", k) stops once k vertices have been discovered.

    thresholds: optional (big, small) ball sizes used to fill the
    critical radii fields, see ExplorationState.
    """
    if not 0 <= v < g.n:
        raise InvalidInputError(f"vertex {v} out of range")
    avoid_set = set(int(a) for a in avoid)
    if v in avoid_set:
        raise InvalidInputError("start vertex cannot be avoided")
    mode, limit = "exhaustion", None
    if isinstance(stop, tuple):
        mode, limit = stop
        if mode not in ("radius", "count") or limit < 0:
            raise InvalidInputError(f"bad stopping rule: {stop!r}")
    elif stop != "exhaustion":
        raise InvalidInputError(f"bad stopping rule: {stop!r}")

    status = np.full(g.n, NEUTRAL, dtype=np.int8)
    for a in avoid_set:
        status[a] = INACTIVE
    status[v] = ACTIVE
    depth = {v: 0}
    queue: deque = deque([v])
    discovered_edges: list[tuple[int, int]] = []
    seen_edges = set()
    boundary_sizes = [1]
    discovered = 1
    steps = 0
    last_processed_depth = -1
    adj = g.adjacency_lists()

    while queue:
        u = queue[0]
        du = depth[u]
        if mode == "radius" and du >= limit:
            break
        queue.popleft()
        steps += 1
        status[u] = INACTIVE
        last_processed_depth = du
        for w in adj[u]:
            if w in avoid_set:
                continue
            e = (u, w) if u < w else (w, u)
            if e not in seen_edges:
                seen_edges.add(e)
                discovered_edges.append(e)
            if status[w] == NEUTRAL:
                status[w] = ACTIVE
                depth[w] = du + 1
                queue.append(w)
                while len(boundary_sizes) <= du + 1:
                    boundary_sizes.append(0)
                boundary_sizes[du + 1] += 1
                discovered += 1
        if mode == "count" and discovered >= limit:
            break

    exhausted = not queue
    # Layers 0..last_processed_depth+1 are fully discovered; anything
    # deeper may be partial when a stop rule fired.
    complete_depth = min(len(boundary_sizes) - 1, last_processed_depth + 1)
    if exhausted:
        complete_depth = len(boundary_sizes) - 1

    r_v = r_v_small = None
    if thresholds is not None:
        big, small = thresholds
        cum = 0
        for r in range(complete_depth + 1):
            cum += boundary_sizes[r]
            if r_v_small is None and cum >= small:
                r_v_small = r
            if r_v is None and cum >= big:
                r_v = r
        if exhausted:
            if r_v is None:
                r_v = math.inf
            if r_v_small is None:
                r_v_small = math.inf

    return ExplorationState(
        status=status,
        queue=queue,
        discovered_edges=discovered_edges,
        depth=depth,
        boundary_sizes=boundary_sizes,
        complete_depth=complete_depth,
        steps=steps,
        r_v=r_v,
        r_v_small=r_v_small,
    )


def critical_radii(
    g: Graph,
    v: int,
    delta: float,
    scratch: BfsScratch | None = None,
) -> tuple[float, float]:
    """First radii at which |B(v, r)| reaches n**(delta/10) and n**(delta/20).

    Either radius is math.inf when the connected component of v is smaller
    than the corresponding threshold.  Integer ball sizes are compared
    against the ceiling of the real threshold, which is equivalent.
    """
    if not 0.0 < delta <= 1.0:
        raise InvalidInputError(f"delta must lie in (0, 1], got {delta}")
    n = g.n
    big = math.ceil(n ** (delta / 10.0))
    small = math.ceil(n ** (delta / 20.0))
    scratch = scratch or BfsScratch(g)
    _, layer_sizes = scratch.layers(v, stop_size=big)
    r_big = r_small = math.inf
    cum = 0
    for r, c in enumerate(layer_sizes):
        cum += c
        if r_small is math.inf and cum >= small:
            r_small = r
        if r_big is math.inf and cum >= big:
            r_big = r
    return r_big, r_small


# -- exhaustive small-graph enumeration ------------------------------------

_CONNECTED_CACHE: dict[int, list] = {}


def enumerate_connected_graphs(max_n: int) -> list[Graph]:
    """All connected graphs on 1..max_n vertices, one per isomorphism class.

    Edge subsets are canonicalized by minimizing the edge bitmask over all
    vertex permutations (vectorized across subsets), so this is only meant
    for max_n <= 7.  Known class counts by n: 1, 1, 2, 6, 21, 112.
    """
    from itertools import combinations, permutations

    if max_n < 1 or max_n > 7:
        raise InvalidInputError("enumeration supported for 1 <= max_n <= 7")
    if max_n in _CONNECTED_CACHE:
        return list(_CONNECTED_CACHE[max_n])
    out = [Graph(1, [])]
    for n in range(2, max_n + 1):
        pairs = list(combinations(range(n), 2))
        idx = {p: i for i, p in enumerate(pairs)}
        npairs = len(pairs)
        total = 1 << npairs
        masks = np.arange(total, dtype=np.int64)
        bits = ((masks[:, None] >> np.arange(npairs)[None, :]) & 1).astype(np.int64)
        canon = masks.copy()
        for perm in permutations(range(n)):
            weights = np.array(
                [np.int64(1) << idx[tuple(sorted((perm[a], perm[b])))] for (a, b) in pairs],
                dtype=np.int64,
            )
            np.minimum(canon, bits @ weights, out=canon)
        for mask in np.unique(canon):
            edges = [pairs[i] for i in range(npairs) if (int(mask) >> i) & 1]
            g = Graph(n, edges)
            if len(connected_components(g)) == 1:
                out.append(g)
    _CONNECTED_CACHE[max_n] = out
    return list(out)
