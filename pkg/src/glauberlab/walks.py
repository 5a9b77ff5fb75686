"""Walk counting machinery: self-avoiding walk enumeration by pruned
search, the non-backtracking edge operator and its dominant eigenpair,
and the growth checks that tie walk counts to neighborhood structure.

Directed edges are indexed in twin pairs (2i, 2i+1) for undirected edge
i, so reversal is index XOR 1.  A non-backtracking step moves from a
directed edge to any continuation at its head except the exact
reversal; powers of that operator count non-backtracking walks.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import (
    DegenerateOperatorError,
    InvalidInputError,
    NonConvergenceError,
    ResourceLimitError,
)
from .graph import BfsScratch, Graph, ball, tree_excess
from .params import ModelParams

__all__ = [
    "NbOperator",
    "PerronData",
    "perron",
    "two_core_mask",
    "saw_count",
    "saw_counts_upto",
    "NbCounts",
    "nb_counts",
    "nb_counts_all_lengths",
    "nb_walks_bruteforce",
    "nb_edge_pair_counts_bruteforce",
    "RankOneReport",
    "rank_one_approx_check",
    "SawSumReport",
    "saw_sum_bound_check",
    "WalkGrowthStats",
    "walk_growth_stats",
    "NbBallReport",
    "nb_vs_ball_check",
]

DEFAULT_SAW_CAP = 24
# beyond this magnitude exact integer results are downgraded to float64
EXACT_LIMIT = 1 << 127


class NbOperator:
    """Non-backtracking operator on the 2m directed edges of a graph."""

    __slots__ = ("g", "tails", "heads", "_tail_agg", "_head_agg")

    def __init__(self, g: Graph):
        self.g = g
        e = g.edge_array
        tails = np.empty(2 * g.m, dtype=np.int64)
        heads = np.empty(2 * g.m, dtype=np.int64)
        tails[0::2] = e[:, 0]
        heads[0::2] = e[:, 1]
        tails[1::2] = e[:, 1]
        heads[1::2] = e[:, 0]
        self.tails = tails
        self.heads = heads
        self._tail_agg = None
        self._head_agg = None

    @property
    def dimension(self) -> int:
        return 2 * self.g.m

    def twin(self, x: np.ndarray) -> np.ndarray:
        """Reverse every directed edge: entry e moves to e XOR 1."""
        if x.ndim == 1:
            return x.reshape(-1, 2)[:, ::-1].reshape(-1)
        return x.reshape(-1, 2, x.shape[1])[:, ::-1, :].reshape(x.shape)

    def _agg(self, by_head: bool) -> sp.csr_matrix:
        cached = self._head_agg if by_head else self._tail_agg
        if cached is None:
            key = self.heads if by_head else self.tails
            cached = sp.csr_matrix(
                (np.ones(self.dimension), (key, np.arange(self.dimension))),
                shape=(self.g.n, self.dimension),
            )
            if by_head:
                self._head_agg = cached
            else:
                self._tail_agg = cached
        return cached

    def aggregate(self, x: np.ndarray, by_head: bool = True) -> np.ndarray:
        """Sum entries of x over directed edges sharing a head (or tail)."""
        if x.ndim == 1:
            key = self.heads if by_head else self.tails
            return np.bincount(key, weights=x, minlength=self.g.n)
        return self._agg(by_head) @ x

    def apply(self, x: np.ndarray) -> np.ndarray:
        """y[e] = sum of x over continuations of e (at e's head, minus
        the reversal)."""
        s = self.aggregate(x, by_head=False)
        return s[self.heads] - self.twin(x)

    def apply_transpose(self, x: np.ndarray) -> np.ndarray:
        s = self.aggregate(x, by_head=True)
        return s[self.tails] - self.twin(x)

    def row_sums(self) -> np.ndarray:
        """Exact row sums: degree of the head minus one."""
        return self.apply(np.ones(self.dimension))

    def to_dense(self, cap: int = 4000) -> np.ndarray:
        if self.dimension > cap:
            raise ResourceLimitError(
                f"dense operator of dimension {self.dimension} exceeds cap {cap}"
            )
        return self.apply(np.eye(self.dimension))

    def out_edge_ids(self, v: int) -> np.ndarray:
        return np.nonzero(self.tails == v)[0]


def two_core_mask(g: Graph) -> np.ndarray:
    """Boolean mask of vertices in the 2-core (iterated pruning of
    degree <= 1 vertices)."""
    deg = g.degrees().copy()
    alive = np.ones(g.n, dtype=bool)
    stack = [v for v in range(g.n) if deg[v] <= 1]
    adj = g.adjacency_lists()
    while stack:
        v = stack.pop()
        if not alive[v]:
            continue
        alive[v] = False
        for w in adj[v]:
            if alive[w]:
                deg[w] -= 1
                if deg[w] <= 1:
                    stack.append(w)
    return alive


@dataclass
class PerronData:
    """Dominant eigendata of the non-backtracking operator."""

    lam: float
    u: np.ndarray
    v: np.ndarray
    v_vertex: np.ndarray
    residual: float
    residual_left: float
    iterations: int


def perron(
    g: Graph,
    tol: float = 1e-14,
    max_iter: int = 5000,
    residual_factor: float = 1e-10,
) -> PerronData:
    """Power iteration for the dominant eigenpair of the NB operator.

    Iterates the shifted operator W + I (same eigenvectors; the shift
    separates the paired +-lambda eigenvalues a bipartite core would
    otherwise oscillate between).  Stops when successive eigenvalue
    estimates agree within tol AND the two-norm residual is below
    residual_factor * lambda; otherwise raises after max_iter.
    """
    if not two_core_mask(g).any():
        raise DegenerateOperatorError(
            "graph has an empty 2-core: the walk operator is nilpotent"
        )
    op = NbOperator(g)

    def iterate(applier):
        x = np.full(op.dimension, 1.0 / op.dimension)
        lam_prev = math.inf
        for it in range(1, max_iter + 1):
            y = applier(x) + x
            s = y.sum()
            lam = s - 1.0
            x = y / s
            if abs(lam - lam_prev) < tol * max(1.0, abs(lam)):
                unit = x / np.linalg.norm(x)
                res = np.linalg.norm(applier(unit) - lam * unit)
                if res <= residual_factor * max(lam, 1e-300):
                    return lam, unit, res, it
            lam_prev = lam
        raise NonConvergenceError(
            "power iteration did not converge (spectral gap too small)",
            last_iterate=x,
        )

    lam_r, u, res_r, it_r = iterate(op.apply)
    lam_l, v_unit, res_l, it_l = iterate(op.apply_transpose)
    inner = float(np.dot(u, v_unit))
    if inner <= 0:
        raise NonConvergenceError(
            "left/right eigenvectors have nonpositive overlap",
            last_iterate=v_unit,
        )
    v = v_unit / inner
    lam = 0.5 * (lam_r + lam_l)
    return PerronData(
        lam=lam,
        u=u,
        v=v,
        v_vertex=op.aggregate(v, by_head=True),
        residual=res_r,
        residual_left=res_l,
        iterations=max(it_r, it_l),
    )


# -- self-avoiding walks -------------------------------------------------


def saw_counts_upto(
    g: Graph, v: int, lmax: int, cap: int = DEFAULT_SAW_CAP
) -> list[int]:
    """Counts of self-avoiding walks from v, indexed by length 0..lmax.

    A walk is a vertex sequence starting at v with all vertices
    distinct; length counts edges.  Exact, by pruned depth-first
    search.
    """
    if not 0 <= v < g.n:
        raise InvalidInputError(f"vertex {v} out of range")
    if lmax < 0:
        raise InvalidInputError("lmax must be nonnegative")
    if lmax > cap:
        raise ResourceLimitError(f"walk length {lmax} exceeds cap {cap}")
    adj = g.adjacency_lists()
    counts = [0] * (lmax + 1)
    counts[0] = 1
    visited = bytearray(g.n)
    visited[v] = 1

    def rec(u: int, depth: int) -> None:
        if depth == lmax:
            return
        for w in adj[u]:
            if not visited[w]:
                counts[depth + 1] += 1
                visited[w] = 1
                rec(w, depth + 1)
                visited[w] = 0

    rec(v, 0)
    return counts


def saw_count(g: Graph, v: int, ell: int, cap: int = DEFAULT_SAW_CAP) -> int:
    return saw_counts_upto(g, v, ell, cap=cap)[ell]


# -- non-backtracking walk counts -----------------------------------------


@dataclass
class NbCounts:
    """Non-backtracking walk counts of one length from one source."""

    source: int
    length: int
    total: object  # int when exact, float otherwise
    per_terminal: np.ndarray
    exact: bool


def nb_counts(g: Graph, x: int, L: int) -> NbCounts:
    """Count NB walks of length L from x, split by terminal vertex.

    Propagates the indicator of x's outgoing directed edges through
    L - 1 operator steps in exact integer arithmetic, downgrading the
    whole run to float64 (exact=False) once any entry reaches 2^127.
    """
    if not 0 <= x < g.n:
        raise InvalidInputError(f"vertex {x} out of range")
    if L < 1:
        raise InvalidInputError("walk length must be at least 1")
    op = NbOperator(g)
    dim = op.dimension
    tails = op.tails.tolist()
    heads = op.heads.tolist()
    vec: object = [1 if tails[e] == x else 0 for e in range(dim)]
    exact = True
    for _ in range(L - 1):
        if exact:
            insum = [0] * g.n
            for f in range(dim):
                insum[heads[f]] += vec[f]
            vec = [insum[tails[f]] - vec[f ^ 1] for f in range(dim)]
            if vec and max(vec) >= EXACT_LIMIT:
                vec = np.array([float(t) for t in vec])
                exact = False
        else:
            vec = op.apply_transpose(vec)
    if exact:
        per = np.zeros(g.n)
        total = 0
        for f in range(dim):
            per[heads[f]] += vec[f]
            total += vec[f]
        # bookkeeping identity: terminal-vertex counts resum to the total
        assert total == int(per.sum())
    else:
        per = op.aggregate(np.asarray(vec), by_head=True)
        total = float(per.sum())
    return NbCounts(source=x, length=L, total=total, per_terminal=per, exact=exact)


def nb_counts_all_lengths(g: Graph, lmax: int):
    """N_v^(k) for every vertex v and every k = 1..lmax.

    Uses the two-step vertex recursion (continuations through a vertex
    = all extensions minus immediate reversals):

        c_1 = deg,  c_2 = A c_1 - deg,  c_k = A c_{k-1} - (deg-1) c_{k-2}.

    Exact integers with the same 2^127 downgrade as nb_counts.
    Returns (counts, exact): counts has shape (lmax, n) float64, row k-1
    holding the length-k counts; exact[k-1] says row k-1 was computed
    in integer arithmetic.
    """
    if lmax < 1:
        raise InvalidInputError("lmax must be at least 1")
    n = g.n
    adj = g.adjacency_lists()
    deg = [len(a) for a in adj]
    counts = np.zeros((lmax, n))
    exact_flags = []
    prev2: object = None
    prev: object = list(deg)
    exact = True
    counts[0] = deg
    exact_flags.append(True)
    A = None
    degf = None
    for k in range(2, lmax + 1):
        if exact:
            if k == 2:
                cur = [sum(prev[w] for w in adj[v]) - deg[v] for v in range(n)]
            else:
                cur = [
                    sum(prev[w] for w in adj[v]) - (deg[v] - 1) * prev2[v]
                    for v in range(n)
                ]
            if cur and max(cur) >= EXACT_LIMIT:
                prev = np.array([float(t) for t in prev])
                cur = np.array([float(t) for t in cur])
                exact = False
        else:
            if A is None:
                e = g.edge_array
                rows = np.concatenate([e[:, 0], e[:, 1]])
                cols = np.concatenate([e[:, 1], e[:, 0]])
                A = sp.csr_matrix(
                    (np.ones(2 * g.m), (rows, cols)), shape=(n, n)
                )
                degf = np.asarray(deg, dtype=np.float64)
            cur = A @ np.asarray(prev) - (degf - 1.0) * np.asarray(prev2)
        counts[k - 1] = [float(t) for t in cur] if exact else cur
        exact_flags.append(exact)
        prev2, prev = prev, cur
    return counts, exact_flags


def nb_walks_bruteforce(g: Graph, x: int, ell: int):
    """Oracle: enumerate NB walks of length ell from x by depth-first
    search.  Returns (total, per_terminal int64 array)."""
    if ell < 1:
        raise InvalidInputError("walk length must be at least 1")
    adj = g.adjacency_lists()
    per = np.zeros(g.n, dtype=np.int64)

    def rec(prev: int, cur: int, used: int) -> None:
        if used == ell:
            per[cur] += 1
            return
        for w in adj[cur]:
            if w != prev:
                rec(cur, w, used + 1)

    for w in adj[x]:
        rec(x, w, 1)
    return int(per.sum()), per


def nb_edge_pair_counts_bruteforce(g: Graph, k: int) -> np.ndarray:
    """Oracle: (2m, 2m) matrix whose (e, f) entry counts NB walks of
    length k+1 that start with directed edge e and end with f."""
    op = NbOperator(g)
    dim = op.dimension
    heads = op.heads.tolist()
    out_of = [[] for _ in range(g.n)]
    for f in range(dim):
        out_of[op.tails[f]].append(f)
    M = np.zeros((dim, dim), dtype=np.int64)

    def rec(start: int, cur: int, steps: int) -> None:
        if steps == k:
            M[start, cur] += 1
            return
        for f in out_of[heads[cur]]:
            if f != cur ^ 1:
                rec(start, f, steps + 1)

    for e in range(dim):
        rec(e, e, 0)
    return M


# -- growth checks ---------------------------------------------------------


def _pair_counts_block(A: sp.csr_matrix, deg: np.ndarray, xs, L: int) -> np.ndarray:
    """NB pair counts N_{x,y}^(L) for sources xs: returns (n, len(xs))
    with column j holding the counts from xs[j] to every terminal."""
    cur = A[:, xs].toarray()
    if L == 1:
        return cur
    prev = cur
    cur = A @ prev
    cur[xs, np.arange(len(xs))] -= deg[xs]
    for _ in range(3, L + 1):
        prev, cur = cur, A @ cur - (deg - 1.0)[:, None] * prev
    return cur


@dataclass
class RankOneReport:
    """How far the length-L pair counts sit from the rank-one profile
    predicted by the dominant eigenpair."""

    applicable: bool
    L: int
    lam: float
    bound: float
    max_residual: float
    passed: bool
    reason: str = ""


def rank_one_approx_check(
    g: Graph,
    params: ModelParams,
    block: int = 512,
) -> RankOneReport:
    """max over sources x and terminals y of
    |N_xy^(L) - (v(y)/||v||_1) N_x^(L)| against d^((K+10) log_d(n) / 2),
    with L = ceil(K log_d n) and v the left dominant eigenvector
    aggregated per terminal vertex."""
    n = g.n
    L = params.long_walk_length(n)
    log_bound = (params.K + 10.0) * math.log(max(n, 2)) / 2.0
    bound = math.exp(log_bound)
    try:
        pd = perron(g)
    except (DegenerateOperatorError, NonConvergenceError) as exc:
        return RankOneReport(
            applicable=False,
            L=L,
            lam=math.nan,
            bound=bound,
            max_residual=math.nan,
            passed=False,
            reason=str(exc),
        )
    w = pd.v_vertex / pd.v_vertex.sum()
    e = g.edge_array
    rows = np.concatenate([e[:, 0], e[:, 1]])
    cols = np.concatenate([e[:, 1], e[:, 0]])
    A = sp.csr_matrix((np.ones(2 * g.m), (rows, cols)), shape=(n, n))
    deg = g.degrees().astype(np.float64)
    worst = 0.0
    for start in range(0, n, block):
        xs = np.arange(start, min(start + block, n))
        counts = _pair_counts_block(A, deg, xs, L)
        totals = counts.sum(axis=0)
        resid = np.abs(counts - np.outer(w, totals)).max()
        worst = max(worst, float(resid))
    return RankOneReport(
        applicable=True,
        L=L,
        lam=pd.lam,
        bound=bound,
        max_residual=worst,
        passed=worst <= bound,
    )


@dataclass
class SawSumReport:
    ell: int
    L: int
    total: float
    bound: float
    passed: bool
    mode: str  # "exact" or "nb-majorant"


def saw_sum_bound_check(
    g: Graph,
    params: ModelParams,
    ell: int | None = None,
    work_budget: int = 5_000_000,
) -> SawSumReport:
    """sum over all vertices y of S_y^(ell - L) against d^(ell - 2L/3).

    L = ceil(K log_d n).  Exact when the predicted enumeration work
    (bounded by the NB counts, since every self-avoiding walk is
    non-backtracking) fits the budget; otherwise the NB majorant
    replaces the sum, which can only overstate it.
    """
    n = g.n
    L = params.long_walk_length(n)
    if ell is None:
        ell = L + params.window_length(n)
    k = ell - L
    if k < 1:
        raise InvalidInputError("ell must exceed the long-walk length L")
    bound = float(params.d) ** (ell - 2.0 * L / 3.0)
    nb_rows, _ = nb_counts_all_lengths(g, k)
    majorant = float(nb_rows.sum(axis=1)[k - 1])
    predicted_work = float(nb_rows.sum())
    if k <= DEFAULT_SAW_CAP and predicted_work <= work_budget:
        total = 0
        for y in range(n):
            total += saw_counts_upto(g, y, k)[k]
        return SawSumReport(
            ell=ell, L=L, total=float(total), bound=bound,
            passed=total <= bound, mode="exact",
        )
    return SawSumReport(
        ell=ell, L=L, total=majorant, bound=bound,
        passed=majorant <= bound, mode="nb-majorant",
    )


@dataclass
class WalkGrowthStats:
    """Measured growth ratios; every field is a report, nothing is
    asserted."""

    L: int
    ell: int
    window: int
    avg_count_ratio: float  # (1/n) sum_x N_x^(L) / d^L
    mid_range_ratio: float  # max_v N_v^(ell) / (d^(ell - r_v) |bdry(v, r_v)|)
    mid_range_argmax: int
    skipped_vertices: int  # r_v infinite or above ell
    pair_sum_constant: float  # truncated triple sum over log n
    truncated: bool
    exact: bool


def walk_growth_stats(
    g: Graph,
    params: ModelParams,
    ell: int | None = None,
    window: int | None = None,
) -> WalkGrowthStats:
    """Empirical constants in the walk-growth inequalities: the average
    length-L count over d^L, the worst mid-range count against ball
    boundaries at the critical radius, and the (truncated) weighted
    pair-count/SAW sum divided by log n."""
    n = g.n
    d = params.d
    L = params.long_walk_length(n)
    if ell is None:
        ell = L
    if window is None:
        window = params.window_length(n)
    lmax = max(L, ell, 1)
    counts, flags = nb_counts_all_lengths(g, lmax)
    n_L = counts[L - 1]
    n_ell = counts[ell - 1]
    avg_ratio = float(n_L.mean() / d**L) if n else 0.0

    threshold = params.ball_threshold(n)
    scratch = BfsScratch(g)
    worst = 0.0
    arg = -1
    skipped = 0
    for v in range(n):
        members, sizes = scratch.layers(v, max_radius=ell, stop_size=threshold)
        cum = 0
        r_v = None
        for r, sz in enumerate(sizes):
            cum += sz
            if cum >= threshold:
                r_v = r
                break
        if r_v is None or sizes[r_v] == 0:
            skipped += 1
            continue
        ratio = n_ell[v] / (float(d) ** (ell - r_v) * sizes[r_v])
        if ratio > worst:
            worst, arg = ratio, v

    # truncated weighted pair sum: by walk reversal, summing the pair
    # counts over sources collapses to the per-terminal count N_y^(L)
    logn = math.log(n) if n > 1 else 1.0
    triple = 0.0
    exact_all = all(flags[: max(L, 1)])
    for k in range(1, window + 1):
        s_k = np.zeros(n)
        for y in range(n):
            s_k[y] = saw_counts_upto(g, y, k)[k]
        nb_k = counts[k - 1]
        # every self-avoiding walk is non-backtracking
        assert np.all(s_k <= nb_k + 1e-9)
        term = float(np.dot(n_L, s_k)) * d ** (-(L + k)) / (L + k)
        triple += term
    pair_const = triple / (n * logn) if n else 0.0
    return WalkGrowthStats(
        L=L,
        ell=ell,
        window=window,
        avg_count_ratio=avg_ratio,
        mid_range_ratio=worst,
        mid_range_argmax=arg,
        skipped_vertices=skipped,
        pair_sum_constant=pair_const,
        truncated=True,
        exact=exact_all,
    )


@dataclass
class NbBallReport:
    applicable: bool
    tree_excess: int
    count: float
    ball_size: int
    passed: bool


def nb_vs_ball_check(g: Graph, v: int, ell: int) -> NbBallReport:
    """N_v^(ell) <= 2 |B(v, ell)|, valid when the ball has tree excess
    at most 1 (at most one cycle means at most two NB routes per
    destination).  Inapplicable, not failed, above that excess."""
    members, _ = ball(g, v, ell)
    tx = tree_excess(g, members)
    if tx > 1:
        return NbBallReport(
            applicable=False, tree_excess=tx, count=math.nan,
            ball_size=len(members), passed=False,
        )
    # walks of length ell from v stay inside the radius-ell ball, so
    # count inside the induced subgraph
    order = sorted(members)
    relabel = {w: i for i, w in enumerate(order)}
    edges = [
        (relabel[a], relabel[b])
        for a, b in g.edges()
        if a in members and b in members
    ]
    sub = Graph(len(order), edges)
    counts, _ = nb_counts_all_lengths(sub, ell)
    count = float(counts[ell - 1][relabel[v]])
    return NbBallReport(
        applicable=True,
        tree_excess=tx,
        count=count,
        ball_size=len(members),
        passed=count <= 2 * len(members),
    )
