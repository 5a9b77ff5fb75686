"""The chain family around the spin dynamics: single-site heat-bath
dynamics for an arbitrary spin measure, the site-accelerated variant,
the composite chain that refreshes the fast block after every slow-site
update, its projection onto the slow block, the dynamics for the
marginal measure, and the interface-measure variants.  Includes
event-driven trajectory simulation, a vectorized replica sampler, exact
heat kernels by uniformization, and mixing times by bisection.

State spaces are encoded as integers: bit i carries the spin of
``sites[i]``, bit set means +1 (see states.py).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.special import expit, logsumexp
from scipy.stats import poisson

from .errors import InvalidInputError, NonConvergenceError, ResourceLimitError
from .ising import IsingModel
from .params import ModelParams
from .states import compress_bits, spins_matrix, tv_distance
from .structure import Partition

__all__ = [
    "KINDS",
    "ChainSpec",
    "Generator",
    "glauber_rate",
    "build_generator",
    "projection_identity_residual",
    "detailed_balance_residual",
    "stationarity_residual",
    "Trajectory",
    "simulate",
    "simulate_ensemble",
    "heat_kernel",
    "tv_distance",
    "mixing_time",
    "CouplingReport",
    "coupling_tv_check",
    "sample_block_given_rest",
]

KINDS = ("X1", "X2", "X3", "X4", "X5", "Y1", "Y1tilde", "Y2")

# kinds whose state space is the B block
_B_SPACE = ("X4", "X5", "Y1tilde")

_DENSE_LIMIT = 1 << 14
_STATE_LIMIT = 1 << 20
_ENUM_COMPONENT_LIMIT = 12


@dataclass
class ChainSpec:
    """Which chain to build, over which model and block split.

    rate_A is the acceleration dial for the fast block (asymptotically
    this would be a fixed polynomial in n; here it is an explicit
    knob).  For Y2 the frozen slow-block spins must be supplied through
    sigma0.
    """

    kind: str
    base_model: IsingModel
    partition: Partition
    rate_A: float = 1.0
    params: ModelParams | None = None
    sigma0: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidInputError(f"unknown chain kind {self.kind!r}")
        if self.rate_A <= 0:
            raise InvalidInputError("rate_A must be positive")
        if self.base_model.g.n != self.partition.n:
            raise InvalidInputError("model and partition disagree on n")
        if self.kind == "Y2" and self.sigma0 is None:
            raise InvalidInputError("Y2 requires sigma0 for the frozen spins")

    @property
    def model(self) -> IsingModel:
        """The measure the chain's update rule reads."""
        if self.kind in ("Y1", "Y1tilde"):
            base = self.base_model
            e = base.g.edge_array
            if base.g.m:
                in_b = self.partition.in_b
                bb = in_b[e[:, 0]] & in_b[e[:, 1]]
                return base.with_edge_scale(bb, 0.0)
        return self.base_model

    def b_sites(self) -> list[int]:
        return [int(v) for v in np.nonzero(self.partition.in_b)[0]]

    def a_sites(self) -> list[int]:
        return [int(v) for v in np.nonzero(~self.partition.in_b)[0]]


@dataclass
class Generator:
    kind: str
    sites: list[int]
    Q: np.ndarray
    pi: np.ndarray

    @property
    def state_count(self) -> int:
        return self.Q.shape[0]

    def state_index(self, spins) -> int:
        """Encode a +-1 spin assignment of self.sites."""
        c = 0
        spins = np.asarray(spins)
        for i, v in enumerate(self.sites):
            if spins[v] > 0:
                c |= 1 << i
        return c


def glauber_rate(measure, sigma, v: int) -> float:
    """Heat-bath flip rate nu(sigma^v)/(nu(sigma)+nu(sigma^v)).

    `measure` is either an IsingModel or a callable returning the log
    weight of a +-1 configuration.  Always evaluated through log-weight
    differences.
    """
    sigma = np.asarray(sigma, dtype=np.float64)
    if isinstance(measure, IsingModel):
        return float(expit(-2.0 * sigma[v] * measure.local_field(sigma, v)))
    flipped = sigma.copy()
    flipped[v] = -flipped[v]
    diff = measure(flipped) - measure(sigma)
    if not math.isfinite(diff):
        if diff == -math.inf:
            return 0.0
        if diff == math.inf:
            return 1.0
        raise InvalidInputError("measure returned a NaN log weight")
    return float(expit(diff))


# -- dense couplings and weight tables ---------------------------------------


def _dense_couplings(model: IsingModel, sites: list[int], frozen=None):
    """(J, h) restricted to `sites`.  Couplings to vertices outside
    `sites` are folded into h using the spins in `frozen` (full-length
    +-1 array); couplings among absent vertices are dropped (they shift
    the measure by a constant)."""
    pos = {v: i for i, v in enumerate(sites)}
    k = len(sites)
    J = np.zeros((k, k))
    h = np.array([model.fields[v] for v in sites], dtype=np.float64)
    if not np.all(np.isfinite(h)):
        raise InvalidInputError("dynamic sites must have finite fields")
    for (u, v), b in zip(model.g.edge_array, model.beta_edges):
        u, v = int(u), int(v)
        iu, iv = pos.get(u), pos.get(v)
        if iu is not None and iv is not None:
            J[iu, iv] += b
            J[iv, iu] += b
        elif iu is not None:
            if frozen is None:
                raise InvalidInputError(f"no frozen spin for vertex {v}")
            h[iu] += b * frozen[v]
        elif iv is not None:
            if frozen is None:
                raise InvalidInputError(f"no frozen spin for vertex {u}")
            h[iv] += b * frozen[u]
    return J, h


def _log_weights(J: np.ndarray, h: np.ndarray, S: np.ndarray) -> np.ndarray:
    return 0.5 * np.einsum("ij,ij->i", S @ J, S) + S @ h


def _stationary(logw: np.ndarray) -> np.ndarray:
    p = np.exp(logw - logsumexp(logw))
    return p / p.sum()


def _flip_rates(J, h, S):
    """(M, k) heat-bath flip rates: entry (s, i) is the rate of
    flipping bit i from state s."""
    local = S @ J + h
    return expit(-2.0 * S * local)


def _single_flip_Q(rates: np.ndarray):
    """Rate matrix with off-diagonals rates[s, i] at (s, s^bit_i).

    Dense up to 2^14 states, CSR beyond (the build contract reaches
    2^20, far past what a dense square holds).
    """
    M, k = rates.shape
    idx = np.arange(M)
    if M <= _DENSE_LIMIT:
        Q = np.zeros((M, M))
        for i in range(k):
            Q[idx, idx ^ (1 << i)] = rates[:, i]
        Q[idx, idx] -= rates.sum(axis=1)
        return Q
    rows = np.empty((k + 1) * M, dtype=np.int64)
    cols = np.empty((k + 1) * M, dtype=np.int64)
    data = np.empty((k + 1) * M)
    for i in range(k):
        rows[i * M:(i + 1) * M] = idx
        cols[i * M:(i + 1) * M] = idx ^ (1 << i)
        data[i * M:(i + 1) * M] = rates[:, i]
    rows[k * M:] = idx
    cols[k * M:] = idx
    data[k * M:] = -rates.sum(axis=1)
    return sp.csr_matrix((data, (rows, cols)), shape=(M, M))


def _full_tables(model: IsingModel, in_b: np.ndarray):
    """Exact weight tables over the full vertex set, split by block.

    Returns (mu, b_of, a_of, state_of, muB, cond) where b_of/a_of give
    the block sub-indices of each full state, state_of[b, a] re-encodes
    them, muB is the B-marginal and cond the conditional weight of the
    full state given its B part.
    """
    n = model.g.n
    if n > 20:
        raise ResourceLimitError("full-table construction needs n <= 20")
    sites = list(range(n))
    J, h = _dense_couplings(model, sites)
    S = spins_matrix(n)
    mu = _stationary(_log_weights(J, h, S))
    configs = np.arange(1 << n, dtype=np.int64)
    b_bits = [i for i in range(n) if in_b[i]]
    a_bits = [i for i in range(n) if not in_b[i]]
    b_of = compress_bits(configs, b_bits)
    a_of = compress_bits(configs, a_bits)
    state_of = np.zeros((1 << len(b_bits), 1 << len(a_bits)), dtype=np.int64)
    state_of[b_of, a_of] = configs
    muB = np.bincount(b_of, weights=mu, minlength=1 << len(b_bits))
    cond = mu / muB[b_of]
    return mu, b_of, a_of, state_of, muB, cond


def _projected_rate_table(model: IsingModel, in_b: np.ndarray):
    """Averaged flip rates of the slow-block projection,
    q(b, b^v) = sum_a mu(b,a) r_v(b,a) / muB(b), as a (2^|B|, |B|)
    table, plus the marginal weights and the block site ids."""
    n = model.g.n
    mu, b_of, _, _, muB, _ = _full_tables(model, in_b)
    sites = list(range(n))
    J, h = _dense_couplings(model, sites)
    rates = _flip_rates(J, h, spins_matrix(n))
    b_sites = [i for i in range(n) if in_b[i]]
    MB = 1 << len(b_sites)
    table = np.empty((MB, len(b_sites)))
    for j, v in enumerate(b_sites):
        num = np.bincount(b_of, weights=mu * rates[:, v], minlength=MB)
        table[:, j] = num / muB
    return table, muB, b_sites


def _marginal_rate_table(nu: np.ndarray, k: int) -> np.ndarray:
    """Heat-bath flip rates for the marginal weight table nu."""
    idx = np.arange(1 << k)
    table = np.empty((1 << k, k))
    for j in range(k):
        flip = nu[idx ^ (1 << j)]
        table[:, j] = flip / (nu + flip)
    return table


def build_generator(spec: ChainSpec) -> Generator:
    """Explicit rate matrix and stationary law for the requested kind.

    All kinds are exact small-instance constructions; the composite
    kind X3 and the block-space kinds need the full weight table and
    are limited to n <= 20 vertices.
    """
    model = spec.model
    n = model.g.n
    in_b = spec.partition.in_b
    kind = spec.kind

    if kind in ("X1", "X2", "Y1"):
        if n > 20 or (1 << n) > _STATE_LIMIT:
            raise ResourceLimitError("state space exceeds 2^20")
        sites = list(range(n))
        J, h = _dense_couplings(model, sites)
        S = spins_matrix(n)
        rates = _flip_rates(J, h, S)
        if kind == "X2":
            site_rates = np.where(in_b, 1.0, spec.rate_A)
            rates = rates * site_rates[None, :]
        Q = _single_flip_Q(rates)
        pi = _stationary(_log_weights(J, h, S))
        return Generator(kind, sites, Q, pi)

    if kind == "Y2":
        sites = spec.a_sites()
        if (1 << len(sites)) > _STATE_LIMIT:
            raise ResourceLimitError("state space exceeds 2^20")
        J, h = _dense_couplings(model, sites, frozen=spec.sigma0)
        S = spins_matrix(len(sites))
        Q = _single_flip_Q(_flip_rates(J, h, S))
        pi = _stationary(_log_weights(J, h, S))
        return Generator(kind, sites, Q, pi)

    if kind == "X3":
        if (1 << n) > _DENSE_LIMIT:
            raise ResourceLimitError("composite kind needs <= 2^14 states")
        mu, b_of, _, _, muB, cond = _full_tables(model, in_b)
        sites = list(range(n))
        J, h = _dense_couplings(model, sites)
        rates = _flip_rates(J, h, spins_matrix(n))
        b_sites = [i for i in range(n) if in_b[i]]
        M = 1 << n
        blocks = [np.nonzero(b_of == b)[0] for b in range(1 << len(b_sites))]
        Q = np.zeros((M, M))
        for b, rows in enumerate(blocks):
            for j, v in enumerate(b_sites):
                cols = blocks[b ^ (1 << j)]
                pf = rates[rows, v]
                Q[np.ix_(rows, cols)] += np.outer(pf, cond[cols])
                Q[np.ix_(rows, rows)] += np.outer(1.0 - pf, cond[rows])
        idx = np.arange(M)
        Q[idx, idx] -= len(b_sites)
        return Generator(kind, sites, Q, mu)

    if kind == "X4" or kind == "Y1tilde":
        table, muB, b_sites = _projected_rate_table(model, in_b)
        return Generator(kind, b_sites, _single_flip_Q(table), muB / muB.sum())

    if kind == "X5":
        _, _, _, _, muB, _ = _full_tables(model, in_b)
        nu = muB / muB.sum()
        b_sites = [i for i in range(n) if in_b[i]]
        table = _marginal_rate_table(nu, len(b_sites))
        return Generator(kind, b_sites, _single_flip_Q(table), nu)

    raise InvalidInputError(f"unknown chain kind {kind!r}")


def projection_identity_residual(spec: ChainSpec) -> float:
    """max |W - (Q4 + |B| I)| where W is the block-averaged jump matrix
    built directly from weight ratios, independently of the heat-bath
    rate path used by build_generator."""
    if spec.kind != "X4":
        raise InvalidInputError("projection identity is a property of X4")
    model = spec.model
    n = model.g.n
    in_b = spec.partition.in_b
    mu, b_of, _, _, muB, _ = _full_tables(model, in_b)
    b_sites = [i for i in range(n) if in_b[i]]
    MB = 1 << len(b_sites)
    if MB > _DENSE_LIMIT:
        raise ResourceLimitError("identity check needs a dense block space")
    W = np.zeros((MB, MB))
    configs = np.arange(1 << n, dtype=np.int64)
    for j, v in enumerate(b_sites):
        mu_flip = mu[configs ^ (1 << v)]
        cross = mu * mu_flip / (mu + mu_flip)
        keep = mu * mu / (mu + mu_flip)
        idx = np.arange(MB)
        W[idx, idx ^ (1 << j)] = (
            np.bincount(b_of, weights=cross, minlength=MB) / muB
        )
        W[idx, idx] += np.bincount(b_of, weights=keep, minlength=MB) / muB
    gen = build_generator(spec)
    target = gen.Q + len(b_sites) * np.eye(MB)
    return float(np.abs(W - target).max())


def detailed_balance_residual(gen: Generator) -> float:
    if sp.issparse(gen.Q):
        flow = gen.Q.multiply(gen.pi[:, None]).tocsr()
        diff = (flow - flow.T).tocoo()
        return float(np.abs(diff.data).max()) if diff.nnz else 0.0
    flow = gen.pi[:, None] * gen.Q
    return float(np.abs(flow - flow.T).max())


def stationarity_residual(gen: Generator) -> float:
    if sp.issparse(gen.Q):
        return float(np.abs(gen.Q.T @ gen.pi).max())
    return float(np.abs(gen.pi @ gen.Q).max())


# -- exact block resampling ---------------------------------------------------


def _component_log_weights(fields, comp, adj):
    """Brute-force conditional log-weight table over one small component."""
    k = len(comp)
    pos = {v: i for i, v in enumerate(comp)}
    S = spins_matrix(k)
    logw = S @ np.array([fields[v] for v in comp])
    for i, v in enumerate(comp):
        for w, b in adj[v]:
            if w in pos and pos[w] > i:
                logw = logw + b * S[:, i] * S[:, pos[w]]
    return logw


def sample_block_given_rest(model: IsingModel, block, sigma, rng):
    """Redraw the spins of `block` from the conditional measure given
    the rest of `sigma`, in place.

    The conditional factorizes over connected components of the block's
    induced subgraph.  Small components are enumerated; larger tree or
    one-cycle components are sampled by message passing (the one cycle
    is broken by integrating out one of its vertices' two spin values
    first).  Denser large components are refused.
    """
    block = [int(v) for v in block]
    if not block:
        return
    inside = set(block)
    # per-vertex neighbor/coupling lists and boundary fields
    adj = {v: [] for v in block}
    fields = {}
    idx = model.edge_index()
    for v in block:
        h = model.fields[v]
        for w in model.g.neighbors(v):
            w = int(w)
            b = model.beta_edges[idx[(v, w) if v < w else (w, v)]]
            if w in inside:
                adj[v].append((w, b))
            else:
                h += b * sigma[w]
        fields[v] = h
    seen = set()
    for start in block:
        if start in seen:
            continue
        comp = [start]
        seen.add(start)
        qi = 0
        while qi < len(comp):
            u = comp[qi]
            qi += 1
            for w, _ in adj[u]:
                if w not in seen:
                    seen.add(w)
                    comp.append(w)
        _sample_component(comp, adj, fields, sigma, rng)


def _sample_component(comp, adj, fields, sigma, rng):
    k = len(comp)
    n_edges = sum(len(adj[v]) for v in comp) // 2
    tx = n_edges - k + 1
    if k <= _ENUM_COMPONENT_LIMIT:
        logw = _component_log_weights(fields, comp, adj)
        p = np.exp(logw - logsumexp(logw))
        p = p / p.sum()
        c = int(rng.choice(len(p), p=p))
        for i, v in enumerate(comp):
            sigma[v] = 1 if (c >> i) & 1 else -1
        return
    if tx >= 2:
        raise ResourceLimitError(
            "exact resampling needs small or near-tree components"
        )
    if tx == 1:
        # fix the spin of one cycle vertex by exact 2-case weighting
        u = _cycle_vertex(comp, adj)
        logz = np.empty(2)
        for si, s in enumerate((-1.0, 1.0)):
            logz[si] = fields[u] * s + _forest_logz(
                comp, adj, fields, u, s
            )
        sigma[u] = 1 if rng.random() < float(expit(logz[1] - logz[0])) else -1
        rest = [v for v in comp if v != u]
        _resample_tree_rest(rest, adj, fields, u, sigma, rng)
        return
    _resample_tree_rest(comp, adj, fields, None, sigma, rng)


def _cycle_vertex(comp, adj):
    deg = {v: len(adj[v]) for v in comp}
    stack = [v for v in comp if deg[v] <= 1]
    alive = {v: True for v in comp}
    while stack:
        v = stack.pop()
        alive[v] = False
        for w, _ in adj[v]:
            if alive[w]:
                deg[w] -= 1
                if deg[w] == 1:
                    stack.append(w)
    for v in comp:
        if alive[v]:
            return v
    raise AssertionError("one-cycle component without a cycle")


def _tree_messages(vertices, adj, fields, banned, extra_field):
    """Upward log-messages on the forest `vertices` minus `banned`.

    extra_field maps vertex -> additional field (couplings to banned).
    Yields (order, parent, pcoup, up) per tree, where up[u] is the log
    partition function of u's subtree as a function of the parent spin
    (index 0: parent -1, index 1: parent +1) already folded through the
    parent coupling pcoup[u].
    """
    seen = set()
    results = []
    for start in vertices:
        if start in seen or start == banned:
            continue
        order = [start]
        parent = {start: None}
        pcoup = {start: 0.0}
        seen.add(start)
        for u in order:
            for w, b in adj[u]:
                if w == banned or w in parent:
                    continue
                parent[w] = u
                pcoup[w] = b
                order.append(w)
                seen.add(w)
        up = {}
        for u in reversed(order):
            acc = np.array(
                [-(fields[u] + extra_field.get(u, 0.0)),
                 fields[u] + extra_field.get(u, 0.0)]
            )
            for w, _ in adj[u]:
                if w != banned and parent.get(w) == u:
                    acc = acc + up[w]
            b = pcoup[u]
            up[u] = np.array(
                [logsumexp([acc[0] + b, acc[1] - b]),
                 logsumexp([acc[0] - b, acc[1] + b])]
            )
        results.append((order, parent, pcoup, up))
    return results


def _forest_logz(comp, adj, fields, banned, banned_spin):
    extra = {}
    for w, b in adj[banned]:
        extra[w] = extra.get(w, 0.0) + b * banned_spin
    total = 0.0
    for order, _, _, up in _tree_messages(comp, adj, fields, banned, extra):
        # root coupling is 0, so either entry is the tree's log Z
        total += up[order[0]][0]
    return total


def _resample_tree_rest(vertices, adj, fields, banned, sigma, rng):
    extra = {}
    if banned is not None:
        for w, b in adj[banned]:
            extra[w] = extra.get(w, 0.0) + b * sigma[banned]
    for order, parent, pcoup, up in _tree_messages(
        vertices, adj, fields, banned, extra
    ):
        for u in order:
            logits = np.array(
                [-(fields[u] + extra.get(u, 0.0)),
                 fields[u] + extra.get(u, 0.0)]
            )
            for w, _ in adj[u]:
                if w != banned and parent.get(w) == u:
                    logits = logits + up[w]
            p = parent[u]
            if p is not None:
                b = pcoup[u]
                logits = logits + np.array([-b * sigma[p], b * sigma[p]])
            sigma[u] = 1 if rng.random() < float(expit(logits[1] - logits[0])) else -1


# -- trajectory simulation -----------------------------------------------------


@dataclass
class Trajectory:
    """Event log of one run.  sigma0 and final cover all n vertices;
    coordinates outside the chain's dynamic sites are carried through
    unchanged.  Records hold redrawn spins for single-site kinds, the
    slow-site redraw plus any changed fast spins for the composite
    kind, and flips only for the block-space kinds (their no-flip
    events are thinning artifacts)."""

    kind: str
    sites: list[int]
    t_end: float
    sigma0: np.ndarray
    times: np.ndarray
    event_sites: np.ndarray
    event_spins: np.ndarray
    final: np.ndarray

    def replay(self) -> np.ndarray:
        """Recompute `final` from sigma0 and the event records."""
        sigma = self.sigma0.copy()
        for v, s in zip(self.event_sites, self.event_spins):
            sigma[v] = s
        return sigma


def _redraw(model: IsingModel, sigma, v: int, rng) -> int:
    p_plus = expit(2.0 * model.local_field(sigma, v))
    return 1 if rng.random() < p_plus else -1


def _block_flip_rates(spec: ChainSpec):
    """(b_sites, table) with table[s, j] the flip rate of block site j
    from encoded block state s, for the block-space kinds."""
    model = spec.model
    in_b = spec.partition.in_b
    if spec.kind in ("X4", "Y1tilde"):
        table, _, b_sites = _projected_rate_table(model, in_b)
        return b_sites, table
    _, _, _, _, muB, _ = _full_tables(model, in_b)
    nu = muB / muB.sum()
    b_sites = [i for i in range(model.g.n) if in_b[i]]
    return b_sites, _marginal_rate_table(nu, len(b_sites))


def simulate(spec: ChainSpec, sigma0, t_end: float, seed=None) -> Trajectory:
    """Event-driven run over [0, t_end], deterministic given seed.

    Single-site kinds draw exponential holding times at the constant
    total site rate and redraw the chosen site from its conditional.
    The composite kind follows each slow-site redraw with an exact
    fast-block resample (component-wise, see sample_block_given_rest).
    Block-space kinds are uniformized at rate |B| with per-event flip
    probabilities from their averaged rate tables (instance must be
    small enough to build those).
    """
    if t_end < 0:
        raise InvalidInputError("t_end must be nonnegative")
    model = spec.model
    n = model.g.n
    sigma0 = np.asarray(sigma0, dtype=np.int8)
    if sigma0.shape != (n,) or not np.all(np.abs(sigma0) == 1):
        raise InvalidInputError("sigma0 must be a +-1 vector over all vertices")
    rng = np.random.default_rng(seed)
    sigma = sigma0.astype(np.float64)
    times, ev_sites, ev_spins = [], [], []
    kind = spec.kind

    if kind in ("X1", "X2", "Y1", "Y2"):
        if kind == "Y2":
            sites = spec.a_sites()
            sigma[spec.partition.in_b] = np.asarray(spec.sigma0, dtype=np.float64)[
                spec.partition.in_b
            ]
        else:
            sites = list(range(n))
        rates = np.ones(len(sites))
        if kind == "X2":
            rates = np.where(spec.partition.in_b, 1.0, spec.rate_A)
        total = float(rates.sum())
        cum = np.cumsum(rates)
        t_now = 0.0
        if total > 0:
            while True:
                t_now += rng.exponential(1.0 / total)
                if t_now > t_end:
                    break
                j = int(np.searchsorted(cum, rng.random() * total, side="right"))
                v = sites[min(j, len(sites) - 1)]
                s = _redraw(model, sigma, v, rng)
                sigma[v] = s
                times.append(t_now)
                ev_sites.append(v)
                ev_spins.append(s)
    elif kind == "X3":
        b_sites = spec.b_sites()
        a_sites = spec.a_sites()
        total = float(len(b_sites))
        t_now = 0.0
        while total > 0:
            t_now += rng.exponential(1.0 / total)
            if t_now > t_end:
                break
            v = b_sites[int(rng.integers(len(b_sites)))]
            s = _redraw(model, sigma, v, rng)
            sigma[v] = s
            times.append(t_now)
            ev_sites.append(v)
            ev_spins.append(s)
            if a_sites:
                before = sigma[a_sites].copy()
                sample_block_given_rest(model, a_sites, sigma, rng)
                for u, old in zip(a_sites, before):
                    if sigma[u] != old:
                        times.append(t_now)
                        ev_sites.append(u)
                        ev_spins.append(int(sigma[u]))
    elif kind in _B_SPACE:
        b_sites, table = _block_flip_rates(spec)
        state = 0
        for j, v in enumerate(b_sites):
            if sigma[v] > 0:
                state |= 1 << j
        total = float(len(b_sites))
        t_now = 0.0
        while total > 0:
            t_now += rng.exponential(1.0 / total)
            if t_now > t_end:
                break
            j = int(rng.integers(len(b_sites)))
            if rng.random() < table[state, j]:
                state ^= 1 << j
                v = b_sites[j]
                sigma[v] = -sigma[v]
                times.append(t_now)
                ev_sites.append(v)
                ev_spins.append(int(sigma[v]))
    else:
        raise InvalidInputError(f"unknown chain kind {kind!r}")

    final = sigma.astype(np.int8)
    return Trajectory(
        kind=kind,
        sites=spec.a_sites() if kind == "Y2" else (
            spec.b_sites() if kind in _B_SPACE else list(range(n))
        ),
        t_end=float(t_end),
        sigma0=sigma0,
        times=np.array(times, dtype=np.float64),
        event_sites=np.array(ev_sites, dtype=np.int32),
        event_spins=np.array(ev_spins, dtype=np.int8),
        final=final,
    )


def simulate_ensemble(spec: ChainSpec, sigma0, t_end: float, n_runs: int,
                      seed=None, init_dist=None):
    """Final-state samples for n_runs independent replicas.

    Vectorized uniformization on the explicit generator (so the
    instance must satisfy build_generator's limits): per replica a
    Poisson number of jump-matrix steps.  Same law as simulate at
    t_end.  Returns (encoded final states, generator).  init_dist, if
    given, overrides sigma0 with a distribution over encoded states.
    """
    if t_end < 0 or n_runs <= 0:
        raise InvalidInputError("need t_end >= 0 and n_runs >= 1")
    gen = build_generator(spec)
    M = gen.state_count
    if M > _DENSE_LIMIT:
        raise ResourceLimitError("ensemble sampling needs at most 2^14 states")
    rng = np.random.default_rng(seed)
    if init_dist is not None:
        init_dist = np.asarray(init_dist, dtype=np.float64)
        if init_dist.shape != (M,) or init_dist.min() < 0:
            raise InvalidInputError("init_dist must be a distribution over states")
        init_dist = init_dist / init_dist.sum()
        states = rng.choice(M, size=n_runs, p=init_dist).astype(np.int64)
    else:
        states = np.full(n_runs, gen.state_index(np.asarray(sigma0)), dtype=np.int64)
    lam = float(np.max(-np.diag(gen.Q)))
    if lam <= 0 or t_end == 0:
        return states, gen
    P = np.eye(M) + gen.Q / lam
    cp = np.cumsum(P, axis=1)
    steps = rng.poisson(lam * t_end, size=n_runs)
    for k in range(int(steps.max())):
        act = np.nonzero(steps > k)[0]
        u = rng.random(act.size)
        rows = cp[states[act]]
        states[act] = np.minimum((rows < u[:, None]).sum(axis=1), M - 1)
    return states, gen


# -- exact kernels and mixing --------------------------------------------------


def heat_kernel(gen: Generator, t: float) -> np.ndarray:
    """Transition matrix at time t by uniformization.

    H_t = sum_k Poisson(k; Lambda t) P^k with P = I + Q/Lambda and
    Lambda the largest exit rate, truncated once the Poisson tail drops
    below 1e-12.  Rows then sum to 1 within 1e-10 (the truncated mass
    is left missing, not renormalized).
    """
    if t < 0:
        raise InvalidInputError("t must be nonnegative")
    M = gen.state_count
    if M > _DENSE_LIMIT:
        raise ResourceLimitError("heat_kernel needs at most 2^14 states")
    lam = float(np.max(-np.diag(gen.Q)))
    mu = lam * t
    if mu == 0.0:
        return np.eye(M)
    k_hi = int(poisson.isf(1e-13, mu)) + 2
    weights = np.exp(poisson.logpmf(np.arange(k_hi + 1), mu))
    P = np.eye(M) + gen.Q / lam
    H = np.zeros((M, M))
    term = np.eye(M)
    for k in range(k_hi + 1):
        if weights[k] > 0.0:
            H += weights[k] * term
        if k < k_hi:
            term = term @ P
    return H


def _worst_tv(H: np.ndarray, pi: np.ndarray) -> float:
    return float(0.5 * np.abs(H - pi[None, :]).sum(axis=1).max())


class _KernelEvaluator:
    """Shared machinery for repeated H_t evaluations of one generator.

    Reversible generators get a one-time symmetric eigendecomposition
    (each t is then two matrix products); others fall back to fresh
    uniformization per t.
    """

    def __init__(self, gen: Generator):
        self.gen = gen
        self.spectral = None
        if not sp.issparse(gen.Q) and detailed_balance_residual(gen) <= 1e-9:
            d = np.sqrt(gen.pi)
            S = (d[:, None] * gen.Q) / d[None, :]
            S = 0.5 * (S + S.T)
            w, U = np.linalg.eigh(S)
            self.spectral = (w, U, d)

    def at(self, t: float) -> np.ndarray:
        if self.spectral is None:
            return heat_kernel(self.gen, t)
        w, U, d = self.spectral
        core = (U * np.exp(t * w)) @ U.T
        return (core / d[:, None]) * d[None, :]


def mixing_time(gen: Generator, eps: float = 0.25, rel_tol: float = 1e-3) -> float:
    """Smallest t with worst-case TV(H_t(x, .), pi) <= eps, by doubling
    then bisection (worst-case TV is nonincreasing in t), to relative
    precision rel_tol."""
    if eps >= 1.0:
        return 0.0
    if eps <= 0.0:
        raise InvalidInputError("eps must be positive")
    ev = _KernelEvaluator(gen)
    d0 = _worst_tv(ev.at(0.0), gen.pi)
    if d0 <= eps:
        return 0.0
    t_hi = 1.0
    for _ in range(200):
        if _worst_tv(ev.at(t_hi), gen.pi) <= eps:
            break
        t_hi *= 2.0
    else:
        raise NonConvergenceError("no mixing observed", last_iterate=t_hi)
    t_lo = 0.0 if t_hi == 1.0 else t_hi / 2.0
    while t_hi - t_lo > rel_tol * t_hi:
        mid = 0.5 * (t_lo + t_hi)
        if _worst_tv(ev.at(mid), gen.pi) <= eps:
            t_hi = mid
        else:
            t_lo = mid
    return t_hi


# -- slow-block coupling comparison -------------------------------------------


@dataclass
class CouplingReport:
    t: float
    rate_A: float
    tv: float
    mode: str
    conf_radius: float
    n_runs: int


def equilibrated_start(spec: ChainSpec, sigma0) -> np.ndarray:
    """Distribution over full states that keeps sigma0's slow block and
    redraws the fast block from its conditional."""
    model = spec.base_model
    in_b = spec.partition.in_b
    _, b_of, _, _, _, cond = _full_tables(model, in_b)
    b_bits = [i for i in range(model.g.n) if in_b[i]]
    s0 = 0
    for j, v in enumerate(b_bits):
        if sigma0[v] > 0:
            s0 |= 1 << j
    init = np.where(b_of == s0, cond, 0.0)
    return init


def coupling_tv_check(spec_pair, sigma0, t: float, n_runs: int = 0,
                           seed=None, mode: str = "auto") -> CouplingReport:
    """TV between the accelerated chain started at sigma0 and the
    composite chain started from sigma0 with its fast block re-drawn
    from the conditional measure.

    Exact mode compares heat-kernel rows directly.  Simulation mode
    runs n_runs event-driven replicas of each chain and reports the
    empirical TV together with a sup-deviation confidence radius
    sqrt(ln(2/0.05) / (2 n_runs)) per empirical measure (summed for the
    pair).
    """
    spec2, spec3 = spec_pair
    if spec2.kind != "X2" or spec3.kind != "X3":
        raise InvalidInputError("spec_pair must be (X2 spec, X3 spec)")
    if spec2.base_model is not spec3.base_model:
        raise InvalidInputError("the two specs must share a base model")
    n = spec2.base_model.g.n
    sigma0 = np.asarray(sigma0, dtype=np.int8)
    if mode == "auto":
        mode = "exact" if (1 << n) <= _DENSE_LIMIT and n_runs == 0 else "simulation"
    if mode == "exact":
        gen2 = build_generator(spec2)
        gen3 = build_generator(spec3)
        law2 = heat_kernel(gen2, t)[gen2.state_index(sigma0)]
        init3 = equilibrated_start(spec3, sigma0)
        law3 = init3 @ heat_kernel(gen3, t)
        return CouplingReport(
            t=float(t), rate_A=spec2.rate_A,
            tv=tv_distance(law2, law3), mode="exact",
            conf_radius=0.0, n_runs=0,
        )
    if n_runs <= 0:
        raise InvalidInputError("simulation mode needs n_runs >= 1")
    ss2, ss3 = np.random.SeedSequence(seed).spawn(2)
    rng3 = np.random.default_rng(ss3)
    counts2 = np.zeros(1 << n)
    counts3 = np.zeros(1 << n)
    traj_seed = ss2.generate_state(n_runs, dtype=np.uint64)
    a_sites = spec3.a_sites()
    for i in range(n_runs):
        traj = simulate(spec2, sigma0, t, seed=int(traj_seed[i]))
        counts2[_encode_full(traj.final)] += 1
        start = sigma0.astype(np.float64)
        sample_block_given_rest(spec3.base_model, a_sites, start, rng3)
        traj = simulate(spec3, start.astype(np.int8), t,
                        seed=int(rng3.integers(0, 2**63)))
        counts3[_encode_full(traj.final)] += 1
    radius = 2.0 * math.sqrt(math.log(2.0 / 0.05) / (2.0 * n_runs))
    return CouplingReport(
        t=float(t), rate_A=spec2.rate_A,
        tv=tv_distance(counts2 / n_runs, counts3 / n_runs),
        mode="simulation", conf_radius=radius, n_runs=n_runs,
    )


def _encode_full(sigma) -> int:
    c = 0
    for i, s in enumerate(sigma):
        if s > 0:
            c |= 1 << i
    return c
