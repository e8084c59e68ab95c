"""Greedy decentralised routing and the reducibility probe.

A :class:`NavGraph` joins the substrate of a geometry with a set of
long-range edges. Routing only ever looks at the distances from the
current vertex's neighbours to the target.
"""
from dataclasses import dataclass, field
import math

import numpy as np

from . import streams
from .geometry import local_path

CSV_FIELDS = [
    "n", "gamma", "cost_spec", "B", "lambda", "seed", "pairs",
    "success_rate", "p50", "p90", "p99", "mean_long_edges",
]


def default_budget(n):
    """``ceil(10 (ln n)^2)`` greedy steps, at least one."""
    return max(1, math.ceil(10 * math.log(n) ** 2))


@dataclass(frozen=True)
class NavGraph:
    """Substrate plus long-range edges with a symmetric CSR adjacency.

    ``is_long[j]`` flags adjacency slot ``j`` as a long-range edge that is
    not also a substrate edge.
    """

    geometry: object
    substrate: object
    edges: object
    indptr: np.ndarray
    indices: np.ndarray
    is_long: np.ndarray

    @property
    def n(self):
        return self.geometry.n

    def neighbors(self, v):
        return self.indices[self.indptr[v] : self.indptr[v + 1]]

    def degree(self):
        return np.diff(self.indptr)


def build_nav_graph(g, substrate, edges):
    """Assemble a :class:`NavGraph`. ``substrate`` may be ``None`` (long edges only)."""
    if substrate is not None and substrate.geometry is not g:
        raise ValueError("substrate belongs to a different geometry")
    long_e = np.asarray(edges.edges if edges is not None else np.zeros((0, 2)), dtype=np.int64)
    long_e = long_e.reshape(-1, 2)
    if len(long_e) and (long_e.min() < 0 or long_e.max() >= g.n):
        raise ValueError("edge endpoint outside the vertex range")
    sub_e = substrate.edges() if substrate is not None else np.zeros((0, 2), np.int64)
    both = np.concatenate([sub_e, long_e])
    flags = np.concatenate([np.zeros(len(sub_e), bool), np.ones(len(long_e), bool)])
    src = np.concatenate([both[:, 0], both[:, 1]])
    dst = np.concatenate([both[:, 1], both[:, 0]])
    flags = np.concatenate([flags, flags])
    # substrate copy of a duplicated pair sorts first and wins
    order = np.lexsort((flags, dst, src))
    src, dst, flags = src[order], dst[order], flags[order]
    first = np.ones(len(src), bool)
    first[1:] = (src[1:] != src[:-1]) | (dst[1:] != dst[:-1])
    src, dst, flags = src[first], dst[first], flags[first]
    indptr = np.zeros(g.n + 1, dtype=np.int64)
    np.cumsum(np.bincount(src, minlength=g.n), out=indptr[1:])
    return NavGraph(g, substrate, edges, indptr, dst, flags)


@dataclass
class RouteResult:
    source: int
    target: int
    hops: int
    success: bool
    path: list = None
    long_edges_used: int = 0
    budget: int = 0


def greedy_route(ng, s, t, budget=None, fallback=True, record_path=True):
    """Route from ``s`` to ``t`` by strict-improvement greedy.

    At each step move to the neighbour closest to ``t`` among those strictly
    closer than the current vertex (ties to the smallest index). With
    ``fallback`` and no improving neighbour, take the local ``t``-connection;
    without it the walk stalls and fails.
    """
    g = ng.geometry
    g.check_vertex(s, t)
    s, t = int(s), int(t)
    budget = default_budget(g.n) if budget is None else int(budget)
    if budget < 1:
        raise ValueError("budget must be at least 1")
    path = [s] if record_path else None
    v, dv, hops, used = s, g.dist(s, t), 0, 0
    while v != t and hops < budget:
        lo, hi = ng.indptr[v], ng.indptr[v + 1]
        nb = ng.indices[lo:hi]
        d = g.dist(nb, t)
        j = int(np.argmin(d)) if len(nb) else -1
        if j >= 0 and d[j] < dv:
            v, dv = int(nb[j]), d[j]
            used += int(ng.is_long[lo + j])
        elif fallback and ng.substrate is not None:
            v = ng.substrate.local_connection(v, t)
            dv = g.dist(v, t)
        else:
            break
        hops += 1
        if record_path:
            path.append(v)
    return RouteResult(s, t, hops, v == t, path, used, budget)


@dataclass
class ReducibilityProbe:
    s: int
    t: int
    p: float
    C: float
    rho: float
    witness_vertex: int = None
    witness_edge: tuple = None
    examined: int = 0
    immediate: bool = False

    @property
    def found(self):
        return self.witness_vertex is not None


def probe_length(n, p, C):
    return max(1, math.ceil(C * math.log(n) ** p))


def probe_reducibility(ng, s, t, p=1.0, C=1.0, rho=0.5, limit=None):
    """Scan the local ``(s, t)``-path for a vertex with a contracting long edge.

    The first ``ceil(C (ln n)^p)`` path vertices are examined (``limit``
    overrides the count). A vertex already within ``rho * d(s, t)`` of
    ``t`` is an immediate witness. Otherwise a long-range neighbour ``v``
    with ``d(v, t) <= rho * d(s, t)`` is sought, closest to ``t`` first.
    """
    if s == t:
        raise ValueError("probe needs s != t")
    if not C > 0:
        raise ValueError("C must be positive")
    if not 0 < rho < 1:
        raise ValueError("rho must lie in (0, 1)")
    if ng.substrate is None:
        raise ValueError("probe needs a substrate")
    g = ng.geometry
    L = probe_length(g.n, p, C) if limit is None else int(limit)
    goal = rho * g.dist(s, t)
    out = ReducibilityProbe(int(s), int(t), p, C, rho)
    for i, u in enumerate(local_path(ng.substrate, s, t, max_len=L - 1)):
        out.examined = i + 1
        if g.dist(u, t) <= goal:
            out.witness_vertex, out.immediate = u, True
            return out
        lo, hi = ng.indptr[u], ng.indptr[u + 1]
        nb = ng.indices[lo:hi][ng.is_long[lo:hi]]
        if len(nb):
            d = g.dist(nb, t)
            j = int(np.argmin(d))
            if d[j] <= goal:
                out.witness_vertex, out.witness_edge = u, (u, int(nb[j]))
                return out
    return out


def required_constant(ng, s, t, p=1.0, rho=0.5):
    """Smallest ``C`` for which the probe of ``(s, t)`` finds a witness.

    The full local path is scanned; ``t`` itself is always an immediate
    witness, so the value is finite.
    """
    g = ng.geometry
    pr = probe_reducibility(ng, s, t, p, 1.0, rho, limit=int(g.dist(s, t)) + 1)
    return pr.examined / math.log(g.n) ** p


def hop_bound(n, C, p=1.0, rho=0.5):
    """``(1 + C (ln n)^p) * ceil(log_{1/rho} n)``."""
    return (1 + C * math.log(n) ** p) * math.ceil(math.log(n) / math.log(1 / rho) - 1e-12)


@dataclass
class RouteReplay:
    hops: int
    C: float
    bound: float

    @property
    def ok(self):
        return self.hops <= self.bound


def replay_route(ng, result, p=1.0, rho=0.5):
    """Probe every suffix pair ``(v_i, t)`` of a successful route.

    ``C`` is the largest constant any suffix needed; the route satisfies the
    reducibility hop bound when ``hops <= hop_bound(n, C)``.
    """
    if not result.success or result.path is None:
        raise ValueError("replay needs a successful route with its path")
    t = result.target
    C = max((required_constant(ng, v, t, p, rho) for v in result.path[:-1]), default=0.0)
    return RouteReplay(result.hops, C, hop_bound(ng.n, C, p, rho))


@dataclass
class BatchStats:
    pairs: int
    success_rate: float
    p50: float
    p90: float
    p99: float
    mean_long_edges: float
    budget: int
    hops: np.ndarray = field(repr=False, default=None)
    success: np.ndarray = field(repr=False, default=None)

    def to_dict(self):
        return {
            "pairs": self.pairs,
            "success_rate": self.success_rate,
            "p50": self.p50,
            "p90": self.p90,
            "p99": self.p99,
            "mean_long_edges": self.mean_long_edges,
            "budget": self.budget,
        }


def random_pairs(n, pairs, seed):
    """Uniform ordered pairs ``s != t``; trial ``i`` draws from its own stream."""
    out = np.empty((pairs, 2), dtype=np.int64)
    for i in range(pairs):
        rng = streams.stream(seed, streams.PAIRS, i)
        s = rng.integers(n)
        out[i] = s, (s + rng.integers(1, n)) % n
    return out


def route_trial_batch(ng, pairs, budget_formula=default_budget, seed=0, fallback=True):
    """Route ``pairs`` uniform random pairs and summarise.

    Hop quantiles are taken over successful routes (``nan`` if none).
    """
    if pairs < 1:
        raise ValueError("pairs must be at least 1")
    if ng.n < 2:
        raise ValueError("routing needs n >= 2")
    budget = int(budget_formula(ng.n))
    hops = np.zeros(pairs, dtype=np.int64)
    ok = np.zeros(pairs, dtype=bool)
    used = np.zeros(pairs, dtype=np.int64)
    for i, (s, t) in enumerate(random_pairs(ng.n, pairs, seed)):
        r = greedy_route(ng, s, t, budget, fallback=fallback, record_path=False)
        hops[i], ok[i], used[i] = r.hops, r.success, r.long_edges_used
    h = hops[ok]
    q = np.percentile(h, [50, 90, 99]) if len(h) else np.full(3, np.nan)
    return BatchStats(
        pairs, float(ok.mean()), float(q[0]), float(q[1]), float(q[2]),
        float(used.mean()), budget, hops, ok,
    )
