"""Long-range edge samplers: product measure, rank-based augmentation and
exact uniform sampling of bounded-cost graphs.

All samplers return an :class:`EdgeSet` of undirected pairs ``u < v`` sorted
lexicographically. Randomness is drawn from :func:`navlab.streams.stream`
keyed by the seed and by the cost class (product, exact) or vertex block
(RBA), so results do not depend on evaluation order.
"""
from dataclasses import dataclass
import math

import numpy as np
from scipy.special import expit, logsumexp

from . import streams
from .geometry import LatticeGeometry, ball_counts, scales_of
from .measure import feasible_profiles, invert_budget, profile_entropy

EXACT_LATTICE_LIMIT = 10**7
RBA_BLOCK = 1024


@dataclass
class EdgeSet:
    n: int
    edges: np.ndarray
    scales: np.ndarray
    by_scale: np.ndarray
    seed: int
    gamma: float = 2.0

    def __len__(self):
        return len(self.edges)

    def to_dict(self):
        return {
            "n": self.n,
            "gamma": self.gamma,
            "seed": self.seed,
            "edges": len(self.edges),
            "scales": self.scales.tolist(),
            "byScale": self.by_scale.tolist(),
        }


def _canonical(u, v):
    u, v = np.asarray(u, dtype=np.int64), np.asarray(v, dtype=np.int64)
    e = np.stack([np.minimum(u, v), np.maximum(u, v)], axis=1)
    e = e[e[:, 0] != e[:, 1]]
    return np.unique(e, axis=0) if len(e) else e.reshape(0, 2)


def make_edge_set(g, u, v, seed, scales=None):
    """Canonicalise pairs and tally them per scale (all scales ``1..K`` by default)."""
    e = _canonical(u, v)
    scales = np.arange(1, g.K + 1) if scales is None else np.asarray(scales)
    ks = scales_of(g.dist(e[:, 0], e[:, 1]), g.gamma) if len(e) else np.zeros(0, int)
    pos = np.searchsorted(scales, ks)
    by = np.bincount(pos, minlength=len(scales))[: len(scales)]
    return EdgeSet(g.n, e, scales, by, seed, g.gamma)


def write_edge_set(e, path):
    with open(path, "w") as fh:
        fh.write(f"n {e.n} gamma {e.gamma!r} seed {e.seed}\n")
        for u, v in e.edges.tolist():
            fh.write(f"{u} {v}\n")


def read_edge_set(path, g, scales=None):
    with open(path) as fh:
        head = fh.readline().split()
        if head[0::2] != ["n", "gamma", "seed"]:
            raise ValueError("edge-set header must read 'n <count> gamma <g> seed <s>'")
        n, seed = int(head[1]), int(head[5])
        if n != g.n:
            raise ValueError("edge set and geometry disagree on n")
        pairs = np.loadtxt(fh, dtype=np.int64, ndmin=2).reshape(-1, 2)
    return make_edge_set(g, pairs[:, 0], pairs[:, 1], seed, scales)


class ClassEnumerator:
    """Bijection between ``range(P_k)`` and the unordered pairs at scale ``k``.

    On a lattice the pairs at one scale are grouped by canonical displacement
    ``delta``: a displacement that is not its own inverse contributes ``n``
    pairs ``{u, u + delta}``; a self-inverse one contributes ``n / 2`` pairs,
    those with ``u < u + delta``. Other geometries store explicit pair lists.
    """

    def __init__(self, g, scales):
        self.g = g
        self.scales = np.asarray(scales)
        if isinstance(g, LatticeGeometry):
            self._build_lattice()
        else:
            self._build_listed()

    def _build_lattice(self):
        g = self.g
        delta = np.arange(1, g.n)
        neg = g.negate(delta)
        canon = delta <= neg
        delta = delta[canon]
        selfinv = (delta == neg[canon])
        ks = scales_of(g.dist(delta, 0), g.gamma)
        self._groups = []
        self.sizes = np.zeros(len(self.scales), dtype=np.int64)
        self._half = {}
        for c, k in enumerate(self.scales):
            sel = ks == k
            d, si = delta[sel], selfinv[sel]
            counts = np.where(si, g.n // 2, g.n).astype(np.int64)
            ends = np.cumsum(counts)
            self._groups.append((d, si, ends - counts, ends))
            self.sizes[c] = ends[-1] if len(ends) else 0
            for x in d[si]:
                u = np.arange(g.n)
                self._half[int(x)] = u[u < g.shift(u, x)]

    def _build_listed(self):
        g = self.g
        iu, ju = np.triu_indices(g.n, 1)
        ks = scales_of(g.dist(iu, ju), g.gamma)
        self._pairs = []
        for k in self.scales:
            sel = ks == k
            self._pairs.append(np.stack([iu[sel], ju[sel]], axis=1))
        self.sizes = np.array([len(p) for p in self._pairs], dtype=np.int64)

    def decode(self, c, idx):
        """Pairs ``(u, v)``, ``u < v``, for indices ``idx`` of class position ``c``."""
        idx = np.asarray(idx, dtype=np.int64)
        if not isinstance(self.g, LatticeGeometry):
            p = self._pairs[c][idx]
            return p[:, 0], p[:, 1]
        d, si, starts, ends = self._groups[c]
        gi = np.searchsorted(ends, idx, side="right")
        r = idx - starts[gi]
        dd = d[gi]
        u = r.copy()
        for x in np.unique(dd[si[gi]]):
            sel = dd == x
            u[sel] = self._half[int(x)][r[sel]]
        v = self.g.shift(u, dd)
        return np.minimum(u, v), np.maximum(u, v)


def enumerator_for(cg):
    g = cg.geometry
    if g is None:
        raise ValueError("pair sampling needs a cost geometry built on a geometry")
    cache = g.__dict__.setdefault("_enumerators", {})
    key = tuple(cg.scales.tolist())
    if key not in cache:
        enum = ClassEnumerator(g, cg.scales)
        if not np.array_equal(enum.sizes, cg.P):
            raise AssertionError("class enumerator disagrees with class sizes")
        cache[key] = enum
    return cache[key]


def edges_from_profile(cg, m, seed, namespace):
    """Uniform distinct pairs per class with counts ``m``."""
    enum = enumerator_for(cg)
    us, vs = [], []
    for c in range(cg.K):
        if m[c] == 0:
            continue
        rng = streams.stream(seed, namespace, 1 + c)
        idx = rng.choice(int(cg.P[c]), size=int(m[c]), replace=False)
        u, v = enum.decode(c, idx)
        us.append(u)
        vs.append(v)
    u = np.concatenate(us) if us else np.zeros(0, np.int64)
    v = np.concatenate(vs) if vs else np.zeros(0, np.int64)
    return make_edge_set(cg.geometry, u, v, seed, cg.scales)


def product_count(cg, q_star, seed, c):
    """Edge count of class ``c`` in the product sample for ``seed``."""
    return int(streams.stream(seed, streams.PRODUCT, 0, c).binomial(int(cg.P[c]), q_star[c]))


def sample_product(cg, q_star, seed):
    """Independent inclusion of every pair, with probability ``q_star[k]`` in class ``k``.

    Drawn as a binomial count per class followed by a uniform subset of
    that size, which is the same law by exchangeability within a class.
    """
    q = np.asarray(q_star, dtype=float)
    if q.shape != (cg.K,) or np.any(q < 0) or np.any(q > 1):
        raise ValueError("q_star must hold one probability in [0, 1] per class")
    m = np.array([product_count(cg, q, seed, c) for c in range(cg.K)], dtype=np.int64)
    return edges_from_profile(cg, m, seed, streams.PRODUCT)


def rba_weights(g, v):
    """Unnormalised rank weights ``1 / N_u(d(v, u))`` and their sum ``Z``.

    ``N_u(l)`` counts the vertices other than ``u`` within distance ``l`` of
    ``u``; the weight of ``v`` itself is zero.
    """
    if g.n < 2:
        raise ValueError("rank-based augmentation needs n >= 2")
    d = g.distances_from(v)
    N = ball_counts(g, np.arange(g.n), d)
    w = np.zeros(g.n)
    mask = d > 0
    w[mask] = 1.0 / N[mask]
    return w, float(w.sum())


def _rba_probs(g, v):
    w, Z = rba_weights(g, v)
    return w / Z


def rba_targets(g, edges_per_vertex=1, seed=0):
    """``(n, edges_per_vertex)`` rank-based targets, drawn with replacement.

    Vertices are processed in blocks of 1024, each block on its own stream.
    On a vertex-transitive lattice the law of vertex ``v`` is the law of
    vertex 0 translated by ``v``.
    """
    if edges_per_vertex < 1:
        raise ValueError("edges_per_vertex must be at least 1")
    n = g.n
    out = np.empty((n, edges_per_vertex), dtype=np.int64)
    if g.is_transitive:
        prob = _rba_probs(g, 0)
    for b0 in range(0, n, RBA_BLOCK):
        rng = streams.stream(seed, streams.RBA, b0 // RBA_BLOCK)
        block = np.arange(b0, min(n, b0 + RBA_BLOCK))
        if g.is_transitive:
            delta = rng.choice(n, size=(len(block), edges_per_vertex), p=prob)
            out[block] = g.shift(block[:, None], delta)
        else:
            for v in block:
                out[v] = rng.choice(n, size=edges_per_vertex, p=_rba_probs(g, v))
    return out


def sample_rba(g, edges_per_vertex=1, seed=0):
    """Rank-based augmentation as a simple undirected edge set.

    Repeated targets and reversed pairs collapse.
    """
    tgt = rba_targets(g, edges_per_vertex, seed)
    src = np.repeat(np.arange(g.n), edges_per_vertex)
    return make_edge_set(g, src, tgt.ravel(), seed)


class ExactSampler:
    """Uniform sampler on the graphs of total cost at most ``B n``.

    The feasible profiles are enumerated once, weighted by
    ``exp(profile_entropy)`` (the number of graphs with that profile), and
    a draw picks a profile and then uniform pairs inside each class.
    """

    def __init__(self, cg, B, limit=EXACT_LATTICE_LIMIT):
        self.cg = cg
        self.B = float(B)
        self.profiles, self.costs = feasible_profiles(cg, B, limit)
        logw = profile_entropy(cg, self.profiles)
        self.log_count = float(logsumexp(logw))
        self.probs = np.exp(logw - self.log_count)

    def sample_profiles(self, size, seed):
        rng = streams.stream(seed, streams.EXACT, 0)
        return self.profiles[rng.choice(len(self.profiles), size=size, p=self.probs)]

    def sample(self, seed):
        m = self.sample_profiles(1, seed)[0]
        return edges_from_profile(self.cg, m, seed, streams.EXACT)


def sample_bounded_cost_exact(cg, B, seed):
    return ExactSampler(cg, B).sample(seed)


def _rejection_profiles(cg, B, size, seed, lam=None):
    """Exact profile law by rejection from the tilted product of binomials.

    The proposal ``Binomial(P_k, 1/(1+exp(lam c_k)))`` has density
    proportional to ``prod binom(P_k, m_k) exp(-lam * cost)``; accepting with
    probability ``exp(lam (cost - B n))`` on ``cost <= B n`` leaves exactly
    the uniform-graph profile law.
    """
    lam = invert_budget(cg, B) if lam is None else lam
    if math.isinf(lam):
        return np.zeros((size, cg.K), dtype=np.int64)
    q = expit(-lam * cg.costs)
    cap = B * cg.n * (1 + 1e-12) + 1e-12
    rng = streams.stream(seed, streams.REJECTION)
    out = []
    have = 0
    batch = max(1024, 4 * size)
    while have < size:
        m = rng.binomial(cg.P, q, size=(batch, cg.K))
        cost = m @ cg.costs
        ok = cost <= cap
        acc = rng.random(batch) < np.exp(np.minimum(0.0, lam * (cost - B * cg.n)))
        take = m[ok & acc]
        out.append(take)
        have += len(take)
    return np.concatenate(out)[:size]


def sample_profile_law(cg, B, size, seed, method="auto"):
    """``size`` profiles drawn from the exact bounded-cost profile law.

    ``method`` is ``"enumerate"``, ``"rejection"`` or ``"auto"`` (enumerate
    when the lattice is small enough).
    """
    if size < 1:
        raise ValueError("no samples requested")
    if method == "auto":
        try:
            return ExactSampler(cg, B).sample_profiles(size, seed)
        except ValueError:
            method = "rejection"
    if method == "enumerate":
        return ExactSampler(cg, B).sample_profiles(size, seed)
    if method == "rejection":
        return _rejection_profiles(cg, B, size, seed)
    raise ValueError(f"unknown method {method!r}")


def edge_profile_of(cg, e):
    """Per-class edge counts of ``e`` recomputed from the geometry."""
    g = cg.geometry
    E = np.asarray(e.edges)
    if len(E) == 0:
        return np.zeros(cg.K, dtype=np.int64)
    if E.min() < 0 or E.max() >= cg.n or np.any(E[:, 0] == E[:, 1]):
        raise ValueError("edge with invalid vertices")
    pos = cg.class_of_scale(scales_of(g.dist(E[:, 0], E[:, 1]), g.gamma))
    if np.any(pos < 0):
        raise ValueError("edge at a scale with no cost class")
    return np.bincount(pos, minlength=cg.K).astype(np.int64)
