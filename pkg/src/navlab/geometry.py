"""Semi-metric geometries, distance scales, substrates and coherence checks.

Vertices are the integers ``0..n-1``. A geometry knows how to compute
distances (vectorised) and carries the scale base ``gamma``. Scale ``k``
holds the distances in ``(gamma**(k-1), gamma**k]``; distances in ``(0, 1]``
are folded into ``k = 1`` so that every pair has a scale.
"""
from dataclasses import dataclass, field
import math

import numpy as np

from . import streams

EXACT_PAIR_LIMIT = 10**6
SCALE_RTOL = 1e-12


def scale_count(n, gamma):
    """Smallest ``K >= 1`` with ``gamma**K >= n``."""
    K = 1
    while gamma**K < n:
        K += 1
    return K


def scales_of(d, gamma):
    """Vectorised scale index ``max(1, ceil(log_gamma d))`` for ``d > 0``.

    The float estimate is corrected against powers of ``gamma`` with a
    relative slack of ``1e-12``, so a boundary distance ``d = gamma**k``
    lands in scale ``k`` however the power was rounded.
    """
    d = np.asarray(d, dtype=float)
    safe = np.maximum(d, 1.0) * (1 - SCALE_RTOL)
    k = np.ceil(np.log(safe) / math.log(gamma)).astype(np.int64)
    k = np.maximum(k, 1)
    k = np.where(np.power(gamma, k.astype(float)) < safe, k + 1, k)
    lower = np.power(gamma, (k - 1).astype(float))
    k = np.where((k > 1) & (lower >= safe), k - 1, k)
    return k


class Geometry:
    """Base class: a vertex set ``range(n)`` with a semi-metric.

    Subclasses implement :meth:`dist`, which must broadcast over integer
    arrays.
    """

    kind = "abstract"
    is_transitive = False

    def __init__(self, n, gamma):
        if n < 1:
            raise ValueError("geometry needs at least one vertex")
        if not gamma > 1:
            raise ValueError("gamma must exceed 1")
        self.n = int(n)
        self.gamma = float(gamma)
        self.K = scale_count(self.n, self.gamma)

    def dist(self, u, v):
        raise NotImplementedError

    def distances_from(self, u):
        return self.dist(np.arange(self.n), int(u))

    def distance_matrix(self):
        idx = np.arange(self.n)
        return self.dist(idx[:, None], idx[None, :])

    @property
    def max_distance(self):
        raise NotImplementedError

    def spec(self):
        """Short textual description, e.g. ``cycle:n=64``."""
        return self.kind

    def check_vertex(self, *vs):
        for v in vs:
            if not 0 <= int(v) < self.n:
                raise ValueError(f"vertex {v} outside [0, {self.n})")


class LatticeGeometry(Geometry):
    """Periodic lattice ``Z_side^dims`` with the wrapped L1 distance.

    ``dims == 1`` is the cycle. Vertex ``i`` has coordinate
    ``(i // side**a) % side`` on axis ``a``.
    """

    is_transitive = True

    def __init__(self, side, dims=1, gamma=2.0):
        side, dims = int(side), int(dims)
        if side < 2 or dims < 1:
            raise ValueError("lattice needs side >= 2 and dims >= 1")
        super().__init__(side**dims, gamma)
        self.side = side
        self.dims = dims
        idx = np.arange(self.n)
        self._strides = side ** np.arange(dims)
        self.coords = (idx[:, None] // self._strides[None, :]) % side

    @property
    def kind(self):
        return "cycle" if self.dims == 1 else "torus"

    def spec(self):
        if self.dims == 1:
            return f"cycle:n={self.n}"
        return f"torus:side={self.side},dims={self.dims}"

    def dist(self, u, v):
        cu = self.coords[np.asarray(u)]
        cv = self.coords[np.asarray(v)]
        diff = np.abs(cu - cv)
        return np.minimum(diff, self.side - diff).sum(axis=-1)

    def shift(self, u, delta):
        """Translate vertex ``u`` by the displacement encoded as vertex ``delta``."""
        c = (self.coords[np.asarray(u)] + self.coords[np.asarray(delta)]) % self.side
        return c @ self._strides

    def negate(self, delta):
        c = (-self.coords[np.asarray(delta)]) % self.side
        return c @ self._strides

    @property
    def max_distance(self):
        return self.dims * (self.side // 2)

    def unit_neighbors(self):
        """``(n, 2*dims)`` array of the lattice neighbours, rows sorted."""
        steps = []
        for a in range(self.dims):
            for sgn in (1, -1):
                c = self.coords.copy()
                c[:, a] = (c[:, a] + sgn) % self.side
                steps.append(c @ self._strides)
        nb = np.stack(steps, axis=1)
        nb.sort(axis=1)
        # side 2 makes +1 and -1 the same vertex
        if self.side == 2:
            nb = np.stack([np.unique(r) for r in nb])
        return nb


def cycle(n, gamma=2.0):
    return LatticeGeometry(n, 1, gamma)


def torus(side, dims=2, gamma=2.0):
    return LatticeGeometry(side, dims, gamma)


class MatrixGeometry(Geometry):
    """Geometry given by an explicit symmetric distance matrix."""

    def __init__(self, D, gamma, kind="matrix", label=None):
        D = np.asarray(D)
        if D.ndim != 2 or D.shape[0] != D.shape[1]:
            raise ValueError("distance matrix must be square")
        super().__init__(D.shape[0], gamma)
        self.D = D
        self._kind = kind
        self._label = label or kind
        self._sorted_rows = None

    @property
    def kind(self):
        return self._kind

    def spec(self):
        return self._label

    def dist(self, u, v):
        return self.D[np.asarray(u), np.asarray(v)]

    def distances_from(self, u):
        return self.D[int(u)]

    def distance_matrix(self):
        return self.D

    @property
    def max_distance(self):
        return self.D.max()

    def sorted_rows(self):
        """Row-sorted distances, flattened with a per-row offset for batched lookups."""
        if self._sorted_rows is None:
            rows = np.sort(self.D, axis=1).astype(float)
            span = float(rows.max()) + 1.0
            flat = (rows + span * np.arange(self.n)[:, None]).ravel()
            self._sorted_rows = (rows, flat, span)
        return self._sorted_rows


def distance(g, u, v):
    g.check_vertex(u, v)
    return g.dist(u, v).item()


def scale_index(g, u, v):
    d = distance(g, u, v)
    if d == 0:
        raise ValueError("no scale for zero distance")
    return int(scales_of(d, g.gamma))


def ball_count(g, u, radius):
    """Number of vertices ``t != u`` with ``d(u, t) <= radius``."""
    if radius < 0:
        raise ValueError("radius must be non-negative")
    g.check_vertex(u)
    return int(np.count_nonzero(g.distances_from(u) <= radius)) - 1


def ball_counts(g, centers, radii):
    """Vectorised :func:`ball_count` for paired arrays of centres and radii."""
    centers = np.asarray(centers)
    radii = np.asarray(radii, dtype=float)
    if g.is_transitive:
        ref = np.sort(g.distances_from(0))
        return np.searchsorted(ref, radii, side="right") - 1
    rows, flat, span = g.sorted_rows()
    key = centers * span + np.minimum(radii, span - 1)
    return np.searchsorted(flat, key, side="right") - centers * g.n - 1


def shell_profile(g, v):
    """Shell sizes ``P_k(v)`` for ``k = 1..K`` as an array of length ``K``."""
    d = g.distances_from(v)
    d = d[d > 0]
    ks = scales_of(d, g.gamma)
    return np.bincount(ks, minlength=g.K + 1)[1 : g.K + 1]


def shell_count(g, v, k):
    if not 1 <= k <= g.K:
        raise ValueError(f"scale {k} outside [1, {g.K}]")
    g.check_vertex(v)
    return int(shell_profile(g, v)[k - 1])


def helpful_count(g, s, t, rho):
    """Size of ``{v : d(s,v) <= gamma**k_st and d(v,t) <= rho*d(s,t)}``.

    The target itself qualifies since ``d(t, t) = 0``.
    """
    if s == t:
        raise ValueError("helpful set undefined for s == t")
    if not 0 < rho < 1:
        raise ValueError("rho must lie in (0, 1)")
    ds = g.distances_from(s)
    dst = ds[t]
    reach = g.gamma ** int(scales_of(dst, g.gamma))
    dt = g.distances_from(t)
    return int(np.count_nonzero((ds <= reach) & (dt <= rho * dst)))


@dataclass
class CoherenceReport:
    kind: str
    n: int
    gamma: float
    K: int
    rho: float
    alpha_growth: float
    A_growth: float
    phi: float
    pass_h1: bool
    pass_h2: bool
    interior_scales: list
    scale_min: list = field(default_factory=list)
    scale_max: list = field(default_factory=list)
    pairs_scanned: int = 0
    exact_pairs: bool = False

    def to_dict(self):
        return {
            "kind": self.kind,
            "n": self.n,
            "gamma": self.gamma,
            "K": self.K,
            "alphaGrowth": self.alpha_growth,
            "AGrowth": self.A_growth,
            "phi": self.phi,
            "rho": self.rho,
            "passH1": self.pass_h1,
            "passH2": self.pass_h2,
            "interiorScales": self.interior_scales,
            "scaleMin": self.scale_min,
            "scaleMax": self.scale_max,
            "pairsScanned": self.pairs_scanned,
            "exactPairs": self.exact_pairs,
        }


def growth_table(g):
    """Per-scale min and max of ``P_k(v) / gamma**k`` over all vertices.

    Transitive geometries are scanned from vertex 0 only.
    """
    sources = [0] if g.is_transitive else range(g.n)
    lo = np.full(g.K, np.inf)
    hi = np.zeros(g.K)
    for v in sources:
        prof = shell_profile(g, v)
        lo = np.minimum(lo, prof)
        hi = np.maximum(hi, prof)
    norm = g.gamma ** np.arange(1, g.K + 1, dtype=float)
    return lo / norm, hi / norm


def interior_scales(g):
    """Scales ``k`` with ``gamma**k <= max distance``."""
    dmax = float(g.max_distance)
    return [k for k in range(1, g.K + 1) if g.gamma**k <= dmax]


def growth_constant(g):
    """Empirical ``alpha`` of bounded growth over the interior scales."""
    lo, _ = growth_table(g)
    ks = interior_scales(g) or [k for k in range(1, g.K + 1) if lo[k - 1] > 0]
    return float(min(lo[k - 1] for k in ks))


def _helpful_exact(g, rho):
    D = g.distance_matrix()
    phi = np.inf
    for s in range(g.n):
        ds = D[s]
        others = np.flatnonzero(ds > 0)
        ks = scales_of(ds[others], g.gamma)
        for k in np.unique(ks):
            T = others[ks == k]
            V = np.flatnonzero(ds <= g.gamma**k)
            hits = (D[np.ix_(V, T)] <= rho * ds[T][None, :]).sum(axis=0)
            phi = min(phi, float(hits.min()) / g.gamma**k)
    return phi, g.n * (g.n - 1)


def _helpful_sampled(g, rho, pairs, seed):
    rng = streams.stream(seed, streams.COHERENCE)
    s = rng.integers(0, g.n, size=pairs)
    t = (s + rng.integers(1, g.n, size=pairs)) % g.n
    phi = np.inf
    for a, b in zip(s, t):
        c = helpful_count(g, int(a), int(b), rho)
        k = int(scales_of(g.dist(a, b), g.gamma))
        phi = min(phi, c / g.gamma**k)
    return phi, pairs


def verify_coherence(g, rho=0.5, sample_pairs=2000, seed=0):
    """Measure the bounded-growth and isotropy constants of ``g``.

    Bounded growth is scanned exactly. Isotropy is scanned over all ordered
    pairs when ``n**2 <= 10**6`` and over ``sample_pairs`` seeded random
    pairs otherwise. Pass flags use only the interior scales; the top scale
    of a finite geometry is reported in ``scale_min``/``scale_max`` but
    cannot fail the check.
    """
    if not 0 < rho < 1:
        raise ValueError("rho must lie in (0, 1)")
    if sample_pairs < 1:
        raise ValueError("sample_pairs must be positive")
    lo, hi = growth_table(g)
    inner = interior_scales(g)
    ks = inner or [k for k in range(1, g.K + 1) if hi[k - 1] > 0]
    alpha = float(min(lo[k - 1] for k in ks)) if ks else 0.0
    A = float(max(hi[k - 1] for k in ks)) if ks else 0.0
    if g.n < 2:
        phi, scanned, exact = np.inf, 0, True
    elif g.n**2 <= EXACT_PAIR_LIMIT:
        phi, scanned = _helpful_exact(g, rho)
        exact = True
    else:
        phi, scanned = _helpful_sampled(g, rho, sample_pairs, seed)
        exact = False
    return CoherenceReport(
        kind=g.kind,
        n=g.n,
        gamma=g.gamma,
        K=g.K,
        rho=rho,
        alpha_growth=alpha,
        A_growth=A,
        phi=float(phi),
        pass_h1=alpha > 0,
        pass_h2=phi > 0,
        interior_scales=inner,
        scale_min=[float(x) for x in lo],
        scale_max=[float(x) for x in hi],
        pairs_scanned=int(scanned),
        exact_pairs=exact,
    )


class SubstrateError(ValueError):
    pass


@dataclass(frozen=True)
class Substrate:
    """Base edges ``E0`` plus the deterministic local-connection rule.

    ``neighbors[v]`` lists the substrate neighbours of ``v`` in increasing
    order; the local ``t``-connection of ``s`` is the neighbour closest to
    ``t``, ties going to the smallest index.
    """

    geometry: Geometry
    neighbors: np.ndarray

    def local_connection(self, s, t):
        nb = self.neighbors[s]
        return int(nb[np.argmin(self.geometry.dist(nb, t))])

    def edges(self):
        n, deg = self.neighbors.shape
        u = np.repeat(np.arange(n), deg)
        v = self.neighbors.ravel()
        keep = u < v
        return np.unique(np.stack([u[keep], v[keep]], axis=1), axis=0)

    def has_edge(self, u, v):
        return bool(np.any(self.neighbors[u] == v))


def _check_substrate(g, nb, sources):
    for s in sources:
        ds = g.distances_from(s)
        best = g.dist(nb[s][:, None], np.arange(g.n)[None, :]).min(axis=0)
        bad = (best > ds - 1) & (ds > 0)
        if bad.any():
            t = int(np.flatnonzero(bad)[0])
            raise SubstrateError(f"substrate axiom violated at s={s}, t={t}")


def build_substrate(g, verify=True):
    """Unit-distance substrate for a cycle or torus.

    Verification is exhaustive for ``n <= 1024``; above that, translation
    invariance of the lattice means checking source 0 is equivalent.
    """
    if not isinstance(g, LatticeGeometry):
        raise SubstrateError("substrates are only built for cycle and torus geometries")
    nb = g.unit_neighbors()
    if verify:
        sources = range(g.n) if g.n <= 1024 else [0]
        _check_substrate(g, nb, sources)
    return Substrate(g, nb)


def local_path(sub, s, t, max_len=None):
    """Follow local ``t``-connections from ``s``.

    ``max_len`` caps the number of steps; the returned list has at most
    ``max_len + 1`` vertices.
    """
    if s == t:
        raise ValueError("local path needs s != t")
    path = [int(s)]
    v = int(s)
    while v != t and (max_len is None or len(path) <= max_len):
        v = sub.local_connection(v, t)
        path.append(v)
    return path
