"""Set systems and the semi-metric they induce.

A set system is a family ``sets`` of subsets of ``range(n)``. The distance
between two vertices is the size of the smallest member containing both,
minus one. The checkers below test the defining axioms and the derived
statements (shrinkage, a set at every size scale, bounded growth,
isotropy) by exhaustive or seeded scans and report violations instead of
raising.
"""
from dataclasses import dataclass, field

import numpy as np

from . import streams
from .geometry import MatrixGeometry, scales_of, shell_profile

MAX_SIZE_SCALES = 64
_TOL = 1e-9


def _le(a, b):
    return a <= b * (1 + _TOL) + _TOL


def _ge(a, b):
    return _le(b, a)


class SetSystem:
    """Immutable family of vertex subsets with parameters ``(lambda, beta)``.

    ``sets`` is stored as a list of sorted ``int64`` arrays. ``membership[v]``
    lists the ids of the sets containing ``v``, ordered by set size.
    """

    def __init__(self, n, sets, lambda_ss, beta, label=None):
        if not 0 < lambda_ss < 1:
            raise ValueError("lambda must lie in (0, 1)")
        self.n = int(n)
        self.sets = [np.unique(np.asarray(S, dtype=np.int64)) for S in sets]
        for S in self.sets:
            if S.size == 0:
                raise ValueError("empty set in set system")
            if S[0] < 0 or S[-1] >= self.n:
                raise ValueError("set member outside the ground set")
        self.lambda_ss = float(lambda_ss)
        self.beta = float(beta)
        self.label = label or f"setsystem:n={self.n}"
        self.sizes = np.array([S.size for S in self.sets], dtype=np.int64)
        members = [[] for _ in range(self.n)]
        for i in np.argsort(self.sizes, kind="stable"):
            for v in self.sets[i]:
                members[v].append(i)
        self.membership = [np.array(m, dtype=np.int64) for m in members]
        self._frozen = None
        self._D = None

    def frozen(self):
        if self._frozen is None:
            self._frozen = [frozenset(S.tolist()) for S in self.sets]
        return self._frozen

    def distance_matrix(self):
        """All-pairs ``d_Sigma`` (largest sets first, smaller ones overwrite)."""
        if self._D is None:
            D = np.full((self.n, self.n), -1, dtype=np.int64)
            for i in np.argsort(-self.sizes, kind="stable"):
                S = self.sets[i]
                D[np.ix_(S, S)] = S.size - 1
            np.fill_diagonal(D, 0)
            if (D < 0).any():
                raise ValueError("some pair is covered by no set (K1 fails)")
            self._D = D
        return self._D


def build_hierarchy(branch, depth):
    """Nested aligned blocks of sizes ``branch**j`` on ``branch**depth`` vertices.

    ``lambda = 1/branch`` and ``beta`` is the tightest value found by a (K3)
    scan.
    """
    branch, depth = int(branch), int(depth)
    if branch < 2 or depth < 1:
        raise ValueError("hierarchy needs branch >= 2 and depth >= 1")
    if branch**depth > 10**6:
        raise ValueError("hierarchy too large (more than 10**6 vertices)")
    n = branch**depth
    sets = []
    for j in range(depth + 1):
        size = branch**j
        sets.extend(np.arange(a, a + size) for a in range(0, n, size))
    ss = SetSystem(n, sets, 1.0 / branch, 1.0, label=f"setsystem:branch={branch},depth={depth}")
    ss.beta = _k3_scan(ss)[0]
    return ss


def load_set_system(path, lambda_ss, beta=None):
    """Read the line format ``n <count>`` followed by one set per line."""
    with open(path) as fh:
        lines = [ln.split() for ln in fh if ln.strip() and not ln.startswith("#")]
    if not lines or lines[0][0] != "n":
        raise ValueError("set-system file must start with 'n <count>'")
    n = int(lines[0][1])
    sets = [[int(x) for x in ln] for ln in lines[1:]]
    ss = SetSystem(n, sets, lambda_ss, beta if beta is not None else 1.0, label=f"setsystem:file={path}")
    if beta is None:
        ss.beta = _k3_scan(ss)[0]
    return ss


def save_set_system(ss, path):
    with open(path, "w") as fh:
        fh.write(f"n {ss.n}\n")
        for S in ss.sets:
            fh.write(" ".join(map(str, S.tolist())) + "\n")


def distance_sigma(ss, u, v):
    if u == v:
        return 0
    common = np.intersect1d(ss.membership[u], ss.membership[v], assume_unique=True)
    if common.size == 0:
        raise ValueError(f"no set contains both {u} and {v}")
    return int(ss.sizes[common].min()) - 1


@dataclass
class AxiomReport:
    k1: bool
    k2: bool
    k3: bool
    lambda_witnessed: float
    beta_witnessed: float
    k2_violations: list = field(default_factory=list)
    k3_violations: list = field(default_factory=list)

    @property
    def ok(self):
        return self.k1 and self.k2 and self.k3

    def to_dict(self):
        return {
            "K1": self.k1,
            "K2": self.k2,
            "K3": self.k3,
            "lambdaWitnessed": self.lambda_witnessed,
            "betaWitnessed": self.beta_witnessed,
            "k2Violations": self.k2_violations,
            "k3Violations": self.k3_violations,
        }


def _k3_scan(ss):
    """Largest ``|S_L(v)| / L`` over ``v`` and ``L >= 2``, plus violations.

    ``|S_L(v)|`` only changes at set sizes, and between changes the ratio
    falls, so it suffices to evaluate ``L = 2`` and each size ``>= 2``.
    """
    worst = 0.0
    bad = []
    for v in range(ss.n):
        ids = ss.membership[v]
        mask = np.zeros(ss.n, dtype=bool)
        sizes = ss.sizes[ids]
        j = 0
        Ls = sorted({2, *sizes[sizes >= 2].tolist()})
        for L in Ls:
            while j < ids.size and sizes[j] <= L:
                mask[ss.sets[ids[j]]] = True
                j += 1
            covered = int(mask.sum())
            r = covered / L
            worst = max(worst, r)
            if r > ss.beta * (1 + _TOL):
                bad.append((v, int(L), covered))
    return worst, bad


def check_axioms(ss):
    """Scan (K1), (K2) and (K3); failures are reported, never raised.

    (K2) requires the witness ``S'`` to be a proper subset of ``S``.
    """
    k1 = any(S.size == ss.n for S in ss.sets)
    fs = ss.frozen()
    lam_w = 1.0
    k2_bad = []
    for i, S in enumerate(ss.sets):
        size = S.size
        if size <= 1:
            continue
        need = min(ss.lambda_ss * size, size - 1)
        for t in S:
            best = 0
            for j in ss.membership[t]:
                sj = ss.sizes[j]
                if sj >= size or sj <= best:
                    continue
                if fs[j] <= fs[i]:
                    best = int(sj)
            if best < size - 1:
                lam_w = min(lam_w, best / size)
            if not _ge(best, need):
                k2_bad.append((i, int(t)))
    beta_w, k3_bad = _k3_scan(ss)
    return AxiomReport(
        k1=k1,
        k2=not k2_bad,
        k3=not k3_bad,
        lambda_witnessed=lam_w,
        beta_witnessed=beta_w,
        k2_violations=k2_bad,
        k3_violations=k3_bad,
    )


@dataclass
class CheckReport:
    name: str
    checked: int
    violations: list

    @property
    def ok(self):
        return not self.violations

    def to_dict(self):
        return {"name": self.name, "checked": self.checked, "violations": self.violations}


def check_shrinkage(ss):
    """For ``|S| >= 1/(lambda - lambda**2)`` and ``t`` in ``S``, look for a
    ``t``-bound member of size in ``[lambda**2 |S|, lambda |S|]``."""
    lam = ss.lambda_ss
    floor = 1.0 / (lam - lam * lam)
    checked = 0
    bad = []
    for i, S in enumerate(ss.sets):
        if S.size < floor * (1 - _TOL):
            continue
        lo, hi = lam * lam * S.size, lam * S.size
        for t in S:
            checked += 1
            sz = ss.sizes[ss.membership[t]]
            if not np.any([_ge(x, lo) and _le(x, hi) for x in sz]):
                bad.append((i, int(t)))
    return CheckReport("shrinkage", checked, sorted(bad))


def size_scale_count(ss):
    """Smallest ``M`` with ``lambda**(-2M) >= n``; capped at 64."""
    step = ss.lambda_ss**-2
    M = 1
    while not _ge(step**M, ss.n):
        M += 1
        if M > MAX_SIZE_SCALES:
            raise ValueError("lambda too close to 1: more than 64 size scales")
    return M


def check_scale_sets(ss):
    """Every ``t`` must lie in a set with size in each ``(step**(k-1), step**k]``."""
    step = ss.lambda_ss**-2
    M = size_scale_count(ss)
    bad = []
    for t in range(ss.n):
        sz = ss.sizes[ss.membership[t]]
        for k in range(1, M + 1):
            lo, hi = step ** (k - 1), step**k
            if not any((x > lo * (1 + _TOL)) and _le(x, hi) for x in sz):
                bad.append((t, k))
    return CheckReport("scale_sets", ss.n * M, bad)


@dataclass(frozen=True)
class CoherenceConstants:
    r: int
    gamma: float
    alpha_growth: float
    A_growth: float


def coherence_constants(ss):
    """Scale base and growth bounds implied by ``(lambda, beta)``.

    ``r`` is the smallest integer ``>= 2`` with ``lambda**(-2(r-1)) > beta``
    and ``gamma = lambda**(-2r)``.
    """
    lam, beta = ss.lambda_ss, ss.beta
    r = 2
    while not lam ** (-2 * (r - 1)) > beta:
        r += 1
    gamma = lam ** (-2 * r)
    if abs(gamma - round(gamma)) < 1e-9 * gamma:
        gamma = float(round(gamma))
    return CoherenceConstants(
        r=r,
        gamma=gamma,
        alpha_growth=lam * lam - beta / gamma,
        A_growth=beta - lam * lam / gamma,
    )


def as_geometry(ss, check=True):
    """Wrap ``d_Sigma`` as a geometry with ``gamma`` from :func:`coherence_constants`."""
    if check:
        rep = check_axioms(ss)
        if not rep.ok:
            raise ValueError(f"set system fails its axioms: {rep.to_dict()}")
    cc = coherence_constants(ss)
    return MatrixGeometry(ss.distance_matrix(), cc.gamma, kind="setsystem", label=ss.label)


def check_growth(ss, scales=None):
    """Bounded-growth bounds ``alpha*gamma**k <= P_k(v) <= A*gamma**k`` for all ``v``.

    By default the top scale is left out: its sets may not exist in a finite
    system.
    """
    cc = coherence_constants(ss)
    g = as_geometry(ss, check=False)
    ks = list(scales) if scales is not None else list(range(1, max(g.K - 1, 1) + 1))
    bad = []
    worst_lo, worst_hi = np.inf, 0.0
    for v in range(ss.n):
        prof = shell_profile(g, v)
        for k in ks:
            ratio = prof[k - 1] / g.gamma**k
            worst_lo = min(worst_lo, ratio)
            worst_hi = max(worst_hi, ratio)
            if not (_ge(ratio, cc.alpha_growth) and _le(ratio, cc.A_growth)):
                bad.append((v, k, int(prof[k - 1])))
    rep = CheckReport("growth", ss.n * len(ks), bad)
    rep.min_ratio = float(worst_lo)
    rep.max_ratio = float(worst_hi)
    return rep


def check_isotropy(ss, sample_pairs=2000, seed=0):
    """Count helpers of ``(s, t)`` inside the smallest common set ``S_st``.

    A helper ``v`` lies in ``S_st``, sits in one of the top two scales from
    ``s`` and has ``d(v, t) <= lambda |S_st|``. The count must reach
    ``(alpha/gamma) gamma**k_st`` whenever ``|S_st| >= 1/(lambda - lambda**2)``.
    All pairs are scanned when ``n <= 512``.
    """
    cc = coherence_constants(ss)
    lam = ss.lambda_ss
    D = ss.distance_matrix()
    floor = 1.0 / (lam - lam * lam)
    if ss.n <= 512:
        s_all, t_all = np.nonzero(~np.eye(ss.n, dtype=bool))
    else:
        rng = streams.stream(seed, streams.COHERENCE, 1)
        s_all = rng.integers(0, ss.n, size=sample_pairs)
        t_all = (s_all + rng.integers(1, ss.n, size=sample_pairs)) % ss.n
    bad = []
    checked = 0
    for s, t in zip(s_all.tolist(), t_all.tolist()):
        dst = D[s, t]
        size = dst + 1
        if size < floor * (1 - _TOL):
            continue
        checked += 1
        k = int(scales_of(dst, cc.gamma))
        common = np.intersect1d(ss.membership[s], ss.membership[t], assume_unique=True)
        S = ss.sets[common[np.argmin(ss.sizes[common])]]
        ds = D[s, S]
        ks = np.where(ds > 0, scales_of(np.maximum(ds, 1), cc.gamma), 0)
        good = ((ks == k) | (ks == k - 1)) & (D[S, t] <= lam * size)
        if good.sum() < (cc.alpha_growth / cc.gamma) * cc.gamma**k * (1 - _TOL):
            bad.append((s, t, int(good.sum())))
    return CheckReport("isotropy", checked, sorted(bad))
