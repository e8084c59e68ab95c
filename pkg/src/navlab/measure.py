"""Maximum-entropy edge profiles under a total-cost budget.

Bookkeeping follows a single convention throughout: ``P_k`` is the number
of vertex pairs in cost class ``k``, ``p_k = P_k / n``, an edge profile
``m`` counts edges per class and ``a = m / n``. A graph is feasible for
budget ``B`` when ``sum_k c_k m_k <= B n``; the unconstrained optimum
``m_k = P_k / 2`` costs ``Bbar = sum_k c_k p_k / 2`` per vertex.

All logarithms are natural.
"""
from dataclasses import dataclass, field
import logging
import math

import numpy as np
from scipy.special import expit, gammaln

from .geometry import LatticeGeometry, growth_constant, scales_of, shell_profile

log = logging.getLogger(__name__)

INVERT_RTOL = 1e-12
INVERT_MAX_ITER = 200
ORACLE_MAX_SCALES = 4
ORACLE_MAX_CLASS = 64


@dataclass(frozen=True)
class CostSpec:
    family: str
    alpha: float = None
    values: tuple = ()

    def __str__(self):
        if self.family == "explicit":
            return "explicit:" + ",".join(repr(float(v)) for v in self.values)
        return f"{self.family}:alpha={self.alpha!r}"


def parse_cost_spec(text):
    """Parse ``indexing:alpha=1``, ``logdensity:alpha=1`` or ``explicit:1,2,3``."""
    if isinstance(text, CostSpec):
        return text
    family, _, rest = str(text).partition(":")
    family = family.strip().lower()
    if family == "explicit":
        try:
            values = tuple(float(x) for x in rest.split(",") if x.strip())
        except ValueError as exc:
            raise ValueError(f"bad explicit cost list {rest!r}") from exc
        if not values:
            raise ValueError("explicit cost list is empty")
        return CostSpec("explicit", values=values)
    if family in ("indexing", "logdensity"):
        key, _, val = rest.partition("=")
        if key.strip() != "alpha":
            raise ValueError(f"cost spec {text!r} needs alpha=<value>")
        alpha = float(val)
        if not alpha > 0:
            raise ValueError("alpha must be positive")
        return CostSpec(family, alpha=alpha)
    raise ValueError(f"unknown cost family {family!r}")


@dataclass(frozen=True)
class CostGeometry:
    """Class sizes and per-class costs over the non-empty scales.

    ``scales`` holds the scale index of each class; scales without any
    vertex pair are dropped, so ``K`` here counts the active classes only.
    """

    n: int
    scales: np.ndarray
    P: np.ndarray
    costs: np.ndarray
    geometry: object = field(default=None, compare=False, repr=False)
    family: str = "explicit"
    alpha_cost: float = None

    @property
    def K(self):
        return len(self.P)

    @property
    def p(self):
        return self.P / self.n

    @property
    def Bbar(self):
        return 0.5 * float(np.sum(self.costs * self.p))

    @property
    def max_cost(self):
        """Per-vertex cost of the complete graph."""
        return float(np.sum(self.costs * self.P)) / self.n

    def class_of_scale(self, k):
        """Position of scale ``k`` in :attr:`scales` (-1 when inactive)."""
        pos = np.searchsorted(self.scales, k)
        hit = (pos < len(self.scales)) & (self.scales[np.minimum(pos, len(self.scales) - 1)] == k)
        return np.where(hit, pos, -1)


def from_classes(n, P, costs, scales=None):
    """Cost geometry without an underlying geometry (for direct use and tests)."""
    P = np.asarray(P, dtype=np.int64)
    costs = np.asarray(costs, dtype=float)
    if P.shape != costs.shape:
        raise ValueError("P and costs differ in length")
    if np.any(costs <= 0):
        raise ValueError("costs must be positive")
    if np.any(P < 0):
        raise ValueError("class sizes must be non-negative")
    scales = np.arange(1, len(P) + 1) if scales is None else np.asarray(scales)
    return CostGeometry(int(n), scales, P, costs)


def class_sizes(g):
    """Total number of pairs ``P_k`` at each scale ``k = 1..K``."""
    if isinstance(g, LatticeGeometry):
        return g.n * shell_profile(g, 0).astype(np.int64) // 2
    D = g.distance_matrix()
    iu = np.triu_indices(g.n, 1)
    ks = scales_of(D[iu], g.gamma)
    return np.bincount(ks, minlength=g.K + 1)[1 : g.K + 1].astype(np.int64)


def build_cost_geometry(g, cost_spec):
    """Attach a scale-consistent cost to ``g``.

    Explicit cost lists may give one value per scale ``1..K`` or one per
    non-empty scale.
    """
    spec = parse_cost_spec(cost_spec)
    P_all = class_sizes(g)
    active = np.flatnonzero(P_all > 0)
    scales = active + 1
    P = P_all[active]
    if spec.family == "explicit":
        vals = np.asarray(spec.values, dtype=float)
        if len(vals) == g.K:
            costs = vals[active]
        elif len(vals) == len(active):
            costs = vals
        else:
            raise ValueError(f"K mismatch: {len(vals)} costs for {g.K} scales ({len(active)} non-empty)")
    elif spec.family == "indexing":
        costs = scales / spec.alpha
    else:
        costs = np.log(P / g.n) / spec.alpha
    if np.any(costs <= 0):
        raise ValueError("non-positive cost (log-density needs p_k > 1 on every non-empty scale)")
    return CostGeometry(g.n, scales, P, costs.astype(float), g, spec.family, spec.alpha)


def _log_binom(P, m):
    return gammaln(P + 1.0) - gammaln(m + 1.0) - gammaln(P - m + 1.0)


def profile_entropy(cg, m):
    """``sum_k log binom(P_k, m_k)``; ``m`` may carry leading batch axes."""
    m = np.asarray(m)
    if np.any(m < 0) or np.any(m > cg.P):
        raise ValueError("edge profile outside [0, P_k]")
    return np.sum(_log_binom(cg.P, m), axis=-1)


def continuous_entropy(cg, m):
    """Binary-entropy relaxation ``sum_k P_k h(m_k / P_k)`` of the profile entropy."""
    m = np.asarray(m, dtype=float)
    P = cg.P.astype(float)
    with np.errstate(divide="ignore", invalid="ignore"):
        x = np.where(m > 0, m * np.log(m / P), 0.0)
        y = np.where(P - m > 0, (P - m) * np.log((P - m) / P), 0.0)
    return -np.sum(x + y, axis=-1)


def g_of_lambda(cg, lam):
    """Expected per-vertex cost ``sum_k c_k p_k / (1 + exp(lam c_k))``."""
    if lam < 0:
        raise ValueError("lambda must be non-negative")
    if math.isinf(lam):
        return 0.0
    return float(np.sum(cg.costs * cg.p * expit(-lam * cg.costs)))


def invert_budget(cg, B):
    """Solve ``g(lambda) = B`` by bisection; ``0`` when ``B >= Bbar``.

    The upper bracket starts at 1 and doubles until ``g`` drops below ``B``.
    ``B = 0`` returns ``inf``.
    """
    if B < 0:
        raise ValueError("budget must be non-negative")
    if B >= cg.Bbar:
        return 0.0
    if B == 0:
        return math.inf
    lo, hi = 0.0, 1.0
    while g_of_lambda(cg, hi) >= B:
        lo, hi = hi, 2.0 * hi
        if hi > 1e300:
            return math.inf
    for _ in range(INVERT_MAX_ITER):
        mid = 0.5 * (lo + hi)
        gm = g_of_lambda(cg, mid)
        if abs(gm - B) <= INVERT_RTOL * B or mid in (lo, hi):
            return mid
        if gm > B:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


@dataclass
class EntropicSolution:
    B: float
    lam: float
    a_star: np.ndarray
    m_star: np.ndarray
    q_star: np.ndarray
    Bbar: float
    cg: CostGeometry = field(repr=False, compare=False)

    def to_dict(self):
        return {
            "B": self.B,
            "lambda": self.lam,
            "aStar": self.a_star.tolist(),
            "mStar": self.m_star.tolist(),
            "qStar": self.q_star.tolist(),
            "Bbar": self.Bbar,
            "scales": self.cg.scales.tolist(),
        }


def solution_at_lambda(cg, lam, B=None):
    q = np.zeros(cg.K) if math.isinf(lam) else expit(-lam * cg.costs)
    a = cg.p * q
    return EntropicSolution(
        B=g_of_lambda(cg, lam) if B is None else float(B),
        lam=float(lam),
        a_star=a,
        m_star=a * cg.n,
        q_star=q,
        Bbar=cg.Bbar,
        cg=cg,
    )


def solve_profile(cg, B):
    """Closed-form maximiser ``a_k = p_k / (1 + exp(lambda(B) c_k))``."""
    return solution_at_lambda(cg, invert_budget(cg, B), B)


def kkt_residuals(sol):
    """Stationarity residuals per class and the budget residual."""
    cg = sol.cg
    if math.isinf(sol.lam):
        return np.zeros(cg.K), float(np.sum(sol.a_star * cg.costs))
    a, p = sol.a_star, cg.p
    stat = np.log(a) - np.log(p - a) + sol.lam * cg.costs
    budget = float(np.sum(a * cg.costs)) - min(sol.B, cg.Bbar)
    return stat, budget


@dataclass
class SandwichParams:
    mu: float
    tau: float
    epsilon: float
    delta: float
    delta_simple: float
    valid: bool

    def to_dict(self):
        return {
            "mu": self.mu,
            "tau": self.tau,
            "epsilon": self.epsilon,
            "delta": self.delta,
            "deltaSimple": self.delta_simple,
            "valid": self.valid,
        }


def thickness(cg, m_star):
    return float(np.min(np.minimum(m_star, cg.P - m_star)))


def sandwich_params(sol):
    """Thickness, condition number and the sandwich pair ``(epsilon, delta)``.

    ``delta`` is ``2 exp(-mu (eps**2/12 - tau))``; ``delta_simple`` is the
    simplified ``2 n**(-5K)``. ``valid`` means ``eps**2 > 12 tau``.
    """
    cg = sol.cg
    mu = thickness(cg, sol.m_star)
    if mu <= 0:
        raise ValueError("zero thickness: degenerate budget")
    logn = math.log(cg.n)
    tau = 5 * cg.K * logn / mu
    eps = math.sqrt(24 / logn)
    delta = 2 * math.exp(min(700.0, -mu * (eps * eps / 12 - tau)))
    return SandwichParams(
        mu=mu,
        tau=tau,
        epsilon=eps,
        delta=delta,
        delta_simple=2 * math.exp(-5 * cg.K * logn),
        valid=eps * eps > 12 * tau,
    )


def mu_of_lambda(cg, lam):
    return thickness(cg, solution_at_lambda(cg, lam).m_star)


def sandwich_lambda0(cg):
    """Largest ``lambda`` with ``tau <= 1/log n`` (``nan`` if none exists).

    Equivalent to ``mu(lambda) >= 5 K log(n)**2``; ``mu`` falls with
    ``lambda`` so bisection applies.
    """
    target = 5 * cg.K * math.log(cg.n) ** 2
    if mu_of_lambda(cg, 0.0) < target:
        return math.nan
    lo, hi = 0.0, 1.0
    while mu_of_lambda(cg, hi) >= target:
        lo, hi = hi, 2 * hi
    for _ in range(INVERT_MAX_ITER):
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        if mu_of_lambda(cg, mid) >= target:
            lo = mid
        else:
            hi = mid
    return lo


def lambda0_closed_form(cg):
    """Large-``p_k`` approximation ``min_k log(n log p_k / (5K log^2 n)) / c_k``.

    Classes with ``p_k <= 1`` are skipped.
    """
    p = cg.p
    ok = p > 1
    if not ok.all():
        log.warning("skipping %d classes with p_k <= 1 in lambda0", int((~ok).sum()))
    if not ok.any():
        return math.nan
    n, K = cg.n, cg.K
    vals = np.log(n * np.log(p[ok]) / (5 * K * math.log(n) ** 2)) / cg.costs[ok]
    return float(vals.min())


def budget_ba(cg):
    """Budget at which edge probabilities become ``Theta(1 / N_u(d))``.

    Log-density costs give ``q_k = 1/(1 + p_k)`` at ``lambda = alpha``.
    Indexing costs ``k/alpha`` are matched through ``log p_k ~ k log gamma``,
    i.e. ``lambda = alpha log gamma``. Other families have no such budget.
    """
    if cg.family == "logdensity":
        return g_of_lambda(cg, cg.alpha_cost)
    if cg.family == "indexing":
        return g_of_lambda(cg, cg.alpha_cost * math.log(cg.geometry.gamma))
    return math.nan


@dataclass
class Thresholds:
    theta: float
    alpha_growth: float
    k_theta: float
    lambda0: float
    lambda0_closed_form: float
    B0: float
    lambda_theta: float
    Lambda_theta: float
    Bminus: float
    Bplus: float
    Bminus_sandwich: float
    Ba: float

    def to_dict(self):
        def clean(x):
            return None if isinstance(x, float) and not math.isfinite(x) else x

        return {
            "theta": self.theta,
            "alphaGrowth": self.alpha_growth,
            "kTheta": self.k_theta,
            "lambda0": clean(self.lambda0),
            "lambda0ClosedForm": clean(self.lambda0_closed_form),
            "B0": clean(self.B0),
            "lambdaTheta": self.lambda_theta,
            "LambdaTheta": self.Lambda_theta,
            "Bminus": self.Bminus,
            "Bplus": self.Bplus,
            "BminusSandwich": clean(self.Bminus_sandwich),
            "Ba": clean(self.Ba),
        }


def thresholds(cg, theta, alpha_growth=None, gamma=None):
    """Richness/sparsity multipliers and the budget window they induce.

    ``lambda_theta`` and ``Lambda_theta`` are the min and max over classes
    ``k >= k_theta`` (with ``p_k > 1``) of
    ``(log p_k / c_k) (1 +- theta loglog n / log p_k)``. ``Bminus`` is
    ``g(lambda_theta)`` and ``Bplus`` is ``g(Lambda_theta)``.
    ``Bminus_sandwich`` additionally enforces ``B >= B0`` where ``B0 =
    g(lambda0)`` is the smallest budget with ``tau <= 1/log n`` (``inf``
    when no budget reaches it).
    """
    if theta < 0:
        raise ValueError("theta must be non-negative")
    g = cg.geometry
    if gamma is None:
        if g is None:
            raise ValueError("gamma needed when the cost geometry has no geometry")
        gamma = g.gamma
    if alpha_growth is None:
        alpha_growth = growth_constant(g) if g is not None else 1.0
    n = cg.n
    loglog = math.log(math.log(n))
    k_theta = max(1.0, (theta * loglog - math.log(alpha_growth)) / math.log(gamma))
    p = cg.p
    sel = (cg.scales >= k_theta - 1e-12) & (p > 1)
    if not sel.any():
        raise ValueError("all scales lie below k_theta: geometry too small for theta")
    lp, c = np.log(p[sel]), cg.costs[sel]
    lam_theta = float(np.min(lp / c * (1 + theta * loglog / lp)))
    Lam_theta = float(np.max(lp / c * (1 - theta * loglog / lp)))
    lam0 = sandwich_lambda0(cg)
    B0 = g_of_lambda(cg, lam0) if not math.isnan(lam0) else math.inf
    Bminus = g_of_lambda(cg, lam_theta)
    Bplus = g_of_lambda(cg, max(Lam_theta, 0.0))
    return Thresholds(
        theta=float(theta),
        alpha_growth=float(alpha_growth),
        k_theta=float(k_theta),
        lambda0=lam0,
        lambda0_closed_form=lambda0_closed_form(cg),
        B0=B0,
        lambda_theta=lam_theta,
        Lambda_theta=Lam_theta,
        Bminus=Bminus,
        Bplus=Bplus,
        Bminus_sandwich=max(B0, Bminus),
        Ba=budget_ba(cg),
    )


def feasible_profiles(cg, B, limit=10**7):
    """All integer profiles with ``0 <= m_k <= P_k`` and ``sum c_k m_k <= B n``.

    Built class by class, pruning on the running cost. Raises when more than
    ``limit`` partial profiles would be materialised.
    """
    cap = B * cg.n * (1 + 1e-12) + 1e-12
    prof = np.zeros((1, 0), dtype=np.int64)
    cost = np.zeros(1)
    for k in range(cg.K):
        room = np.floor((cap - cost) / cg.costs[k]).astype(np.int64)
        top = np.minimum(room, cg.P[k])
        counts = top + 1
        total = int(counts.sum())
        if total > limit:
            raise ValueError(f"profile lattice too large (> {limit} points)")
        rep = np.repeat(np.arange(len(cost)), counts)
        offs = np.arange(total) - np.repeat(np.cumsum(counts) - counts, counts)
        prof = np.concatenate([prof[rep], offs[:, None]], axis=1)
        cost = cost[rep] + cg.costs[k] * offs
    return prof, cost


def brute_force_profile(cg, B):
    """Integer profile of maximum entropy within the budget, by enumeration.

    Independent oracle for :func:`solve_profile`; restricted to ``K <= 4``
    and ``P_k <= 64``.
    """
    if cg.K > ORACLE_MAX_SCALES or np.any(cg.P > ORACLE_MAX_CLASS):
        raise ValueError("instance too large for the brute-force oracle")
    prof, _ = feasible_profiles(cg, B)
    ent = profile_entropy(cg, prof)
    return prof[int(np.argmax(ent))]
