"""Seeded experiments driven by a JSON config.

Each ``run_*`` function takes a config dict and an output directory and
returns ``(exit_code, payload)``. Tabular results go to CSV with
provenance in ``#`` comment lines; single results go to JSON.
"""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict
import csv
import hashlib
import io
import json
import math
import os
import time

import numpy as np
from scipy.stats import ks_2samp

from . import __version__
from . import geometry as geo
from . import measure, routing, sampler
from . import setsystem as sets

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2

DEFAULTS = {
    "cost": "logdensity:alpha=1",
    "theta": 1.0,
    "sampler": "product",
    "pairs": 1000,
    "seeds": [0, 1, 2, 3, 4],
    "budget_factor": 10.0,
    "fallback": True,
    "rho": 0.5,
    "edges_per_vertex": 1,
    "samples": 10000,
    "perturb": 1.0,
    "exponents": [0.6, 0.7, 0.8, 0.9, 1.0, 1.1, 1.2, 1.3, 1.4],
}

ROW_FIELDS = [
    "config_hash", "version", "geometry", "sampler", "n", "gamma", "cost_spec",
    "B", "lambda", "seed", "pairs", "success_rate", "p50", "p90", "p99",
    "mean_long_edges", "edges", "mean_degree", "edge_density", "by_scale",
    "mu", "tau", "epsilon", "delta", "Bminus", "Bplus", "Ba", "status",
]


class ConfigError(ValueError):
    """Malformed config or geometry/cost spec (exit code 2)."""


def version_string():
    return f"v{__version__}"


def config_hash(cfg):
    """sha256 of the canonical JSON form of ``cfg``."""
    text = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()


def _kv(body, text):
    out = {}
    for part in filter(None, body.split(",")):
        key, eq, val = part.partition("=")
        if not eq:
            raise ConfigError(f"bad geometry spec {text!r}: expected key=value")
        out[key.strip()] = val.strip()
    return out


def parse_geometry_spec(text):
    """Build a geometry from ``cycle:n=..``, ``torus:side=..,dims=..`` or
    ``setsystem:branch=..,depth=..`` (or ``setsystem:file=..,lambda=..``).

    Lattices take an optional ``gamma`` (default 2). Set systems use the
    coherence base derived from their parameters. Returns ``(geometry,
    set_system_or_None)``.
    """
    kind, colon, body = str(text).partition(":")
    if not colon:
        raise ConfigError(f"bad geometry spec {text!r}: missing ':'")
    kv = _kv(body, text)
    allowed = {
        "cycle": {"n", "gamma"},
        "torus": {"side", "dims", "gamma"},
        "setsystem": {"branch", "depth", "file", "lambda"},
    }
    if kind not in allowed:
        raise ConfigError(f"unknown geometry kind {kind!r}")
    extra = sorted(set(kv) - allowed[kind])
    if extra:
        raise ConfigError(f"bad geometry spec {text!r}: unknown keys {extra}")
    try:
        if kind == "cycle":
            return geo.cycle(int(kv["n"]), float(kv.get("gamma", 2))), None
        if kind == "torus":
            return geo.torus(int(kv["side"]), int(kv.get("dims", 2)), float(kv.get("gamma", 2))), None
        if "file" in kv:
            ss = sets.load_set_system(kv["file"], float(kv["lambda"]))
        else:
            ss = sets.build_hierarchy(int(kv["branch"]), int(kv["depth"]))
        return sets.as_geometry(ss), ss
    except KeyError as exc:
        raise ConfigError(f"bad geometry spec {text!r}: missing {exc.args[0]}") from exc
    except (ValueError, OSError) as exc:
        raise ConfigError(f"bad geometry spec {text!r}: {exc}") from exc


def load_config(path, seed=None, out=None):
    """Read a JSON config, fill defaults and apply CLI overrides."""
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(raw, dict) or "geometry" not in raw:
        raise ConfigError("config must be a JSON object with a 'geometry' field")
    cfg = {**DEFAULTS, **raw}
    if seed is not None:
        cfg["seeds"] = [int(seed)]
    if out is not None:
        cfg["out"] = str(out)
    cfg.setdefault("out", "results")
    if not cfg["seeds"]:
        raise ConfigError("seeds list is empty")
    if cfg["sampler"] not in ("product", "rba", "exact"):
        raise ConfigError(f"unknown sampler {cfg['sampler']!r}")
    return cfg


class Setup:
    """Geometry, cost geometry and budget thresholds for one config."""

    def __init__(self, cfg):
        self.cfg = cfg
        self.g, self.ss = parse_geometry_spec(cfg["geometry"])
        try:
            self.cost = measure.parse_cost_spec(cfg["cost"])
            self.cg = measure.build_cost_geometry(self.g, self.cost)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        self._th = None

    @property
    def th(self):
        if self._th is None:
            self._th = measure.thresholds(self.cg, float(self.cfg["theta"]))
        return self._th

    def named_budget(self, name):
        table = {"Ba": self.th.Ba, "Bminus": self.th.Bminus, "Bplus": self.th.Bplus, "B0": self.th.B0}
        if name not in table:
            raise ConfigError(f"unknown budget name {name!r}")
        return table[name]

    def budgets(self):
        """Budgets from ``budgets`` (numbers or names) or a ``sweep`` grid."""
        cfg = self.cfg
        if "sweep" in cfg:
            sw = cfg["sweep"]
            f = float(sw.get("factor", 1.0))
            pts = int(sw.get("points", 5))
            lo = self.named_budget(sw.get("from", "Bminus")) * f
            hi = self.named_budget(sw.get("to", "Bplus")) * f
            if pts < 1 or not (0 < lo <= hi) or not math.isfinite(hi):
                raise ConfigError("sweep grid is empty or its bounds are invalid")
            if sw.get("scale", "log") == "log":
                grid = np.geomspace(lo, hi, pts)
            else:
                grid = np.linspace(lo, hi, pts)
            return [float(b) for b in grid]
        raw = cfg.get("budgets", ["Ba"])
        if not isinstance(raw, list) or not raw:
            raise ConfigError("budgets must be a non-empty list")
        out = [self.named_budget(b) if isinstance(b, str) else float(b) for b in raw]
        if any(not (b > 0 and math.isfinite(b)) for b in out):
            raise ConfigError("budgets must be positive and finite")
        return out

    def substrate(self):
        try:
            return geo.build_substrate(self.g, verify=False)
        except geo.SubstrateError as exc:
            raise ConfigError(f"routing needs a substrate: {exc}") from exc


def _fmt(x):
    if isinstance(x, float):
        return repr(x) if math.isfinite(x) else "nan"
    return str(x)


def write_csv(path, rows, fields, comments=()):
    """CSV with ``#`` comment lines first; returns the body text (no comments)."""
    body = io.StringIO()
    w = csv.writer(body, lineterminator="\n")
    w.writerow(fields)
    for r in rows:
        w.writerow([_fmt(r.get(f, "")) for f in fields])
    with open(path, "w") as fh:
        for c in comments:
            fh.write(f"# {c}\n")
        fh.write(body.getvalue())
    return body.getvalue()


def read_csv(path):
    with open(path) as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    return list(csv.DictReader(lines))


def plot_script(csv_name, x, series):
    """gnuplot script plotting ``series`` columns against ``x``."""
    lines = [
        'set datafile separator ","',
        "set key autotitle columnhead",
        f"set xlabel '{x}'",
        "set logscale x",
        f"set terminal pngcairo size 900,{300 * len(series)}",
        f"set output '{csv_name.rsplit('.', 1)[0]}.png'",
        f"set multiplot layout {len(series)},1",
    ]
    for col in series:
        lines.append(f"set ylabel '{col}'")
        lines.append(f"plot '{csv_name}' using (column('{x}')):(column('{col}')) with points pt 7")
    lines.append("unset multiplot")
    return "\n".join(lines) + "\n"


def _pool_size(cells):
    cap = os.environ.get("NAVLAB_THREADS")
    n = int(cap) if cap else (os.cpu_count() or 1)
    return max(1, min(n, cells))


def _comments(cfg, h):
    return [
        f"version {version_string()}",
        f"config_hash {h}",
        f"generated {time.strftime('%Y-%m-%dT%H:%M:%S')}",
    ]


def _write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def stored_config(cfg):
    """The config as stored and hashed: everything except the output location."""
    return {k: v for k, v in cfg.items() if k != "out"}


def _save_config(cfg, out):
    os.makedirs(out, exist_ok=True)
    stored = stored_config(cfg)
    _write_json(os.path.join(out, "config.json"), stored)
    return config_hash(stored)


def _sample(setup, B, seed, sol):
    cfg = setup.cfg
    kind = cfg["sampler"]
    if kind == "product":
        return sampler.sample_product(setup.cg, sol.q_star, seed)
    if kind == "rba":
        return sampler.sample_rba(setup.g, int(cfg["edges_per_vertex"]), seed)
    return sampler.sample_bounded_cost_exact(setup.cg, B, seed)


def _cell(setup, sub, B, seed, base):
    """One (budget, seed) cell of a sweep; errors become the row status."""
    cfg, g, cg = setup.cfg, setup.g, setup.cg
    row = dict(base, B=B, seed=seed, pairs=int(cfg["pairs"]))
    try:
        sol = measure.solve_profile(cg, B)
        sp = measure.sandwich_params(sol)
        row.update({"lambda": sol.lam, "mu": sp.mu, "tau": sp.tau, "epsilon": sp.epsilon, "delta": sp.delta})
        e = _sample(setup, B, seed, sol)
        ng = routing.build_nav_graph(g, sub, e)
        factor = float(cfg["budget_factor"])
        st = routing.route_trial_batch(
            ng, int(cfg["pairs"]), lambda n: max(1, math.ceil(factor * math.log(n) ** 2)),
            seed=seed, fallback=bool(cfg["fallback"]),
        )
        theta = float(cfg["theta"])
        row.update(st.to_dict())
        row.update(
            edges=len(e),
            mean_degree=2 * len(e) / g.n,
            edge_density=len(e) / (g.n * math.log(g.n) ** (theta + 1)),
            by_scale=";".join(str(int(x)) for x in sampler.edge_profile_of(cg, e)),
            status="ok" if st.success_rate > 0 else "no-success",
        )
    except Exception as exc:  # noqa: BLE001 - recorded per row, sweep continues
        row["status"] = f"error: {type(exc).__name__}: {exc}".replace("\n", " ")
    return row


def _base_row(setup, h):
    th = setup.th
    return {
        "config_hash": h,
        "version": version_string(),
        "geometry": setup.g.spec(),
        "sampler": setup.cfg["sampler"],
        "n": setup.g.n,
        "gamma": setup.g.gamma,
        "cost_spec": str(setup.cost),
        "Bminus": th.Bminus,
        "Bplus": th.Bplus,
        "Ba": th.Ba,
    }


def run_cells(setup, cells, h):
    """Evaluate ``(B, seed)`` cells in a thread pool; rows sorted by ``(B, seed)``."""
    sub = setup.substrate()
    base = _base_row(setup, h)
    with ThreadPoolExecutor(_pool_size(len(cells))) as pool:
        rows = list(pool.map(lambda c: _cell(setup, sub, c[0], c[1], base), cells))
    rows.sort(key=lambda r: (r["B"], r["seed"]))
    return rows


def run_coherence(cfg, out):
    setup_g, ss = parse_geometry_spec(cfg["geometry"])
    rep = geo.verify_coherence(setup_g, rho=float(cfg["rho"]), seed=int(cfg["seeds"][0]))
    payload = {"coherence": rep.to_dict()}
    ok = rep.pass_h1 and rep.pass_h2
    if ss is not None:
        checks = [
            sets.check_axioms(ss),
            sets.check_shrinkage(ss),
            sets.check_scale_sets(ss),
            sets.check_growth(ss),
            sets.check_isotropy(ss, seed=int(cfg["seeds"][0])),
        ]
        payload["setsystem"] = {
            "lambda": ss.lambda_ss,
            "beta": ss.beta,
            "constants": asdict(sets.coherence_constants(ss)),
            "checks": [c.to_dict() for c in checks],
        }
        ok = ok and all(c.ok for c in checks)
    payload["pass"] = bool(ok)
    payload["configHash"] = _save_config(cfg, out)
    _write_json(os.path.join(out, "coherence.json"), payload)
    return (EXIT_OK if ok else EXIT_FAIL), payload


def _kkt(sol):
    stat, budget = measure.kkt_residuals(sol)
    return {"stationarity": [float(x) for x in stat], "budget": float(budget)}


def run_optimize(cfg, out):
    setup = Setup(cfg)
    B = cfg.get("B", "Ba")
    B = setup.named_budget(B) if isinstance(B, str) else float(B)
    if not (B >= 0 and math.isfinite(B)):
        raise ConfigError("B must be finite and non-negative")
    sol = measure.solve_profile(setup.cg, B)
    payload = {
        "geometry": setup.g.spec(),
        "cost": str(setup.cost),
        "solution": sol.to_dict(),
        "roundtripError": abs(measure.g_of_lambda(setup.cg, sol.lam) - B) if math.isfinite(sol.lam) else 0.0,
        "kktResiduals": _kkt(sol),
        "thresholds": setup.th.to_dict(),
        "windowOrdered": bool(setup.th.Bminus <= setup.th.Ba <= setup.th.Bplus),
    }
    try:
        payload["sandwich"] = measure.sandwich_params(sol).to_dict()
    except ValueError as exc:
        payload["sandwich"] = {"error": str(exc)}
    payload["configHash"] = _save_config(cfg, out)
    _write_json(os.path.join(out, "optimize.json"), payload)
    return EXIT_OK, payload


def run_sweep(cfg, out):
    setup = Setup(cfg)
    budgets = setup.budgets()
    h = _save_config(cfg, out)
    cells = [(B, int(s)) for B in budgets for s in cfg["seeds"]]
    rows = run_cells(setup, cells, h)
    write_csv(os.path.join(out, "sweep.csv"), rows, ROW_FIELDS, _comments(cfg, h))
    with open(os.path.join(out, "sweep.gp"), "w") as fh:
        fh.write(plot_script("sweep.csv", "B", ["success_rate", "edge_density"]))
    bad = any(r["status"].startswith("error") for r in rows)
    return (EXIT_FAIL if bad else EXIT_OK), rows


def product_profiles(cg, q_star, seeds):
    """Edge profiles :func:`sampler.sample_product` would give for ``seeds``."""
    return np.array(
        [[sampler.product_count(cg, q_star, s, c) for c in range(cg.K)] for s in seeds],
        dtype=np.int64,
    )


def compare_profiles(a, b, z_max=3.0):
    """Per-class mean gap in pooled standard errors plus the KS statistic."""
    se = np.sqrt(a.var(axis=0, ddof=1) / len(a) + b.var(axis=0, ddof=1) / len(b))
    gap = a.mean(axis=0) - b.mean(axis=0)
    z = np.where(se > 0, gap / np.where(se > 0, se, 1), np.where(gap == 0, 0.0, np.inf))
    ks = [float(ks_2samp(a[:, c], b[:, c]).statistic) for c in range(a.shape[1])]
    return {
        "meanA": a.mean(axis=0).tolist(),
        "meanB": b.mean(axis=0).tolist(),
        "z": z.tolist(),
        "ks": ks,
        "consistent": bool(np.all(np.abs(z) <= z_max)),
    }


def run_sandwich_check(cfg, out):
    setup = Setup(cfg)
    N = int(cfg["samples"])
    if N < 2:
        raise ConfigError("no samples: need at least 2 draws per law")
    B = cfg.get("B", "Ba")
    B = setup.named_budget(B) if isinstance(B, str) else float(B)
    seed = int(cfg["seeds"][0])
    sol = measure.solve_profile(setup.cg, B)
    exact = sampler.sample_profile_law(setup.cg, B, N, seed, method=cfg.get("method", "auto"))
    q = np.minimum(1.0, sol.q_star * float(cfg["perturb"]))
    prod = product_profiles(setup.cg, q, range(seed, seed + N))
    rep = compare_profiles(exact, prod)
    rep.update(B=B, samples=N, perturb=float(cfg["perturb"]), scales=setup.cg.scales.tolist())
    rep["verdict"] = "consistent" if rep["consistent"] else "inconsistent"
    rep["configHash"] = _save_config(cfg, out)
    _write_json(os.path.join(out, "sandwich.json"), rep)
    return (EXIT_OK if rep["consistent"] else EXIT_FAIL), rep


def run_exponent_sweep(cfg, out):
    setup = Setup(cfg)
    if setup.cost.family != "logdensity":
        raise ConfigError("exponent sweep needs a logdensity cost")
    exps = [float(x) for x in cfg["exponents"]]
    if not exps:
        raise ConfigError("exponent grid is empty")
    alpha = setup.cost.alpha
    budgets = [measure.g_of_lambda(setup.cg, e * alpha) for e in exps]
    h = _save_config(cfg, out)
    cells = [(B, int(s)) for B in budgets for s in cfg["seeds"]]
    rows = run_cells(setup, cells, h)
    for r in rows:
        r["exponent"] = exps[budgets.index(r["B"])]
    fields = ["exponent"] + ROW_FIELDS
    write_csv(os.path.join(out, "exponent.csv"), rows, fields, _comments(cfg, h))
    with open(os.path.join(out, "exponent.gp"), "w") as fh:
        fh.write(plot_script("exponent.csv", "exponent", ["mean_degree", "success_rate"]))
    bad = any(r["status"].startswith("error") for r in rows)
    return (EXIT_FAIL if bad else EXIT_OK), rows


COMMANDS = {
    "coherence": run_coherence,
    "optimize": run_optimize,
    "sweep": run_sweep,
    "sandwich-check": run_sandwich_check,
    "exponent-sweep": run_exponent_sweep,
}
