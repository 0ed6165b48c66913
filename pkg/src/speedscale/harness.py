"""Experiment runner: configuration, coupled arrivals, replication and CSV/SVG output.

Every experiment writes ``manifest.json`` first, then one long-format CSV
(``x,value,series``) plus ``summary.csv`` (``key,value``).  Floats are written
with ``repr`` so identical runs give byte-identical files.
"""

from __future__ import annotations

import csv
import datetime as _dt
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import __version__
from .errors import ConfigError, NumericError
from .fluid import DiffusionBasis, grad_k_star, j_star_quad, k_star, phi_fluid_quad
from .model import (
    MIX_WEIGHT,
    ArrivalPmf,
    CostModel,
    ScaledGeometric,
    StateGrid,
    TabularFunction,
    arrival_pmf,
    mixture_for_variance,
)
from .rng import Streams, substream
from .solver import (
    bellman_error_mdp,
    direct_error_bounds_mc,
    evaluate_policy,
    myopic_policy,
    value_iteration,
)
from .td import THETA_BOUND, fluid_diffusion_basis, min_one_policy, polynomial_basis, tdpia

EXPERIMENTS = (
    "via-convergence",
    "policy-compare",
    "bellman-report",
    "tdpia-run",
    "basis-compare",
    "variance-study",
    "fluid-eval",
)

DEFAULTS: dict = {
    "alpha": 1.0,
    "nu": 0.5,
    "delta": 1.0 / 24.0,
    "p_success": 0.96,
    "tail_eps": 1e-10,
    "x_max": 60.0,
    "via_tol": 1e-6,
    "via_max_iters": 10_000,
    "trace_iters": 100,
    "stages": 4,
    "steps_per_stage": 30_000,
    "replications": 100,
    "basis_eta": 2.0,
    "basis_q": 2.0,
    "kappas": [1.0, 2.0, 4.0, 8.0, 12.0, 16.0, 24.0, 32.0],
    "mc_episodes": 10_000,
    "mc_points": [5.0, 20.0],
    "error_x_lo": 5.0,
    "error_x_hi": 30.0,
    "report_step": 0.5,
    "hist_bins": 40,
}

# overrides applied by --full
FULL_SCALE = {
    "tdpia-run": {"stages": 20, "steps_per_stage": 50_000},
    "variance-study": {"replications": 1000},
}


# ---------------------------------------------------------------------------
# configuration


def _coerce(key, value, default):
    try:
        if isinstance(default, list):
            if isinstance(value, str):
                value = [v for v in value.replace(";", ",").split(",") if v.strip()]
            return [float(v) for v in value]
        if isinstance(default, bool):
            return value if isinstance(value, bool) else str(value).lower() in ("1", "true", "yes")
        if isinstance(default, int):
            f = float(value)
            if f != int(f):
                raise ValueError
            return int(f)
        if isinstance(default, float):
            if isinstance(value, str) and "/" in value:
                num, den = value.split("/")
                return float(num) / float(den)
            return float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"bad value for {key!r}: {value!r}") from None
    return value


def parse_config_text(text: str) -> dict:
    """JSON object or flat ``key=value`` lines (``#`` starts a comment)."""
    stripped = text.strip()
    if stripped.startswith("{"):
        try:
            data = json.loads(stripped)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON config: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        return data
    data = {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {n}: expected key=value")
        k, v = line.split("=", 1)
        data[k.strip()] = v.strip()
    return data


def resolve_config(overrides: dict | None = None, experiment: str | None = None,
                   full: bool = False) -> dict:
    cfg = {k: (list(v) if isinstance(v, list) else v) for k, v in DEFAULTS.items()}
    if full and experiment in FULL_SCALE:
        cfg.update(FULL_SCALE[experiment])
    for k, v in (overrides or {}).items():
        if k not in DEFAULTS:
            raise ConfigError(f"unknown config key {k!r}")
        cfg[k] = _coerce(k, v, DEFAULTS[k])
    if cfg["x_max"] <= 0 or cfg["steps_per_stage"] < 1 or cfg["stages"] < 1 or cfg["replications"] < 1:
        raise ConfigError("x_max, stages, steps_per_stage and replications must be positive")
    return cfg


def load_config(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        with open(path, encoding="utf-8") as fh:
            return parse_config_text(fh.read())
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None


# ---------------------------------------------------------------------------
# model assembly


def _base_spec(cfg) -> ScaledGeometric:
    return ScaledGeometric(p_success=cfg["p_success"], delta=cfg["delta"])


def _setup(cfg):
    pmf = arrival_pmf(_base_spec(cfg), tail_eps=cfg["tail_eps"])
    model = CostModel.quadratic(nu=cfg["nu"], alpha=cfg["alpha"])
    grid = StateGrid(pmf.delta, cfg["x_max"])
    return pmf, model, grid


def _via(cfg, pmf, model, grid, V0=None, require=True, **kw):
    """Value iteration with the configured limits; ground-truth uses must converge."""
    kw.setdefault("max_iters", cfg["via_max_iters"])
    kw.setdefault("tol", cfg["via_tol"])
    res = value_iteration(model, pmf, grid, V0=V0, **kw)
    if require and not res.converged:
        raise NumericError(f"value iteration stopped at {res.iterations} sweeps without reaching tol")
    return res


def _k_star_fn(cfg):
    a = cfg["alpha"]
    return lambda x: k_star(x, a)


def _fd_basis(cfg):
    return fluid_diffusion_basis(eta=cfg["basis_eta"], q=cfg["basis_q"], alpha=cfg["alpha"])


def _report_x(cfg, grid: StateGrid) -> np.ndarray:
    """Lattice states at spacing ``report_step`` up to ``x_max``."""
    k = max(1, int(round(cfg["report_step"] / grid.delta)))
    return grid.x[::k]


def normalized_error_curve(h, model, pmf, xs, eta, grid=None, refine=True) -> np.ndarray:
    """``max_u E_c(x, u) = |eta - E_B(x)| / (x + 1)`` (the maximum is at u = 0)."""
    eb = np.asarray(bellman_error_mdp(h, model, pmf, xs, grid=grid, refine=refine))
    return np.abs(eta - eb) / (model(xs, 0.0) + 1.0)


# ---------------------------------------------------------------------------
# coupled arrivals


def coupling_parameters(kappas: Sequence[float]):
    """Recursion order and Bernoulli parameters for the monotone coupling.

    Returns ``(order, rho_z, rho)``: ``order`` lists indices into ``kappas``
    from largest to smallest variance, ``rho_z[j]`` is the target
    ``P{Z = 1}`` at recursion step ``j`` and ``rho[j]`` the parameter of the
    fresh Bernoulli used at that step.
    """
    k = np.asarray(kappas, dtype=float)
    if k.ndim != 1 or k.size == 0:
        raise ConfigError("need at least one variance level")
    if np.any(k < 1.0) or np.any(np.diff(k) <= 0):
        raise ConfigError("variance levels must be >= 1 and strictly increasing")
    order = np.argsort(-k, kind="stable")
    rz = np.array([mixture_for_variance(v).rho_z for v in k[order]])
    rho = np.empty_like(rz)
    rho[0] = rz[0]
    rho[1:] = (rz[1:] - rz[:-1]) / (1.0 - rz[:-1])
    if np.any(rho < 0) or np.any(rho > 1):
        raise ConfigError("coupling parameters fall outside [0, 1]")
    return order, rz, rho


@dataclass
class CoupledDraws:
    """Shared base arrivals ``a0_idx``, shared coin ``b`` and the coupled ``z`` per level.

    ``z`` rows follow the order of ``kappas`` (ascending); ``order`` gives the
    recursion order along which the rows are pathwise nondecreasing.
    """

    kappas: np.ndarray
    order: np.ndarray
    rho: np.ndarray
    base_delta: float
    a0_idx: np.ndarray
    b: np.ndarray
    z: np.ndarray

    def arrival_idx(self, level: int, pmf: ArrivalPmf) -> np.ndarray:
        """Arrivals of one level as indices on ``pmf``'s lattice."""
        spec = mixture_for_variance(self.kappas[level])
        r0 = int(round(self.base_delta / pmf.delta))
        rz = int(round(spec.delta_z / pmf.delta))
        if abs(r0 * pmf.delta - self.base_delta) > 1e-12 or abs(rz * pmf.delta - spec.delta_z) > 1e-9:
            raise ConfigError("level lattice does not contain the arrival support")
        return np.where(self.b, self.z[level].astype(np.int64) * rz, self.a0_idx * r0)

    def arrivals(self, level: int) -> np.ndarray:
        spec = mixture_for_variance(self.kappas[level])
        return np.where(self.b, self.z[level] * spec.delta_z, self.a0_idx * self.base_delta)

    def monotone(self) -> bool:
        z = self.z[self.order].astype(np.int8)
        return bool(np.all(np.diff(z, axis=0) >= 0))


def coupled_bernoulli_levels(kappas: Sequence[float], stream: np.random.Generator, n: int,
                             base: ArrivalPmf | None = None) -> CoupledDraws:
    """Draw ``n`` time steps of the coupled variance family.

    ``Z`` at the first recursion step is ``Bern(rho_1)``; each later step sets
    ``Z_{i+1} = Z_i + (1 - Z_i) B_{i+1}``.  ``A0`` and the mixing coin are
    shared by all levels.
    """
    order, _, rho = coupling_parameters(kappas)
    if base is None:
        base = arrival_pmf(ScaledGeometric())
    a0 = base.sample_idx(stream, n)
    b = stream.random(n) < MIX_WEIGHT
    fresh = stream.random((len(rho), n)) < rho[:, None]
    z_rec = np.empty((len(rho), n), dtype=bool)
    z_rec[0] = fresh[0]
    for j in range(1, len(rho)):
        z_rec[j] = z_rec[j - 1] | fresh[j]
    z = np.empty_like(z_rec)
    z[order] = z_rec
    return CoupledDraws(np.asarray(kappas, dtype=float), order, rho, base.delta, a0, b, z)


# ---------------------------------------------------------------------------
# output


@dataclass
class RunManifest:
    experiment: str
    config: dict
    master_seed: int
    code_version: str
    timestamp: str
    outputs: list = field(default_factory=list)


def _fmt(v) -> str:
    v = float(v)
    if v == 0.0:
        return "0.0"
    return repr(v)


def write_long_csv(path: str, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x", "value", "series"])
        for x, v, s in rows:
            w.writerow([_fmt(x), _fmt(v), s])


def write_summary(path: str, summary: dict) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["key", "value"])
        for k, v in summary.items():
            if isinstance(v, (bool, np.bool_)):
                v = int(v)
            if isinstance(v, (int, np.integer)):
                v = str(int(v))
            elif isinstance(v, (float, np.floating)):
                v = _fmt(v)
            w.writerow([k, v])


def read_long_csv(path: str) -> dict[str, tuple[np.ndarray, np.ndarray]]:
    series: dict[str, tuple[list, list]] = {}
    with open(path, encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            xs, vs = series.setdefault(row["series"], ([], []))
            xs.append(float(row["x"]))
            vs.append(float(row["value"]))
    return {k: (np.array(a), np.array(b)) for k, (a, b) in series.items()}


_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f")


def render_svg(csv_path: str, svg_path: str, title: str = "", width: int = 640, height: int = 400) -> None:
    """Line plot of every series in a long-format CSV."""
    data = read_long_csv(csv_path)
    pad = 50
    allx = np.concatenate([x for x, _ in data.values()]) if data else np.zeros(1)
    ally = np.concatenate([y for _, y in data.values()]) if data else np.zeros(1)
    ok = np.isfinite(ally)
    x0, x1 = float(allx.min()), float(allx.max())
    y0, y1 = (float(ally[ok].min()), float(ally[ok].max())) if ok.any() else (0.0, 1.0)
    if x1 == x0:
        x1 = x0 + 1.0
    if y1 == y0:
        y1 = y0 + 1.0

    def sx(v):
        return pad + (v - x0) / (x1 - x0) * (width - 2 * pad)

    def sy(v):
        return height - pad - (v - y0) / (y1 - y0) * (height - 2 * pad)

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
           f'<rect x="{pad}" y="{pad}" width="{width - 2 * pad}" height="{height - 2 * pad}" '
           'fill="none" stroke="black"/>',
           f'<text x="{width / 2:.1f}" y="20" text-anchor="middle" font-size="14">{title}</text>',
           f'<text x="{pad}" y="{height - pad + 16}" font-size="10">{x0:.4g}</text>',
           f'<text x="{width - pad}" y="{height - pad + 16}" font-size="10" text-anchor="end">{x1:.4g}</text>',
           f'<text x="{pad - 4}" y="{height - pad}" font-size="10" text-anchor="end">{y0:.4g}</text>',
           f'<text x="{pad - 4}" y="{pad + 8}" font-size="10" text-anchor="end">{y1:.4g}</text>']
    for i, (name, (x, y)) in enumerate(sorted(data.items())):
        color = _PALETTE[i % len(_PALETTE)]
        pts = " ".join(f"{sx(a):.2f},{sy(b):.2f}" for a, b in zip(x, y) if np.isfinite(b))
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.2" points="{pts}"/>')
        out.append(f'<text x="{width - pad + 4}" y="{pad + 12 * (i + 1)}" font-size="9" '
                   f'fill="{color}">{name}</text>')
    out.append("</svg>")
    with open(svg_path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(out) + "\n")


def _pmap(fn: Callable, args: list, threads: int) -> list:
    """Ordered map, in worker processes when ``threads > 1``."""
    if threads <= 1 or len(args) <= 1:
        return [fn(a) for a in args]
    with ProcessPoolExecutor(max_workers=min(threads, len(args))) as ex:
        return list(ex.map(fn, args))


# ---------------------------------------------------------------------------
# experiments


def _exp_via_convergence(cfg, seed, threads):
    pmf, model, grid = _setup(cfg)
    n = cfg["trace_iters"]
    runs = {
        "V0=0": _via(cfg, pmf, model, grid, require=False, max_iters=n),
        "V0=K*": _via(cfg, pmf, model, grid, V0=TabularFunction.from_callable(grid, _k_star_fn(cfg)),
                      require=False, max_iters=n),
    }
    rows = [(i + 1, e, name) for name, r in runs.items() for i, e in enumerate(r.error_trace)]
    summary = {}
    for name, r in runs.items():
        summary[f"iterations[{name}]"] = r.iterations
        summary[f"eta_hat[{name}]"] = r.eta_hat
    return rows, summary


def _exp_policy_compare(cfg, seed, threads):
    pmf, model, grid = _setup(cfg)
    via = _via(cfg, pmf, model, grid)
    pk = myopic_policy(_k_star_fn(cfg), model, pmf)
    x = grid.x
    phi_s, phi_k = via.policy(x), pk(x)
    rows = [(a, b, "phi_star") for a, b in zip(x, phi_s)]
    rows += [(a, b, "phi_K") for a, b in zip(x, phi_k)]
    rows += [(a, b, "phi_fluid") for a, b in zip(x, phi_fluid_quad(x, cfg["alpha"]))]
    sel = (x >= 1.0) & (x <= 0.5 * cfg["x_max"])
    rel = np.abs(phi_k[sel] - phi_s[sel]) / phi_s[sel]
    return rows, {"eta_star": via.eta_hat, "max_rel_gap": float(rel.max()),
                  "argmax_rel_gap": float(x[sel][np.argmax(rel)])}


def _exp_bellman_report(cfg, seed, threads):
    pmf, model, grid = _setup(cfg)
    via = _via(cfg, pmf, model, grid)
    ks = _k_star_fn(cfg)
    x = grid.x
    eb_k = bellman_error_mdp(ks, model, pmf, x)
    eb_h = bellman_error_mdp(via.h, model, pmf, x)
    rows = [(a, b, "bellman_K") for a, b in zip(x, eb_k)]
    rows += [(a, b, "bellman_hstar") for a, b in zip(x, eb_h)]
    rows += [(a, b, "normalized_K") for a, b in zip(x, np.abs(via.eta_hat - eb_k) / (x + 1.0))]
    rows += [(a, b, "direct_K") for a, b in zip(x, via.h.values - ks(x))]
    summary = {"eta_star": via.eta_hat, "min_bellman_K": float(eb_k.min())}
    for pt in cfg["mc_points"]:
        b = direct_error_bounds_mc(ks, model, pmf, via, pt, cfg["mc_episodes"],
                                   substream(seed, 0, f"mc/{pt!r}"))
        rows += [(pt, b.lower, "mc_lower"), (pt, b.upper, "mc_upper"),
                 (pt, b.lower_se, "mc_lower_se"), (pt, b.upper_se, "mc_upper_se"),
                 (pt, via.h(pt) - float(ks(pt)), "direct_K_at_point")]
        summary[f"mc_capped[{pt!r}]"] = b.capped
    return rows, summary


def _learned_report(cfg, pmf, model, grid, via, trace, label):
    """Rows describing one TDPIA trace: per-stage estimates and final error curve."""
    rows = []
    for k, s in enumerate(trace.stages, 1):
        rows += [(k, s.eta_hat, f"{label}/eta_hat"), (k, s.theta[0], f"{label}/theta1"),
                 (k, s.theta[1], f"{label}/theta2")]
    final = trace.stages[-1]
    h = trace.basis.value(final.theta)
    xs = _report_x(cfg, grid)
    ec = normalized_error_curve(h, model, pmf, xs, final.eta_hat)
    rows += [(a, b, f"{label}/normalized_error") for a, b in zip(xs, ec)]
    rows += [(a, b, f"{label}/h_theta") for a, b in zip(xs, h(xs))]
    eta_pol, _ = evaluate_policy(trace.final_policy, model, pmf, grid)
    sel = (xs >= cfg["error_x_lo"]) & (xs <= cfg["error_x_hi"])
    summary = {
        f"theta1[{label}]": final.theta[0],
        f"theta2[{label}]": final.theta[1],
        f"eta_hat[{label}]": final.eta_hat,
        f"policy_cost[{label}]": eta_pol,
        f"max_normalized_error[{label}]": float(ec.max()),
        f"max_normalized_error_window[{label}]": float(ec[sel].max()),
    }
    return rows, summary


def _exp_tdpia_run(cfg, seed, threads):
    pmf, model, grid = _setup(cfg)
    via = _via(cfg, pmf, model, grid)
    trace = tdpia(_fd_basis(cfg), min_one_policy(pmf.delta), model, pmf, stages=cfg["stages"],
                  steps_per_stage=cfg["steps_per_stage"], streams=Streams(seed, 0))
    rows, summary = _learned_report(cfg, pmf, model, grid, via, trace, "fd")
    xs = _report_x(cfg, grid)
    rows += [(a, via.h(a), "h_star") for a in xs]
    rows += [(a, b, "K_star") for a, b in zip(xs, k_star(xs, cfg["alpha"]))]
    summary["eta_star"] = via.eta_hat
    return rows, summary


def _exp_basis_compare(cfg, seed, threads):
    pmf, model, grid = _setup(cfg)
    via = _via(cfg, pmf, model, grid)
    n = cfg["steps_per_stage"]
    draws = [pmf.sample_idx(substream(seed, 0, f"arrivals/{k}"), n) for k in range(cfg["stages"])]
    rows, summary = [], {"eta_star": via.eta_hat}
    for label, basis in (("fd", _fd_basis(cfg)), ("poly", polynomial_basis())):
        tr = tdpia(basis, min_one_policy(pmf.delta), model, pmf, stages=cfg["stages"],
                   steps_per_stage=n, arrival_draws=draws)
        r, s = _learned_report(cfg, pmf, model, grid, via, tr, label)
        rows += r
        summary.update(s)
    return rows, summary


def _variance_rep(args):
    cfg, seed, rep = args
    kappas = cfg["kappas"]
    base = arrival_pmf(_base_spec(cfg), tail_eps=cfg["tail_eps"])
    model = CostModel.quadratic(nu=cfg["nu"], alpha=cfg["alpha"])
    pmfs = [arrival_pmf(mixture_for_variance(k, _base_spec(cfg)), tail_eps=cfg["tail_eps"]) for k in kappas]
    n = cfg["steps_per_stage"]
    draws = [[] for _ in kappas]
    monotone = True
    for k in range(cfg["stages"]):
        cd = coupled_bernoulli_levels(kappas, substream(seed, rep, f"coupled/{k}"), n, base=base)
        monotone &= cd.monotone()
        for i, pmf in enumerate(pmfs):
            draws[i].append(cd.arrival_idx(i, pmf))
    out = []
    basis = _fd_basis(cfg)
    for i, pmf in enumerate(pmfs):
        tr = tdpia(basis, min_one_policy(pmf.delta), model, pmf, stages=cfg["stages"],
                   steps_per_stage=n, arrival_draws=draws[i])
        s = tr.stages[-1]
        out.append((s.theta[0], s.theta[1], s.eta_hat))
    return np.array(out), monotone


def _exp_variance_study(cfg, seed, threads):
    kappas = cfg["kappas"]
    coupling_parameters(kappas)
    res = _pmap(_variance_rep, [(cfg, seed, r) for r in range(cfg["replications"])], threads)
    est = np.stack([r[0] for r in res])  # (rep, level, 3)
    if not all(r[1] for r in res):
        raise NumericError("coupled Bernoulli levels are not monotone")
    model = CostModel.quadratic(nu=cfg["nu"], alpha=cfg["alpha"])
    basis = _fd_basis(cfg)
    rows, summary = [], {"replications": cfg["replications"], "coupling_monotone": 1}
    edges = np.linspace(-20.0, 20.0, cfg["hist_bins"] + 1)
    centers = 0.5 * (edges[1:] + edges[:-1])
    for i, kappa in enumerate(kappas):
        tag = f"kappa={kappa:g}"
        th1, th2, eta = est[:, i, 0], est[:, i, 1], est[:, i, 2]
        rows += [(r, v, f"theta1/{tag}") for r, v in enumerate(th1)]
        rows += [(r, v, f"theta2/{tag}") for r, v in enumerate(th2)]
        ddof = 1 if len(th1) > 1 else 0
        v1, v2 = float(np.var(th1, ddof=ddof)), float(np.var(th2, ddof=ddof))
        rows += [(kappa, v1, "var_theta1"), (kappa, v2, "var_theta2")]
        summary[f"var_theta1[{tag}]"] = v1
        summary[f"var_theta2[{tag}]"] = v2
        # diagnostics: runs pinned to the projection box, and spread of the rest
        inside = (np.abs(th1) < THETA_BOUND) & (np.abs(th2) < THETA_BOUND)
        summary[f"boundary_runs[{tag}]"] = int((~inside).sum())
        if inside.sum() > 1:
            summary[f"var_theta1_interior[{tag}]"] = float(np.var(th1[inside], ddof=1))
            summary[f"var_theta2_interior[{tag}]"] = float(np.var(th2[inside], ddof=1))
        for name, th in (("theta1", th1), ("theta2", th2)):
            counts, _ = np.histogram(th, bins=edges)
            rows += [(c, m, f"hist_{name}/{tag}") for c, m in zip(centers, counts)]
        pmf = arrival_pmf(mixture_for_variance(kappa, _base_spec(cfg)), tail_eps=cfg["tail_eps"])
        grid = StateGrid(pmf.delta, cfg["x_max"])
        xs = _report_x(cfg, grid)
        theta_bar = np.array([th1.mean(), th2.mean()])
        ec = normalized_error_curve(basis.value(theta_bar), model, pmf, xs, float(eta.mean()))
        rows += [(a, b, f"normalized_error/{tag}") for a, b in zip(xs, ec)]
    return rows, summary


def _exp_fluid_eval(cfg, seed, threads):
    a = cfg["alpha"]
    x = np.arange(0.0, cfg["x_max"] + 1e-12, cfg["report_step"])
    diff = DiffusionBasis(eta=cfg["basis_eta"], q=cfg["basis_q"], alpha=a)
    series = {
        "K_star": k_star(x, a),
        "grad_K_star": grad_k_star(x, a),
        "J_star": j_star_quad(x),
        "phi_fluid": phi_fluid_quad(x, a),
        "diffusion_h": diff(x),
    }
    rows = [(u, v, name) for name, vals in series.items() for u, v in zip(x, vals)]
    return rows, {"points": len(x)}


_RUNNERS = {
    "via-convergence": _exp_via_convergence,
    "policy-compare": _exp_policy_compare,
    "bellman-report": _exp_bellman_report,
    "tdpia-run": _exp_tdpia_run,
    "basis-compare": _exp_basis_compare,
    "variance-study": _exp_variance_study,
    "fluid-eval": _exp_fluid_eval,
}


def run_experiment(name: str, config: dict | None, master_seed: int, out_dir: str,
                   threads: int = 1, full: bool = False, svg: bool = False) -> RunManifest:
    """Run one experiment and write manifest, CSVs and optional SVG into ``out_dir``."""
    if name not in _RUNNERS:
        raise ConfigError(f"unknown experiment {name!r}; choose from {', '.join(EXPERIMENTS)}")
    if not 0 <= int(master_seed) < 2**64:
        raise ConfigError("seed must be an unsigned 64-bit integer")
    if threads < 1:
        raise ConfigError("threads must be >= 1")
    cfg = resolve_config(config, name, full)
    os.makedirs(out_dir, exist_ok=True)
    stem = name.replace("-", "_")
    outputs = [f"{stem}.csv", "summary.csv"] + ([f"{stem}.svg"] if svg else [])
    manifest = RunManifest(name, cfg, int(master_seed), __version__,
                           _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"), outputs)
    with open(os.path.join(out_dir, "manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(asdict(manifest), fh, indent=2, sort_keys=True)
        fh.write("\n")
    rows, summary = _RUNNERS[name](cfg, int(master_seed), threads)
    csv_path = os.path.join(out_dir, outputs[0])
    write_long_csv(csv_path, rows)
    write_summary(os.path.join(out_dir, "summary.csv"), summary)
    if svg:
        render_svg(csv_path, os.path.join(out_dir, outputs[2]), title=name)
    return manifest
