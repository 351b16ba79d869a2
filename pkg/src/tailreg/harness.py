"""Declarative Monte Carlo experiments, CSV/SVG emission, and config parsing.

Replication streams are cell-indexed (stream_id = cell_index * reps + rep),
so execution order and thread count never change numeric output.  Wall-time
measurement is opt-in: emitted rows carry wall_ms = 0 unless requested, so
reruns of one config + seed are byte-identical.
"""

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .contamination import Adversary, ModelSpec, generate
from .designs import gaussian_design, generalized_design
from .errors import ConfigError, PreconditionError, TailregError
from .estimators import (
    Thm5Rule,
    choose_t,
    depth_max,
    lad_fit,
    truncated_lad_1d,
)
from .matching import GaussianFamily, build_matching, fano_delta
from .numerics import RngStream
from .sq_hardness import build_instance, chi2_avg, probe_alt_moments, verify_instance

KINDS = (
    "rate_1d",
    "rate_hd",
    "lad_rate",
    "gamma_effect",
    "l2_trunc_demo",
    "matching_check",
    "hardness_check",
    "fano_curve",
)

CSV_HEADER = "kind,n,p,eps,estimator,t_used,rep_count,mean_err,median_err,se,wall_ms"

ESTIMATORS = ("lad", "trunc_lad", "depth")


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str
    n_grid: tuple
    p: int
    eps_grid: tuple
    sigma: float
    adversary: Adversary
    estimators: tuple
    t_policy: object
    reps: int
    base_seed: int
    gammas: tuple = (1.0, 2.0)  # gamma_effect sweeps these designs
    m: int = 4  # hardness_check
    delta: float = 0.02  # hardness_check

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown experiment kind {self.kind!r}")
        object.__setattr__(self, "n_grid", tuple(int(n) for n in self.n_grid))
        object.__setattr__(self, "eps_grid", tuple(float(e) for e in self.eps_grid))
        object.__setattr__(self, "estimators", tuple(self.estimators))
        object.__setattr__(self, "gammas", tuple(float(g) for g in self.gammas))
        if not self.n_grid or not self.eps_grid:
            raise ConfigError("n_grid and eps_grid must be non-empty")
        if any(n < 1 for n in self.n_grid):
            raise ConfigError("sample sizes must be positive")
        if any(not 0.0 <= e < 0.5 for e in self.eps_grid):
            raise ConfigError("eps values must lie in [0, 1/2)")
        if self.reps < 1:
            raise ConfigError("reps must be at least 1")
        if self.p < 1:
            raise ConfigError("p must be positive")
        if not self.sigma > 0:
            raise ConfigError("sigma must be positive")


@dataclass(frozen=True)
class ResultRow:
    kind: str
    n: int
    p: int
    eps: float
    estimator: str
    t_used: float
    rep_count: int
    mean_err: float
    median_err: float
    se: float
    wall_ms: float


def _beta_truth(p):
    beta = np.zeros(p)
    beta[0] = 1.0
    return beta


def _fit_named(name, sample, t, rng):
    if name == "lad":
        return lad_fit(sample.X, sample.y).beta_hat
    if name == "trunc_lad":
        if sample.X.shape[1] != 1:
            raise PreconditionError("trunc_lad is the 1-D truncated estimator")
        return truncated_lad_1d(sample.X[:, 0], sample.y, t).beta_hat
    if name == "depth":
        return depth_max(sample.X, sample.y, t, rng=rng).beta_hat
    raise ConfigError(f"unknown estimator {name!r}")


@dataclass(frozen=True)
class _Cell:
    index: int
    n: int
    eps: float
    label: str
    estimator: str
    model: ModelSpec
    t: float


def _rate_cells(config):
    kind = config.kind
    if kind == "gamma_effect":
        axis = [(f"trunc_lad_g{g:g}", "trunc_lad", g) for g in config.gammas]
    else:
        names = config.estimators or ("lad",)
        axis = [(name, name, None) for name in names]
    cells = []
    index = 0
    for n in config.n_grid:
        for eps in config.eps_grid:
            for label, est, gamma in axis:
                if kind == "rate_1d":
                    design, p = gaussian_design(1), 1
                    policy = config.t_policy
                elif kind == "gamma_effect":
                    design, p = generalized_design(gamma, 1), 1
                    policy = Thm5Rule(gamma)
                else:
                    design, p = gaussian_design(config.p), config.p
                    policy = config.t_policy
                model = ModelSpec(
                    _beta_truth(p), config.sigma, eps, design, config.adversary
                )
                t = choose_t(policy, n, p, eps)
                cells.append(_Cell(index, n, eps, label, est, model, t))
                index += 1
    return cells


def _run_rate_kind(config, threads, measure_time):
    cells = _rate_cells(config)
    reps = config.reps
    errs = np.full((len(cells), reps), np.inf)
    fail = [None] * len(cells)
    walls = np.zeros(len(cells))

    def task(args):
        cell, rep = args
        t0 = time.perf_counter() if measure_time else 0.0
        rng = RngStream(config.base_seed, cell.index * reps + rep)
        try:
            sample = generate(cell.model, cell.n, rng)
            beta_hat = _fit_named(cell.estimator, sample, cell.t, rng)
            errs[cell.index, rep] = float(
                np.linalg.norm(beta_hat - cell.model.beta)
            )
        except TailregError as exc:
            fail[cell.index] = type(exc).__name__
        if measure_time:
            walls[cell.index] += (time.perf_counter() - t0) * 1e3

    jobs = [(cell, rep) for cell in cells for rep in range(reps)]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(task, jobs))
    else:
        for job in jobs:
            task(job)

    rows = []
    for cell in cells:
        e = errs[cell.index]
        if fail[cell.index] is not None:
            rows.append(
                ResultRow(
                    config.kind,
                    cell.n,
                    cell.model.p,
                    cell.eps,
                    f"{cell.label}!{fail[cell.index]}",
                    cell.t,
                    0,
                    math.inf,
                    math.inf,
                    0.0,
                    walls[cell.index],
                )
            )
            continue
        rows.append(
            ResultRow(
                config.kind,
                cell.n,
                cell.model.p,
                cell.eps,
                cell.label,
                cell.t,
                reps,
                float(e.mean()),
                float(np.median(e)),
                float(e.std(ddof=1) / math.sqrt(reps)) if reps > 1 else 0.0,
                walls[cell.index],
            )
        )
    return rows


def _run_l2_demo(config):
    n = config.n_grid[0]
    p = config.p
    ts = np.linspace(max(math.sqrt(p) - 5.0, 0.0), math.sqrt(p) + 5.0, 41)
    fracs = np.empty((config.reps, ts.size))
    for rep in range(config.reps):
        rng = RngStream(config.base_seed, rep)
        X = rng.normal(size=(n, p))
        norms = np.linalg.norm(X, axis=1)
        fracs[rep] = (norms[:, None] >= ts[None, :]).mean(axis=0)
    rows = []
    for j, t in enumerate(ts):
        col = fracs[:, j]
        rows.append(
            ResultRow(
                config.kind,
                n,
                p,
                0.0,
                "l2_fraction",
                float(t),
                config.reps,
                float(col.mean()),
                float(np.median(col)),
                float(col.std(ddof=1) / math.sqrt(config.reps))
                if config.reps > 1
                else 0.0,
                0.0,
            )
        )
    return rows


def random_matchable_family(rng, epsilon, sigma):
    """A Gaussian family (m in 2..6) whose spread keeps the total variation
    below eps/(1-eps) by the closed two-sided bound."""
    m = 2 + int(rng.integers(0, 5))
    width = 0.9 * epsilon * sigma * math.sqrt(2.0 * math.pi)
    means = (rng.uniform(size=m) - 0.5) * width
    return GaussianFamily(tuple(means), sigma)


def _run_matching_check(config):
    eps = config.eps_grid[0]
    rows = []
    for rep in range(config.reps):
        rng = RngStream(config.base_seed, rep)
        family = random_matchable_family(rng, eps, config.sigma)
        bundle = build_matching(family, eps)
        mass_dev = max(abs(q.mass() - 1.0) for q in bundle.q)
        min_val = min(float(q.values.min()) for q in bundle.q)
        rows.append(
            ResultRow(
                config.kind,
                rep,
                1,
                eps,
                "matching_bundle",
                0.0,
                family.m,
                bundle.sup_residual,
                mass_dev,
                max(0.0, -min_val),
                0.0,
            )
        )
    return rows


def _run_hardness_check(config):
    eps = config.eps_grid[0]
    inst = build_instance(config.m, eps, config.delta)
    metrics = verify_instance(inst)
    chi2 = chi2_avg(inst)
    v = _beta_truth(config.p)
    z = probe_alt_moments(inst, v, config.n_grid[0], RngStream(config.base_seed, 0))
    named = [
        ("kappa", metrics["kappa"]),
        ("g_moment_resid", metrics["g_moment_resid"]),
        ("ay_moment_resid", metrics["ay_moment_resid"]),
        ("ay_mass_resid", metrics["ay_mass_resid"]),
        ("marginal_resid", metrics["marginal_resid"]),
        ("fy_bound_violation", max(0.0, metrics["fy_bound_excess"])),
        ("chi2_avg", chi2),
        ("probe_max_absz", float(np.abs(z).max())),
    ]
    return [
        ResultRow(
            config.kind,
            config.n_grid[0],
            config.p,
            eps,
            name,
            0.0,
            1,
            value,
            value,
            0.0,
            0.0,
        )
        for name, value in named
    ]


def _run_fano_curve(config):
    rows = []
    for n in config.n_grid:
        for eps in config.eps_grid:
            val = fano_delta(n, config.p, config.sigma, eps)
            rows.append(
                ResultRow(
                    config.kind, n, config.p, eps, "fano_delta", 0.0, 1, val, val, 0.0, 0.0
                )
            )
    return rows


def run_experiment(config, threads=1, measure_time=False):
    """Run one declarative experiment; rows are deterministic given the
    config and base seed (wall_ms stays 0 unless measure_time is set)."""
    if threads < 1:
        raise ConfigError("threads must be at least 1")
    if config.kind in ("rate_1d", "rate_hd", "lad_rate", "gamma_effect"):
        return _run_rate_kind(config, threads, measure_time)
    if config.kind == "l2_trunc_demo":
        return _run_l2_demo(config)
    if config.kind == "matching_check":
        return _run_matching_check(config)
    if config.kind == "hardness_check":
        return _run_hardness_check(config)
    if config.kind == "fano_curve":
        return _run_fano_curve(config)
    raise ConfigError(f"unknown experiment kind {config.kind!r}")


# ---------------------------------------------------------------------------
# CSV


def _fmt(value):
    return f"{value:.10g}"


def emit_csv(rows, path):
    """Write rows with the fixed header, floats at 10 significant digits."""
    if not rows:
        raise PreconditionError("no rows to emit")
    lines = [CSV_HEADER]
    for r in rows:
        if "," in r.estimator or "," in r.kind:
            raise PreconditionError("kind/estimator must not contain commas")
        lines.append(
            f"{r.kind},{r.n},{r.p},{_fmt(r.eps)},{r.estimator},{_fmt(r.t_used)},"
            f"{r.rep_count},{_fmt(r.mean_err)},{_fmt(r.median_err)},{_fmt(r.se)},"
            f"{_fmt(r.wall_ms)}"
        )
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def parse_csv(path):
    with open(path, encoding="ascii") as fh:
        lines = [ln for ln in fh.read().splitlines() if ln]
    if not lines or lines[0] != CSV_HEADER:
        raise ConfigError("missing or unexpected CSV header")
    rows = []
    for ln in lines[1:]:
        f = ln.split(",")
        if len(f) != 11:
            raise ConfigError(f"bad CSV row: {ln!r}")
        rows.append(
            ResultRow(
                f[0],
                int(f[1]),
                int(f[2]),
                float(f[3]),
                f[4],
                float(f[5]),
                int(f[6]),
                float(f[7]),
                float(f[8]),
                float(f[9]),
                float(f[10]),
            )
        )
    return rows


# ---------------------------------------------------------------------------
# SVG log-log chart

_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def emit_svg_loglog(rows, path):
    """Self-contained log-log scatter+line chart of median error against n,
    one series per estimator."""
    if not rows:
        raise PreconditionError("no rows to plot")
    series = {}
    for r in rows:
        if r.n > 0 and np.isfinite(r.median_err) and r.median_err > 0:
            series.setdefault(r.estimator, []).append(
                (math.log10(r.n), math.log10(r.median_err))
            )
    width, height = 640.0, 480.0
    ml, mr, mt, mb = 70.0, 160.0, 20.0, 50.0
    pw, ph = width - ml - mr, height - mt - mb
    pts = [p for ps in series.values() for p in ps]
    if pts:
        x0 = math.floor(min(p[0] for p in pts))
        x1 = math.ceil(max(p[0] for p in pts))
        y0 = math.floor(min(p[1] for p in pts))
        y1 = math.ceil(max(p[1] for p in pts))
    else:
        x0, x1, y0, y1 = 0, 1, -1, 0
    if x1 == x0:
        x1 = x0 + 1
    if y1 == y0:
        y1 = y0 + 1

    def px(x):
        return ml + (x - x0) / (x1 - x0) * pw

    def py(y):
        return mt + (y1 - y) / (y1 - y0) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width:g}" '
        f'height="{height:g}" viewBox="0 0 {width:g} {height:g}">',
        f'<rect x="0" y="0" width="{width:g}" height="{height:g}" fill="white"/>',
        f'<rect x="{ml:.2f}" y="{mt:.2f}" width="{pw:.2f}" height="{ph:.2f}" '
        'fill="none" stroke="black" stroke-width="1"/>',
    ]
    for dec in range(x0, x1 + 1):
        out.append(
            f'<line x1="{px(dec):.2f}" y1="{py(y0):.2f}" x2="{px(dec):.2f}" '
            f'y2="{py(y1):.2f}" stroke="#cccccc" stroke-width="0.5"/>'
        )
        out.append(
            f'<text x="{px(dec):.2f}" y="{height - mb + 18:.2f}" font-size="12" '
            f'text-anchor="middle">1e{dec}</text>'
        )
    for dec in range(y0, y1 + 1):
        out.append(
            f'<line x1="{px(x0):.2f}" y1="{py(dec):.2f}" x2="{px(x1):.2f}" '
            f'y2="{py(dec):.2f}" stroke="#cccccc" stroke-width="0.5"/>'
        )
        out.append(
            f'<text x="{ml - 6:.2f}" y="{py(dec) + 4:.2f}" font-size="12" '
            f'text-anchor="end">1e{dec}</text>'
        )
    out.append(
        f'<text x="{ml + pw / 2:.2f}" y="{height - 12:.2f}" font-size="13" '
        'text-anchor="middle">n</text>'
    )
    out.append(
        f'<text x="16" y="{mt + ph / 2:.2f}" font-size="13" text-anchor="middle" '
        f'transform="rotate(-90 16 {mt + ph / 2:.2f})">median error</text>'
    )
    for idx, (name, ps) in enumerate(series.items()):
        color = _PALETTE[idx % len(_PALETTE)]
        ps = sorted(ps)
        coords = " ".join(f"{px(x):.2f},{py(y):.2f}" for x, y in ps)
        out.append(
            f'<polyline points="{coords}" fill="none" stroke="{color}" '
            'stroke-width="1.5"/>'
        )
        for x, y in ps:
            out.append(
                f'<circle cx="{px(x):.2f}" cy="{py(y):.2f}" r="3" fill="{color}"/>'
            )
        ly = mt + 16 + 16 * idx
        out.append(
            f'<line x1="{width - mr + 8:.2f}" y1="{ly:.2f}" '
            f'x2="{width - mr + 28:.2f}" y2="{ly:.2f}" stroke="{color}" '
            'stroke-width="1.5"/>'
        )
        out.append(
            f'<text x="{width - mr + 32:.2f}" y="{ly + 4:.2f}" '
            f'font-size="12">{name}</text>'
        )
    out.append("</svg>")
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("\n".join(out) + "\n")


# ---------------------------------------------------------------------------
# Flat key=value config files


def parse_config_text(text):
    raw = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected key=value, got {line!r}")
        key, value = stripped.split("=", 1)
        key = key.strip()
        if key in raw:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        raw[key] = value.strip()
    return raw


def load_config(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return parse_config_text(fh.read())
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc


def _parse_list(value, cast):
    try:
        return tuple(cast(item.strip()) for item in value.split(",") if item.strip())
    except ValueError as exc:
        raise ConfigError(f"bad list value {value!r}") from exc


def parse_adversary(spec):
    from . import contamination as c

    name, _, arg = spec.partition(":")
    try:
        if name == "none":
            return c.NoContamination()
        if name == "flip_sign":
            return c.FlipSign()
        if name == "nonuniform_lb":
            return c.NonUniformLB()
        if name == "point_mass":
            return c.PointMass(float(arg))
        if name == "sparse_additive":
            return c.SparseAdditive(float(arg))
        if name == "matched_pair":
            return c.MatchedPair(float(arg))
    except ValueError as exc:
        raise ConfigError(f"bad adversary argument in {spec!r}") from exc
    raise ConfigError(f"unknown adversary {spec!r}")


def parse_policy(spec):
    from . import estimators as e

    name, _, arg = spec.partition(":")
    try:
        if name == "fixed":
            return e.FixedT(float(arg))
        if name == "thm1":
            return e.Thm1Rule()
        if name == "thm2":
            return e.Thm2Rule()
        if name == "thm5":
            return e.Thm5Rule(float(arg))
    except ValueError as exc:
        raise ConfigError(f"bad policy argument in {spec!r}") from exc
    raise ConfigError(f"unknown truncation policy {spec!r}")


_CONFIG_KEYS = {
    "kind",
    "n_grid",
    "p",
    "eps_grid",
    "sigma",
    "adversary",
    "estimators",
    "t_policy",
    "reps",
    "seed",
    "gammas",
    "m",
    "delta",
}


def build_experiment_config(raw, seed_override=None):
    unknown = set(raw) - _CONFIG_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    if "kind" not in raw:
        raise ConfigError("config needs a kind")
    try:
        cfg = ExperimentConfig(
            kind=raw["kind"],
            n_grid=_parse_list(raw.get("n_grid", "1000"), int),
            p=int(raw.get("p", "1")),
            eps_grid=_parse_list(raw.get("eps_grid", "0"), float),
            sigma=float(raw.get("sigma", "1")),
            adversary=parse_adversary(raw.get("adversary", "none")),
            estimators=_parse_list(raw.get("estimators", "lad"), str),
            t_policy=parse_policy(raw.get("t_policy", "fixed:0")),
            reps=int(raw.get("reps", "10")),
            base_seed=int(raw.get("seed", "1")),
            gammas=_parse_list(raw.get("gammas", "1,2"), float),
            m=int(raw.get("m", "4")),
            delta=float(raw.get("delta", "0.02")),
        )
    except ValueError as exc:
        raise ConfigError(f"bad config value: {exc}") from exc
    if seed_override is not None:
        cfg = replace(cfg, base_seed=int(seed_override))
    return cfg
