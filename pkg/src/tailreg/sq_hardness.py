"""Conditional hidden-direction hard instance at desk scale.

Builds the contamination pair (D, D_y = phi + f_y) whose induced
conditional law A_y matches the first m Gaussian moments for every y while
preserving the standard normal covariate marginal, certifies the
construction numerically, and samples from both the null and the planted
alternative.
"""

import io
import math
from dataclasses import dataclass

import numpy as np

from .contamination import ContaminatedSample
from .errors import (
    ConstructionError,
    InfeasibleParametersError,
    PreconditionError,
)
from .numerics import (
    Grid1D,
    TabulatedDensity,
    cheb_min_inf_solve,
    default_hardness_grid,
    gaussian_pdf,
    integrate_grid,
    normal_pdf,
)


def hermite_table(x, max_degree):
    """Normalized probabilists' Hermite values he_0..he_max_degree at x,
    by the three-term recurrence; shape (max_degree + 1, len(x))."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    out = np.empty((max_degree + 1, x.size))
    out[0] = 1.0
    if max_degree >= 1:
        out[1] = x
    for k in range(1, max_degree):
        out[k + 1] = (x * out[k] - math.sqrt(k) * out[k - 1]) / math.sqrt(k + 1)
    return out


def hermite_eval(k, x):
    """he_k(x) for scalar or array x."""
    if k < 0:
        raise PreconditionError("degree must be non-negative")
    vals = hermite_table(x, max(k, 1))[k]
    return float(vals[0]) if np.ndim(x) == 0 else vals


class HermiteBasis:
    """Orthonormal-under-Gaussian Hermite basis up to a fixed degree."""

    def __init__(self, max_degree):
        if max_degree < 0:
            raise PreconditionError("max_degree must be non-negative")
        self.max_degree = max_degree

    def eval(self, k, x):
        if k > self.max_degree:
            raise PreconditionError(f"degree {k} above basis cap {self.max_degree}")
        return hermite_eval(k, x)

    def table(self, x):
        return hermite_table(x, self.max_degree)


def hermite_shift_identity_check(i, rho, mu, grid=None):
    """Residual |E he_i(rho mu + sqrt(1-rho^2) G) - rho^i he_i(mu)| by
    quadrature over the Gaussian weight."""
    if not 0 < rho < 1:
        raise PreconditionError("rho must lie in (0, 1)")
    grid = grid or Grid1D.uniform(-12.0, 12.0, 4001)
    g = grid.nodes
    lhs = integrate_grid(
        hermite_eval(i, rho * mu + math.sqrt(1.0 - rho * rho) * g) * normal_pdf(g),
        grid,
    )
    return abs(lhs - rho**i * hermite_eval(i, mu))


@dataclass(frozen=True)
class GFunctions:
    """Moment-matching fluctuation profiles r_i = g_i / phi on a grid."""

    grid: Grid1D
    r_tables: np.ndarray  # (m, K)
    achieved_B: np.ndarray
    target_B: np.ndarray


def _moment_rows(grid, m):
    he = hermite_table(grid.nodes, m)
    return he * (normal_pdf(grid.nodes) * grid.weights)[None, :]


def sup_hermite_window(i, m, points=20001):
    """2 * sup of |he_i| over |x| <= sqrt(32 m); the polynomial is monotone
    past its last root, so the endpoint is included explicitly."""
    a = math.sqrt(32.0 * m)
    xs = np.linspace(-a, a, points)
    return 2.0 * float(np.max(np.abs(hermite_eval(i, xs))))


def build_g(m, grid_x=None):
    """For each i in [m], the minimal-sup-norm r_i with
    integral he_j r_i phi = 1{i = j} for j in [0:m]; g_i = phi r_i."""
    if m < 1:
        raise PreconditionError("m must be a positive integer")
    grid_x = grid_x or default_hardness_grid(m)
    rows = _moment_rows(grid_x, m)
    r_tables = np.empty((m, grid_x.size))
    achieved = np.empty(m)
    target = np.empty(m)
    for i in range(1, m + 1):
        e_i = np.zeros(m + 1)
        e_i[i] = 1.0
        r = cheb_min_inf_solve(rows, e_i)
        r_tables[i - 1] = r
        achieved[i - 1] = float(np.max(np.abs(r)))
        target[i - 1] = sup_hermite_window(i, m)
        if achieved[i - 1] > target[i - 1]:
            raise ConstructionError(
                f"achieved sup |g_{i}|/phi = {achieved[i-1]:.6g} exceeds the "
                f"window bound {target[i-1]:.6g}"
            )
    return GFunctions(grid_x, r_tables, achieved, target)


@dataclass(frozen=True)
class HardInstance:
    """All artifacts of the hard-instance construction."""

    m: int
    epsilon: float
    delta: float
    sigma2: float
    grid_x: Grid1D
    grid_y: Grid1D
    g_over_phi: np.ndarray  # (m, Kx)
    achieved_B: np.ndarray
    target_B: np.ndarray
    kappa: float
    D: TabulatedDensity
    R: TabulatedDensity

    def a_coeffs(self, y):
        """Closed-form fluctuation polynomials a_i(y), shape (m, len(y))."""
        he = hermite_table(y, self.m)[1:]
        scale = -((1.0 - self.epsilon) / self.epsilon) * self.delta ** np.arange(
            1, self.m + 1
        )
        return scale[:, None] * he

    def r_at(self, x):
        """g_i(x)/phi(x) tables interpolated at x, shape (m, len(x))."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return np.stack(
            [np.interp(x, self.grid_x.nodes, row) for row in self.g_over_phi]
        )

    def D_at(self, y):
        """Contaminated y-marginal density, in closed form off the grid."""
        arr = np.atleast_1d(np.asarray(y, dtype=float))
        phi = normal_pdf(arr)
        fluct = np.abs(self.a_coeffs(arr)) * self.achieved_B[:, None]
        out = (1.0 - self.kappa) * phi + phi * fluct.sum(axis=0)
        return float(out[0]) if np.ndim(y) == 0 else out

    def R_at(self, y):
        return (1.0 - self.epsilon) * normal_pdf(y) + self.epsilon * self.D_at(y)

    def density_Ay(self, y, x):
        """Conditional hidden-direction density A_y(x)."""
        y = float(y)
        x = np.asarray(x, dtype=float)
        eps = self.epsilon
        phi_y = normal_pdf(y)
        d_y = self.D_at(y)
        phi_x = normal_pdf(x)
        shift = gaussian_pdf(x, self.delta * y, math.sqrt(self.sigma2))
        fluct = self.a_coeffs(np.array([y]))[:, 0] @ self.r_at(x)
        num = (1.0 - eps) * phi_y * shift + eps * d_y * phi_x + eps * phi_y * phi_x * fluct
        return num / ((1.0 - eps) * phi_y + eps * d_y)

    def contaminated_response_tables(self, xp):
        """E_x density rows on grid_y for projections xp (k, Ky):
        E_x(y) = D(y) + phi(y) sum_i a_i(y) g_i(x)/phi(x)."""
        xp = np.atleast_1d(np.asarray(xp, dtype=float))
        phi_y = normal_pdf(self.grid_y.nodes)
        a_mat = self.a_coeffs(self.grid_y.nodes)  # (m, Ky)
        r_vals = self.r_at(xp)  # (m, k)
        rows = self.D.values[None, :] + phi_y[None, :] * (r_vals.T @ a_mat)
        return rows

    def sample_contaminated_responses(self, xp, rng):
        """One inverse-CDF draw from E_x per projection value."""
        xp = np.atleast_1d(np.asarray(xp, dtype=float))
        k = xp.size
        u = rng.uniform(size=k)
        out = np.empty(k)
        nodes = self.grid_y.nodes
        dy = np.diff(nodes)
        for lo in range(0, k, 2048):
            rows = self.contaminated_response_tables(xp[lo : lo + 2048])
            if rows.min() < -1e-12:
                raise ConstructionError(
                    f"tabulated E_x dips to {rows.min():.3e} below -1e-12"
                )
            np.clip(rows, 0.0, None, out=rows)
            inc = 0.5 * (rows[:, 1:] + rows[:, :-1]) * dy[None, :]
            cdf = np.zeros_like(rows)
            np.cumsum(inc, axis=1, out=cdf[:, 1:])
            cdf /= cdf[:, -1:]
            for j in range(rows.shape[0]):
                out[lo + j] = np.interp(u[lo + j], cdf[j], nodes)
        return out


def build_instance(m, epsilon, delta, grid_x=None, grid_y=None):
    """Assemble the hard instance; refuses when the fluctuation budget
    kappa = sum_i B_i int phi |a_i| exceeds 1 (D would not be a density)."""
    if m < 1:
        raise PreconditionError("m must be a positive integer")
    if not 0.0 < epsilon < 0.5:
        raise PreconditionError("epsilon must lie in (0, 1/2)")
    if not 0.0 < delta < epsilon:
        raise PreconditionError("delta must lie in (0, epsilon)")
    grid_x = grid_x or default_hardness_grid(m)
    grid_y = grid_y or default_hardness_grid(m)
    g = build_g(m, grid_x)

    phi_y = normal_pdf(grid_y.nodes)
    scale = ((1.0 - epsilon) / epsilon) * delta ** np.arange(1, m + 1)
    abs_he = np.abs(hermite_table(grid_y.nodes, m)[1:])
    abs_a = scale[:, None] * abs_he  # |a_i(y)| tables
    int_abs = (abs_a * phi_y[None, :]) @ grid_y.weights
    terms = g.achieved_B * int_abs
    kappa = float(terms.sum())
    if kappa > 1.0:
        detail = ", ".join(
            f"B_{i+1} * int phi|a_{i+1}| = {terms[i]:.4g}" for i in range(m)
        )
        raise InfeasibleParametersError(
            f"fluctuation budget kappa = {kappa:.4g} > 1 ({detail})"
        )
    d_vals = (1.0 - kappa) * phi_y + phi_y * (abs_a * g.achieved_B[:, None]).sum(axis=0)
    density_d = TabulatedDensity(grid_y, d_vals)
    density_r = TabulatedDensity(
        grid_y, (1.0 - epsilon) * phi_y + epsilon * density_d.values
    )
    return HardInstance(
        m=int(m),
        epsilon=float(epsilon),
        delta=float(delta),
        sigma2=1.0 - float(delta) ** 2,
        grid_x=grid_x,
        grid_y=grid_y,
        g_over_phi=g.r_tables,
        achieved_B=g.achieved_B,
        target_B=g.target_B,
        kappa=kappa,
        D=density_d,
        R=density_r,
    )


def density_Ay(instance, y, x):
    return instance.density_Ay(y, x)


def verify_instance(instance, y_checks=None):
    """Numeric certification of the construction; returns a metrics dict."""
    inst = instance
    m = inst.m
    gx, gy = inst.grid_x, inst.grid_y
    metrics = {}

    rows = _moment_rows(gx, m)
    moments = rows @ inst.g_over_phi.T  # (m+1, m)
    want = np.zeros((m + 1, m))
    want[np.arange(1, m + 1), np.arange(m)] = 1.0
    metrics["g_moment_resid"] = float(np.max(np.abs(moments - want)))
    metrics["kappa"] = inst.kappa
    metrics["achieved_over_target"] = float(
        np.max(inst.achieved_B / inst.target_B)
    )

    if y_checks is None:
        y_checks = np.linspace(-6.0, 6.0, 41)
    he_rows = hermite_table(gx.nodes, m)[1:] * gx.weights[None, :]
    mom_max = 0.0
    mass_max = 0.0
    neg_min = 0.0
    for y in y_checks:
        a_vals = inst.density_Ay(float(y), gx.nodes)
        neg_min = min(neg_min, float(a_vals.min()))
        mom_max = max(mom_max, float(np.max(np.abs(he_rows @ a_vals))))
        mass_max = max(mass_max, abs(float(a_vals @ gx.weights) - 1.0))
    metrics["ay_moment_resid"] = mom_max
    metrics["ay_mass_resid"] = mass_max
    metrics["ay_min_value"] = neg_min

    phi_y = normal_pdf(gy.nodes)
    c = (inst.a_coeffs(gy.nodes) * phi_y[None, :]) @ gy.weights  # (m,)
    mass_d = float(integrate_grid(inst.D.values, gy))
    marginal = normal_pdf(gx.nodes) * (mass_d + c @ inst.g_over_phi)
    metrics["marginal_resid"] = float(
        np.max(np.abs(marginal - normal_pdf(gx.nodes)))
    )
    metrics["D_mass_resid"] = abs(mass_d - 1.0)
    metrics["R_mass_resid"] = abs(float(integrate_grid(inst.R.values, gy)) - 1.0)

    # pointwise |f_y(x)| <= phi(x), i.e. phi(y) |sum a_i(y) r_i(x)| <= D(y)
    a_mat = inst.a_coeffs(gy.nodes)
    d_vals = inst.D.values
    worst = -np.inf
    for lo in range(0, gy.size, 256):
        sl = slice(lo, lo + 256)
        combo = np.abs(a_mat[:, sl].T @ inst.g_over_phi)  # (chunk, Kx)
        excess = phi_y[sl, None] * combo - d_vals[sl, None]
        worst = max(worst, float(excess.max()))
    metrics["fy_bound_excess"] = worst
    return metrics


def chi2_avg(instance, chunk=256):
    """E_{y ~ R} chi^2(A_y, N(0,1)) by double grid quadrature."""
    inst = instance
    gx, gy = inst.grid_x, inst.grid_y
    x = gx.nodes
    phi_x = normal_pdf(x)
    eps = inst.epsilon
    sd = math.sqrt(inst.sigma2)
    r_mat = inst.g_over_phi  # (m, Kx)
    total = 0.0
    for lo in range(0, gy.size, chunk):
        y = gy.nodes[lo : lo + chunk]
        phi_y = normal_pdf(y)
        d_y = inst.D_at(y)
        a_mat = inst.a_coeffs(y)  # (m, chunk)
        num = (
            (1.0 - eps) * phi_y[:, None] * gaussian_pdf(x[None, :], inst.delta * y[:, None], sd)
            + eps * d_y[:, None] * phi_x[None, :]
            + eps * phi_y[:, None] * (a_mat.T @ r_mat) * phi_x[None, :]
        )
        ay = num / ((1.0 - eps) * phi_y + eps * d_y)[:, None]
        inner = ((ay - phi_x[None, :]) ** 2 / phi_x[None, :]) @ gx.weights
        total += float(
            (inst.R_at(y) * inner) @ gy.weights[lo : lo + chunk]
        )
    return total


def sample_alt(instance, v, n, rng):
    """Planted-direction draw: x' ~ N(0,1); clean rows y ~ N(delta x',
    1 - delta^2), contaminated rows y ~ E_{x'}; X = x' v + orthogonal
    standard Gaussian."""
    v = np.asarray(v, dtype=float).ravel()
    if abs(np.linalg.norm(v) - 1.0) > 1e-9:
        raise PreconditionError("v must be a unit vector")
    p = v.size
    xp = rng.normal(size=n)
    flags = rng.uniform(size=n) < instance.epsilon
    z = rng.normal(size=n)
    y = instance.delta * xp + math.sqrt(instance.sigma2) * z
    if flags.any():
        y[flags] = instance.sample_contaminated_responses(xp[flags], rng)
    w = rng.normal(size=(n, p))
    X = w - np.outer(w @ v, v) + np.outer(xp, v)
    return ContaminatedSample(X, y, ~flags)


def sample_null(instance, p, n, rng):
    """Null draw: X ~ N(0, I_p) independent of y ~ R."""
    if p < 1:
        raise PreconditionError("p must be positive")
    X = rng.normal(size=(n, p))
    y = instance.R.sample(n, rng)
    return ContaminatedSample(X, y, np.ones(n, dtype=bool))


def probe_alt_moments(instance, v, n, rng, y_degree=4):
    """z-scores of (1/n) sum he_j(v^T X) he_l(y) on an alternative sample,
    for j in [m], l in [0:y_degree].  Moment matching makes every
    population value 0."""
    sample = sample_alt(instance, v, n, rng)
    xp = sample.X @ np.asarray(v, dtype=float)
    hx = hermite_table(xp, instance.m)
    hy = hermite_table(sample.y, y_degree)
    z = np.empty((instance.m, y_degree + 1))
    for j in range(1, instance.m + 1):
        for ell in range(y_degree + 1):
            terms = hx[j] * hy[ell]
            se = terms.std(ddof=1) / math.sqrt(n)
            z[j - 1, ell] = terms.mean() / se
    return z


# ---------------------------------------------------------------------------
# Flat text export / import


def _write_block(buf, name, arr):
    arr = np.asarray(arr, dtype=float)
    if arr.ndim == 1:
        buf.write(f"{name} {arr.size}\n")
        rows = [arr]
    else:
        buf.write(f"{name} {arr.shape[0]} {arr.shape[1]}\n")
        rows = arr
    for row in rows:
        vals = np.atleast_1d(row)
        for lo in range(0, vals.size, 8):
            buf.write(" ".join(f"{v:.17g}" for v in vals[lo : lo + 8]) + "\n")


def save_instance(instance, path):
    buf = io.StringIO()
    buf.write(
        f"sqhard v1 m={instance.m} eps={instance.epsilon!r} "
        f"delta={instance.delta!r}\n"
    )
    _write_block(buf, "grid_x", instance.grid_x.nodes)
    _write_block(buf, "grid_y", instance.grid_y.nodes)
    _write_block(buf, "achieved_B", instance.achieved_B)
    _write_block(buf, "target_B", instance.target_B)
    _write_block(buf, "kappa", np.array([instance.kappa]))
    _write_block(buf, "g_over_phi", instance.g_over_phi)
    _write_block(buf, "D", instance.D.values)
    _write_block(buf, "R", instance.R.values)
    with open(path, "w", encoding="ascii") as fh:
        fh.write(buf.getvalue())


def _read_blocks(lines):
    """Parse blocks whose header line is `name n` or `name n k`, followed by
    exactly n (or n*k) whitespace-separated values on subsequent lines."""
    blocks = {}
    idx = 0
    while idx < len(lines):
        header = lines[idx].split()
        idx += 1
        if not header:
            continue
        name, dims = header[0], [int(d) for d in header[1:]]
        if not dims or len(dims) > 2:
            raise ConstructionError(f"malformed block header {header!r}")
        count = dims[0] if len(dims) == 1 else dims[0] * dims[1]
        vals = []
        while len(vals) < count:
            if idx >= len(lines):
                raise ConstructionError(f"block {name!r} truncated")
            vals.extend(float(t) for t in lines[idx].split())
            idx += 1
        if len(vals) != count:
            raise ConstructionError(f"block {name!r} has stray values")
        arr = np.array(vals)
        blocks[name] = arr if len(dims) == 1 else arr.reshape(dims)
    return blocks


def load_instance(path):
    with open(path, encoding="ascii") as fh:
        header = fh.readline().split()
        lines = fh.read().splitlines()
    if header[:2] != ["sqhard", "v1"]:
        raise ConstructionError("not a sqhard v1 file")
    fields = dict(item.split("=", 1) for item in header[2:])
    m = int(fields["m"])
    epsilon = float(fields["eps"])
    delta = float(fields["delta"])
    blocks = _read_blocks(lines)
    grid_x = Grid1D(blocks["grid_x"])
    grid_y = Grid1D(blocks["grid_y"])
    density_d = TabulatedDensity(grid_y, blocks["D"])
    density_r = TabulatedDensity(grid_y, blocks["R"])
    return HardInstance(
        m=m,
        epsilon=epsilon,
        delta=delta,
        sigma2=1.0 - delta**2,
        grid_x=grid_x,
        grid_y=grid_y,
        g_over_phi=blocks["g_over_phi"],
        achieved_B=blocks["achieved_B"],
        target_B=blocks["target_B"],
        kappa=float(blocks["kappa"][0]),
        D=density_d,
        R=density_r,
    )
