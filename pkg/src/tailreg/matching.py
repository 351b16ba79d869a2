"""Constructive lower-bound machinery: multi-distribution total variation,
matching mixtures, KL-matched mixture bundles, and the Fano rate curve."""

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConstructionError, InfeasibleMatchingError, PreconditionError
from .numerics import (
    Grid1D,
    TabulatedDensity,
    gaussian_pdf,
    integrate_grid,
    normal_cdf,
)

LOG2 = math.log(2.0)


@dataclass(frozen=True)
class GaussianFamily:
    """m >= 2 unit-variance-scaled Gaussian locations N(theta_j, sigma^2)."""

    means: tuple
    sigma: float

    def __post_init__(self):
        object.__setattr__(self, "means", tuple(float(v) for v in self.means))
        if len(self.means) < 2:
            raise PreconditionError("a family needs at least two means")
        if not self.sigma > 0:
            raise PreconditionError("sigma must be positive")

    @property
    def m(self):
        return len(self.means)


def multi_tv_gaussian(family):
    """Exact total variation of m same-scale Gaussians: integral of the
    pointwise max density minus 1.

    The max region of the j-th (sorted) mean is the interval between the
    midpoints toward its neighbours, so the integral is a sum of CDF
    differences in closed form.
    """
    theta = np.sort(np.asarray(family.means, dtype=float))
    sigma = family.sigma
    mids = 0.5 * (theta[:-1] + theta[1:])
    upper = np.append(mids, np.inf)
    lower = np.concatenate([[-np.inf], mids])
    total = np.sum(
        normal_cdf((upper - theta) / sigma) - normal_cdf((lower - theta) / sigma)
    )
    return float(total - 1.0)


def family_grid(family, points_per_sigma=800, max_points=200001):
    """Shared integration grid with tail cutoff +-(max|theta| + 10 sigma).

    Matching densities carry kinks at the midpoint boundaries whose
    Euler-Maclaurin cost is (h/sigma)^2/8 of relative mass, so the default
    resolution keeps that below the 1e-6 density tolerance.
    """
    half = max(abs(v) for v in family.means) + 10.0 * family.sigma
    count = int(2 * math.ceil(half * points_per_sigma / family.sigma)) + 1
    count = min(count, max_points)
    return Grid1D.uniform(-half, half, count)


@dataclass(frozen=True)
class MatchingBundle:
    q: list
    mixture: TabulatedDensity
    epsilon_used: float
    tv: float
    blend_delta: float
    sup_residual: float


def build_matching(family, epsilon, grid=None):
    """Contamination distributions Q_j with (1-eps) P_j + eps Q_j all equal.

    Requires the family total variation to be at most eps/(1-eps).  At
    exact equality, q_j is proportional to (max_k p_k - p_j); below it,
    each Q_j blends P_j with the exact-level construction at the level
    d solving TV = d/(1-d).
    """
    if not 0 < epsilon < 1:
        raise PreconditionError("epsilon must lie in (0, 1)")
    tv = multi_tv_gaussian(family)
    if tv > epsilon / (1.0 - epsilon) + 1e-12:
        raise InfeasibleMatchingError(
            f"family TV {tv:.6g} exceeds eps/(1-eps) = "
            f"{epsilon / (1 - epsilon):.6g}"
        )
    grid = grid or family_grid(family)
    dens = np.stack(
        [gaussian_pdf(grid.nodes, mu, family.sigma) for mu in family.means]
    )
    pmax = dens.max(axis=0)
    d = tv / (1.0 + tv)
    if d == 0.0:
        q_tables = dens.copy()
        mixture_vals = pmax.copy()
    else:
        q_exact = ((1.0 - d) / d) * (pmax - dens)
        q_tables = ((epsilon - d) / epsilon) * dens + (d / epsilon) * q_exact
        mixture_vals = (1.0 - d) * pmax
    mixture = TabulatedDensity(grid, mixture_vals, normalize=False)
    qs = []
    sup_res = 0.0
    for j in range(family.m):
        if q_tables[j].min() < -1e-12:
            raise ConstructionError("matching produced a negative density")
        qs.append(TabulatedDensity(grid, q_tables[j], normalize=False))
        res = (1.0 - epsilon) * dens[j] + epsilon * q_tables[j] - mixture_vals
        sup_res = max(sup_res, float(np.max(np.abs(res))))
    if sup_res > 1e-8:
        raise ConstructionError(f"mixture equality residual {sup_res:.3e} > 1e-8")
    return MatchingBundle(qs, mixture, float(epsilon), tv, d, sup_res)


def kl_divergence_grid(p_vals, q_vals, grid, floor=1e-300):
    """KL(P || Q) by grid quadrature; both tables must be positive a.e."""
    p = np.clip(p_vals, 0.0, None)
    q = np.clip(q_vals, floor, None)
    integrand = np.where(p > 0, p * (np.log(np.clip(p, floor, None)) - np.log(q)), 0.0)
    return float(integrate_grid(integrand, grid))


def corollary1_bundle(family, epsilon):
    """KL-matched contamination bundle.

    Means with |theta_j| <= sqrt(pi/2) eps sigma form the matched set: their
    mixtures coincide exactly.  Remaining components reuse the matched
    mixture's contamination (or N(0, sigma^2) when the matched set is
    empty), and the pairwise mixture KL is bounded by
    2 (2|theta_j|/sigma - sqrt(pi/2) eps)_+^2 + (same in k).
    """
    if not 0 < epsilon < 1:
        raise PreconditionError("epsilon must lie in (0, 1)")
    theta = np.asarray(family.means, dtype=float)
    sigma = family.sigma
    thr = math.sqrt(math.pi / 2.0) * epsilon * sigma
    matched = [j for j in range(family.m) if abs(theta[j]) <= thr]
    grid = family_grid(family)
    dens = np.stack([gaussian_pdf(grid.nodes, mu, sigma) for mu in theta])

    q_tables = np.empty_like(dens)
    if matched:
        sub = GaussianFamily(tuple(theta[matched]), sigma)
        bundle = build_matching(sub, epsilon, grid=grid)
        for pos, j in enumerate(matched):
            q_tables[j] = bundle.q[pos].values
        fallback = q_tables[matched[0]]
        for j in range(family.m):
            if j not in matched:
                q_tables[j] = fallback
    else:
        q_tables[:] = gaussian_pdf(grid.nodes, 0.0, sigma)

    mixtures = (1.0 - epsilon) * dens + epsilon * q_tables
    m = family.m
    kl = np.zeros((m, m))
    for j in range(m):
        for k in range(m):
            if j != k:
                kl[j, k] = kl_divergence_grid(mixtures[j], mixtures[k], grid)
    gap = np.maximum(2.0 * np.abs(theta) / sigma - math.sqrt(math.pi / 2.0) * epsilon, 0.0)
    bound = 2.0 * gap[:, None] ** 2 + 2.0 * gap[None, :] ** 2
    np.fill_diagonal(bound, 0.0)
    return {
        "q": [TabulatedDensity(grid, q_tables[j]) for j in range(m)],
        "kl_matrix": kl,
        "bound_matrix": bound,
        "matched_set": matched,
        "grid": grid,
    }


def fano_delta(n, p, sigma, epsilon, t_grid=None):
    """Smallest packing radius delta sustaining the Fano budget:
    min over t > 0 of (sigma/2t) (sqrt(pi/2) eps + (1/4) sqrt(p log2 /
    (sqrt2 n)) exp(t^2/8)), minimized over a logarithmic t-grid."""
    if n < 1 or p < 1:
        raise PreconditionError("need n >= 1 and p >= 1")
    if not sigma > 0:
        raise PreconditionError("sigma must be positive")
    if not 0 <= epsilon < 1:
        raise PreconditionError("epsilon must lie in [0, 1)")
    if t_grid is None:
        t_grid = np.logspace(math.log10(1e-3), math.log10(20.0), 4000)
    vals = (sigma / (2.0 * t_grid)) * (
        math.sqrt(math.pi / 2.0) * epsilon
        + 0.25 * math.sqrt(p * LOG2 / (math.sqrt(2.0) * n)) * np.exp(t_grid**2 / 8.0)
    )
    return float(vals.min())


def fano_kl_budget(n, p, sigma, epsilon, delta, grid=None):
    """n * max_{j,k} KL-bound at packing radius delta, where the pairwise KL
    bound is 4 E_G (2 delta |G| / sigma - sqrt(pi/2) eps)_+^2.

    The Fano requirement is that this stays at most (p log 2) / 4.
    """
    grid = grid or Grid1D.uniform(-12.0, 12.0, 8001)
    g = grid.nodes
    integrand = (
        np.maximum(
            2.0 * delta * np.abs(g) / sigma - math.sqrt(math.pi / 2.0) * epsilon, 0.0
        )
        ** 2
        * gaussian_pdf(g)
    )
    kl_bound = 4.0 * integrate_grid(integrand, grid)
    return float(n * kl_bound), float(p * LOG2 / 4.0)


def greedy_sphere_packing(p, count, rng, min_dist=0.5, max_tries=200000):
    """Greedy rejection sampling of unit vectors with pairwise distance
    above min_dist.  The achieved distances are what callers should assert;
    no packing-size guarantee is re-proved here."""
    if p < 1 or count < 1:
        raise PreconditionError("need p >= 1 and count >= 1")
    accepted = []
    for _ in range(max_tries):
        v = rng.normal(size=p)
        nrm = np.linalg.norm(v)
        if nrm == 0:
            continue
        v = v / nrm
        if all(np.linalg.norm(v - u) > min_dist for u in accepted):
            accepted.append(v)
            if len(accepted) == count:
                return np.array(accepted)
    raise ConstructionError(
        f"could not place {count} vectors at distance {min_dist} in {max_tries} tries"
    )
