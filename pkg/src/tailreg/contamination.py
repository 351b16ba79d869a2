"""Data generation under clean-covariate response contamination, including
the constructive worst-case adversaries used by the lower-bound experiments.

Draw order inside :func:`generate` is fixed (covariates, contamination
flags, clean noise, adversary draws) so that a (base_seed, stream_id) pair
pins the sample bytes regardless of the adversary branch taken.
"""

import math
from dataclasses import dataclass

import numpy as np

from .designs import DesignSpec, sample_design
from .errors import InfeasibleMatchingError, PreconditionError
from .numerics import (
    Grid1D,
    TabulatedDensity,
    gaussian_pdf,
    integrate_grid,
    normal_cdf,
)


@dataclass(frozen=True)
class ContaminatedSample:
    """Covariates, responses, and the hidden inlier mask.

    The mask is diagnostic only; estimators never see it.
    """

    X: np.ndarray
    y: np.ndarray
    inlier_mask: np.ndarray


class Adversary:
    """Conditional response law used for contaminated rows."""

    name = "abstract"

    def validate(self, model):
        pass

    def sample_outliers(self, X_out, model, rng):
        raise NotImplementedError


class NoContamination(Adversary):
    """Contaminated rows are re-drawn from the clean conditional law."""

    name = "none"

    def sample_outliers(self, X_out, model, rng):
        k = X_out.shape[0]
        return X_out @ model.beta + model.sigma * rng.normal(size=k)


@dataclass(frozen=True)
class PointMass(Adversary):
    y0: float
    name = "point_mass"

    def sample_outliers(self, X_out, model, rng):
        return np.full(X_out.shape[0], float(self.y0))


class FlipSign(Adversary):
    """Q_x = N(-x^T beta, sigma^2): mirrors the clean conditional mean.

    Attenuates the first moment of y x to (1 - 2 eps) beta, which defeats
    naive moment estimators while staying a valid adaptive adversary.
    """

    name = "flip_sign"

    def sample_outliers(self, X_out, model, rng):
        k = X_out.shape[0]
        return -(X_out @ model.beta) + model.sigma * rng.normal(size=k)


@dataclass(frozen=True)
class ObliviousNoise(Adversary):
    """Additive noise replacement: y = x^T beta + gamma, gamma ~ Q."""

    q: TabulatedDensity
    name = "oblivious_noise"

    def sample_outliers(self, X_out, model, rng):
        return X_out @ model.beta + self.q.sample(X_out.shape[0], rng)

    def as_adaptive(self):
        """The same conditional law (Q shifted by x^T beta), realized as a
        generic adaptive adversary via a shift coupling so the draw stream
        matches the fast path."""
        return _ShiftedNoiseLaw(self.q)


@dataclass(frozen=True)
class ObliviousResponse(Adversary):
    """Whole-response replacement: y ~ Q independent of x."""

    q: TabulatedDensity
    name = "oblivious_response"

    def sample_outliers(self, X_out, model, rng):
        return self.q.sample(X_out.shape[0], rng)

    def as_adaptive(self):
        return ConditionalLaw(lambda x_row, model: self.q, name="oblivious_response_as_adaptive")


@dataclass(frozen=True)
class ConditionalLaw(Adversary):
    """Generic adaptive adversary defined by x -> TabulatedDensity.

    Consumes exactly one uniform per contaminated row, the same budget as
    the oblivious fast paths, so an oblivious model re-expressed through
    this wrapper reproduces the identical byte stream.
    """

    law: object
    name: str = "conditional_law"

    def sample_outliers(self, X_out, model, rng):
        k = X_out.shape[0]
        u = rng.uniform(size=k)
        out = np.empty(k)
        for j in range(k):
            dens = self.law(X_out[j], model)
            out[j] = np.interp(u[j], dens.cdf, dens.grid.nodes)
        return out


@dataclass(frozen=True)
class _ShiftedNoiseLaw(Adversary):
    """Adaptive view of oblivious noise: row j draws from Q shifted by
    x_j^T beta, coupled as draw-then-shift."""

    q: TabulatedDensity
    name = "oblivious_noise_as_adaptive"

    def sample_outliers(self, X_out, model, rng):
        k = X_out.shape[0]
        u = rng.uniform(size=k)
        out = np.empty(k)
        for j in range(k):
            out[j] = np.interp(u[j], self.q.cdf, self.q.grid.nodes) + float(
                X_out[j] @ model.beta
            )
        return out


@dataclass(frozen=True)
class SparseAdditive(Adversary):
    """Additive offset outliers: y = x^T beta + magnitude + noise."""

    magnitude: float
    name = "sparse_additive"

    def sample_outliers(self, X_out, model, rng):
        k = X_out.shape[0]
        return X_out @ model.beta + self.magnitude + model.sigma * rng.normal(size=k)


def _pair_tables(theta, theta_alt, sigma, epsilon, points=4001):
    """Two-point matching tables for conditional means (theta, theta_alt)."""
    half = abs(theta - theta_alt) / 2.0 + 10.0 * sigma
    center = 0.5 * (theta + theta_alt)
    grid = Grid1D.uniform(center - half, center + half, points)
    p = gaussian_pdf(grid.nodes, theta, sigma)
    p_alt = gaussian_pdf(grid.nodes, theta_alt, sigma)
    tv = 2.0 * normal_cdf(abs(theta - theta_alt) / (2.0 * sigma)) - 1.0
    d = tv / (1.0 + tv)
    pmax = np.maximum(p, p_alt)
    if d == 0.0:
        q = p.copy()
        mix = pmax.copy()
    else:
        q_exact = ((1.0 - d) / d) * (pmax - p)
        q = ((epsilon - d) / epsilon) * p + (d / epsilon) * q_exact
        mix = (1.0 - d) * pmax
    return grid, p, p_alt, q, mix, tv


@dataclass(frozen=True)
class MatchedPair(Adversary):
    """Two-point lower-bound adversary.

    The shadow model is beta' = beta - 2 delta u with u = beta/||beta||.
    Where the conditional pair is matchable (per-row TV at most
    eps/(1-eps)), the contaminated mixture equals the shadow model's
    mixture exactly; elsewhere the contamination recenters at the midpoint.
    Build-time feasibility asks the pair to be matchable at the unit
    projection: 2 Phi(delta/sigma) - 1 <= eps/(1-eps).
    """

    delta: float
    name = "matched_pair"

    def validate(self, model):
        if not self.delta > 0:
            raise PreconditionError("delta must be positive")
        nb = float(np.linalg.norm(model.beta))
        if nb == 0:
            raise PreconditionError("matched_pair needs a nonzero beta")
        eps = model.epsilon
        if eps <= 0:
            raise PreconditionError("matched_pair needs epsilon > 0")
        tv_unit = 2.0 * normal_cdf(self.delta / model.sigma) - 1.0
        if tv_unit > eps / (1.0 - eps):
            raise InfeasibleMatchingError(
                f"pair TV at unit projection {tv_unit:.4g} exceeds "
                f"eps/(1-eps) = {eps / (1 - eps):.4g}"
            )

    def conditional_tables(self, x_row, model):
        u = model.beta / np.linalg.norm(model.beta)
        s = float(x_row @ u)
        theta = float(x_row @ model.beta)
        return _pair_tables(theta, theta - 2.0 * self.delta * s, model.sigma, model.epsilon)

    def sample_outliers(self, X_out, model, rng):
        eps = model.epsilon
        sigma = model.sigma
        u = model.beta / np.linalg.norm(model.beta)
        s = X_out @ u
        theta = X_out @ model.beta
        tv = 2.0 * normal_cdf(self.delta * np.abs(s) / sigma) - 1.0
        feasible = tv <= eps / (1.0 - eps)
        k = X_out.shape[0]
        out = np.empty(k)
        branch = rng.uniform(size=k)
        normals = rng.normal(size=k)
        u_icdf = rng.uniform(size=k)
        for j in range(k):
            if not feasible[j]:
                out[j] = theta[j] - self.delta * s[j] + sigma * normals[j]
                continue
            d = tv[j] / (1.0 + tv[j])
            if branch[j] < (eps - d) / eps or d == 0.0:
                out[j] = theta[j] + sigma * normals[j]
            else:
                grid, p, p_alt, _, _, _ = _pair_tables(
                    theta[j], theta[j] - 2.0 * self.delta * s[j], sigma, eps
                )
                q_exact = ((1.0 - d) / d) * (np.maximum(p, p_alt) - p)
                dens = TabulatedDensity(grid, q_exact, normalize=True)
                out[j] = np.interp(u_icdf[j], dens.cdf, dens.grid.nodes)
        return out


class NonUniformLB(Adversary):
    """Non-uniform contamination making the models +-beta indistinguishable.

    Per-row contamination probability eps_x = TV/(1+TV) with
    TV = TV(N(x^T beta, sigma^2), N(-x^T beta, sigma^2)); the blended law
    M(y|x) = max(P, P')/(1+TV) is reproduced exactly.  The model-level
    epsilon reported for such samples is E[eps_X].
    """

    name = "nonuniform_lb"

    def validate(self, model):
        if float(np.linalg.norm(model.beta)) == 0:
            raise PreconditionError("nonuniform_lb needs a nonzero beta")

    def eps_x(self, X, model):
        theta = np.abs(X @ model.beta)
        tv = 2.0 * normal_cdf(theta / model.sigma) - 1.0
        return tv / (1.0 + tv)

    def sample_outliers(self, X_out, model, rng):
        sigma = model.sigma
        theta = X_out @ model.beta
        k = X_out.shape[0]
        u = rng.uniform(size=k)
        out = np.empty(k)
        for j in range(k):
            half = abs(theta[j]) + 10.0 * sigma
            grid = Grid1D.uniform(-half, half, 4001)
            p = gaussian_pdf(grid.nodes, theta[j], sigma)
            p_alt = gaussian_pdf(grid.nodes, -theta[j], sigma)
            dens = TabulatedDensity(grid, np.maximum(p_alt - p, 0.0), normalize=True)
            out[j] = np.interp(u[j], dens.cdf, dens.grid.nodes)
        return out


@dataclass(frozen=True)
class HardSQ(Adversary):
    """Contamination from a prebuilt conditional-NGCA hard instance."""

    instance: object
    name = "hard_sq"

    def validate(self, model):
        inst = self.instance
        if model.design.kind != "gaussian":
            raise PreconditionError("hard_sq requires the gaussian design")
        if abs(float(np.linalg.norm(model.beta)) - inst.delta) > 1e-9:
            raise PreconditionError("hard_sq needs ||beta|| equal to the instance delta")
        if abs(model.sigma - math.sqrt(inst.sigma2)) > 1e-9:
            raise PreconditionError("hard_sq needs sigma^2 = 1 - delta^2")
        if abs(model.epsilon - inst.epsilon) > 1e-12:
            raise PreconditionError("hard_sq needs the instance epsilon")

    def sample_outliers(self, X_out, model, rng):
        v = model.beta / np.linalg.norm(model.beta)
        return self.instance.sample_contaminated_responses(X_out @ v, rng)


@dataclass(frozen=True)
class ModelSpec:
    """Ground truth plus the full data-generating law."""

    beta: np.ndarray
    sigma: float
    epsilon: float
    design: DesignSpec
    adversary: Adversary

    def __post_init__(self):
        beta = np.asarray(self.beta, dtype=float).ravel()
        object.__setattr__(self, "beta", beta)
        if not self.sigma > 0:
            raise PreconditionError("sigma must be positive")
        if not 0.0 <= self.epsilon < 0.5:
            raise PreconditionError("epsilon must lie in [0, 1/2)")
        if beta.size != self.design.dim:
            raise PreconditionError("beta dimension must match the design")

    @property
    def p(self):
        return self.design.dim


def generate(model, n, rng):
    """Draw n rows: clean covariates, per-row Bernoulli contamination flags,
    clean responses, then adversary responses on the flagged rows."""
    if n < 1:
        raise PreconditionError("n must be positive")
    adv = model.adversary
    adv.validate(model)
    X = sample_design(model.design, n, rng)
    if isinstance(adv, NonUniformLB):
        eps_row = adv.eps_x(X, model)
    else:
        eps_row = model.epsilon
    flags = rng.uniform(size=n) < eps_row
    y = X @ model.beta + model.sigma * rng.normal(size=n)
    if flags.any():
        y[flags] = adv.sample_outliers(X[flags], model, rng)
    return ContaminatedSample(X, y, ~flags)


def flip_adversary_moment_check(model, n, rng):
    """Empirical (1/n) sum y_i X_i under the flip adversary; the population
    value is (1 - 2 eps) beta."""
    if not isinstance(model.adversary, FlipSign):
        raise PreconditionError("moment check requires the flip_sign adversary")
    sample = generate(model, n, rng)
    return sample.X.T @ sample.y / n


@dataclass(frozen=True)
class NonUniformConstruction:
    """Tabulated view of the non-uniform lower-bound pair at queried x."""

    beta: np.ndarray
    sigma: float

    def eps_at(self, x_row):
        theta = abs(float(np.asarray(x_row, dtype=float) @ self.beta))
        tv = 2.0 * normal_cdf(theta / self.sigma) - 1.0
        return float(tv / (1.0 + tv))

    def tables_at(self, x_row, points=None):
        theta = float(np.asarray(x_row, dtype=float) @ self.beta)
        sigma = self.sigma
        tv = 2.0 * normal_cdf(abs(theta) / sigma) - 1.0
        eps_x = tv / (1.0 + tv)
        half = abs(theta) + 10.0 * sigma
        if points is None:
            # |P' - P| has a kink at the midpoint; its Euler-Maclaurin
            # boundary term costs (h/sigma)^2/8 relative mass, so keep
            # h <= sigma/800 to clear the 1e-6 density tolerance
            points = min(2 * int(math.ceil(800.0 * half / sigma)) + 1, 120001)
            points = max(points, 4001)
        grid = Grid1D.uniform(-half, half, points)
        p = gaussian_pdf(grid.nodes, theta, sigma)
        p_alt = gaussian_pdf(grid.nodes, -theta, sigma)
        mix = np.maximum(p, p_alt) / (1.0 + tv)
        if eps_x == 0.0:
            qx = p.copy()
            qx_alt = p_alt.copy()
        else:
            qx = np.maximum(p_alt - p, 0.0) / (eps_x * (1.0 + tv))
            qx_alt = np.maximum(p - p_alt, 0.0) / (eps_x * (1.0 + tv))
        return {
            "eps_x": float(eps_x),
            "grid": grid,
            "P": TabulatedDensity(grid, p),
            "P_alt": TabulatedDensity(grid, p_alt),
            "Qx": TabulatedDensity(grid, qx),
            "Qx_alt": TabulatedDensity(grid, qx_alt),
            "M": TabulatedDensity(grid, mix),
        }


def build_nonuniform_lb(beta, sigma):
    """Constructive Model-5 lower-bound pair for the models +-beta."""
    beta = np.asarray(beta, dtype=float).ravel()
    if float(np.linalg.norm(beta)) == 0:
        raise PreconditionError("beta must be nonzero")
    if not sigma > 0:
        raise PreconditionError("sigma must be positive")
    return NonUniformConstruction(beta, float(sigma))


def huber_pair_marginal_ratio(beta, sigma, x_grid):
    """sup over the grid of eps * Q(x) / phi(x) for the joint Huber pair
    built from the models +-beta (1-D projection along beta).

    The pair matches (1-eps) P + eps Q = (1-eps) P' + eps Q' at
    eps = TV/(1+TV) where TV is the joint total variation; the marginal of
    Q is phi(x) TV_x / TV with TV_x the conditional total variation at x,
    so the ratio equals TV_x / (1 + TV) and never exceeds 1.
    """
    beta = np.asarray(beta, dtype=float).ravel()
    nb = float(np.linalg.norm(beta))
    if nb == 0 or not sigma > 0:
        raise PreconditionError("need nonzero beta and positive sigma")
    s = np.asarray(x_grid.nodes, dtype=float)
    tv_x = 2.0 * normal_cdf(nb * np.abs(s) / sigma) - 1.0
    tv_joint = float(integrate_grid(tv_x * gaussian_pdf(s), x_grid))
    return float(np.max(tv_x / (1.0 + tv_joint)))
