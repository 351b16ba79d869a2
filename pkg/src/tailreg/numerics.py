"""Deterministic random streams, grid quadrature, tabulated densities,
weighted medians and the minimal-infinity-norm equality-constrained solver.

Everything here is pure given an explicit :class:`RngStream`; there is no
module-level mutable state.
"""

import math

import numpy as np
import scipy.sparse as sparse
from scipy.optimize import linprog
from scipy.special import ndtr

from .errors import ConstructionError, PreconditionError, RankDeficientError

_MASK64 = (1 << 64) - 1

SQRT_2PI = math.sqrt(2.0 * math.pi)


def _splitmix64(z):
    """One SplitMix64 step; used to derive per-stream seeds."""
    z = (z + 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


class RngStream:
    """A reproducible random stream addressed by (base_seed, stream_id).

    Identical (base_seed, stream_id) pairs replay identical sequences;
    distinct stream ids under one base seed give statistically independent
    streams.  The per-stream seed is SplitMix64(base_seed XOR stream_id),
    which feeds a PCG64 generator.
    """

    def __init__(self, base_seed, stream_id=0):
        base_seed = int(base_seed)
        stream_id = int(stream_id)
        if not (0 <= base_seed <= _MASK64):
            raise PreconditionError("base_seed must fit in 64 bits")
        if stream_id < 0:
            raise PreconditionError("stream_id must be non-negative")
        self.base_seed = base_seed
        self.stream_id = stream_id
        derived = _splitmix64((base_seed ^ stream_id) & _MASK64)
        self.gen = np.random.Generator(np.random.PCG64(derived))

    def normal(self, size=None):
        return self.gen.standard_normal(size)

    def uniform(self, size=None):
        return self.gen.random(size)

    def gamma(self, shape, scale=1.0, size=None):
        return self.gen.gamma(shape, scale, size)

    def integers(self, low, high=None, size=None):
        return self.gen.integers(low, high, size)

    def __repr__(self):
        return f"RngStream(base_seed={self.base_seed}, stream_id={self.stream_id})"


class Grid1D:
    """Strictly increasing nodes with trapezoid quadrature weights."""

    def __init__(self, nodes):
        nodes = np.asarray(nodes, dtype=float)
        if nodes.ndim != 1 or nodes.size < 3:
            raise PreconditionError("grid needs at least 3 one-dimensional nodes")
        if not np.all(np.diff(nodes) > 0):
            raise PreconditionError("grid nodes must be strictly increasing")
        self.nodes = nodes
        w = np.empty_like(nodes)
        w[0] = 0.5 * (nodes[1] - nodes[0])
        w[-1] = 0.5 * (nodes[-1] - nodes[-2])
        w[1:-1] = 0.5 * (nodes[2:] - nodes[:-2])
        self.weights = w
        span = nodes[-1] - nodes[0]
        if abs(w.sum() - span) > 1e-12 * max(span, 1.0):
            raise ConstructionError("trapezoid weights do not sum to the span")

    @classmethod
    def uniform(cls, lo, hi, count):
        if not lo < hi:
            raise PreconditionError("need lo < hi")
        return cls(np.linspace(lo, hi, count))

    @property
    def size(self):
        return self.nodes.size

    def __repr__(self):
        return (
            f"Grid1D({self.size} nodes on "
            f"[{self.nodes[0]:g}, {self.nodes[-1]:g}])"
        )


def integrate_grid(values, grid):
    """Trapezoid quadrature of tabulated values over a grid."""
    values = np.asarray(values, dtype=float)
    if values.shape[-1] != grid.size:
        raise PreconditionError("value count does not match grid size")
    return values @ grid.weights


class TabulatedDensity:
    """A 1-D density tabulated on a grid, with a cached CDF for sampling.

    Values must be non-negative and integrate to 1 within 1e-6 unless
    ``normalize=True`` is passed, in which case the table is rescaled and
    the instance flagged as normalized.
    """

    def __init__(self, grid, values, normalize=False):
        values = np.asarray(values, dtype=float).copy()
        if values.shape != (grid.size,):
            raise PreconditionError("values must match the grid size")
        if values.min() < -1e-12:
            raise PreconditionError(
                f"density values must be non-negative (min {values.min():.3e})"
            )
        np.clip(values, 0.0, None, out=values)
        mass = integrate_grid(values, grid)
        self.was_normalized = False
        if normalize:
            if mass <= 0:
                raise PreconditionError("cannot normalize a zero-mass table")
            if abs(mass - 1.0) > 1e-6:
                self.was_normalized = True
            values = values / mass
        elif abs(mass - 1.0) > 1e-6:
            raise PreconditionError(f"density mass {mass!r} not within 1e-6 of 1")
        self.grid = grid
        self.values = values
        dx = np.diff(grid.nodes)
        increments = 0.5 * (values[1:] + values[:-1]) * dx
        cdf = np.empty(grid.size)
        cdf[0] = 0.0
        np.cumsum(increments, out=cdf[1:])
        if cdf[-1] <= 0:
            raise PreconditionError("degenerate CDF")
        cdf /= cdf[-1]
        self.cdf = cdf

    def mass(self):
        return integrate_grid(self.values, self.grid)

    def mean(self):
        return integrate_grid(self.values * self.grid.nodes, self.grid)

    def sample(self, n, rng):
        """Inverse-CDF draws with linear interpolation between grid nodes."""
        u = rng.uniform(size=n)
        return np.interp(u, self.cdf, self.grid.nodes)

    def interp(self, x):
        """Linear interpolation of the density table (0 outside the grid)."""
        return np.interp(x, self.grid.nodes, self.values, left=0.0, right=0.0)


def normal_pdf(x):
    x = np.asarray(x, dtype=float)
    out = np.exp(-0.5 * x * x) / SQRT_2PI
    return float(out) if out.ndim == 0 else out


def normal_cdf(x):
    """Standard normal CDF, accurate to ~1 ulp via the erf route."""
    out = ndtr(np.asarray(x, dtype=float))
    return float(out) if out.ndim == 0 else out


def gaussian_pdf(x, mean=0.0, sd=1.0):
    x = np.asarray(x, dtype=float)
    z = (x - mean) / sd
    out = np.exp(-0.5 * z * z) / (SQRT_2PI * sd)
    return float(out) if out.ndim == 0 else out


def weighted_median(values, weights):
    """Smallest input value whose cumulative weight reaches half the total.

    This is an exact minimizer of sum_i w_i |v - values_i|.
    """
    values = np.asarray(values, dtype=float)
    weights = np.asarray(weights, dtype=float)
    if values.shape != weights.shape or values.ndim != 1 or values.size == 0:
        raise PreconditionError("values and weights must be matching 1-D arrays")
    if np.any(weights < 0):
        raise PreconditionError("weights must be non-negative")
    total = weights.sum()
    if not total > 0:
        raise PreconditionError("at least one weight must be strictly positive")
    order = np.argsort(values, kind="stable")
    cum = np.cumsum(weights[order])
    idx = int(np.searchsorted(cum, 0.5 * total, side="left"))
    return float(values[order[idx]])


def sample_gen_gaussian_1d(gamma, rng, size=None):
    """Draw from the symmetric density proportional to exp(-|t|^gamma / 2).

    Implemented as S * G^(1/gamma) with G ~ Gamma(1/gamma, scale 2) and S a
    uniform sign.  For shape < 1 the Gamma draw uses the shape-boost trick
    (draw shape+1, multiply by U^(1/shape)) to avoid small-shape rejection
    pathologies.
    """
    if not gamma > 0:
        raise PreconditionError("gamma must be positive")
    shape = 1.0 / gamma
    if shape < 1.0:
        g = rng.gamma(shape + 1.0, 2.0, size)
        u = rng.uniform(size)
        g = g * u ** (1.0 / shape)
    else:
        g = rng.gamma(shape, 2.0, size)
    signs = np.where(rng.uniform(size) < 0.5, -1.0, 1.0)
    out = signs * g ** (1.0 / gamma)
    return float(out) if np.ndim(out) == 0 else out


def cheb_min_inf_solve(constraint_rows, target, feas_tol=1e-10):
    """Solve A r = b with minimal max-norm r over the grid.

    Reference method: the primal linear program  min s  subject to
    -s <= r_k <= s and A r = b, solved with HiGHS and followed by an exact
    projection onto {A r = b} so the equality residual meets ``feas_tol``.
    """
    A = np.atleast_2d(np.asarray(constraint_rows, dtype=float))
    b = np.asarray(target, dtype=float).ravel()
    n_rows, n_cols = A.shape
    if b.size != n_rows:
        raise PreconditionError("target length must match the row count")
    if n_rows > n_cols:
        raise RankDeficientError("more constraints than unknowns")
    sv = np.linalg.svd(A, compute_uv=False)
    if sv[0] == 0 or sv[-1] <= max(n_rows, n_cols) * np.finfo(float).eps * sv[0]:
        raise RankDeficientError("constraint matrix is rank deficient")

    c = np.zeros(n_cols + 1)
    c[-1] = 1.0
    eye = sparse.identity(n_cols, format="csr")
    minus_one = sparse.csr_matrix(-np.ones((n_cols, 1)))
    a_ub = sparse.vstack(
        [sparse.hstack([eye, minus_one]), sparse.hstack([-eye, minus_one])],
        format="csr",
    )
    b_ub = np.zeros(2 * n_cols)
    a_eq = sparse.hstack([sparse.csr_matrix(A), sparse.csr_matrix((n_rows, 1))])
    bounds = [(None, None)] * n_cols + [(0, None)]
    res = linprog(
        c,
        A_ub=a_ub,
        b_ub=b_ub,
        A_eq=a_eq,
        b_eq=b,
        bounds=bounds,
        method="highs",
    )
    if not res.success:
        raise ConstructionError(f"min-inf-norm LP failed: {res.message}")
    r = res.x[:n_cols]

    # HiGHS meets ~1e-7 feasibility; finish with exact projection onto Ar=b.
    gram = A @ A.T
    for _ in range(2):
        resid = A @ r - b
        r = r - A.T @ np.linalg.solve(gram, resid)
    resid_inf = float(np.max(np.abs(A @ r - b)))
    if resid_inf > feas_tol:
        raise ConstructionError(
            f"equality residual {resid_inf:.3e} exceeds {feas_tol:.1e}"
        )
    return r


def default_hardness_grid(m, count=4001):
    """Uniform grid on [-L, L] with L = max(10, sqrt(32 m) + 2)."""
    half = max(10.0, math.sqrt(32.0 * m) + 2.0)
    return Grid1D.uniform(-half, half, count)
