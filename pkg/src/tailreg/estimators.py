"""Robust regression estimators: truncated 1-D median regression, LAD via
smoothed IRLS, and (truncated) regression-depth evaluation/maximization.

All estimators see only (X, y); diagnostic fields of generated samples are
never consulted.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .errors import (
    ConvergenceError,
    NoDataError,
    PreconditionError,
    UnsupportedDimensionError,
)
from .numerics import weighted_median

E = math.e


@dataclass(frozen=True)
class FixedT:
    t: float

    def __post_init__(self):
        if self.t < 0:
            raise PreconditionError("truncation level must be non-negative")


@dataclass(frozen=True)
class Thm1Rule:
    """t = sqrt(log(n eps^2 + e) / 2), clipped to [0, sqrt(0.9 log n)]."""


@dataclass(frozen=True)
class Thm2Rule:
    """t = sqrt(log(n eps^2 / p + e)) / 2, clipped to [0, sqrt(0.4 log(n/p))]."""


@dataclass(frozen=True)
class Thm5Rule:
    """t = (log(n eps^2 / p + e) / 3)^(1/gamma) for generalized designs."""

    gamma: float

    def __post_init__(self):
        if not self.gamma > 0:
            raise PreconditionError("gamma must be positive")


def choose_t(policy, n, p, epsilon):
    """Deterministic truncation level for the given sample geometry."""
    if n < 1 or p < 1:
        raise PreconditionError("need n >= 1 and p >= 1")
    if not 0 <= epsilon < 0.5:
        raise PreconditionError("epsilon must lie in [0, 1/2)")
    if isinstance(policy, FixedT):
        return float(policy.t)
    if isinstance(policy, Thm1Rule):
        t = math.sqrt(0.5 * math.log(n * epsilon**2 + E))
        hi = math.sqrt(max(0.0, 0.9 * math.log(n)))
        return float(min(max(t, 0.0), hi))
    if isinstance(policy, Thm2Rule):
        t = 0.5 * math.sqrt(math.log(n * epsilon**2 / p + E))
        hi = math.sqrt(max(0.0, 0.4 * math.log(n / p)))
        return float(min(max(t, 0.0), hi))
    if isinstance(policy, Thm5Rule):
        return float((math.log(n * epsilon**2 / p + E) / 3.0) ** (1.0 / policy.gamma))
    raise PreconditionError(f"unknown truncation policy {policy!r}")


@dataclass(frozen=True)
class FitReport:
    beta_hat: np.ndarray
    objective: float
    certificate: float
    iterations: int


def truncated_lad_1d(x, y, t):
    """Exact minimizer of (1/n) sum |y_i - b x_i| over rows with |x_i| >= t.

    The surviving-set objective is a weighted absolute-deviation sum in the
    ratios y_i / x_i with weights |x_i|, so its exact global minimizer is a
    weighted median.
    """
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if x.shape != y.shape or x.size == 0:
        raise PreconditionError("x and y must be matching non-empty vectors")
    if t < 0:
        raise PreconditionError("truncation level must be non-negative")
    keep = np.abs(x) >= t
    if not keep.any():
        raise NoDataError(f"no covariates with |x| >= {t}")
    xs, ys = x[keep], y[keep]
    nz = xs != 0.0
    if not nz.any():
        raise NoDataError("all surviving covariates are zero")
    b = weighted_median(ys[nz] / xs[nz], np.abs(xs[nz]))
    objective = float(np.abs(ys - b * xs).sum() / x.size)
    return FitReport(np.array([b]), objective, 0.0, 1)


def _wls_step(X, y, w):
    # p = 1 reduces to an exact scalar division; otherwise solve by QR on
    # sqrt-weighted rows (normal equations square the ~1e8 weight spread,
    # which poisons the optimality certificate).
    if X.shape[1] == 1:
        x = X[:, 0]
        wx = w * x
        return np.array([(wx @ y) / (wx @ x)])
    sw = np.sqrt(w)
    beta, *_ = np.linalg.lstsq(X * sw[:, None], y * sw, rcond=None)
    return beta


def lad_fit(X, y, inner_tol=1e-10, cert_tol=1e-6, mu_floor_ratio=1e-8, max_wls=4000):
    """Least absolute deviations fit by smoothed IRLS.

    The smoothing level mu is halved from median|y| down to 1e-8 * scale;
    at each level the reweighted least squares iteration runs until the
    relative parameter change drops below ``inner_tol``, with Aitken
    extrapolation over consecutive steps to tame the linear-rate crawl at
    intermediate mu (every update remains a weighted LS solve).  The
    returned certificate is the max-norm of the smoothed-objective gradient
    (1/n) sum X_i r_i / sqrt(r_i^2 + mu^2); success requires it to be at
    most ``cert_tol`` times the largest column RMS of X, and the final
    smoothing level keeps iterating until the certificate clears.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    if X.ndim == 1:
        X = X[:, None]
    n, p = X.shape
    if y.size != n:
        raise PreconditionError("X and y must have matching row counts")
    if n <= p:
        raise PreconditionError("need n > p")

    col_scale = float(np.sqrt(np.mean(X**2, axis=0)).max())
    if col_scale <= 0:
        col_scale = 1.0

    if p == 1:
        xx = float(X[:, 0] @ X[:, 0])
        if xx <= 0:
            raise PreconditionError("covariate column is identically zero")
        beta = np.array([float(X[:, 0] @ y) / xx])
    else:
        beta, *_ = np.linalg.lstsq(X, y, rcond=None)

    # smoothing floor keyed to the robust residual scale at the LS start:
    # translation-invariant, so the equivariance identities survive the
    # smoothing, unlike a raw |y| scale.  Near-interpolating data (residuals
    # at FP-noise level) falls back to the response scale so the floor never
    # sinks into rounding noise.
    y_scale = float(np.median(np.abs(y)))
    if y_scale <= 0:
        y_scale = float(np.mean(np.abs(y)))
    if y_scale <= 0:
        y_scale = 1.0
    r_scale = float(np.median(np.abs(y - X @ beta)))
    scale = r_scale if r_scale > 1e-9 * y_scale else y_scale
    mu_floor = mu_floor_ratio * scale
    mu = max(y_scale, mu_floor)
    total = 0

    def _report(b, mu_now):
        r = y - X @ b
        grad = X.T @ (r / np.sqrt(r * r + mu_now * mu_now)) / n
        return FitReport(
            b, float(np.mean(np.abs(r))), float(np.max(np.abs(grad))), total
        )

    if p == 1:
        # buffered scalar path: the rate experiments hammer this at n = 1e6
        x1 = np.ascontiguousarray(X[:, 0])
        buf_r = np.empty_like(y)
        buf_s = np.empty_like(y)

        def _solve(b, mu_now):
            np.multiply(x1, b[0], out=buf_r)
            np.subtract(y, buf_r, out=buf_r)
            np.multiply(buf_r, buf_r, out=buf_s)
            np.add(buf_s, mu_now * mu_now, out=buf_s)
            np.sqrt(buf_s, out=buf_s)
            np.divide(x1, buf_s, out=buf_s)  # x / sqrt(r^2 + mu^2)
            den = buf_s @ x1
            if den <= 0:
                raise np.linalg.LinAlgError("degenerate 1-D system")
            return np.array([(buf_s @ y) / den])

    else:

        def _solve(b, mu_now):
            r = y - X @ b
            w = 1.0 / np.sqrt(r * r + mu_now * mu_now)
            return _wls_step(X, y, w)

    def wls(b, mu_now):
        nonlocal total
        total += 1
        if total > max_wls:
            raise ConvergenceError(
                f"IRLS did not converge within {max_wls} solves",
                report=_report(b, mu_now),
            )
        try:
            return _solve(b, mu_now)
        except np.linalg.LinAlgError as exc:
            raise ConvergenceError(
                f"singular IRLS system: {exc}", report=_report(b, mu_now)
            ) from exc

    def level_iterate(b, mu_now, cap=80):
        """Accelerated IRLS at one smoothing level until the relative step
        drops below inner_tol (cap guards FP-jitter plateaus)."""
        prev_step = 0.0
        for _ in range(cap):
            b_new = wls(b, mu_now)
            delta = b_new - b
            step = float(np.linalg.norm(delta))
            if prev_step > 0.0:
                rho = step / prev_step
                if 0.2 < rho < 0.995:
                    guess = b_new + delta * (rho / (1.0 - rho))
                    refined = wls(guess, mu_now)
                    if float(np.linalg.norm(refined - guess)) < step:
                        b_new = refined
                        step = float(np.linalg.norm(refined - guess))
            prev_step = step
            b = b_new
            if step <= inner_tol * (float(np.linalg.norm(b)) + 1.0):
                break
        return b

    while True:
        beta = level_iterate(beta, mu)
        if mu <= mu_floor:
            break
        mu = max(0.5 * mu, mu_floor)

    # The cascade can land on a gradient plateau (between breakpoints the
    # smoothed gradient is a staircase with mu-wide transitions), where
    # IRLS fixed-point jitter leaves the certificate above tolerance.  A
    # dedicated polish on the final smoothed objective finishes the job:
    # monotone root-finding in one dimension, damped Newton otherwise.
    report = _report(beta, mu)
    tol_abs = cert_tol * col_scale
    if report.certificate > tol_abs:
        if p == 1:
            beta = _polish_root_1d(X[:, 0], y, mu, float(beta[0]))
        else:
            beta, extra = _polish_lm(X, y, mu, beta, tol_abs)
            total += extra
        report = _report(beta, mu)
    if report.certificate > tol_abs:
        raise ConvergenceError(
            f"certificate stalled at {report.certificate:.3e} above "
            f"{cert_tol:.1e} * column scale",
            report=report,
        )
    return report


def _polish_root_1d(x, y, mu, b0):
    """Machine-precision zero of the monotone smoothed-LAD gradient."""
    from scipy.optimize import brentq

    def grad(b):
        r = y - b * x
        return -float(x @ (r / np.sqrt(r * r + mu * mu)))

    width = max(1e-3 * (abs(b0) + 1.0), 10.0 * mu)
    lo, hi = b0 - width, b0 + width
    for _ in range(200):
        if grad(lo) < 0.0 < grad(hi):
            break
        width *= 4.0
        lo, hi = b0 - width, b0 + width
    g_lo, g_hi = grad(lo), grad(hi)
    if g_lo == 0.0:
        return np.array([lo])
    if g_hi == 0.0:
        return np.array([hi])
    root = brentq(grad, lo, hi, xtol=1e-15 * (abs(b0) + 1.0), rtol=8.9e-16)
    return np.array([root])


def _polish_lm(X, y, mu, beta, tol_abs, max_steps=400):
    """Levenberg-Marquardt-damped Newton on the smoothed LAD objective."""
    n = X.shape[0]
    lam = 1e-6
    steps = 0
    for _ in range(max_steps):
        r = y - X @ beta
        s = np.sqrt(r * r + mu * mu)
        grad = -(X.T @ (r / s)) / n
        if float(np.max(np.abs(grad))) <= 0.5 * tol_abs:
            break
        f0 = float(np.mean(s))
        w_newton = (mu * mu) / (s * s * s)
        hess = (X.T @ (X * w_newton[:, None])) / n
        diag_scale = max(float(np.trace(hess)) / X.shape[1], 1e-300)
        g0 = float(np.max(np.abs(grad)))
        accepted = False
        while lam < 1e18:
            hl = hess + lam * diag_scale * np.eye(X.shape[1])
            try:
                direction = np.linalg.solve(hl, -grad)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            r_new = y - X @ (beta + direction)
            s_new = np.sqrt(r_new * r_new + mu * mu)
            f_new = float(np.mean(s_new))
            # near the optimum the objective change sinks to ulp level; a
            # halved gradient norm is then the merit (cannot cycle), with
            # an ulp-scale guard against genuine ascent
            g_new = float(np.max(np.abs(X.T @ (r_new / s_new)))) / n
            steps += 1
            near_tie = f_new <= f0 + 1e-13 * (1.0 + abs(f0))
            if f_new < f0 or (near_tie and g_new < 0.5 * g0):
                beta = beta + direction
                lam = max(lam / 3.0, 1e-12)
                accepted = True
                break
            lam *= 10.0
        if not accepted:
            break
    return beta, steps


def _check_directions(directions, p):
    dirs = np.atleast_2d(np.asarray(directions, dtype=float))
    if dirs.shape[0] == 0 or dirs.shape[1] != p:
        raise PreconditionError("directions must be a non-empty (k, p) array")
    norms = np.linalg.norm(dirs, axis=1)
    if np.any(np.abs(norms - 1.0) > 1e-12):
        raise PreconditionError("directions must be unit vectors within 1e-12")
    if p == 1:
        vals = set(np.round(dirs[:, 0], 12))
        if vals != {1.0, -1.0}:
            raise PreconditionError("for p = 1 the direction set must be {+1, -1}")
    return dirs


def depth_eval(beta, X, y, t, directions):
    """Truncated regression depth of beta, with the direction infimum
    restricted to the supplied set.  Exact for p = 1 with directions
    {+1, -1}."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    y = np.asarray(y, dtype=float).ravel()
    beta = np.asarray(beta, dtype=float).ravel()
    n, p = X.shape
    dirs = _check_directions(directions, p)
    res = y - X @ beta
    best = 1.0
    # chunk the (n, k) projection matrix to bound memory
    k = dirs.shape[0]
    step = max(1, int(2**24 // max(n, 1)))
    for lo in range(0, k, step):
        proj = X @ dirs[lo : lo + step].T
        ind = (proj * res[:, None] >= 0.0) & (np.abs(proj) >= t)
        best = min(best, float(ind.mean(axis=0).min()))
    return best


def _depth_counts_1d(ratios_sorted, cands, n, extra):
    le = np.searchsorted(ratios_sorted, cands, side="right")
    ge = ratios_sorted.size - np.searchsorted(ratios_sorted, cands, side="left")
    return (np.minimum(le, ge) + extra) / n


def depth_max_1d_exact(x, y, t):
    """Exact 1-D maximizer of the truncated depth over candidate breakpoints
    y_i/x_i and midpoints of consecutive sorted breakpoints.

    Ties are broken toward the smallest candidate: deterministic for
    byte-stable experiment output, and covariant under the translation and
    positive-scaling identities (a modulus-based tie-break is not, since
    tied maximizer sets shift with the data).
    """
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    keep = np.abs(x) >= t
    if not keep.any():
        raise NoDataError(f"no covariates with |x| >= {t}")
    xs, ys = x[keep], y[keep]
    nz = xs != 0.0
    zeros = int((~nz).sum())  # zero covariates count for both signs when t == 0
    if not nz.any():
        raise NoDataError("all surviving covariates are zero")
    ratios = np.sort(ys[nz] / xs[nz])
    cands = np.concatenate([ratios, 0.5 * (ratios[:-1] + ratios[1:])])
    depth = _depth_counts_1d(ratios, cands, x.size, zeros)
    best = depth.max()
    pick = float(cands[depth == best].min())
    return FitReport(np.array([pick]), float(best), 0.0, int(cands.size))


@dataclass
class DepthMaxOptions:
    n_directions: int | None = None  # defaults to 256 * p
    n_starts: int = 4
    max_dim: int = 5
    nm_max_iter: int = 400


@dataclass
class _BestTracker:
    beta: np.ndarray = field(default_factory=lambda: np.zeros(0))
    depth: float = -1.0


def depth_max(X, y, t, opts=None, rng=None):
    """Maximize truncated regression depth.

    p = 1 uses the exact breakpoint scan.  For 2 <= p <= opts.max_dim the
    depth is evaluated over a random direction set (plus the normalized
    residual-sign gradient direction at each candidate) and maximized by
    multi-start Nelder-Mead seeded at the LAD fit; the best depth found is
    reported.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    y = np.asarray(y, dtype=float).ravel()
    n, p = X.shape
    if n <= p:
        raise PreconditionError("need n > p")
    opts = opts or DepthMaxOptions()
    if p == 1:
        return depth_max_1d_exact(X[:, 0], y, t)
    if p > opts.max_dim:
        raise UnsupportedDimensionError(
            f"depth maximization supports p <= {opts.max_dim}, got {p}"
        )
    if rng is None:
        raise PreconditionError("depth_max needs an RngStream for p >= 2")

    m = opts.n_directions or 256 * p
    dirs = rng.normal(size=(m, p))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    tracker = _BestTracker()

    def negdepth(beta):
        g = X.T @ np.sign(y - X @ beta)
        gn = np.linalg.norm(g)
        dset = dirs if gn == 0 else np.vstack([dirs, g / gn])
        val = depth_eval(beta, X, y, t, dset)
        if val > tracker.depth:
            tracker.depth = val
            tracker.beta = np.array(beta, dtype=float)
        return -val

    start = lad_fit(X, y).beta_hat
    sigma_hat = 1.4826 * float(np.median(np.abs(y - X @ start))) or 1.0
    evals = 0
    for s in range(opts.n_starts):
        x0 = start if s == 0 else start + 0.3 * sigma_hat * rng.normal(size=p)
        res = minimize(
            negdepth,
            x0,
            method="Nelder-Mead",
            options={
                "maxiter": opts.nm_max_iter,
                "xatol": 1e-6,
                "fatol": 0.25 / n,
                "initial_simplex": _simplex(x0, 0.5 * sigma_hat),
            },
        )
        evals += res.nfev
    return FitReport(tracker.beta, tracker.depth, 0.0, evals)


def _simplex(x0, radius):
    p = x0.size
    simplex = np.tile(x0, (p + 1, 1))
    for j in range(p):
        simplex[j + 1, j] += radius
    return simplex
