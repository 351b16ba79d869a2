"""Quick self-contained example checks behind `tailreg selftest`.

These are scaled-down versions of the test-suite oracles: each check runs
in at most a few seconds and raises AssertionError on failure.
"""

import math

import numpy as np

from .contamination import FlipSign, ModelSpec, NoContamination, generate
from .designs import gaussian_design
from .estimators import (
    FixedT,
    Thm1Rule,
    Thm2Rule,
    Thm5Rule,
    choose_t,
    depth_max,
    lad_fit,
    truncated_lad_1d,
)
from .matching import GaussianFamily, build_matching, fano_delta, multi_tv_gaussian
from .numerics import (
    Grid1D,
    RngStream,
    cheb_min_inf_solve,
    integrate_grid,
    normal_cdf,
    normal_pdf,
    sample_gen_gaussian_1d,
    weighted_median,
)
from .sq_hardness import build_instance, hermite_table, verify_instance


def _check_weighted_median():
    assert weighted_median([1, 2, 3], [1, 1, 1]) == 2
    assert weighted_median([5], [0.1]) == 5
    assert weighted_median([1, 2, 3, 4], [1, 1, 1, 10]) == 4


def _check_normal_cdf():
    assert normal_cdf(0.0) == 0.5
    for x in (-3.0, -0.7, 0.3, 2.5):
        assert abs(normal_cdf(x) + normal_cdf(-x) - 1.0) < 1e-15
    assert abs(normal_cdf(1.96) - 0.9750021048517795) < 1e-12


def _check_choose_t():
    assert abs(choose_t(Thm2Rule(), 1000, 1, 0.0) - 0.5) < 1e-15
    assert abs(choose_t(Thm1Rule(), 1000, 1, 0.0) - math.sqrt(0.5)) < 1e-15
    assert abs(choose_t(Thm5Rule(1.0), 1000, 1, 0.0) - 1.0 / 3.0) < 1e-15
    assert choose_t(FixedT(1.5), 10, 1, 0.1) == 1.5


def _check_gen_gaussian():
    rng = RngStream(2024, 0)
    t = sample_gen_gaussian_1d(1.0, rng, size=200000)
    assert abs(t.mean()) < 0.05
    assert abs(t.var() - 8.0) < 0.3


def _check_quadrature():
    grid = Grid1D.uniform(-10.0, 10.0, 4001)
    phi = normal_pdf(grid.nodes)
    assert abs(integrate_grid(phi, grid) - 1.0) < 1e-8
    assert abs(integrate_grid(grid.nodes * phi, grid)) < 1e-12
    assert abs(integrate_grid(grid.nodes**2 * phi, grid) - 1.0) < 1e-8


def _check_cheb_certificate():
    grid = Grid1D.uniform(-10.0, 10.0, 2001)
    phi_w = normal_pdf(grid.nodes) * grid.weights
    rows = np.vstack([phi_w, phi_w * grid.nodes])
    r = cheb_min_inf_solve(rows, np.array([0.0, 1.0]))
    assert abs(np.max(np.abs(r)) - math.sqrt(math.pi / 2)) < 1e-3


def _check_truncated_lad():
    rng = RngStream(7, 0)
    x = rng.normal(size=200)
    rep = truncated_lad_1d(x, 2.0 * x, 0.5)
    assert abs(rep.beta_hat[0] - 2.0) < 1e-12


def _check_lad_vs_median():
    rng = RngStream(8, 0)
    x = rng.normal(size=200)
    y = 1.5 * x + 0.3 * rng.normal(size=200)
    exact = truncated_lad_1d(x, y, 0.0).beta_hat[0]
    irls = lad_fit(x[:, None], y).beta_hat[0]
    assert abs(exact - irls) < 1e-6


def _check_depth_grid():
    rng = RngStream(9, 0)
    x = rng.normal(size=60)
    y = 0.7 * x + 0.5 * rng.normal(size=60)
    rep = depth_max(x[:, None], y, 0.3)
    from .estimators import depth_eval

    bs = np.arange(-3.0, 3.0, 1e-3)
    dirs = np.array([[1.0], [-1.0]])
    best = max(depth_eval([b], x[:, None], y, 0.3, dirs) for b in bs)
    assert rep.objective >= best - 1e-12


def _check_flip_attenuation():
    model = ModelSpec(
        np.array([1.0]), 1.0, 0.2, gaussian_design(1), FlipSign()
    )
    sample = generate(model, 200000, RngStream(11, 0))
    moment = float(sample.X[:, 0] @ sample.y / sample.y.size)
    assert abs(moment - 0.6) < 0.02


def _check_clean_generation():
    model = ModelSpec(
        np.array([1.0, -0.5]), 1.0, 0.0, gaussian_design(2), NoContamination()
    )
    sample = generate(model, 50000, RngStream(12, 0))
    assert sample.inlier_mask.all()
    resid = sample.y - sample.X @ model.beta
    assert abs(resid.mean()) < 0.02 and abs(resid.std() - 1.0) < 0.02


def _check_matching():
    family = GaussianFamily((-0.1, 0.0, 0.1), 1.0)
    bundle = build_matching(family, 0.2)
    assert bundle.sup_residual <= 1e-8
    assert all(abs(q.mass() - 1.0) <= 1e-6 for q in bundle.q)
    closed = 2.0 * normal_cdf(0.5) - 1.0
    assert abs(multi_tv_gaussian(GaussianFamily((0.0, 1.0), 1.0)) - closed) < 1e-10


def _check_fano_monotone():
    deltas = [fano_delta(10000, 1, 1.0, e) for e in (0.0, 0.05, 0.1, 0.2)]
    assert all(a <= b + 1e-15 for a, b in zip(deltas, deltas[1:]))


def _check_hermite():
    grid = Grid1D.uniform(-12.0, 12.0, 4001)
    he = hermite_table(grid.nodes, 6)
    phi_w = normal_pdf(grid.nodes) * grid.weights
    gram = (he * phi_w[None, :]) @ he.T
    assert np.max(np.abs(gram - np.eye(7))) < 1e-8


def _check_hard_instance_small():
    inst = build_instance(2, 0.2, 0.02, None, None)
    metrics = verify_instance(inst, y_checks=np.linspace(-6, 6, 9))
    assert inst.kappa <= 1.0
    assert metrics["g_moment_resid"] <= 1e-8
    assert metrics["ay_moment_resid"] <= 1e-6
    assert metrics["marginal_resid"] <= 1e-6


def _check_csv_roundtrip():
    import os
    import tempfile

    from .harness import ResultRow, emit_csv, parse_csv

    rows = [
        ResultRow("rate_1d", 1000, 1, 0.1, "lad", 0.5, 8, 0.25, 0.2, 0.01, 0.0),
        ResultRow("rate_1d", 10000, 1, 0.1, "trunc_lad", 1.5, 8, 0.125, 0.1, 0.005, 0.0),
    ]
    fd, path = tempfile.mkstemp(suffix=".csv")
    os.close(fd)
    try:
        emit_csv(rows, path)
        assert parse_csv(path) == rows
    finally:
        os.unlink(path)


CHECKS = [
    ("weighted_median_examples", _check_weighted_median),
    ("normal_cdf_examples", _check_normal_cdf),
    ("choose_t_examples", _check_choose_t),
    ("gen_gaussian_laplace_variance", _check_gen_gaussian),
    ("grid_quadrature_gaussian_moments", _check_quadrature),
    ("min_inf_norm_dual_certificate", _check_cheb_certificate),
    ("truncated_lad_exact_data", _check_truncated_lad),
    ("lad_irls_matches_weighted_median", _check_lad_vs_median),
    ("depth_max_beats_grid_scan", _check_depth_grid),
    ("flip_adversary_attenuation", _check_flip_attenuation),
    ("clean_generation_moments", _check_clean_generation),
    ("matching_bundle_invariants", _check_matching),
    ("fano_delta_monotone_in_eps", _check_fano_monotone),
    ("hermite_orthonormality", _check_hermite),
    ("hard_instance_m2", _check_hard_instance_small),
    ("csv_roundtrip", _check_csv_roundtrip),
]
