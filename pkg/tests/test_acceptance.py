"""Acceptance suite: one test per criterion, each printing a PASS line with
its measured quantities (run with `pytest -s` to see them live).

Budgets assume the stated reference of 8 worker threads; the thread count
adapts to the host, and elapsed time is asserted against each criterion's
budget.
"""

import math
import os
import time

import numpy as np
import pytest
from scipy.special import ndtri

from tailreg.contamination import FlipSign, ModelSpec, NoContamination, generate
from tailreg.designs import gaussian_design
from tailreg.errors import TailregError
from tailreg.estimators import (
    Thm1Rule,
    Thm2Rule,
    depth_eval,
    depth_max,
    lad_fit,
    truncated_lad_1d,
)
from tailreg.harness import (
    ExperimentConfig,
    emit_csv,
    random_matchable_family,
    run_experiment,
)
from tailreg.matching import (
    GaussianFamily,
    build_matching,
    corollary1_bundle,
    fano_delta,
    fano_kl_budget,
    multi_tv_gaussian,
)
from tailreg.numerics import RngStream, normal_cdf, weighted_median
from tailreg.sq_hardness import (
    build_instance,
    chi2_avg,
    probe_alt_moments,
    verify_instance,
)

THREADS = min(8, os.cpu_count() or 1)
SEED = 20250810


def _report(num, ok, detail, elapsed=None, budget=None):
    status = "PASS" if ok else "FAIL"
    timing = ""
    if elapsed is not None:
        timing = f" [{elapsed:.0f}s of {budget:.0f}s budget]"
    print(f"criterion {num}: {status} - {detail}{timing}")
    assert ok, f"criterion {num} failed: {detail}"


class TestAcceptance:
    def test_criterion_1_consistency_under_constant_contamination(self):
        budget = 600.0
        t0 = time.time()
        cfg = ExperimentConfig(
            kind="rate_1d",
            n_grid=(10**3, 10**4, 10**5, 10**6),
            p=1,
            eps_grid=(0.1,),
            sigma=1.0,
            adversary=FlipSign(),
            estimators=("trunc_lad", "lad"),
            t_policy=Thm1Rule(),
            reps=200,
            base_seed=SEED,
        )
        rows = run_experiment(cfg, threads=THREADS)
        elapsed = time.time() - t0
        trunc = {r.n: r.median_err for r in rows if r.estimator == "trunc_lad"}
        lad = {r.n: r.median_err for r in rows if r.estimator == "lad"}
        ns = sorted(trunc)
        decreasing = all(trunc[a] > trunc[b] for a, b in zip(ns, ns[1:]))
        ratio = trunc[10**6] / trunc[10**3]
        lad_ratio = lad[10**6] / lad[10**4]
        ok = (
            decreasing
            and ratio <= 0.7
            and (1.0 / 1.5) < lad_ratio < 1.5
            and elapsed <= budget
        )
        _report(
            1,
            ok,
            f"trunc medians {[round(trunc[n], 4) for n in ns]} strictly "
            f"decreasing={decreasing}, err(1e6)/err(1e3)={ratio:.3f}<=0.7, "
            f"LAD plateau ratio={lad_ratio:.3f} in (0.67,1.5)",
            elapsed,
            budget,
        )

    def test_criterion_2_clean_data_rate(self):
        budget = 300.0
        t0 = time.time()
        slopes = {}
        cfg1 = ExperimentConfig(
            kind="rate_1d",
            n_grid=(10**3, 10**4, 10**5),
            p=1,
            eps_grid=(0.0,),
            sigma=1.0,
            adversary=NoContamination(),
            estimators=("lad", "depth"),
            t_policy=Thm2Rule(),
            reps=100,
            base_seed=SEED + 1,
        )
        rows = run_experiment(cfg1, threads=THREADS)
        for est in ("lad", "depth"):
            pts = [(math.log(r.n), math.log(r.median_err)) for r in rows if r.estimator == est]
            slopes[f"{est}(p=1)"] = np.polyfit([a for a, _ in pts], [b for _, b in pts], 1)[0]
        cfg3 = ExperimentConfig(
            kind="rate_hd",
            n_grid=(10**3, 10**4, 10**5),
            p=3,
            eps_grid=(0.0,),
            sigma=1.0,
            adversary=NoContamination(),
            estimators=("lad",),
            t_policy=Thm2Rule(),
            reps=100,
            base_seed=SEED + 2,
        )
        rows3 = run_experiment(cfg3, threads=THREADS)
        pts = [(math.log(r.n), math.log(r.median_err)) for r in rows3]
        slopes["lad(p=3)"] = np.polyfit([a for a, _ in pts], [b for _, b in pts], 1)[0]
        elapsed = time.time() - t0
        ok = all(-0.6 <= s <= -0.4 for s in slopes.values()) and elapsed <= budget
        detail = ", ".join(f"{k} slope {v:.3f}" for k, v in slopes.items())
        _report(2, ok, detail + " all within [-0.6, -0.4]", elapsed, budget)

    def test_criterion_3_gamma_dependence(self):
        budget = 600.0
        t0 = time.time()
        cfg = ExperimentConfig(
            kind="gamma_effect",
            n_grid=(10**6,),
            p=1,
            eps_grid=(0.1,),
            sigma=1.0,
            adversary=FlipSign(),
            estimators=(),
            t_policy=Thm2Rule(),
            reps=100,
            base_seed=SEED + 3,
            gammas=(1.0, 2.0),
        )
        rows = run_experiment(cfg, threads=THREADS)
        elapsed = time.time() - t0
        g1 = next(r for r in rows if r.estimator == "trunc_lad_g1")
        g2 = next(r for r in rows if r.estimator == "trunc_lad_g2")
        combined = math.hypot(g1.se, g2.se)
        margin = g2.median_err - g1.median_err
        ok = margin >= combined and elapsed <= budget
        _report(
            3,
            ok,
            f"median err gamma=1 {g1.median_err:.5f} <= gamma=2 "
            f"{g2.median_err:.5f}, margin {margin:.5f} >= combined se {combined:.5f}",
            elapsed,
            budget,
        )

    def test_criterion_4_oracle_equivalence(self):
        budget = 60.0
        t0 = time.time()
        bs = np.arange(-10.0, 10.0, 1e-4)
        worst_lad_gap = 0.0
        worst_depth_gap = 0.0
        worst_irls = 0.0
        for rep in range(50):
            rng = RngStream(SEED + 4, rep)
            x = rng.normal(size=30)
            y = 1.2 * x + rng.normal(size=30)
            t = 0.3

            fit = truncated_lad_1d(x, y, t)
            keep = np.abs(x) >= t
            objs = np.abs(y[keep, None] - bs[None, :] * x[keep, None]).sum(axis=0)
            k = int(np.argmin(objs))
            worst_lad_gap = max(worst_lad_gap, abs(fit.beta_hat[0] - bs[k]))

            dm = depth_max(x[:, None], y, t)
            # independent depth scan over the same grid
            nz = keep & (x != 0)
            ratios = np.sort(y[nz] / x[nz])
            zeros = int((keep & (x == 0)).sum())
            le = np.searchsorted(ratios, bs, side="right")
            ge = ratios.size - np.searchsorted(ratios, bs, side="left")
            depth_grid = (np.minimum(le, ge) + zeros) / x.size
            grid_best = float(depth_grid.max())
            worst_depth_gap = max(worst_depth_gap, grid_best - dm.objective)

            irls = lad_fit(x[:, None], y).beta_hat[0]
            exact = weighted_median(y / x, np.abs(x))
            worst_irls = max(worst_irls, abs(irls - exact))
        elapsed = time.time() - t0
        ok = (
            worst_lad_gap <= 1e-4 + 1e-12
            and worst_depth_gap <= 1e-12
            and worst_irls <= 1e-6
            and elapsed <= budget
        )
        _report(
            4,
            ok,
            f"trunc-LAD vs grid argmin gap {worst_lad_gap:.2e} <= 1e-4, "
            f"depth >= grid max (worst slack {worst_depth_gap:.1e}), "
            f"IRLS vs weighted median {worst_irls:.2e} <= 1e-6 over 50 instances",
            elapsed,
            budget,
        )

    def test_criterion_5_equivariance_suite(self):
        worst = {
            "trunc_scale_pow2": 0.0,
            "trunc_translate": 0.0,
            "depth_scale_pow2": 0.0,
            "depth_translate": 0.0,
            "lad_translate": 0.0,
            "lad_scale": 0.0,
        }
        for rep in range(100):
            rng = RngStream(SEED + 5, rep)
            x = rng.normal(size=40)
            y = 0.9 * x + rng.normal(size=40)
            shift = float(2.0 * rng.normal())
            c_pow2 = float(2.0 ** int(rng.integers(-3, 4)))
            c_any = float(0.1 + 3.0 * rng.uniform())

            b0 = truncated_lad_1d(x, y, 0.4).beta_hat[0]
            worst["trunc_scale_pow2"] = max(
                worst["trunc_scale_pow2"],
                abs(truncated_lad_1d(x, c_pow2 * y, 0.4).beta_hat[0] - c_pow2 * b0),
            )
            worst["trunc_translate"] = max(
                worst["trunc_translate"],
                abs(truncated_lad_1d(x, y + shift * x, 0.4).beta_hat[0] - (b0 + shift)),
            )

            d0 = depth_max(x[:, None], y, 0.4).beta_hat[0]
            worst["depth_scale_pow2"] = max(
                worst["depth_scale_pow2"],
                abs(depth_max(x[:, None], c_pow2 * y, 0.4).beta_hat[0] - c_pow2 * d0),
            )
            worst["depth_translate"] = max(
                worst["depth_translate"],
                abs(depth_max(x[:, None], y + shift * x, 0.4).beta_hat[0] - (d0 + shift)),
            )

            X = rng.normal(size=(40, 2))
            yy = X @ np.array([0.5, -1.0]) + rng.normal(size=40)
            base = lad_fit(X, yy).beta_hat
            sh = np.array([shift, -shift])
            worst["lad_translate"] = max(
                worst["lad_translate"],
                float(np.max(np.abs(lad_fit(X, yy + X @ sh).beta_hat - base - sh))),
            )
            worst["lad_scale"] = max(
                worst["lad_scale"],
                float(np.max(np.abs(lad_fit(X, c_any * yy).beta_hat - c_any * base))),
            )
        ok = (
            worst["trunc_scale_pow2"] == 0.0
            and worst["depth_scale_pow2"] == 0.0
            and worst["trunc_translate"] <= 1e-12
            and worst["depth_translate"] <= 1e-12
            and worst["lad_translate"] <= 1e-8
            and worst["lad_scale"] <= 1e-8
        )
        detail = (
            f"exact paths: pow2-scale bit-exact "
            f"({worst['trunc_scale_pow2']:.1e}, {worst['depth_scale_pow2']:.1e}), "
            f"translation <= 1e-12 ({worst['trunc_translate']:.1e}, "
            f"{worst['depth_translate']:.1e}); IRLS within 1e-8 "
            f"({worst['lad_translate']:.1e}, {worst['lad_scale']:.1e})"
        )
        _report(5, ok, detail)

    def test_criterion_6_matching_constructions(self):
        eps = 0.2
        sigma = 1.0
        worst_res, worst_mass, worst_neg = 0.0, 0.0, 0.0
        lemma2_ok, kl_ok = True, True
        count = 0
        rep = 0
        while count < 50:
            rng = RngStream(SEED + 6, rep)
            rep += 1
            fam = random_matchable_family(rng, eps, sigma)
            tv = multi_tv_gaussian(fam)
            if tv > eps / (1 - eps):
                continue
            count += 1
            bundle = build_matching(fam, eps)
            worst_res = max(worst_res, bundle.sup_residual)
            worst_mass = max(worst_mass, max(abs(q.mass() - 1) for q in bundle.q))
            worst_neg = max(
                worst_neg, max(0.0, -min(float(q.values.min()) for q in bundle.q))
            )
            spread = max(fam.means) - min(fam.means)
            lemma2_ok &= tv <= spread / (math.sqrt(2 * math.pi) * sigma) + 1e-12
            cb = corollary1_bundle(fam, eps)
            kl_ok &= bool(np.all(cb["kl_matrix"] <= cb["bound_matrix"] + 1e-6))
        two = multi_tv_gaussian(GaussianFamily((0.0, 1.0), 1.0))
        closed = 2.0 * normal_cdf(0.5) - 1.0
        two_ok = abs(two - closed) <= 1e-10
        ok = (
            worst_res <= 1e-8
            and worst_mass <= 1e-6
            and worst_neg <= 1e-12
            and lemma2_ok
            and kl_ok
            and two_ok
        )
        _report(
            6,
            ok,
            f"{count} families: sup residual {worst_res:.1e} <= 1e-8, mass dev "
            f"{worst_mass:.1e} <= 1e-6, negativity {worst_neg:.1e}, Lemma-2 "
            f"bound {lemma2_ok}, Corollary-1 KL bound {kl_ok}, two-Gaussian "
            f"closed form |{two:.6f}-{closed:.6f}| <= 1e-10",
        )

    def test_criterion_7_fano_curve(self):
        deltas = [fano_delta(n, 1, 1.0, 0.0) for n in (10**3, 10**4, 10**5)]
        scaling_ok = all(
            abs(a / b - math.sqrt(10.0)) <= 0.05 * math.sqrt(10.0)
            for a, b in zip(deltas, deltas[1:])
        )
        budget_ok = True
        worst_frac = 0.0
        rng = RngStream(SEED + 7, 0)
        for _ in range(20):
            n = int(10 ** (2 + 3 * float(rng.uniform())))
            p = 1 + int(rng.integers(0, 10))
            eps = 0.45 * float(rng.uniform())
            delta = fano_delta(n, p, 1.0, eps)
            used, cap = fano_kl_budget(n, p, 1.0, eps, delta)
            budget_ok &= used <= cap
            worst_frac = max(worst_frac, used / cap)
        ok = scaling_ok and budget_ok
        _report(
            7,
            ok,
            f"eps=0 scaling ratios within 5% of sqrt(10) ({scaling_ok}), "
            f"n*maxKL <= p*log2/4 on 20 triples (worst fraction "
            f"{worst_frac:.3f})",
        )

    def test_criterion_8_sq_construction(self):
        budget = 300.0
        t0 = time.time()
        inst = build_instance(4, 0.2, 0.02)
        metrics = verify_instance(inst)
        chi2 = chi2_avg(inst)
        z = probe_alt_moments(inst, np.array([1.0]), 10**5, RngStream(SEED + 8, 0))
        elapsed = time.time() - t0
        max_z = float(np.abs(z).max())
        ok = (
            inst.kappa <= 1.0
            and metrics["g_moment_resid"] <= 1e-8
            and metrics["achieved_over_target"] <= 1.0
            and metrics["ay_moment_resid"] <= 1e-6
            and metrics["marginal_resid"] <= 1e-6
            and np.isfinite(chi2)
            and 0.0 <= chi2 <= 10.0 * inst.m
            and max_z <= 4.0
            and elapsed <= budget
        )
        _report(
            8,
            ok,
            f"kappa={inst.kappa:.4f}<=1, g moments {metrics['g_moment_resid']:.1e}"
            f"<=1e-8, B ratio {metrics['achieved_over_target']:.3f}<=1, A_y "
            f"moments {metrics['ay_moment_resid']:.1e}<=1e-6, marginal "
            f"{metrics['marginal_resid']:.1e}<=1e-6, chi2_avg={chi2:.6f}<=40, "
            f"probe max|z|={max_z:.2f}<=4 (m x 5 grid, n=1e5)",
            elapsed,
            budget,
        )

    def test_criterion_9_byte_determinism(self, tmp_path):
        cfg = ExperimentConfig(
            kind="rate_1d",
            n_grid=(2000, 8000),
            p=1,
            eps_grid=(0.0, 0.1),
            sigma=1.0,
            adversary=FlipSign(),
            estimators=("trunc_lad", "lad"),
            t_policy=Thm1Rule(),
            reps=10,
            base_seed=SEED + 9,
        )
        paths = []
        for i, threads in enumerate((1, 2, THREADS, 1)):
            rows = run_experiment(cfg, threads=threads)
            path = tmp_path / f"run{i}_t{threads}.csv"
            emit_csv(rows, path)
            paths.append(path.read_bytes())
        ok = all(b == paths[0] for b in paths[1:])
        _report(
            9,
            ok,
            f"CSV byte-identical across thread counts (1, 2, {THREADS}) and reruns "
            f"({len(paths[0])} bytes)",
        )
