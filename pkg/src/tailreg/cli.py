"""Command-line front end: simulate, rates, matching, hardness, fano,
selftest.  Exit codes: 0 success, 1 experiment/verification failure,
2 usage or config errors."""

import argparse
import math
import sys
import time

import numpy as np

from . import harness
from .contamination import ModelSpec, generate
from .designs import gaussian_design
from .errors import ConfigError, TailregError
from .harness import (
    build_experiment_config,
    emit_csv,
    emit_svg_loglog,
    load_config,
    run_experiment,
)
from .matching import (
    GaussianFamily,
    build_matching,
    corollary1_bundle,
    fano_delta,
    fano_kl_budget,
    multi_tv_gaussian,
)
from .numerics import RngStream, normal_cdf
from .sq_hardness import (
    build_instance,
    chi2_avg,
    load_instance,
    probe_alt_moments,
    save_instance,
    verify_instance,
)


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="tailreg",
        description="Robust regression with response contamination: "
        "simulators, estimators, and lower-bound certifications.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="dump one contaminated sample to CSV")
    sim.add_argument("--config", required=True)
    sim.add_argument("--out", required=True)
    sim.add_argument("--seed", type=int, default=None)

    rates = sub.add_parser("rates", help="run a Monte Carlo experiment")
    rates.add_argument("--config", required=True)
    rates.add_argument("--out", default="rates.csv")
    rates.add_argument("--svg", default=None)
    rates.add_argument("--seed", type=int, default=None)
    rates.add_argument("--threads", type=int, default=1)
    rates.add_argument(
        "--timing",
        action="store_true",
        help="measure per-cell wall time (breaks byte-reproducibility of rows)",
    )

    match = sub.add_parser("matching", help="certify matching constructions")
    match.add_argument("--config", default=None)
    match.add_argument("--seed", type=int, default=None)

    hard = sub.add_parser("hardness", help="build/verify/export a hard instance")
    hard.add_argument("--config", default=None)
    hard.add_argument("--load", default=None, help="verify a previously exported file")
    hard.add_argument("--out", default=None, help="export path for the instance")
    hard.add_argument("--seed", type=int, default=None)

    fano = sub.add_parser("fano", help="tabulate the Fano lower-bound curve")
    fano.add_argument("--config", default=None)
    fano.add_argument("--out", default="fano.csv")

    self_p = sub.add_parser("selftest", help="run the quick example-check battery")
    self_p.add_argument("--verbose", action="store_true")
    return parser


def _cmd_simulate(args):
    raw = load_config(args.config)
    known = {"n", "p", "sigma", "eps", "adversary", "seed"}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    n = int(raw.get("n", "1000"))
    p = int(raw.get("p", "1"))
    sigma = float(raw.get("sigma", "1"))
    eps = float(raw.get("eps", "0"))
    adv = harness.parse_adversary(raw.get("adversary", "none"))
    seed = int(raw.get("seed", "1")) if args.seed is None else args.seed
    beta = np.zeros(p)
    beta[0] = 1.0
    model = ModelSpec(beta, sigma, eps, gaussian_design(p), adv)
    sample = generate(model, n, RngStream(seed, 0))
    header = ",".join([f"x{j + 1}" for j in range(p)] + ["y", "inlier"])
    lines = [header]
    for i in range(n):
        xs = ",".join(f"{v:.10g}" for v in sample.X[i])
        lines.append(f"{xs},{sample.y[i]:.10g},{int(sample.inlier_mask[i])}")
    with open(args.out, "w", encoding="ascii", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
    print(f"wrote {n} rows to {args.out}")
    return 0


def _cmd_rates(args):
    raw = load_config(args.config)
    config = build_experiment_config(raw, seed_override=args.seed)
    t0 = time.perf_counter()
    rows = run_experiment(config, threads=args.threads, measure_time=args.timing)
    elapsed = time.perf_counter() - t0
    emit_csv(rows, args.out)
    if args.svg:
        emit_svg_loglog(rows, args.svg)
    print(
        f"{config.kind}: {len(rows)} rows -> {args.out} "
        f"({elapsed:.1f}s, {args.threads} threads)",
        file=sys.stderr,
    )
    if any(math.isinf(r.mean_err) for r in rows):
        print("some cells failed; see !error rows", file=sys.stderr)
        return 1
    return 0


def _print_table(checks):
    width = max(len(name) for name, _, _ in checks)
    ok = True
    for name, passed, detail in checks:
        status = "PASS" if passed else "FAIL"
        print(f"{name:<{width}}  {status}  {detail}")
        ok = ok and passed
    return 0 if ok else 1


def _cmd_matching(args):
    raw = load_config(args.config) if args.config else {}
    known = {"eps", "sigma", "reps", "seed"}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    eps = float(raw.get("eps", "0.2"))
    sigma = float(raw.get("sigma", "1"))
    reps = int(raw.get("reps", "20"))
    seed = int(raw.get("seed", "1")) if args.seed is None else args.seed

    checks = []
    two = GaussianFamily((0.0, 1.0), sigma)
    closed = 2.0 * normal_cdf(0.5 / sigma) - 1.0
    got = multi_tv_gaussian(two)
    checks.append(
        (
            "two_gaussian_closed_form",
            abs(got - closed) <= 1e-10,
            f"|{got:.12g} - {closed:.12g}|",
        )
    )
    worst_res, worst_mass, worst_neg, worst_lem2, worst_kl = 0.0, 0.0, 0.0, -1.0, -1.0
    for rep in range(reps):
        rng = RngStream(seed, rep)
        family = harness.random_matchable_family(rng, eps, sigma)
        bundle = build_matching(family, eps)
        worst_res = max(worst_res, bundle.sup_residual)
        worst_mass = max(worst_mass, max(abs(q.mass() - 1.0) for q in bundle.q))
        worst_neg = max(
            worst_neg, max(0.0, -min(float(q.values.min()) for q in bundle.q))
        )
        spread = max(family.means) - min(family.means)
        lem2 = spread / (math.sqrt(2.0 * math.pi) * sigma)
        worst_lem2 = max(worst_lem2, bundle.tv - lem2)
        cb = corollary1_bundle(family, eps)
        worst_kl = max(
            worst_kl, float(np.max(cb["kl_matrix"] - cb["bound_matrix"]))
        )
    checks.append(("mixture_residual<=1e-8", worst_res <= 1e-8, f"{worst_res:.3e}"))
    checks.append(("unit_mass+-1e-6", worst_mass <= 1e-6, f"{worst_mass:.3e}"))
    checks.append(("non_negativity", worst_neg <= 1e-12, f"{worst_neg:.3e}"))
    checks.append(("lemma2_bound", worst_lem2 <= 1e-10, f"slack {-worst_lem2:.3e}"))
    checks.append(
        ("corollary1_kl_bound", worst_kl <= 1e-6, f"max excess {worst_kl:.3e}")
    )
    return _print_table(checks)


def _cmd_hardness(args):
    if args.load:
        inst = load_instance(args.load)
    else:
        raw = load_config(args.config) if args.config else {}
        known = {"m", "eps", "delta", "n", "p", "seed"}
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        inst = build_instance(
            int(raw.get("m", "4")),
            float(raw.get("eps", "0.2")),
            float(raw.get("delta", "0.02")),
        )
    metrics = verify_instance(inst)
    chi2 = chi2_avg(inst)
    checks = [
        ("kappa<=1", inst.kappa <= 1.0, f"{inst.kappa:.6g}"),
        (
            "g_moments<=1e-8",
            metrics["g_moment_resid"] <= 1e-8,
            f"{metrics['g_moment_resid']:.3e}",
        ),
        (
            "achieved_B<=target_B",
            metrics["achieved_over_target"] <= 1.0,
            f"ratio {metrics['achieved_over_target']:.4g}",
        ),
        (
            "Ay_moments<=1e-6",
            metrics["ay_moment_resid"] <= 1e-6,
            f"{metrics['ay_moment_resid']:.3e}",
        ),
        (
            "Ay_mass<=1e-6",
            metrics["ay_mass_resid"] <= 1e-6,
            f"{metrics['ay_mass_resid']:.3e}",
        ),
        (
            "marginal<=1e-6",
            metrics["marginal_resid"] <= 1e-6,
            f"{metrics['marginal_resid']:.3e}",
        ),
        (
            "fy_bound",
            metrics["fy_bound_excess"] <= 1e-12,
            f"excess {metrics['fy_bound_excess']:.3e}",
        ),
        (
            "chi2_avg<=10m",
            0.0 <= chi2 <= 10.0 * inst.m,
            f"{chi2:.6g}",
        ),
    ]
    if args.out:
        save_instance(inst, args.out)
        print(f"exported instance to {args.out}")
    return _print_table(checks)


def _cmd_fano(args):
    raw = load_config(args.config) if args.config else {}
    known = {"n_grid", "p", "eps_grid", "sigma"}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    n_grid = [int(v) for v in raw.get("n_grid", "1000,10000,100000").split(",")]
    eps_grid = [float(v) for v in raw.get("eps_grid", "0,0.05,0.1,0.2").split(",")]
    p = int(raw.get("p", "1"))
    sigma = float(raw.get("sigma", "1"))
    lines = ["n,p,eps,delta,budget,budget_cap"]
    for n in n_grid:
        for eps in eps_grid:
            delta = fano_delta(n, p, sigma, eps)
            budget, cap = fano_kl_budget(n, p, sigma, eps, delta)
            lines.append(
                f"{n},{p},{eps:.10g},{delta:.10g},{budget:.10g},{cap:.10g}"
            )
    with open(args.out, "w", encoding="ascii", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
    print(f"wrote {len(lines) - 1} rows to {args.out}")
    return 0


def _selftest_checks():
    # Each entry: (name, callable) raising AssertionError on failure.
    from . import selftest

    return selftest.CHECKS


def _cmd_selftest(args):
    checks = _selftest_checks()
    failures = 0
    for name, fn in checks:
        t0 = time.perf_counter()
        try:
            fn()
            status = "PASS"
        except Exception as exc:  # noqa: BLE001 - report, don't crash
            status = "FAIL"
            failures += 1
            if args.verbose:
                print(f"  {type(exc).__name__}: {exc}")
        dt = time.perf_counter() - t0
        print(f"{status}  {name}  ({dt:.2f}s)")
    print(f"{len(checks) - failures}/{len(checks)} checks passed")
    return 0 if failures == 0 else 1


def main(argv=None):
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    dispatch = {
        "simulate": _cmd_simulate,
        "rates": _cmd_rates,
        "matching": _cmd_matching,
        "hardness": _cmd_hardness,
        "fano": _cmd_fano,
        "selftest": _cmd_selftest,
    }
    try:
        return dispatch[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except TailregError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 1


def cli(argv):
    """Spec-facing alias: returns the process exit code for argv."""
    return main(argv)


if __name__ == "__main__":
    sys.exit(main())
