"""tailreg: robust regression under adaptive response contamination.

Estimators exploiting covariate tails (truncated median regression,
truncated regression depth, LAD), constructive worst-case contamination
generators, multi-distribution matching / Fano lower-bound machinery, and a
moment-matched hidden-direction hard instance — all at desk scale with a
deterministic Monte Carlo harness.
"""

from .contamination import (
    ContaminatedSample,
    FlipSign,
    HardSQ,
    MatchedPair,
    ModelSpec,
    NoContamination,
    NonUniformLB,
    ObliviousNoise,
    ObliviousResponse,
    PointMass,
    SparseAdditive,
    build_nonuniform_lb,
    flip_adversary_moment_check,
    generate,
)
from .designs import DesignSpec, gaussian_design, generalized_design, sample_design
from .estimators import (
    FitReport,
    FixedT,
    Thm1Rule,
    Thm2Rule,
    Thm5Rule,
    choose_t,
    depth_eval,
    depth_max,
    lad_fit,
    truncated_lad_1d,
)
from .harness import (
    ExperimentConfig,
    ResultRow,
    build_experiment_config,
    emit_csv,
    emit_svg_loglog,
    parse_csv,
    run_experiment,
)
from .matching import (
    GaussianFamily,
    MatchingBundle,
    build_matching,
    corollary1_bundle,
    fano_delta,
    fano_kl_budget,
    multi_tv_gaussian,
)
from .numerics import (
    Grid1D,
    RngStream,
    TabulatedDensity,
    cheb_min_inf_solve,
    integrate_grid,
    normal_cdf,
    normal_pdf,
    sample_gen_gaussian_1d,
    weighted_median,
)
from .sq_hardness import (
    HardInstance,
    HermiteBasis,
    build_g,
    build_instance,
    chi2_avg,
    hermite_eval,
    load_instance,
    probe_alt_moments,
    sample_alt,
    sample_null,
    save_instance,
    verify_instance,
)

__version__ = "0.1.0"
