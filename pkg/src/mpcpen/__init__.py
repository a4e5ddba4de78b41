"""Penetrance estimation for multiple primary cancers from family pedigree data.

Fits a Bayesian non-homogeneous Poisson process with a Bernstein-polynomial
baseline to recurrent cancer onsets observed in ascertained pedigrees with
partially missing genotypes, and turns posterior draws into age-at-onset
penetrance curves and short-term risk predictions.
"""

from mpcpen.pedigree import (
    Individual,
    Family,
    FamilySet,
    ValidationReport,
    parse_pedigree,
    serialize_pedigree,
    validate_family,
    normalize_age,
)
from mpcpen.mendelian import (
    Genotype,
    GenotypeDist,
    founder_prior,
    transmission_prob,
    peel_family,
    brute_force_family_loglik,
    conditional_family_loglik,
)
from mpcpen.intensity import (
    ModelParams,
    CovariateSchedule,
    COVARIATE_SETS,
    covariates_at,
    baseline_intensity,
    cumulative_baseline,
    intensity,
    cumulative_intensity,
)
from mpcpen.likelihood import (
    AscertainmentConfig,
    individual_loglik,
    ascertainment_logprob,
    family_loglik_acj,
    total_loglik,
)
from mpcpen.sampler import (
    PriorConfig,
    ChainConfig,
    PosteriorSamples,
    log_prior,
    lognormal_adjustment,
    phi_log_posterior,
    mh_accept,
    mh_step,
    run_chain,
    dic,
)
from mpcpen.predict import (
    PenetranceQuery,
    PenetranceCurve,
    penetrance_point,
    penetrance_curve,
    five_year_risk,
    roc_auc,
    cross_validate,
)
from mpcpen.simulate import SimConfig, simulate_member_gaps, simulate_family, simulate_dataset
from mpcpen.eda import GapPair, km_estimator, ipcw_kendall_tau

__version__ = "0.1.0"
