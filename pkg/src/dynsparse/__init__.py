"""Dynamic sparse Bayesian linear regression with generalized hyperbolic priors."""

from .distributions import (
    GhParams,
    GigParams,
    MghParams,
    gh_log_pdf,
    gh_sample,
    gig_log_pdf,
    gig_moment,
    gig_sample,
    mgh_log_pdf,
    mgh_sample,
)
from .errors import (
    ConvergenceError,
    DegeneracyError,
    DomainError,
    DynsparseError,
    NumericalError,
)
from .group_lasso import WindowProblem, mahalanobis_penalty, run_sliding_window, solve_window
from .io import ParseError, load_data, verify_dir
from .map_em import MapFit, RegressionData, em_map_step, run_online_map
from .prior import (
    ModelConfig,
    WindowCorrelation,
    autocorrelation,
    build_sigma,
    conditional_gh,
    conditional_gig,
    mahalanobis_norm,
    simulate_d_chain,
    simulate_path,
)
from .smc import (
    Particle,
    PosteriorChain,
    PosteriorSummary,
    pimh_run,
    posterior_summary,
    propose_step,
    smc_run,
)
from .special import integrate_positive_halfline, log_bessel_k, log_gig_normalizer
from .synthetic import CHANGE_POINTS, piecewise_signal, synthetic_regression

__version__ = "0.1.0"
