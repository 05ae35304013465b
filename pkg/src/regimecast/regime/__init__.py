from .model import (
    VARIANTS,
    NIGPrior,
    Priors,
    RegimeError,
    RegimePosterior,
    expected_self_transition,
    kl_gaussian,
    prior_self_transition_mc,
    stick_breaking,
)
from .sampler import (
    SegmentConfig,
    SegmentationResult,
    fit_segmentation,
    gibbs_sweep,
    initial_state,
    log_joint,
    sample_emission,
    sample_kappa,
    site_conditional,
)
from .compress import compress_regimes
