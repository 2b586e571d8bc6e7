"""Incentive mechanisms for high-quality human annotation.

Simulates the company/annotator contracting problem around golden-question
monitoring: behavioral annotation likelihoods, MLE performance tests,
binary and linear payment contracts, agent best responses, mechanism
calibration with its variance-rate diagnostics, and certainty-based
golden-question selection over reward-scored preference data.
"""

from .behavior_models import (
    BT_TEMPERATURE,
    GAUSSIAN_SFT,
    LATENT_FACTOR,
    BehaviorModel,
    CurvatureBounds,
    MonitoringDatum,
    MonitoringDataset,
    ThetaDomain,
    curvature_bounds,
    kl_divergence,
    log_likelihood,
    sample_dataset,
    score,
    score_variance,
)
from .contracts import (
    BinaryContract,
    LinearContract,
    Method,
    TestOutcome,
    evaluate_binary,
    evaluate_linear,
    pass_probability,
)
from .estimation import MleResult, mle, mle_rmse_sweep, score_average
from .agent import (
    AgentSpec,
    BestResponse,
    PrincipalSpec,
    best_response,
    expected_agent_utility,
    incentive,
)
from .mechanism import (
    CalibratedMechanism,
    CalibrationError,
    ConfigurationError,
    FirstBest,
    RateSweepRow,
    calibrate_binary,
    calibrate_linear,
    clt_diagnostic,
    exponential_contrast,
    linear_rate_sweep,
    proposition1_diagnostic,
    rate_sweep,
    solve_first_best,
)
from .golden_selection import (
    AnnotatorRecord,
    GoldenSet,
    ScoredSample,
    bucket_accuracy,
    certainty,
    group_gap_analysis,
    select_golden,
    simulate_annotator_population,
)
from .seeding import derive_seed

__version__ = "0.1.0"
