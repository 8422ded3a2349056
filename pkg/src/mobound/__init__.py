"""mobound: multi-output tree boosting with generalization-risk certificates.

Trains gradient-boosted ensembles of l1-constrained multi-output decision
trees and emits machine-checkable risk certificates built from local
Rademacher-complexity bounds with fully explicit constants.
"""

from .boosting import Ensemble, TrainConfig, empirical_risk, train
from .bounds import (
    BoundInputs,
    Certificate,
    bernstein_upper,
    bound_erm_explicit,
    bound_lipschitz_comparison,
    bound_uniform_explicit,
    certify,
    ensemble_gamma,
    gamma,
    r0,
    rhat,
)
from .complexity import (
    EvalGrid,
    RadEstimate,
    dudley_chain_bound,
    empirical_rademacher,
    empirical_rademacher_exact,
    empirical_rademacher_mc,
    exact_stump_rademacher,
    local_contraction_bound,
    minoration_cover_bound,
    project_class,
    tree_class_rad_bound,
)
from .data import Dataset, load_dataset, save_dataset
from .losses import (
    BoundedExponentialLoss,
    ClippedLoss,
    HardMarginLoss,
    Loss,
    MinimaxPowerLoss,
    MultinomialLogisticLoss,
    PickAllLabelsLoss,
    SblParams,
    SblReport,
    SmoothMarginLoss,
    SupNormLoss,
    ZeroOneLoss,
    check_sbl,
    margin,
    parse_loss,
    relax_theta,
)
from .minimax import MinimaxInstance, lower_envelope, run_experiment, sample_dataset, true_risk
from .trees import MultiTree, TreeConfig, fit_tree, project_l1_box

__version__ = "0.1.0"
