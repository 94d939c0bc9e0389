"""Robust counterfactual explanations for linear models, trees, tree ensembles
and ReLU networks, computed by alternating master and adversarial MILPs."""
from .adversarial import ApOutcome, adversarial, ap_ensemble, ap_linear, ap_relu, ap_tree, robustness_radius
from .engine import solve_heuristic_tree, solve_robust_ce
from .formulations import (
    DistanceSpec,
    EngineConfig,
    MasterProblem,
    NoCounterfactualError,
    Norm,
    ScenarioSet,
    UncertaintySet,
    build_mp_ensemble,
    build_mp_relu,
    build_mp_tree,
    encode_distance,
    robust_linear_ce,
)
from .io import load_fixture, load_model, save_model
from .models import (
    DecisionTree,
    FeatureSpace,
    Halfspace,
    Leaf,
    LinearModel,
    ReluNetwork,
    TrainedModel,
    TreeEnsemble,
    VoteMode,
    lipschitz_bound,
    negate,
    predict_class,
    predict_score,
    surrogate_score,
)
from .results import IterationRecord, RceResult, RunStatus

__version__ = "0.1.0"
