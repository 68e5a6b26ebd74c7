"""Budget allocation for crowd labeling as a Bayesian Markov decision process."""

from .beta import (
    BetaState,
    RewardPair,
    RiskMode,
    confidence,
    positive_tail,
    reward_pair,
    scored_reward,
    transition_probs,
)
from .contextual import (
    ContextualSyntheticEnv,
    GaussianBelief,
    aggregate_contextual,
    contextual_reward,
    laplace_update,
    positive_prob,
    predict_label_prob,
    run_contextual_episode,
)
from .errors import (
    CapExceededError,
    CrowdKGError,
    DomainError,
    ExhaustedError,
    NoActionError,
    NumericError,
    ParseError,
    ValidationError,
)
from .harness import (
    ExperimentConfig,
    ResultRow,
    load_features,
    load_replay_dataset,
    rho_grid,
    run_experiment,
    theta_grid,
)
from .hetero import (
    WorkerMatrix,
    WorkerState,
    hetero_reward_pair,
    label_prob_pos,
    moment_match_update,
    run_hetero_episode,
    select_pair,
    select_pair_optkg,
)
from .kernels import BACKEND
from .mdp import (
    HeteroSyntheticEnv,
    ReplayEnv,
    RunTrace,
    StateMatrix,
    SyntheticEnv,
    aggregate,
    run_episode,
    update_state,
)
from .multiclass import (
    DirichletState,
    MultiSyntheticEnv,
    classify,
    multiclass_aggregate,
    multiclass_reward,
    run_multiclass_episode,
    top_class_probs,
)
from .policies import (
    KG,
    CVaRKG,
    DPExact,
    OptKG,
    PessKG,
    Uniform,
    dp_solve,
    evaluate_policy,
    parse_policy,
    select_action,
)

__version__ = "0.1.0"
