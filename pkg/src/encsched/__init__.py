"""Optimal encryption scheduling for remote state estimation with an eavesdropper."""

from encsched.channel import ChannelParams, JointTransition, arrival_prob, eavesdrop_prob, joint_transition
from encsched.errors import ConfigError, NumericalError, StructureViolation
from encsched.evaluation import (
    SimReport,
    Strategy,
    compare_strategies,
    evaluate_policy_exact,
    simulate,
    simulate_trajectories,
    simulate_trajectory,
)
from encsched.linear_model import (
    CovarianceLadder,
    SystemModel,
    build_ladder,
    lyapunov_step,
    steady_state_covariance,
    steady_state_gain,
)
from encsched.mdp_full_info import (
    LadderState,
    PolicyTable,
    ProblemParams,
    ValueTable,
    backward_induction,
    certify_thresholds,
    extract_threshold_m,
    extract_threshold_me,
    phi,
    stage_cost,
)
from encsched.pomdp_belief import (
    BeliefPolicy,
    BeliefTree,
    belief_update,
    certify_belief_thresholds,
    enumerate_belief_tree,
    expected_eve_trace,
    pomdp_backward_induction,
)

__version__ = "0.1.0"
