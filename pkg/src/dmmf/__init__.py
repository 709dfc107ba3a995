"""Dynamic max-min fair allocation: mechanism, strategies, ideal utility and bounds."""
from .errors import (
    BoundInapplicable,
    ConfigError,
    ContractViolation,
    DerivativeUndefined,
    DmmfError,
    ModelError,
    OracleError,
    RequestError,
    SigmaUndefined,
)
from .ideal import (
    IdealUtilityResult,
    RequestPolicy,
    derivative_check,
    ideal_multi,
    ideal_single,
    oracle_multi,
    sigma_of_beta,
    verify_concavity,
)
from .lp import LinearProgram, LpSolution, solve_lp
from .mechanism import Mechanism, MechanismConfig, MechanismState, RoundOutcome
from .simulator import (
    AgentSetup,
    ReplicationSummary,
    Scenario,
    SimulationTrace,
    check_lemma_mult,
    check_lemma_single,
    run_episode,
    run_replications,
)
from .value_models import (
    Bernoulli,
    BoundedDensity,
    DemandDistribution,
    Discrete,
    MarkovValueModel,
    Uniform,
    decorrelation_gamma,
    sample_path,
    stationary_distribution,
    steady_state_mixture,
)

__version__ = "0.1.0"
