"""Receding-horizon games: condensing, equilibrium solving, stability certificates and closed-loop simulation."""
from .game import (Agent, AgentDynamics, CondensedGame, ConstraintSpec, GameError, GameSpec,
                   InfeasibleError, MonotonicityError, StageCost, aggregative_cost, condense)
from .solver import SolverConfig, VgneSolution, eval_phi, solve_projected_gradient, solve_vgne
from .certificates import (CertificateResult, LmiData, ScalarCertificateInput, assemble_lmi,
                           check_certificate, feasibility_region, lyapunov_decrease, scalar_certificate,
                           search_certificate, search_local_certificates)
from .simulator import SteadyState, Trajectory, simulate, solve_steady_state
from .scenarios import builtin, load_scenario, save_scenario

__version__ = "0.1.0"
