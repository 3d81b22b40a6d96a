"""Collision-avoiding variational trajectories on Lie groups.

Multiple agents on a Lie group with a left-invariant metric follow modified
Riemannian cubics: critical curves of the squared covariant acceleration
plus repulsive inter-agent potentials.  The package integrates the
symmetry-reduced optimality system on the Lie algebra, solves the two-point
boundary-value problem by shooting, and cross-checks solutions against a
direct discretization of the action.
"""

from .algebra import LieAlgebra
from .bvp import (AgentBoundary, BoundaryConditions, ShootingSettings,
                  SolveResult, hermite_seed, initial_state, shooting_residual,
                  solve_bvp)
from .dynamics import (AgentJet, BI_INVARIANT, COVARIANT, DERIVATIVE,
                       IntegratorSettings, LEFT_INVARIANT, SystemState,
                       Trajectory, convert_jets, cubic_first_integral,
                       integrate_ivp, jet_rates_bi_invariant,
                       jet_rates_left_invariant, trajectory_to_chart)
from .errors import (BiInvariantRequiredError, CutLocusError,
                     InsufficientSamplesError, MaxIterationsError,
                     NoConvergenceError, NonFiniteStateError,
                     ScenarioParseError, ScenarioValidationError)
from .geodesics import (GeodesicSettings, distance, euler_arnold_rhs,
                        geodesic_path, riemannian_exp, riemannian_log)
from .geometry import Metric
from .potentials import (EdgePotentials, Gaussian, Graph, InverseShifted,
                         Potential, Zero, agent_force, eval_potential,
                         grad_potential, make_potential)
from .scenario import (Scenario, ScenarioConfig, build, load_scenario,
                       load_scenario_file, serialize_scenario)
from .verification import (DiscretePath, OracleResult, OracleSettings,
                           ResidualReport, cost_gradient, discrete_cost,
                           evaluate_cost, from_trajectory, hermite_path,
                           minimize_discrete_cost, path_gap, perturb_path,
                           unreduced_residual)

__version__ = "0.1.0"

__all__ = [
    "AgentBoundary", "AgentJet", "BI_INVARIANT", "BiInvariantRequiredError",
    "BoundaryConditions", "COVARIANT", "CutLocusError", "DERIVATIVE",
    "DiscretePath", "EdgePotentials", "Gaussian", "GeodesicSettings", "Graph",
    "InsufficientSamplesError", "IntegratorSettings", "InverseShifted",
    "LEFT_INVARIANT", "LieAlgebra", "MaxIterationsError", "Metric",
    "NoConvergenceError", "NonFiniteStateError", "OracleResult",
    "OracleSettings", "Potential", "ResidualReport", "Scenario",
    "ScenarioConfig", "ScenarioParseError", "ScenarioValidationError",
    "ShootingSettings", "SolveResult", "SystemState", "Trajectory", "Zero",
    "agent_force", "build", "convert_jets", "cost_gradient",
    "cubic_first_integral", "discrete_cost", "distance", "euler_arnold_rhs",
    "eval_potential", "evaluate_cost", "from_trajectory", "geodesic_path",
    "grad_potential", "hermite_path", "hermite_seed", "initial_state",
    "integrate_ivp", "jet_rates_bi_invariant", "jet_rates_left_invariant",
    "load_scenario", "load_scenario_file", "make_potential",
    "minimize_discrete_cost", "path_gap", "perturb_path", "riemannian_exp",
    "riemannian_log", "serialize_scenario", "shooting_residual", "solve_bvp",
    "trajectory_to_chart", "unreduced_residual",
]
