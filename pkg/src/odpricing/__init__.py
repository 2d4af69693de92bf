"""Origin-destination iterative pricing for spatial markets."""

from .benchmark import (CycleDecomposition, DualSolution, cycle_decompose, cycle_surplus,
                        max_mean_cycle, solve_optimal_dual, verify_CE)
from .economy import (AugmentedDemand, Economy, Phantom, induced_prices, load_economy,
                      save_economy, validate_economy)
from .errors import (DomainError, DomainStuck, Infeasible, NoConvergence, PricingError,
                     SingularSystem, UnbalancedFlow)
from .market_clearing import MarketOutcome, Tolerances, clear_market, residual_g, verify_outcome
from .mechanisms import InpParams, Trajectory, inp_step, newton_direction, run_mechanism, stepsize
from .sensitivity import assemble_jacobians, jacobian_Pi
from .welfare import (dual_objective, duality_gap_decomposition, grad_f, lyapunov_f,
                      primal_welfare, suboptimality_bounds, welfare_report)

__all__ = [
    "AugmentedDemand", "CycleDecomposition", "DomainError", "DomainStuck", "DualSolution",
    "Economy", "Infeasible", "InpParams", "MarketOutcome", "NoConvergence", "Phantom",
    "PricingError", "SingularSystem", "Tolerances", "Trajectory", "UnbalancedFlow",
    "assemble_jacobians", "clear_market", "cycle_decompose", "cycle_surplus", "dual_objective",
    "duality_gap_decomposition", "grad_f", "induced_prices", "inp_step", "jacobian_Pi",
    "load_economy", "lyapunov_f", "max_mean_cycle", "newton_direction", "primal_welfare",
    "residual_g", "run_mechanism", "save_economy", "solve_optimal_dual", "stepsize",
    "suboptimality_bounds", "validate_economy", "verify_CE", "verify_outcome", "welfare_report",
]
