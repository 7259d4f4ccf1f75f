"""Public-signal design for a population choosing between a shared venue and staying remote.

A planner commits to a signaling mechanism about an unknown state; agents
update to a posterior mean, and the equilibrium share of remote agents follows
from that mean. The package computes equilibria, optimal mechanisms for
interval targets, discretized design programs for general utilities, and
evaluates any mechanism's expected utility.
"""

from . import dist, equilibrium, evaluate, lp, mechanism, set_designer, simplex
from .dist import Discrete, Mixture, TruncatedExponential, TruncatedNormal, Uniform
from .equilibrium import EquilibriumMap, epidemic_cost_model, linear_cost_model
from .evaluate import (EvalReport, General, ScaledCapacity, SetBased, StateBand, h_ref, h_rho,
                       value, value_full_info, value_no_info)
from .lp import design_lipschitz, design_scaled_capacity
from .mechanism import DirectMechanism, IntervalMechanism, check_mpc, direct_of
from .set_designer import DesignResult, UnreachablePreferenceError, design
from .simplex import LpProblem, LpSolution, solve_lp

__version__ = "0.1.0"

__all__ = [
    "dist", "equilibrium", "evaluate", "lp", "mechanism", "set_designer", "simplex",
    "Discrete", "Mixture", "TruncatedExponential", "TruncatedNormal", "Uniform",
    "EquilibriumMap", "epidemic_cost_model", "linear_cost_model",
    "EvalReport", "General", "ScaledCapacity", "SetBased", "StateBand", "h_ref", "h_rho",
    "value", "value_full_info", "value_no_info",
    "design_lipschitz", "design_scaled_capacity",
    "DirectMechanism", "IntervalMechanism", "check_mpc", "direct_of",
    "DesignResult", "UnreachablePreferenceError", "design",
    "LpProblem", "LpSolution", "solve_lp",
]
