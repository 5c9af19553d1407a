"""Compile polynomial ODE systems into transcriptional networks.

Every variable of the source becomes a ratio of two factors that share a
single linear decay rate, so all negative terms move into production rates.
"""
from .expr import ExprSyntaxError, LaurentPolynomial, Monomial, parse_expr
from .odesys import (ODESystem, Reaction, Representation, check_positivity_preconditions,
                     hungarian_quotient, is_hungarian, parse_reactions, reactions_to_odes,
                     shift_variable)
from .sim import (BlowUpError, Event, SetBias, SetDirect, SetRatio, SimParams,
                  SimulationError, Trajectory, integrate)
from .transform import (CompileError, Mode, TNSystem, add_tracker, compile, estimate_gamma,
                        validate_tn, with_bias)
from .verify import (bookend_check, conservation_check, ratio_error,
                     symbolic_ratio_identity, verify)
from .corpus import corpus_run

__all__ = [
    "ExprSyntaxError", "LaurentPolynomial", "Monomial", "parse_expr",
    "ODESystem", "Reaction", "Representation", "check_positivity_preconditions",
    "hungarian_quotient", "is_hungarian", "parse_reactions", "reactions_to_odes",
    "shift_variable",
    "BlowUpError", "Event", "SetBias", "SetDirect", "SetRatio", "SimParams",
    "SimulationError", "Trajectory", "integrate",
    "CompileError", "Mode", "TNSystem", "add_tracker", "compile", "estimate_gamma",
    "validate_tn", "with_bias",
    "bookend_check", "conservation_check", "ratio_error", "symbolic_ratio_identity", "verify",
    "corpus_run",
]
