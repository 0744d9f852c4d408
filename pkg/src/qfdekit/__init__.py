"""Monotone fixed-point solver and hypothesis audit for coupled quadratic FDEs."""
from ._kernels import BACKEND
from .dfunction import (Compose, ContractionReport, DFunction, Form, Hyperbolic, Linear, Scale,
                        Sum, check_contraction, compose_block_psi, hybrid_psi, parse_dfunction)
from .engine import (Direction, EngineConfig, IterationTrace, LowerSolutionRejected,
                     OperatorError, StopReason, estimate_M, run_block, run_hybrid)
from .fields import Field, parse_field
from .operators import (DomainBox, OperatorBlock, SingularityError, apply_A, apply_B, apply_C,
                        apply_D, verify_dlipschitz, verify_monotone, weighted_volterra)
from .ordered_space import (ChainSample, Grid, GridFunction, Order, chain_diameter,
                            partial_leq, pointwise_product, sup_norm)
from .problem import (GateRefused, HypothesisReport, ProblemInstance, SolutionReport,
                      check_instance, oracle_compare, solve, verify_lower_solution)
from .resolvent import (NonConvergence, ResolventResult, crosscheck_resolvent,
                        resolvent_closed_form, resolvent_picard)

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "Compose",
    "ContractionReport",
    "DFunction",
    "Form",
    "Hyperbolic",
    "Linear",
    "Scale",
    "Sum",
    "check_contraction",
    "compose_block_psi",
    "hybrid_psi",
    "parse_dfunction",
    "Direction",
    "EngineConfig",
    "IterationTrace",
    "LowerSolutionRejected",
    "OperatorError",
    "StopReason",
    "estimate_M",
    "run_block",
    "run_hybrid",
    "Field",
    "parse_field",
    "DomainBox",
    "OperatorBlock",
    "SingularityError",
    "apply_A",
    "apply_B",
    "apply_C",
    "apply_D",
    "verify_dlipschitz",
    "verify_monotone",
    "weighted_volterra",
    "ChainSample",
    "Grid",
    "GridFunction",
    "Order",
    "chain_diameter",
    "partial_leq",
    "pointwise_product",
    "sup_norm",
    "GateRefused",
    "HypothesisReport",
    "ProblemInstance",
    "SolutionReport",
    "check_instance",
    "oracle_compare",
    "solve",
    "verify_lower_solution",
    "NonConvergence",
    "ResolventResult",
    "crosscheck_resolvent",
    "resolvent_closed_form",
    "resolvent_picard",
    "__version__",
]
