"""Monotone successive approximation for x = Ax*Bx + Cx and x = Ax + Tx*T'x.

Both engines share one loop: starting from a lower (or upper) solution they
apply the update map, record the sup-norm step and the order relation between
consecutive iterates, and stop on tolerance, budget, or a broken monotone
pattern. A break is terminal because the convergence guarantee only covers
monotone sequences.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .ordered_space import GridFunction, Order, partial_leq, sup_norm

MACHINE_EPS = float(np.finfo(float).eps)


class Direction(enum.Enum):
    FROM_LOWER = "FromLower"
    FROM_UPPER = "FromUpper"


class StopReason(enum.Enum):
    TOLERANCE_MET = "ToleranceMet"
    MAX_ITERATIONS = "MaxIterations"
    MONOTONICITY_BROKEN = "MonotonicityBroken"
    OPERATOR_ERROR = "OperatorError"


class LowerSolutionRejected(ValueError):
    def __init__(self, excess: float, direction: Direction):
        word = "lower" if direction is Direction.FROM_LOWER else "upper"
        super().__init__(f"starting point is not a {word} solution (excess {excess:.3g})")
        self.excess = excess


class OperatorError(RuntimeError):
    """A block failed during iteration ``iteration``; ``trace`` holds the steps done so far."""

    def __init__(self, iteration: int, cause: Exception, trace: "IterationTrace"):
        super().__init__(f"operator failed at iteration {iteration}: {cause}")
        self.iteration = iteration
        self.cause = cause
        self.trace = trace


@dataclass(frozen=True)
class EngineConfig:
    tol_outer: float = 1e-10
    max_outer: int = 200
    slack: Optional[float] = None  # None: 100 eps ||x_n||
    direction: Direction = Direction.FROM_LOWER
    record_full_iterates: bool = False

    def __post_init__(self):
        if not self.tol_outer > 0:
            raise ValueError("tol_outer must be positive")
        if self.max_outer < 1:
            raise ValueError("max_outer must be >= 1")
        if self.slack is not None and self.slack < 0:
            raise ValueError("slack must be nonnegative")
        object.__setattr__(self, "direction", Direction(self.direction))

    def eps_grid(self, x: GridFunction) -> float:
        if self.slack is not None:
            return self.slack
        return 100.0 * MACHINE_EPS * sup_norm(x)


@dataclass
class IterationTrace:
    deltas: list = field(default_factory=list)
    monotone_flags: list = field(default_factory=list)
    slacks: list = field(default_factory=list)
    digests: list = field(default_factory=list)
    iterates: Optional[list] = None
    converged: bool = False
    reason: Optional[StopReason] = None
    x0: Optional[GridFunction] = None
    last: Optional[GridFunction] = None
    final_residual: Optional[float] = None
    direction: Direction = Direction.FROM_LOWER

    @property
    def n_iter(self) -> int:
        return len(self.deltas)

    def monotone_ok(self) -> bool:
        want = Order.LESS_OR_EQUAL if self.direction is Direction.FROM_LOWER else Order.GREATER_OR_EQUAL
        return all(f in (want, Order.EQUAL) for f in self.monotone_flags)

    def residuals(self) -> list:
        """Fixed-point residual ||x_n - F x_n|| of each new iterate, where known."""
        res = list(self.deltas[1:])
        res.append(self.final_residual)
        return res

    def rows(self) -> list[dict]:
        out = []
        for i, (d, f, r) in enumerate(zip(self.deltas, self.monotone_flags, self.residuals())):
            row = {"iter": i + 1, "delta": d, "monotone_flag": f.value,
                   "residual": r if r is not None else ""}
            row.update(self.digests[i])
            out.append(row)
        return out


def _iterate(update: Callable[[GridFunction], GridFunction], x0: GridFunction,
             cfg: EngineConfig, check_start: bool = True) -> IterationTrace:
    trace = IterationTrace(direction=cfg.direction, x0=x0,
                           iterates=[x0] if cfg.record_full_iterates else None)
    want = Order.LESS_OR_EQUAL if cfg.direction is Direction.FROM_LOWER else Order.GREATER_OR_EQUAL
    x = x0
    fx = None
    for n in range(cfg.max_outer):
        try:
            fx = update(x)
        except Exception as exc:
            trace.reason = StopReason.OPERATOR_ERROR
            trace.last = x
            raise OperatorError(n, exc, trace) from exc
        eps = cfg.eps_grid(x)
        flag = partial_leq(x, fx, eps)
        if n == 0 and check_start and flag not in (want, Order.EQUAL):
            diff = (x - fx) if want is Order.LESS_OR_EQUAL else (fx - x)
            raise LowerSolutionRejected(float(np.max(diff.values)), cfg.direction)
        delta = sup_norm(fx - x)
        trace.deltas.append(delta)
        trace.monotone_flags.append(flag)
        trace.slacks.append(eps)
        trace.digests.append(fx.digest())
        if trace.iterates is not None:
            trace.iterates.append(fx)
        x = fx
        if flag not in (want, Order.EQUAL):
            trace.reason = StopReason.MONOTONICITY_BROKEN
            trace.last = x
            return trace
        if delta <= cfg.tol_outer:
            trace.converged = True
            trace.reason = StopReason.TOLERANCE_MET
            break
    else:
        trace.reason = StopReason.MAX_ITERATIONS
    trace.last = x
    try:
        trace.final_residual = sup_norm(update(x) - x)
    except Exception:
        trace.final_residual = None
    return trace


def run_hybrid(A, B, C, x0: GridFunction, cfg: EngineConfig = EngineConfig()) -> IterationTrace:
    """Iterate x <- Ax * Bx + Cx from a lower (or upper) solution ``x0``."""
    return _iterate(lambda x: A(x) * B(x) + C(x), x0, cfg)


def block_update(A, T, Tprime) -> Callable[[GridFunction], GridFunction]:
    return lambda x: A(x) + T(x) * Tprime(x)


def run_block(A, T, Tprime, x0: GridFunction, cfg: EngineConfig = EngineConfig()) -> IterationTrace:
    """Iterate x <- Ax + Tx * T'x; T and T' are expected to map into the positive cone."""
    for blk in (T, Tprime):
        if hasattr(blk, "positive") and not blk.positive:
            raise ValueError(f"block {getattr(blk, 'name', blk)} is not flagged positive")
    return _iterate(block_update(A, T, Tprime), x0, cfg)


def estimate_M(Tprime, probe_set: Sequence[GridFunction]) -> float:
    """max ||T' probe|| over the probes: a lower estimate of ||T'(E)||."""
    if len(probe_set) == 0:
        raise ValueError("estimate_M needs at least one probe")
    return max(sup_norm(Tprime(p)) for p in probe_set)
