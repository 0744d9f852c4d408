"""(I - D)^{-1} C: Picard iteration for y = Cx + Dy and the closed form 1/(1 - b|x|)."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .operators import apply_C, apply_D, resolvent_values
from .ordered_space import GridFunction, sup_norm

TOL_INNER = 1e-12
MAX_INNER = 200


class NonConvergence(RuntimeError):
    def __init__(self, msg: str, partial=None):
        super().__init__(msg)
        self.partial = partial


@dataclass(frozen=True)
class ResolventResult:
    y: GridFunction
    iterations: int
    final_delta: float
    converged: bool
    deltas: tuple = field(default=(), repr=False)

    def ratios(self) -> np.ndarray:
        d = np.asarray(self.deltas)
        with np.errstate(divide="ignore", invalid="ignore"):
            return d[1:] / d[:-1]


def resolvent_picard(inst, x: GridFunction, y_init: GridFunction | None = None,
                     tol_inner: float = TOL_INNER, max_iter: int = MAX_INNER) -> ResolventResult:
    """Iterate y <- Cx + D y until the sup-norm step drops to ``tol_inner``.

    Raises :class:`NonConvergence` (carrying the partial result) when the budget
    runs out, which in practice means p is not a contraction.
    """
    cx = apply_C(inst, x)
    y = cx if y_init is None else y_init
    deltas = []
    for it in range(1, max_iter + 1):
        y_new = cx + apply_D(inst, y)
        delta = sup_norm(y_new - y)
        deltas.append(delta)
        y = y_new
        if delta <= tol_inner:
            return ResolventResult(y, it, delta, True, tuple(deltas))
    res = ResolventResult(y, max_iter, deltas[-1], False, tuple(deltas))
    raise NonConvergence(f"resolvent Picard iteration stalled at delta={deltas[-1]:.3g} "
                         f"after {max_iter} steps", res)


def resolvent_closed_form(inst, x: GridFunction) -> GridFunction:
    return GridFunction(x.grid, resolvent_values(inst, x))


def crosscheck_resolvent(inst, x: GridFunction, tol_inner: float = TOL_INNER,
                         max_iter: int = MAX_INNER) -> float:
    """Sup-norm gap between the Picard and closed-form resolvents."""
    picard = resolvent_picard(inst, x, tol_inner=tol_inner, max_iter=max_iter)
    return sup_norm(picard.y - resolvent_closed_form(inst, x))
