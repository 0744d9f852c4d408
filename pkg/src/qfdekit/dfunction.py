"""Dominating functions psi: R+ -> R+ as closed-form expression trees.

Grammar of the text form (prefix notation)::

    lin(kappa) | hyp(L, K) | sum(a, b) | compose(outer, inner) | scale(M, inner)

Every node is nondecreasing and vanishes at 0, so those two axioms hold by
construction for anything the grammar can express.
"""
from __future__ import annotations

import ast
import enum
from dataclasses import dataclass

import numpy as np


class DFunction:
    def __call__(self, r):
        return self.eval(r)

    def eval(self, r):
        arr = np.asarray(r, dtype=float)
        if np.any(arr < 0) or np.any(np.isnan(arr)):
            raise ValueError(f"D-functions are defined on r >= 0, got {r!r}")
        out = self._eval(arr)
        return float(out) if np.ndim(out) == 0 else out

    def _eval(self, r: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def to_text(self) -> str:
        raise NotImplementedError

    def __str__(self) -> str:
        return self.to_text()


@dataclass(frozen=True)
class Linear(DFunction):
    slope: float

    def __post_init__(self):
        if not (self.slope >= 0 and np.isfinite(self.slope)):
            raise ValueError(f"Linear slope must be finite and >= 0, got {self.slope}")

    def _eval(self, r):
        return self.slope * r

    def to_text(self):
        return f"lin({self.slope!r})"


@dataclass(frozen=True)
class Hyperbolic(DFunction):
    """r -> L r / (K + r)."""

    L: float
    K: float

    def __post_init__(self):
        if not (self.L > 0 and self.K > 0 and np.isfinite(self.L) and np.isfinite(self.K)):
            raise ValueError(f"Hyperbolic needs L > 0 and K > 0, got L={self.L}, K={self.K}")

    def _eval(self, r):
        return self.L * r / (self.K + r)

    def to_text(self):
        return f"hyp({self.L!r}, {self.K!r})"


@dataclass(frozen=True)
class Sum(DFunction):
    left: DFunction
    right: DFunction

    def _eval(self, r):
        return self.left._eval(r) + self.right._eval(r)

    def to_text(self):
        return f"sum({self.left.to_text()}, {self.right.to_text()})"


@dataclass(frozen=True)
class Compose(DFunction):
    outer: DFunction
    inner: DFunction

    def _eval(self, r):
        return self.outer._eval(self.inner._eval(r))

    def to_text(self):
        return f"compose({self.outer.to_text()}, {self.inner.to_text()})"


@dataclass(frozen=True)
class Scale(DFunction):
    factor: float
    inner: DFunction

    def __post_init__(self):
        if not (self.factor >= 0 and np.isfinite(self.factor)):
            raise ValueError(f"Scale factor must be finite and >= 0, got {self.factor}")

    def _eval(self, r):
        return self.factor * self.inner._eval(r)

    def to_text(self):
        return f"scale({self.factor!r}, {self.inner.to_text()})"


_NODES = {"lin": (Linear, 1, 0), "hyp": (Hyperbolic, 2, 0), "sum": (Sum, 0, 2),
          "compose": (Compose, 0, 2), "scale": (Scale, 1, 1)}


def parse_dfunction(text: str) -> DFunction:
    """Parse the prefix text form, e.g. ``sum(compose(hyp(1,1), lin(0.5)), hyp(1,2))``."""
    try:
        tree = ast.parse(text.strip(), mode="eval").body
    except SyntaxError as exc:
        raise ValueError(f"malformed D-function {text!r}: {exc.msg}") from None
    return _build(tree, text)


def _number(node, text) -> float:
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
        v = _number(node.operand, text)
        return -v if isinstance(node.op, ast.USub) else v
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) \
            and not isinstance(node.value, bool):
        return float(node.value)
    raise ValueError(f"expected a number in {text!r} at column {node.col_offset}")


def _build(node, text) -> DFunction:
    if not (isinstance(node, ast.Call) and isinstance(node.func, ast.Name)):
        raise ValueError(f"expected a D-function node in {text!r} at column {node.col_offset}")
    name = node.func.id
    if name not in _NODES:
        raise ValueError(f"unknown D-function node {name!r} (known: {', '.join(_NODES)})")
    cls, n_num, n_sub = _NODES[name]
    if len(node.args) != n_num + n_sub or node.keywords:
        raise ValueError(f"{name} takes {n_num + n_sub} positional arguments")
    nums = [_number(a, text) for a in node.args[:n_num]]
    subs = [_build(a, text) for a in node.args[n_num:]]
    return cls(*nums, *subs)


def compose_block_psi(psi_A: DFunction, psi_B: DFunction, psi_C: DFunction, k: float) -> DFunction:
    """Certificate of the block update x -> Ax + Tx*T'x.

    Returns ``psi_B(psi_C(r) / (1 - k)) + psi_A(r)``; the ``1/(1-k)`` factor is the
    Lipschitz constant of the resolvent of a k-contraction.
    """
    if not (0 <= k < 1):
        raise ValueError(f"resolvent certificate needs 0 <= k < 1, got k={k}")
    return Sum(Compose(psi_B, Compose(Linear(1.0 / (1.0 - k)), psi_C)), psi_A)


def hybrid_psi(psi_A: DFunction, psi_C: DFunction, M: float) -> DFunction:
    """M psi_A + psi_C, the function checked for x = Ax*Bx + Cx."""
    return Sum(Scale(M, psi_A), psi_C)


class Form(enum.Enum):
    HYBRID = "HybridForm"
    BLOCK = "BlockForm"


@dataclass(frozen=True)
class ContractionReport:
    holds: bool
    margin: float
    witness_r: float
    r_max: float
    samples: int
    form: Form = Form.BLOCK
    exact: bool = False
    note: str = ""

    def to_dict(self) -> dict:
        return {"holds": self.holds, "margin": self.margin, "witness_r": self.witness_r,
                "r_max": self.r_max, "samples": self.samples, "form": self.form.value,
                "exact": self.exact, "note": self.note}


STRICTNESS_NOTE = ("checked strictly (M psi(r) < r for r > 0); the block-form condition is "
                   "sometimes written with '<=', which the convergence argument does not support")


def check_contraction(psi: DFunction, M: float = 1.0, form: Form = Form.BLOCK,
                      r_max: float = 1e3, samples: int = 2048, r_min: float = 1e-8,
                      fast_path: bool = True) -> ContractionReport:
    """Check ``M * psi(r) < r`` on a log-spaced grid in ``[r_min, r_max]``.

    For ``Form.HYBRID`` the caller passes the already packaged ``M psi_A + psi_C``
    (see :func:`hybrid_psi`) and ``M`` multiplies it once more; pass ``M=1`` for the
    plain check. A bare ``Hyperbolic`` or ``Linear`` leaf is decided exactly when
    ``fast_path`` is set.
    """
    if M < 0:
        raise ValueError("M must be nonnegative")
    if r_max <= 0 or samples < 2:
        raise ValueError("need r_max > 0 and samples >= 2")
    form = Form(form)
    r_min = min(r_min, r_max)
    note = STRICTNESS_NOTE if form is Form.BLOCK else ""
    if fast_path:
        exact = _exact_leaf(psi, M)
        if exact is not None and exact:
            # both leaf margins r - M psi(r) are increasing once the condition holds
            margin = r_min - M * psi(r_min)
            return ContractionReport(True, float(margin), r_min, r_max, 0, form, True, note)
    r = np.geomspace(r_min, r_max, samples)
    margins = r - M * np.asarray(psi(r), dtype=float)
    i = int(np.argmin(margins))
    return ContractionReport(bool(np.all(margins > 0)), float(margins[i]), float(r[i]),
                             float(r_max), int(samples), form, False, note)


def _exact_leaf(psi: DFunction, M: float):
    if isinstance(psi, Hyperbolic):
        # M L r / (K + r) < r  <=>  M L < K + r for every r > 0  <=>  M L <= K
        return M * psi.L <= psi.K
    if isinstance(psi, Linear):
        return M * psi.slope < 1
    return None
