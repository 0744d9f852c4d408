"""Closed-form scalar fields f(t, x) used for f1, f2, g, p and b(t).

Text grammar (one call per node, numbers as literals)::

    const(a)               a
    poly(a0, a1, ..., an)  a0 + a1 x + ... + an x^n
    tpoly(c0, ..., cn)     c0 + c1 t + ... + cn t^n
    hyp(a, b)              a x / (b + |x|)          (b > 0)
    sin(a) | arctan(a)     a sin(x) | a arctan(x)
    texp(a, r)             a exp(r t)
    tsin(a, w) | tcos(a, w)
    sum(f, g, ...) | mul(f, g, ...)

Each tree is compiled once into a vectorised numpy callable and a scalar
``math`` callable; both are total on J x R.
"""
from __future__ import annotations

import ast
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

# name -> (min numeric args, max numeric args, takes children)
_SPEC = {
    "const": (1, 1, False), "poly": (1, 64, False), "tpoly": (1, 64, False),
    "hyp": (2, 2, False), "sin": (1, 1, False), "arctan": (1, 1, False),
    "texp": (2, 2, False), "tsin": (2, 2, False), "tcos": (2, 2, False),
    "sum": (0, 0, True), "mul": (0, 0, True),
}
_X_KINDS = {"poly", "hyp", "sin", "arctan"}


class FieldSyntaxError(ValueError):
    def __init__(self, msg: str, col: int | None = None):
        super().__init__(msg if col is None else f"{msg} (column {col + 1})")
        self.col = col


@dataclass(frozen=True)
class Field:
    kind: str
    params: tuple = ()
    children: tuple = ()

    def __post_init__(self):
        if self.kind not in _SPEC:
            raise FieldSyntaxError(f"unknown field node {self.kind!r}")
        lo, hi, nested = _SPEC[self.kind]
        object.__setattr__(self, "params", tuple(float(p) for p in self.params))
        if nested:
            if not self.children:
                raise FieldSyntaxError(f"{self.kind} needs at least one argument")
        elif not (lo <= len(self.params) <= hi) or self.children:
            raise FieldSyntaxError(f"{self.kind} takes {lo}..{hi} numeric arguments")
        if not all(math.isfinite(p) for p in self.params):
            raise FieldSyntaxError(f"{self.kind}: parameters must be finite")
        if self.kind == "hyp" and self.params[1] <= 0:
            raise FieldSyntaxError("hyp(a, b) needs b > 0 to stay pole-free")

    # -- structure -----------------------------------------------------
    @property
    def depends_on_x(self) -> bool:
        if self.kind in _X_KINDS:
            return not (self.kind == "poly" and all(p == 0 for p in self.params[1:]))
        return any(c.depends_on_x for c in self.children)

    @property
    def is_zero(self) -> bool:
        if self.kind in ("const", "poly", "tpoly"):
            return all(p == 0 for p in self.params)
        if self.kind in ("hyp", "sin", "arctan", "texp", "tsin", "tcos"):
            return self.params[0] == 0
        if self.kind == "sum":
            return all(c.is_zero for c in self.children)
        return any(c.is_zero for c in self.children)

    def to_text(self) -> str:
        if self.children:
            return f"{self.kind}({', '.join(c.to_text() for c in self.children)})"
        return f"{self.kind}({', '.join(repr(p) for p in self.params)})"

    def __str__(self) -> str:
        return self.to_text()

    # -- code generation ----------------------------------------------
    def _src(self, m: str) -> str:
        p = [repr(v) for v in self.params]
        k = self.kind
        absf = "np.abs" if m == "np" else "abs"
        if k == "const":
            return f"({p[0]})"
        if k in ("poly", "tpoly"):
            var = "x" if k == "poly" else "t"
            acc = p[-1]
            for coef in reversed(p[:-1]):
                acc = f"({coef} + {var}*{acc})"
            return f"({acc})"
        if k == "hyp":
            return f"({p[0]}*x/({p[1]} + {absf}(x)))"
        if k == "sin":
            return f"({p[0]}*{m}.sin(x))"
        if k == "arctan":
            return f"({p[0]}*{m}.{'arctan' if m == 'np' else 'atan'}(x))"
        if k == "texp":
            return f"({p[0]}*{m}.exp({p[1]}*t))"
        if k == "tsin":
            return f"({p[0]}*{m}.sin({p[1]}*t))"
        if k == "tcos":
            return f"({p[0]}*{m}.cos({p[1]}*t))"
        op = " + " if k == "sum" else " * "
        return "(" + op.join(c._src(m) for c in self.children) + ")"

    @cached_property
    def _np_fn(self):
        return eval(f"lambda t, x: {self._src('np')}", {"np": np})  # noqa: S307 - generated

    @cached_property
    def scalar(self):
        """Scalar callable ``(t, x) -> float`` built on the ``math`` module."""
        return eval(f"lambda t, x: float({self._src('math')})", {"math": math})  # noqa: S307

    def __call__(self, t, x=0.0) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        x = np.asarray(x, dtype=float)
        out = self._np_fn(t, x)
        return np.broadcast_to(np.asarray(out, dtype=float), np.broadcast(t, x).shape).copy()


def const(a: float) -> Field:
    return Field("const", (a,))


def parse_field(text: str) -> Field:
    try:
        tree = ast.parse(text.strip(), mode="eval").body
    except SyntaxError as exc:
        raise FieldSyntaxError(f"malformed field {text!r}: {exc.msg}", exc.offset and exc.offset - 1)
    return _build(tree)


def _number(node) -> float:
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
        v = _number(node.operand)
        return -v if isinstance(node.op, ast.USub) else v
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) \
            and not isinstance(node.value, bool):
        return float(node.value)
    raise FieldSyntaxError("expected a number", node.col_offset)


def _build(node) -> Field:
    if not (isinstance(node, ast.Call) and isinstance(node.func, ast.Name)) or node.keywords:
        raise FieldSyntaxError("expected a field node like hyp(1, 2)", node.col_offset)
    name = node.func.id
    if name not in _SPEC:
        raise FieldSyntaxError(f"unknown field node {name!r}", node.col_offset)
    if _SPEC[name][2]:
        return Field(name, (), tuple(_build(a) for a in node.args))
    return Field(name, tuple(_number(a) for a in node.args))
