"""The five operator blocks of the coupled system and their sampled certificate audits.

With ``w = 1 / (1 - b|x|)`` the blocks act nodewise::

    (A x)(t)  = f1(t, x(t))
    (B y)(t)  = f2(t, y(t))
    (C x)(t)  = w(t) - p(t, w(t))
    (D y)(t)  = p(t, y(t))
    (B'y)(t)  = c e^{-lam t} + e^{-lam t} int_0^t e^{lam s} g(s, y(s)) ds

with ``c = (x0 - f1(0, x0)) / f2(0, y0)``.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from . import _kernels
from .dfunction import DFunction
from .ordered_space import GridFunction, Grid, sup_norm

EPS_MONO = 1e-9
EPS_LIP = 1e-9
DEFAULT_SING_FLOOR = 1e-6


class SingularityError(ArithmeticError):
    """1 - b(t)|x(t)| fell below the singularity floor."""

    def __init__(self, node: int, t: float, value: float, floor: float):
        super().__init__(f"1 - b|x| = {value:.6g} below floor {floor:g} at node {node} (t = {t:.6g})")
        self.node = node
        self.t = t
        self.value = value


class InstanceError(ValueError):
    """The problem data does not define the operators (e.g. f2(0, y0) = 0)."""


def _on_grid(inst, x: GridFunction) -> None:
    if x.grid != inst.grid:
        raise ValueError(f"function lives on {x.grid}, instance on {inst.grid}")


def apply_A(inst, x: GridFunction) -> GridFunction:
    _on_grid(inst, x)
    return GridFunction(x.grid, inst.f1(x.t, x.values))


def apply_B(inst, y: GridFunction) -> GridFunction:
    _on_grid(inst, y)
    return GridFunction(y.grid, inst.f2(y.t, y.values))


def apply_D(inst, y: GridFunction) -> GridFunction:
    _on_grid(inst, y)
    return GridFunction(y.grid, inst.p(y.t, y.values))


def resolvent_values(inst, x: GridFunction) -> np.ndarray:
    """Nodewise 1 / (1 - b|x|), refusing nodes within the singularity floor."""
    _on_grid(inst, x)
    t = x.t
    den = 1.0 - inst.b(t) * np.abs(x.values)
    floor = inst.sing_floor
    bad = np.flatnonzero(den < floor)
    if bad.size:
        i = int(bad[0])
        raise SingularityError(i, float(t[i]), float(den[i]), floor)
    return 1.0 / den


def apply_C(inst, x: GridFunction) -> GridFunction:
    w = resolvent_values(inst, x)
    return GridFunction(x.grid, w - inst.p(x.t, w))


def c_constant(inst) -> float:
    """c = (x0 - f1(0, x0)) / f2(0, y0)."""
    den = float(inst.f2(0.0, inst.y0))
    if den == 0.0 or not np.isfinite(den):
        raise InstanceError(f"f2(0, y0) = {den}: the initial constant c is undefined")
    return (inst.x0 - float(inst.f1(0.0, inst.x0))) / den


def weighted_volterra(inst, y: GridFunction) -> GridFunction:
    """B'y by the exponential product-trapezoid rule.

    On each cell g(s, y(s)) is taken linear between its endpoint values and
    ``e^{-lam (t - s)}`` times that line is integrated in closed form, so the
    rule is exact for piecewise-linear integrands and keeps positive weights.
    """
    _on_grid(inst, y)
    if inst.lam < 0:
        raise InstanceError("lambda must be >= 0")
    t = y.t
    gv = inst.g(t, y.values)
    integral = _kernels.exp_trapezoid(gv, inst.lam, y.grid.h)
    return GridFunction(y.grid, c_constant(inst) * np.exp(-inst.lam * t) + integral)


# ---------------------------------------------------------------------------
# blocks and audits


class BlockKind(enum.Enum):
    A = "A"
    B = "B"
    C = "C"
    D = "D"
    BPRIME = "Bprime"
    COMPOSITE = "Composite"


@dataclass(frozen=True)
class OperatorBlock:
    kind: BlockKind
    evaluator: Callable[[GridFunction], GridFunction]
    grid: Grid
    certificate: Optional[DFunction] = None
    positive: bool = False
    monotone: bool = True
    name: str = ""

    def __call__(self, x: GridFunction) -> GridFunction:
        return self.evaluator(x)

    def then(self, outer: "OperatorBlock", name: str = "") -> "OperatorBlock":
        """outer o self."""
        return OperatorBlock(BlockKind.COMPOSITE, lambda x: outer(self(x)), self.grid,
                             None, outer.positive, self.monotone and outer.monotone,
                             name or f"{outer.name}o{self.name}")


def instance_blocks(inst) -> dict[str, OperatorBlock]:
    g = inst.grid
    return {
        "A": OperatorBlock(BlockKind.A, lambda x: apply_A(inst, x), g, name="A"),
        "B": OperatorBlock(BlockKind.B, lambda y: apply_B(inst, y), g, positive=True, name="B"),
        "C": OperatorBlock(BlockKind.C, lambda x: apply_C(inst, x), g, name="C"),
        "D": OperatorBlock(BlockKind.D, lambda y: apply_D(inst, y), g, name="D"),
        "Bprime": OperatorBlock(BlockKind.BPRIME, lambda y: weighted_volterra(inst, y), g,
                                positive=True, name="B'"),
    }


class Property(enum.Enum):
    MONOTONE = "Monotone"
    DLIPSCHITZ = "DLipschitz"
    POSITIVE = "Positive"
    PARTIALLY_BOUNDED = "PartiallyBounded"


@dataclass(frozen=True)
class CertificateReport:
    """Outcome of a sampled audit.

    ``worst_violation`` is the largest raw excess found (negative when every
    sample had room to spare); ``holds_on_sample`` is ``worst_violation <= slack``.
    """

    property: Property
    holds_on_sample: bool
    trials: int
    worst_violation: float
    worst_pair_digest: str = ""
    slack: float = 0.0

    def to_dict(self) -> dict:
        return {"property": self.property.value, "holds_on_sample": self.holds_on_sample,
                "trials": self.trials, "worst_violation": self.worst_violation,
                "worst_pair": self.worst_pair_digest, "slack": self.slack}


@dataclass(frozen=True)
class DomainBox:
    lo: float
    hi: float

    def __post_init__(self):
        if not (np.isfinite(self.lo) and np.isfinite(self.hi) and self.lo <= self.hi):
            raise ValueError(f"bad domain box [{self.lo}, {self.hi}]")

    @property
    def abs_max(self) -> float:
        return max(abs(self.lo), abs(self.hi))


def _profile(t: np.ndarray, rng: np.random.Generator, modes: int = 4) -> np.ndarray:
    T = t[-1] if t[-1] > 0 else 1.0
    out = np.zeros_like(t)
    for j in range(modes):
        out += rng.normal() / (j + 1) * np.cos(j * np.pi * t / T + rng.uniform(0, 2 * np.pi))
    return out


def sample_function(grid: Grid, box: DomainBox, rng: np.random.Generator) -> GridFunction:
    """Smooth random element inside the box (constant every fourth draw)."""
    t = grid.t
    width = box.hi - box.lo
    if width == 0 or rng.random() < 0.25:
        return GridFunction.constant(grid, rng.uniform(box.lo, box.hi))
    prof = _profile(t, rng)
    span = np.ptp(prof)
    prof = (prof - prof.min()) / span if span > 0 else np.zeros_like(t)
    amp = width * rng.uniform(0.05, 1.0)
    base = rng.uniform(box.lo, box.hi - amp)
    return GridFunction(grid, np.clip(base + amp * prof, box.lo, box.hi))


def sample_pair(grid: Grid, box: DomainBox, rng: np.random.Generator):
    """A comparable pair x <= y inside the box."""
    x = sample_function(grid, box, rng)
    width = box.hi - box.lo
    scale = width * 10 ** rng.uniform(-6, 0)
    if rng.random() < 0.3:
        bump = np.full(grid.n_points, scale)
    else:
        prof = _profile(grid.t, rng)
        prof = prof - prof.min()
        top = prof.max()
        bump = scale * (prof / top if top > 0 else np.ones_like(prof))
    y = np.minimum(x.values + bump, box.hi)
    return x, GridFunction(grid, np.maximum(y, x.values))


def _describe(x: GridFunction, y: GridFunction) -> str:
    dx, dy = x.digest(), y.digest()
    return (f"x[min={dx['min']:.6g}, max={dx['max']:.6g}] <= "
            f"y[min={dy['min']:.6g}, max={dy['max']:.6g}], |y-x|={sup_norm(y - x):.3g}")


def _audit(op: OperatorBlock, box: DomainBox, trials: int, rng_seed: int, measure, prop, slack):
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rng = np.random.default_rng(rng_seed)
    worst, where = -np.inf, ""
    for _ in range(trials):
        x, y = sample_pair(op.grid, box, rng)
        try:
            v = measure(x, y)
        except Exception as exc:
            exc.pair = (x, y)
            raise
        if v > worst:
            worst, where = v, _describe(x, y)
    return CertificateReport(prop, bool(worst <= slack), trials, float(worst), where, slack)


def verify_monotone(op: OperatorBlock, box: DomainBox, trials: int = 200, rng_seed: int = 0,
                    slack: float = EPS_MONO) -> CertificateReport:
    """Worst pointwise amount by which op(x) exceeds op(y) over sampled x <= y."""
    def measure(x, y):
        return float(np.max(op(x).values - op(y).values))
    return _audit(op, box, trials, rng_seed, measure, Property.MONOTONE, slack)


def verify_dlipschitz(op: OperatorBlock, psi: DFunction, box: DomainBox, trials: int = 200,
                      rng_seed: int = 0, slack: float = EPS_LIP) -> CertificateReport:
    def measure(x, y):
        return sup_norm(op(x) - op(y)) - psi(sup_norm(x - y))
    return _audit(op, box, trials, rng_seed, measure, Property.DLIPSCHITZ, slack)


def verify_positive(op: OperatorBlock, box: DomainBox, trials: int = 200, rng_seed: int = 0,
                    slack: float = 0.0) -> CertificateReport:
    def measure(x, y):
        return float(-min(op(x).values.min(), op(y).values.min()))
    return _audit(op, box, trials, rng_seed, measure, Property.POSITIVE, slack)


def verify_bounded(op: OperatorBlock, bound: float, box: DomainBox, trials: int = 200,
                   rng_seed: int = 0, slack: float = EPS_LIP) -> CertificateReport:
    def measure(x, y):
        return max(sup_norm(op(x)), sup_norm(op(y))) - bound
    return _audit(op, box, trials, rng_seed, measure, Property.PARTIALLY_BOUNDED, slack)


def w_max(inst, box: DomainBox) -> float:
    """sup of 1/(1 - b(t)|x|) over the grid and |x| <= box.abs_max (inf at a pole)."""
    bt = inst.b(inst.grid.t)
    den = np.minimum(1.0, 1.0 - bt * box.abs_max)
    if np.any(den <= 0):
        return float("inf")
    return float(np.max(1.0 / den))
