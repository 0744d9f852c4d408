"""Reference instances and a seeded family of hypothesis-satisfying instances."""
from __future__ import annotations

import numpy as np
from scipy.optimize import brentq

from .fields import Field, const
from .ordered_space import Grid
from .problem import ProblemInstance

ZERO = const(0.0)
ONE = const(1.0)


def trivial_instance(n_points: int = 1001, t_end: float = 1.0, **changes) -> ProblemInstance:
    """x' + x = 0, x(0) = 1, y = 1: solution x = e^{-t}."""
    kw = dict(lam=1.0, grid=Grid(t_end, n_points), b=ZERO, f1=ZERO, f2=ONE, g=ZERO, p=ZERO,
              x0=1.0, y0=1.0, L=1.0, K=1.0, k=0.0, h_l1=0.0, name="trivial")
    kw.update(changes)
    return ProblemInstance(**kw)


def pure_integration_instance(n_points: int = 1001, t_end: float = 1.0) -> ProblemInstance:
    """x' = 1, x(0) = 0: solution x = t, exact at the nodes."""
    return ProblemInstance(lam=0.0, grid=Grid(t_end, n_points), b=ZERO, f1=ZERO, f2=ONE, g=ONE,
                           p=ZERO, x0=0.0, y0=1.0, L=0.5, K=1.0, k=0.0, h_l1=1.0,
                           name="pure-integration")


def random_instance(seed: int, n_points: int = 201, t_end: float = 1.0) -> ProblemInstance:
    """A smooth instance built to satisfy every audited hypothesis.

    f1 and f2 are odd hyperbolic forms with amplitude at most L/2, which keeps
    their increments under L r/(K + r) on all of R; g is a nonnegative
    nondecreasing hyperbolic shift; p is a k-contraction; b is small and
    nonnegative. x0 is solved so that c lands inside the admissible range.
    """
    rng = np.random.default_rng(seed)
    K = rng.uniform(1.0, 2.0)
    L = K * rng.uniform(0.5, 0.9)
    k = rng.uniform(0.05, 0.6)
    lam = rng.uniform(0.0, 2.0)
    beta = rng.uniform(0.0, 0.02)
    a1 = L * rng.uniform(0.1, 0.5)
    a2 = L * rng.uniform(0.1, 0.5)
    a3 = rng.uniform(0.0, 0.1)
    f20 = rng.uniform(1.0, 1.5)
    g0 = a3 + rng.uniform(0.0, 0.2)
    g1 = rng.uniform(0.0, 0.1)
    b = Field("sum", children=(const(beta), Field("tpoly", (0.0, 0.5 * beta))))
    f1 = Field("hyp", (a1, K))
    f2 = Field("sum", children=(const(f20), Field("hyp", (a2, K))))
    g = Field("sum", children=(Field("tpoly", (g0, g1)), Field("hyp", (a3, 1.0))))
    p = [Field("poly", (0.0, k)), Field("arctan", (k,)), Field("hyp", (k, 1.0))][int(rng.integers(3))]
    h_l1 = g0 + g1 * t_end + a3
    # keep (1 + s) M L / K comfortably below one
    c_max = 0.8 * K / L - h_l1
    c = rng.uniform(0.05, 1.0) * max(c_max, 0.05)
    y0 = 1.0
    target = c * float(f2(0.0, y0))
    x0 = brentq(lambda x: x - float(f1(0.0, x)) - target, -10.0, 10.0 + 2 * target)
    return ProblemInstance(lam=lam, grid=Grid(t_end, n_points), b=b, f1=f1, f2=f2, g=g, p=p,
                           x0=float(x0), y0=y0, L=L, K=K, k=k, h_l1=h_l1, name=f"random-{seed}")


def random_resolvent_instance(seed: int, n_points: int = 101):
    """Instance plus an admissible x for resolvent cross-checks (b up to 0.5)."""
    rng = np.random.default_rng(seed)
    k = rng.uniform(0.05, 0.9)
    beta = rng.uniform(0.0, 0.5)
    p = [Field("poly", (rng.uniform(-1, 1), k)), Field("arctan", (k,)), Field("sin", (k,)),
         Field("hyp", (k, 1.0))][int(rng.integers(4))]
    b = Field("sum", children=(const(beta), Field("tsin", (0.2 * beta, 3.0))))
    inst = ProblemInstance(lam=1.0, grid=Grid(1.0, n_points), b=b, f1=ZERO, f2=ONE, g=ZERO, p=p,
                           x0=1.0, y0=1.0, L=1.0, K=1.0, k=k, h_l1=0.0, name=f"resolvent-{seed}")
    t = inst.grid.t
    xmax = 0.9 / (1.2 * beta) if beta > 0 else 5.0
    amp = rng.uniform(0.1, 1.0) * min(xmax, 5.0)
    x = amp * (0.5 + 0.5 * np.sin(rng.uniform(1, 6) * t + rng.uniform(0, 6)))
    if rng.random() < 0.5:
        x = -x
    from .ordered_space import GridFunction
    return inst, GridFunction(inst.grid, x)
