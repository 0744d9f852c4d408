import numpy as np
import pytest

from qfdekit.fields import const, parse_field
from qfdekit.instances import random_resolvent_instance, trivial_instance
from qfdekit.operators import DomainBox, apply_C, apply_D, verify_monotone
from qfdekit.ordered_space import GridFunction
from qfdekit.problem import resolvent_block
from qfdekit.resolvent import (NonConvergence, crosscheck_resolvent, resolvent_closed_form,
                               resolvent_picard)


def inst(**kw):
    kw.setdefault("n_points", 21)
    return trivial_instance(**kw)


def smooth_x(i, amp=0.8):
    return GridFunction(i.grid, amp * (0.5 + 0.5 * np.sin(4 * i.grid.t)))


def test_p_zero_converges_in_one_step():
    i = inst(b=const(0.3))
    x = smooth_x(i)
    res = resolvent_picard(i, x)
    assert res.converged and res.iterations == 1 and res.final_delta == 0.0
    assert np.array_equal(res.y.values, apply_C(i, x).values)


def test_linear_p_with_zero_b_gives_one():
    i = inst(p=parse_field("poly(0, 0.6)"), k=0.6)
    x = smooth_x(i)
    res = resolvent_picard(i, x, y_init=GridFunction.constant(i.grid, 0.0), tol_inner=1e-14)
    # y = 1 - k + k y has the unique solution y = 1; the stop rule leaves k/(1-k) tol
    assert res.converged
    assert np.max(np.abs(res.y.values - 1.0)) <= 1e-12


def test_geometric_rate_matches_k():
    i = inst(p=parse_field("poly(0, 0.5)"), k=0.5, b=const(0.2))
    x = smooth_x(i)
    res = resolvent_picard(i, x, y_init=GridFunction.constant(i.grid, 0.0), tol_inner=1e-12)
    d0 = res.deltas[0]
    predicted = int(np.ceil(np.log(1e-12 / d0) / np.log(0.5))) + 1
    assert abs(res.iterations - predicted) <= 2
    ratios = res.ratios()[:-2]  # the last couple sit at roundoff
    assert np.allclose(ratios, 0.5, atol=1e-3)


def test_closed_form_examples():
    i = inst()
    assert np.all(resolvent_closed_form(i, smooth_x(i)).values == 1.0)
    i = inst(b=const(0.5))
    assert np.all(resolvent_closed_form(i, GridFunction.constant(i.grid, 1.0)).values == 2.0)
    i = trivial_instance(n_points=11, t_end=0.5, b=parse_field("tpoly(0, 1)"))
    w = resolvent_closed_form(i, GridFunction.constant(i.grid, 1.0))
    assert np.array_equal(w.values, 1.0 / (1.0 - i.grid.t))


def test_crosscheck_examples():
    i = inst(b=const(0.4))
    assert crosscheck_resolvent(i, smooth_x(i)) == 0.0
    i = inst(b=const(0.4), p=parse_field("sin(0.3)"), k=0.3)
    assert crosscheck_resolvent(i, smooth_x(i), tol_inner=1e-12) <= 1e-10


def test_non_contraction_raises_with_partial():
    i = inst(p=parse_field("poly(0, 1.2)"), k=1.2)
    with pytest.raises(NonConvergence) as err:
        crosscheck_resolvent(i, smooth_x(i), max_iter=50)
    assert err.value.partial.iterations == 50 and not err.value.partial.converged


def test_fixed_point_identity_on_random_instances():
    for seed in range(30):
        i, x = random_resolvent_instance(seed)
        w = resolvent_closed_form(i, x)
        lhs = apply_C(i, x) + apply_D(i, w)
        assert np.max(np.abs(lhs.values - w.values)) <= 1e-12


def test_composed_map_is_monotone():
    i = inst(b=parse_field("tpoly(0.2, 0.1)"), p=parse_field("arctan(0.6)"), k=0.6)
    rep = verify_monotone(resolvent_block(i), DomainBox(0.0, 2.5), trials=300)
    assert rep.holds_on_sample


def test_converged_result_invariant():
    for seed in range(10):
        i, x = random_resolvent_instance(seed)
        res = resolvent_picard(i, x, tol_inner=1e-11)
        assert res.converged and res.final_delta <= 1e-11
