import numpy as np
import pytest

from qfdekit.engine import (Direction, EngineConfig, LowerSolutionRejected, OperatorError,
                            StopReason, estimate_M, run_block, run_hybrid)
from qfdekit.fields import const
from qfdekit.instances import random_instance, trivial_instance
from qfdekit.operators import BlockKind, OperatorBlock, instance_blocks
from qfdekit.ordered_space import Grid, GridFunction, Order
from qfdekit.problem import assemble_blocks, find_lower_solution, update_map

G2 = Grid(1.0, 2)


def block(fn, positive=False):
    return OperatorBlock(BlockKind.COMPOSITE, lambda x: GridFunction(x.grid, fn(x.values)), G2,
                         positive=positive)


def constant_block(v, positive=True):
    return block(lambda x: np.full_like(x, v), positive)


def scalar_orbit(step, x0, n):
    out, x = [], x0
    for _ in range(n):
        x = step(x)
        out.append(x)
    return out


def test_hybrid_constant_C_one_step():
    cfg = EngineConfig(record_full_iterates=True)
    tr = run_hybrid(constant_block(0.0), block(np.sin), constant_block(3.0), GridFunction.constant(G2, 0.0), cfg)
    assert tr.converged and tr.reason is StopReason.TOLERANCE_MET
    assert np.all(tr.iterates[1].values == 3.0)
    assert tr.deltas[-1] == 0.0 and tr.n_iter == 2


def test_hybrid_scalar_surrogate():
    cfg = EngineConfig(tol_outer=1e-12, record_full_iterates=True)
    tr = run_hybrid(block(lambda x: x / 2), constant_block(1.0), constant_block(1.0),
                    GridFunction.constant(G2, 0.0), cfg)
    expected = scalar_orbit(lambda x: x / 2 + 1, 0.0, tr.n_iter)
    got = [it.values[0] for it in tr.iterates[1:]]
    assert got[:3] == [1.0, 1.5, 1.75]
    assert got == expected
    assert tr.converged and abs(tr.last.values[0] - 2.0) <= 2e-12
    assert all(f is Order.LESS_OR_EQUAL for f in tr.monotone_flags[:-1])
    ratios = np.array(tr.deltas[1:]) / np.array(tr.deltas[:-1])
    assert np.allclose(ratios[:-1], 0.5)


def test_block_scalar_surrogate_both_directions():
    A, T, Tp = block(lambda x: x / 4), constant_block(1.0), constant_block(1.0)
    cfg = EngineConfig(tol_outer=1e-12, record_full_iterates=True)
    up = run_block(A, T, Tp, GridFunction.constant(G2, 0.0), cfg)
    assert [it.values[0] for it in up.iterates[1:4]] == [1.0, 1.25, 1.3125]
    assert [it.values[0] for it in up.iterates[1:]] == scalar_orbit(lambda x: x / 4 + 1, 0.0, up.n_iter)
    down = run_block(A, T, Tp, GridFunction.constant(G2, 5.0),
                     EngineConfig(tol_outer=1e-12, direction=Direction.FROM_UPPER))
    assert down.converged and down.monotone_ok()
    assert all(f in (Order.GREATER_OR_EQUAL, Order.EQUAL) for f in down.monotone_flags)
    assert abs(up.last.values[0] - 4 / 3) <= 1e-12 and abs(down.last.values[0] - 4 / 3) <= 1e-12


def test_decreasing_component_breaks_monotonicity():
    tr = run_hybrid(constant_block(0.0), constant_block(1.0), block(lambda x: 1 - x / 2),
                    GridFunction.constant(G2, 0.0))
    assert tr.reason is StopReason.MONOTONICITY_BROKEN and not tr.converged
    assert tr.n_iter == 2 and tr.monotone_flags[-1] is Order.GREATER_OR_EQUAL


def test_start_must_be_a_lower_solution():
    with pytest.raises(LowerSolutionRejected) as err:
        run_hybrid(block(lambda x: x / 2), constant_block(1.0), constant_block(1.0),
                   GridFunction.constant(G2, 5.0))
    assert err.value.excess == pytest.approx(1.5)


def test_operator_error_keeps_partial_trace():
    calls = {"n": 0}

    def flaky(x):
        calls["n"] += 1
        if calls["n"] == 3:
            raise ArithmeticError("boom")
        return x / 2

    with pytest.raises(OperatorError) as err:
        run_hybrid(block(flaky), constant_block(1.0), constant_block(1.0), GridFunction.constant(G2, 0.0))
    assert err.value.iteration == 2 and err.value.trace.n_iter == 2
    assert err.value.trace.reason is StopReason.OPERATOR_ERROR


def test_budget_exhaustion():
    tr = run_hybrid(block(lambda x: x / 2), constant_block(1.0), constant_block(1.0),
                    GridFunction.constant(G2, 0.0), EngineConfig(max_outer=5))
    assert tr.reason is StopReason.MAX_ITERATIONS and not tr.converged and tr.n_iter == 5


def test_run_block_requires_positive_T():
    with pytest.raises(ValueError, match="positive"):
        run_block(constant_block(0.0), constant_block(1.0, positive=False), constant_block(1.0),
                  GridFunction.constant(G2, 0.0))


@pytest.mark.parametrize("kw", [dict(tol_outer=0), dict(max_outer=0), dict(slack=-1.0)])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        EngineConfig(**kw)


def test_default_slack_scales_with_iterate():
    cfg = EngineConfig()
    x = GridFunction.constant(G2, -4.0)
    assert cfg.eps_grid(x) == pytest.approx(100 * np.finfo(float).eps * 4.0)
    assert EngineConfig(slack=1e-6).eps_grid(x) == 1e-6


def test_volterra_block_stationary_after_one_step():
    inst = trivial_instance(n_points=41, lam=0.9, x0=1.7)
    blocks = instance_blocks(inst)
    one = OperatorBlock(BlockKind.COMPOSITE, lambda x: GridFunction.constant(x.grid, 1.0), inst.grid,
                        positive=True)
    zero = OperatorBlock(BlockKind.COMPOSITE, lambda x: GridFunction.constant(x.grid, 0.0), inst.grid)
    tr = run_block(zero, one, blocks["Bprime"], GridFunction.constant(inst.grid, 0.0))
    assert np.allclose(tr.last.values, 1.7 * np.exp(-0.9 * inst.grid.t), rtol=1e-15, atol=0)
    assert tr.deltas[1] == 0.0 and tr.converged


def test_estimate_M_examples():
    inst = trivial_instance(n_points=101, lam=1.0, x0=-0.8)
    Bp = instance_blocks(inst)["Bprime"]
    probes = [GridFunction.constant(inst.grid, v) for v in (0.0, 1.0)]
    assert estimate_M(Bp, probes) == pytest.approx(0.8, rel=1e-15)
    inst = trivial_instance(n_points=101, lam=1.0, x0=0.0, g=const(1.0), h_l1=1.0)
    Bp = instance_blocks(inst)["Bprime"]
    m = estimate_M(Bp, probes)
    assert m == pytest.approx(1 - np.exp(-1.0), abs=1e-14) and m <= inst.h_l1
    with pytest.raises(ValueError):
        estimate_M(Bp, [])


def test_residual_and_direction_bracketing():
    inst = random_instance(4)
    A, T, Tp = assemble_blocks(inst)
    cfg = EngineConfig(tol_outer=1e-10)
    lo = run_block(A, T, Tp, find_lower_solution(inst)[0], cfg)
    hi = run_block(A, T, Tp, find_lower_solution(inst, upper=True)[0],
                   EngineConfig(tol_outer=1e-10, direction=Direction.FROM_UPPER))
    assert lo.converged and hi.converged and lo.monotone_ok() and hi.monotone_ok()
    F = update_map(inst)
    for tr in (lo, hi):
        assert np.max(np.abs(F(tr.last).values - tr.last.values)) <= 2e-10
        assert tr.final_residual <= 2e-10
    assert np.all(hi.last.values >= lo.last.values - 2e-10)


def test_trace_rows_for_export():
    tr = run_hybrid(block(lambda x: x / 2), constant_block(1.0), constant_block(1.0),
                    GridFunction.constant(G2, 0.0), EngineConfig(max_outer=3))
    rows = tr.rows()
    assert [r["iter"] for r in rows] == [1, 2, 3]
    assert rows[0]["monotone_flag"] == "LessOrEqual"
    assert rows[0]["residual"] == tr.deltas[1]
    assert {"delta", "min", "max", "norm", "first", "last"} <= set(rows[0])
