import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stochheat.hum import (ControlProblem, StagnationError, UnsupportedCase, control_cost,
                           gramian_apply, hum_summary, solve_hum, verify_duality_identity,
                           write_control_csv)
from stochheat.lattice import cube_tiling, make_grid
from stochheat.observability import TimeSet
from stochheat.sde import constant_coefficients, gaussian_bump, random_coefficients


@pytest.fixture(scope="module")
def grid():
    return make_grid(1, 8.0, 128)


def problem(grid, r=0.5, E=((0.0, 0.5),), yT=None, **kw):
    omega = cube_tiling(grid, 1.0).balls(r)
    yT = gaussian_bump(grid, 0.7, 0.5) if yT is None else yT
    return ControlProblem(grid, yT, omega, TimeSet(E, 0.5), 0.5, 64, **kw)


def test_zero_target(grid):
    c = solve_hum(problem(grid, yT=np.zeros(grid.shape)))
    assert np.all(c.values == 0) and c.y0_norm == 0 and c.cost == 0


def test_preconditions(grid):
    with pytest.raises(UnsupportedCase):
        problem(grid, a1=constant_coefficients(0.0, 0.2))
    with pytest.raises(ValueError):
        problem(grid, E=())


def test_gramian_zero_and_quadratic_form(grid, rng):
    pr = problem(grid, E=((0.1, 0.2), (0.3, 0.4)))
    assert np.all(gramian_apply(np.zeros(grid.shape), pr) == 0)
    from stochheat.hum import _Operators

    ops = _Operators(pr)
    x = rng.standard_normal(grid.shape)
    u = ops.control_of(ops.adjoint(x))
    q = pr.inner(gramian_apply(x, pr), x)
    assert abs(q - control_cost(u, pr)) <= 1e-10 * q and q >= 0


@given(st.integers(0, 2**31 - 1))
@settings(max_examples=10)
def test_gramian_symmetric(seed):
    g = make_grid(1, 8.0, 64)
    pr = ControlProblem(g, gaussian_bump(g), cube_tiling(g, 1.0).balls(0.5),
                        TimeSet(((0.05, 0.2), (0.3, 0.45)), 0.5), 0.5, 32,
                        a1=random_coefficients(g, seed, 1.0, 0.0))
    r = np.random.default_rng(seed)
    x, y = r.standard_normal((2,) + g.shape)
    a, b = pr.inner(gramian_apply(x, pr), y), pr.inner(x, gramian_apply(y, pr))
    assert abs(a - b) <= 1e-8 * max(abs(a), abs(b))


def test_null_control_gaussian_target(grid):
    pr = problem(grid)
    c = solve_hum(pr)
    assert c.y0_norm_ratio <= 1e-3 and c.iterations <= 200
    assert c.support_ok() and c.cost >= 0
    res = np.array(c.residuals)
    assert np.all(np.diff(res) <= 1e-12 * res[0])
    assert verify_duality_identity(c.yh0, c.values, pr.yT, pr).relative <= 1e-8


def test_duality_without_control(grid, rng):
    pr = problem(grid)
    x, y = rng.standard_normal((2,) + grid.shape)
    assert verify_duality_identity(x, None, y, pr).relative <= 1e-10
    zero = verify_duality_identity(np.zeros(grid.shape), None, y, pr)
    assert zero.terminal == zero.initial == zero.control == 0


def test_cost_nonincreasing_in_omega(grid):
    costs = [solve_hum(problem(grid, r=r, tol=1e-4)).cost for r in (0.25, 0.5, 0.75)]
    assert costs[0] >= costs[1] * (1 - 1e-3) and costs[1] >= costs[2] * (1 - 1e-3)


def test_stagnation_reports_history(grid):
    with pytest.raises(StagnationError) as info:
        solve_hum(problem(grid, tol=1e-14, max_iter=3))
    assert len(info.value.history) == 4


def test_control_artifacts(grid, tmp_path):
    pr = problem(grid, E=((0.1, 0.2),))
    c = solve_hum(pr)
    write_control_csv(tmp_path / "u.csv", c)
    lines = (tmp_path / "u.csv").read_text().splitlines()
    assert lines[0] == "k,t,w,x,u"
    nodes = int(np.sum(c.weights > 0)) * pr.omega.count
    assert len(lines) == nodes + 1
    s = hum_summary(c)
    assert set(s) == {"cost", "y0_norm_ratio", "iterations", "residuals"}
    assert math.isclose(s["cost"], control_cost(c.values, pr))


def test_two_dimensional_null_control():
    g = make_grid(2, 4.0, 32)
    pr = ControlProblem(g, gaussian_bump(g, (0.3, 0.2), 0.4), cube_tiling(g, 1.0).balls(0.5),
                        TimeSet(((0.0, 0.5),), 0.5), 0.5, 32)
    c = solve_hum(pr)
    assert c.y0_norm_ratio <= 1e-3 and c.support_ok()
    assert verify_duality_identity(c.yh0, c.values, pr.yT, pr).relative <= 1e-8
