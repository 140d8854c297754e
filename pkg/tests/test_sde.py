import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from stochheat.ensemble import EnsembleSpec, Problem, expect, l2_norm_sq
from stochheat.lattice import make_grid
from stochheat.sde import (constant_coefficients, exact_constant_coeff_solution, gaussian_bump,
                           heat_semigroup, random_coefficients, resolvent, sample_brownian,
                           solve_adjoint, solve_forward, step_forward)


def rel_l2(g, f, ref):
    return math.sqrt(g.integrate((f - ref) ** 2) / g.integrate(ref**2))


def lattice_heat(g, f, t):
    """exp(t Lap_h) f with the lattice symbol."""
    return np.fft.irfftn(np.fft.rfftn(f) * np.exp(t * g.laplacian_symbol()), s=g.shape, axes=range(g.dim))


def test_brownian_basics():
    p = sample_brownian(1.0, 64, 7)
    assert p.W[0] == 0.0
    assert np.array_equal(p.increments, sample_brownian(1.0, 64, 7).increments)
    assert not np.array_equal(p.increments, sample_brownian(1.0, 64, 8).increments)
    with pytest.raises(ValueError):
        sample_brownian(1.0, 0, 1)


def test_brownian_second_moment():
    WT = np.array([sample_brownian(0.7, 4, (3, i)).W[-1] for i in range(10_000)])
    m, se = np.mean(WT**2), np.std(WT**2, ddof=1) / 100
    assert abs(m - 0.7) <= 3 * se


def test_step_zero_and_eigenfunction(grid1):
    co = constant_coefficients()
    assert np.all(step_forward(grid1, np.zeros(grid1.shape), co, 0.0, 0.01, 0.0) == 0)
    g = make_grid(1, 8.0, 64)
    f = np.cos(2 * np.pi * g.coords[0] / g.extent)
    h, L, dt = g.spacing, g.extent, 0.01
    mu = (2 / h**2) * (1 - np.cos(2 * np.pi * h / L))
    assert np.max(np.abs(step_forward(g, f, co, 0.0, dt, 0.0) - f / (1 + dt * mu))) < 1e-13


@given(st.floats(-5, 5).filter(lambda c: abs(c) > 1e-3), st.integers(0, 1000))
def test_pathwise_linearity(c, seed):
    g = make_grid(1, 8.0, 64)
    co = random_coefficients(g, seed, 1.0, 0.5)
    p = sample_brownian(0.25, 32, seed)
    phi0 = gaussian_bump(g, 0.3, 0.6)
    a = solve_forward(g, phi0, co, 0.25, p).fields
    b = solve_forward(g, c * phi0, co, 0.25, p).fields
    assert np.max(np.abs(b - c * a)) <= 1e-12 * abs(c) * np.max(np.abs(a))


def test_heat_reference(grid1):
    phi0 = gaussian_bump(grid1, 0.0, 0.5)
    T = 0.5
    p = sample_brownian(T, 512, 0)
    out = solve_forward(grid1, phi0, constant_coefficients(), T, p).final
    assert rel_l2(grid1, out, heat_semigroup(grid1, phi0, T)) < 0.01
    out = solve_forward(grid1, phi0, constant_coefficients(1.0), T, p).final
    assert rel_l2(grid1, out, math.exp(T) * heat_semigroup(grid1, phi0, T)) < 0.01


def test_closed_form_oracle(grid1):
    phi0 = gaussian_bump(grid1, 0.0, 0.5)
    T = 0.5
    for seed in range(5):
        p = sample_brownian(T, 512, seed)
        out = solve_forward(grid1, phi0, constant_coefficients(0.5, 0.3), T, p).final
        ref = exact_constant_coeff_solution(grid1, phi0, 0.5, 0.3, p, T)
        assert rel_l2(grid1, out, ref) < 0.02
    assert np.array_equal(exact_constant_coeff_solution(grid1, phi0, 0.5, 0.3, p, 0.0), phi0)
    ref = exact_constant_coeff_solution(grid1, phi0, 2.0, 0.0, sample_brownian(1.0, 4, 0), 1.0)
    assert np.allclose(ref, math.exp(2) * heat_semigroup(grid1, phi0, 1.0))
    with pytest.raises(ValueError):
        exact_constant_coeff_solution(grid1, phi0, np.ones(3), 0.0, p, T)


def test_adjoint_is_negated_forward(grid1):
    y0 = gaussian_bump(grid1, 1.0, 0.4)
    p = sample_brownian(0.5, 128, 2)
    adj = solve_adjoint(grid1, y0, constant_coefficients(0.4, 0.2), 0.5, p).final
    fwd = solve_forward(grid1, y0, constant_coefficients(-0.4, -0.2), 0.5, p).final
    assert np.array_equal(adj, fwd)
    heat = solve_adjoint(grid1, y0, constant_coefficients(), 0.5, p).final
    assert np.array_equal(heat, solve_forward(grid1, y0, constant_coefficients(), 0.5, p).final)
    assert np.all(solve_adjoint(grid1, 0 * y0, constant_coefficients(1, 1), 0.5, p).fields == 0)


def scheme_second_moment(g, phi0, a, b, T, K):
    """Exact E|phi_K|^2 of the semi-implicit scheme: ((1+a dt)^2 + b^2 dt)^K |P^K phi0|^2."""
    dt = T / K
    P = 1.0 / (1.0 - dt * g.laplacian_symbol())
    f = np.fft.irfftn(np.fft.rfftn(phi0) * P**K, s=g.shape, axes=range(g.dim))
    return ((1 + a * dt) ** 2 + b * b * dt) ** K * g.integrate(f * f)


def test_weak_order_one(grid1):
    phi0 = gaussian_bump(grid1, 0.0, 0.5)
    a, b, T = 0.5, 0.3, 0.5
    limit = math.exp((2 * a + b * b) * T) * grid1.integrate(lattice_heat(grid1, phi0, T) ** 2)
    errs = [abs(scheme_second_moment(grid1, phi0, a, b, T, K) - limit) for K in (64, 128, 256, 512)]
    ratios = [e0 / e1 for e0, e1 in zip(errs, errs[1:])]
    assert all(1.5 <= r <= 3 for r in ratios), ratios


def test_monte_carlo_matches_scheme_moment(grid1):
    phi0 = gaussian_bump(grid1, 0.0, 0.5)
    pr = Problem(grid1, phi0, constant_coefficients(0.5, 0.3), 0.5, 64)
    est = expect(l2_norm_sq, EnsembleSpec(1000, 9), pr)
    exact = scheme_second_moment(grid1, phi0, 0.5, 0.3, 0.5, 64)
    assert abs(est.mean - exact) <= 3 * est.se


def test_random_coefficient_norms_bound_samples():
    g = make_grid(2, 8.0, 32)
    co = random_coefficients(g, 5, 1.0, 0.5)
    assert co.a_sup <= 1.0 and co.b_sup <= 0.5
    for t in np.linspace(0, 1, 7):
        assert np.max(np.abs(co.a(t))) <= co.a_sup + 1e-12
        assert np.max(np.abs(co.b(t))) <= co.b_sup + 1e-12
        gb = np.sqrt(np.sum(g.gradient(co.b(t)) ** 2, axis=0))
        assert np.max(gb) <= co.grad_b_sup + 1e-12


def test_resolvent_inverts_implicit_operator(grid1, rng):
    f = rng.standard_normal(grid1.shape)
    dt = 0.01
    x = resolvent(grid1, f, dt)
    assert np.max(np.abs(x - dt * grid1.laplacian(x) - f)) < 1e-10 * np.max(np.abs(f))
