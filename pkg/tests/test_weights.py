import math

import numpy as np
import pytest
import sympy as sp
from hypothesis import given
from hypothesis import strategies as st

from stochheat.lattice import make_grid
from stochheat.weights import (WeightParams, cutoff, frequency_cutoff, gaussian_weight, localize,
                               observation_cutoff, weight_field, weight_gradient, weight_hessian,
                               weight_identity_residuals, weight_time_derivative)


def sympy_weight(dim):
    t, T, lam = sp.symbols("t T lam", positive=True)
    xs = sp.symbols(f"x0:{dim}", real=True)
    cs = sp.symbols(f"c0:{dim}", real=True)
    s = T - t + lam
    G = s ** sp.Rational(-dim, 2) * sp.exp(-sum((x - c) ** 2 for x, c in zip(xs, cs)) / (4 * s))
    return G, t, T, lam, xs, cs


@pytest.mark.parametrize("dim", [1, 2])
def test_weight_derivatives_match_symbolic(dim):
    G, t, T, lam, xs, cs = sympy_weight(dim)
    g = make_grid(dim, 8.0, 32 if dim == 2 else 64)
    x0 = (0.3, -0.4)[:dim]
    p = WeightParams(0.7, x0, 1.0, dim)
    tt = 0.35
    subs = {t: tt, T: 1.0, lam: 0.7, **{c: v for c, v in zip(cs, x0)}}
    disp = g.displacement(x0)
    args = [d + v for d, v in zip(disp, x0)]  # unwrapped points, same displacement
    f = sp.lambdify(xs, G.subs(subs), "numpy")
    assert np.max(np.abs(f(*args) - weight_field(g, tt, p))) < 1e-12
    grad = weight_gradient(g, tt, p)
    hess = weight_hessian(g, tt, p)
    for i in range(dim):
        fi = sp.lambdify(xs, sp.diff(G, xs[i]).subs(subs), "numpy")
        assert np.max(np.abs(fi(*args) - grad[i])) < 1e-12
        for j in range(dim):
            fij = sp.lambdify(xs, sp.diff(G, xs[i], xs[j]).subs(subs), "numpy")
            assert np.max(np.abs(fij(*args) - hess[i, j])) < 1e-12
    ft = sp.lambdify(xs, sp.diff(G, t).subs(subs), "numpy")
    assert np.max(np.abs(ft(*args) - weight_time_derivative(g, tt, p))) < 1e-12


def test_backward_heat_identity_symbolic():
    for dim in (1, 2):
        G, t, T, lam, xs, cs = sympy_weight(dim)
        assert sp.simplify(sp.diff(G, t) + sum(sp.diff(G, x, 2) for x in xs)) == 0


def test_gaussian_weight_values():
    p = WeightParams(1.0, (0.0,), 1.0, 1)
    assert math.isclose(gaussian_weight([[2.0]], 0.0, p)[0], 2**-0.5 * math.exp(-0.5), rel_tol=1e-14)
    assert abs(gaussian_weight([[2.0]], 0.0, p)[0] - 0.42888) < 5e-6
    assert math.isclose(gaussian_weight([[0.0]], 0.25, p)[0], 1.75**-0.5)
    with pytest.raises(ValueError):
        gaussian_weight([[0.0]], 1.5, p)


@given(st.floats(0.1, 3.0), st.floats(0.0, 3.0), st.integers(1, 2))
def test_lambda_ratio_at_terminal_time(lam, r, dim):
    x = np.zeros(dim)
    x[0] = r
    G1 = gaussian_weight(x, 1.0, WeightParams(lam, (0.0,), 1.0, dim))
    G4 = gaussian_weight(x, 1.0, WeightParams(4 * lam, (0.0,), 1.0, dim))
    assert math.isclose(G4 / G1, 4 ** (-dim / 2) * math.exp(3 * r * r / (16 * lam)), rel_tol=1e-12)


@given(st.floats(0.0, 0.99), st.floats(0.1, 2.0))
def test_weight_positive_and_radially_nonincreasing(t, lam):
    p = WeightParams(lam, (0.0,), 1.0, 1)
    rs = np.linspace(0, 5, 50)[:, None]
    G = gaussian_weight(rs, t, p)
    assert np.all(G > 0) and np.all(np.diff(G) <= 0)


@pytest.mark.parametrize("dim,L,ns", [(1, 16.0, (64, 128, 256, 512)), (2, 8.0, (32, 64, 128, 256))])
def test_heat_identity_second_order(dim, L, ns):
    p = WeightParams(0.5, (0.0,) * dim, 1.0, dim)
    res = [weight_identity_residuals(make_grid(dim, L, n), p, 0.5, 0.05 * 64 / n) for n in ns]
    ratios = [a.heat_fd / b.heat_fd for a, b in zip(res, res[1:])]
    assert all(3.5 <= r <= 4.5 for r in ratios)
    last = res[-1]
    assert max(last.gradient, last.laplacian, last.mixed, last.heat_analytic) <= 1e-12


def test_cutoff_geometry():
    g = make_grid(1, 16.0, 512)
    chi = frequency_cutoff(g, 0.0, 1.0, 1.0)
    assert chi.outer == 3.0 and chi.inner == 2.5
    rho = g.distance((0.0,))
    assert np.all(chi.values[rho <= 2.5] == 1) and np.all(chi.values[rho >= 3.0] == 0)
    assert np.all((chi.values >= 0) & (chi.values <= 1))
    eta = cutoff(g, 0.0, 1.0, 1.5)
    assert eta.grad_sup == 3.75
    assert np.max(np.abs(eta.gradient)) <= eta.grad_sup
    assert np.max(np.abs(eta.laplacian)) <= eta.lap_sup
    obs = observation_cutoff(g, 0.0, 1.0, 1.0)
    assert (obs.inner, obs.outer) == (1.75, 2.0)
    with pytest.raises(ValueError):
        cutoff(g, 0.0, 2.0, 1.0)


def test_cutoff_derivatives_converge_second_order():
    # the profile is C^2 only: its third derivative jumps at both radii, so the lattice
    # Laplacian is second order away from them and first order on the joints themselves
    grad_err, lap_err = [], []
    for n in (128, 256, 512):
        g = make_grid(2, 8.0, n)
        chi = cutoff(g, (0.1, 0.0), 1.0, 2.0)
        rho = g.distance((0.1, 0.0))
        away = (np.abs(rho - 1.0) > 0.1) & (np.abs(rho - 2.0) > 0.1)
        grad_err.append(np.max(np.abs(g.gradient(chi.values) - chi.gradient)))
        lap_err.append(np.max(np.abs(g.laplacian(chi.values) - chi.laplacian)[away]))
    for e in (grad_err, lap_err):
        assert 3.0 < e[0] / e[1] < 5.0 and 3.0 < e[1] / e[2] < 5.0


def test_localize_plateau_and_interior_support():
    g = make_grid(1, 16.0, 256)
    chi = frequency_cutoff(g, 0.0, 1.0, 1.0)
    phi = np.full(g.shape, 2.0)
    loc = localize(phi, g.gradient(phi), chi, 0.5)
    plateau = g.distance((0.0,)) <= chi.inner
    assert np.allclose(loc.u[plateau], 2.0) and np.allclose(loc.F[plateau], 1.0)
    assert np.all(loc.g[plateau] == 0)
    bump = np.exp(-g.coords[0] ** 2 / 0.1) * (np.abs(g.coords[0]) < 1.0)
    loc = localize(bump, g.gradient(bump), chi, 0.5)
    assert np.all(loc.g == 0) and np.allclose(loc.F, 0.5 * bump)


def test_localize_chi_itself_and_annulus_support():
    g = make_grid(2, 8.0, 64)
    chi = cutoff(g, (0.0, 0.0), 1.0, 2.0)
    loc = localize(chi.values, chi.gradient, chi)
    expected = -2 * np.sum(chi.gradient**2, axis=0) - chi.values * chi.laplacian
    assert np.allclose(loc.g, expected, atol=1e-14)
    assert np.all(loc.g[~chi.annulus()] == 0)
