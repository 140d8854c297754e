import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stochheat.ensemble import EnsembleSpec, Problem
from stochheat.frequency import (H_FLOOR, calibrate_allowance, centered_difference,
                                 check_dH_identity, check_monotonicity, frequency_at,
                                 frequency_trace, monotonicity_rhs, scaled_frequency,
                                 write_trace_csv)
from stochheat.lattice import ball_mask, make_grid
from stochheat.sde import constant_coefficients, gaussian_bump, random_coefficients
from stochheat.weights import CutoffProfile, WeightParams, frequency_cutoff, weight_field


@pytest.fixture
def setup():
    g = make_grid(1, 16.0, 256)
    chi = frequency_cutoff(g, 0.0, 1.0, 1.0)
    params = WeightParams(0.5, (0.0,), 0.5, 1)
    return g, chi, params


def flat_profile(g, R0):
    """Synthetic cutoff equal to one on the whole ball: u = phi there."""
    z = np.zeros((g.dim,) + g.shape)
    return CutoffProfile(g, (0.0,) * g.dim, R0 / 2, R0, np.ones(g.shape), z, np.zeros(g.shape), 0.0, 0.0)


def test_zero_field_gives_undefined_frequency(setup):
    g, chi, params = setup
    H, D, N = frequency_at(np.zeros(g.shape), chi, params, 0.2)
    assert H == 0 and D == 0 and math.isnan(N)


def test_constant_field_has_zero_frequency(setup):
    g, _, params = setup
    chi = flat_profile(g, 3.0)
    H, D, N = frequency_at(np.ones(g.shape), chi, params, 0.2)
    assert D == 0 and N == 0
    assert math.isclose(H, g.integrate(weight_field(g, 0.2, params), ball_mask(g, 0.0, 3.0)), rel_tol=1e-14)


def test_centered_difference_exact_on_quadratics():
    t = np.linspace(0, 1, 11)
    assert np.allclose(centered_difference(3 * t**2 - t, 0.1), 6 * t[1:-1] - 1, atol=1e-12)


@given(st.floats(0.1, 20.0), st.integers(0, 50))
@settings(max_examples=8)
def test_frequency_scale_invariant(c, seed):
    g = make_grid(1, 16.0, 128)
    chi = frequency_cutoff(g, 0.0, 1.0, 1.0)
    params = WeightParams(0.5, (0.0,), 0.5, 1)
    pr = Problem(g, gaussian_bump(g, 0.4, 0.5), random_coefficients(g, seed), 0.5, 32)
    spec = EnsembleSpec(6, seed)
    a = frequency_trace(pr, spec, chi, params)
    b = frequency_trace(pr.scaled(c), spec, chi, params)
    assert np.max(np.abs(b.N / a.N - 1)) <= 1e-10
    assert np.all(a.H >= 0) and np.all(a.D >= 0) and np.all(a.H_se >= 0)


def test_dH_identity_zero_field(setup):
    g, chi, params = setup
    pr = Problem(g, np.zeros(g.shape), constant_coefficients(0.5, 0.3), 0.5, 32)
    rep = check_dH_identity(frequency_trace(pr, EnsembleSpec(3), chi, params))
    assert rep.max_residual == 0


def test_dH_identity_needs_three_nodes(setup):
    g, chi, params = setup
    pr = Problem(g, gaussian_bump(g), constant_coefficients(), 0.5, 1)
    with pytest.raises(ValueError):
        check_dH_identity(frequency_trace(pr, EnsembleSpec(1), chi, params))


def test_dH_identity_constant_coefficients(setup):
    g, chi, params = setup
    pr = Problem(g, gaussian_bump(g, 0.2, 0.5), constant_coefficients(0.5, 0.3), 0.5, 128)
    allow = calibrate_allowance(pr, chi, params)
    rep = check_dH_identity(frequency_trace(pr, EnsembleSpec(200, 1), chi, params))
    assert np.all(np.abs(rep.residual) <= 3 * rep.se + allow.dH)


def test_martingale_correction_keeps_estimand(setup):
    g, chi, params = setup
    pr = Problem(g, gaussian_bump(g, 0.2, 0.5), constant_coefficients(0.5, 0.3), 0.5, 64)
    tr = frequency_trace(pr, EnsembleSpec(400, 2), chi, params)
    raw, cv = check_dH_identity(tr, False), check_dH_identity(tr, True)
    assert np.all(cv.se < raw.se)
    assert np.all(np.abs(raw.lhs - cv.lhs) <= 4 * np.hypot(raw.se, cv.se))


def test_scaled_frequency_nonincreasing_without_noise_and_forcing():
    # R = 2 puts the cutoff transition far from the mass: F vanishes to round-off
    g = make_grid(1, 16.0, 256)
    chi = frequency_cutoff(g, 0.0, 2.0, 1.0)
    params = WeightParams(0.5, (0.0,), 0.5, 1)
    pr = Problem(g, gaussian_bump(g, 0.3, 0.4), constant_coefficients(), 0.5, 128)
    tr = frequency_trace(pr, EnsembleSpec(1), chi, params)
    assert np.max(tr.terms[4] / tr.H) < 1e-12
    q = scaled_frequency(tr)
    assert np.all(np.diff(q) <= 1e-12 * q[0])


def test_constant_u_gives_nonnegative_rhs():
    g = make_grid(1, 16.0, 128)
    chi = flat_profile(g, 3.0)
    params = WeightParams(0.5, (0.0,), 0.5, 1)
    pr = Problem(g, np.ones(g.shape), constant_coefficients(0.0, 0.4), 0.5, 16)
    tr = frequency_trace(pr, EnsembleSpec(4), chi, params)
    assert np.allclose(tr.N, 0)
    assert np.all(monotonicity_rhs(tr) >= 2 * 0.4**2 - 1e-12)


def test_monotonicity_generic_runs(setup):
    g, chi, params = setup
    for seed in range(3):
        pr = Problem(g, gaussian_bump(g, 0.1 * seed, 0.5), random_coefficients(g, seed), 0.5, 64)
        allow = calibrate_allowance(pr, chi, params)
        rep = check_monotonicity(frequency_trace(pr, EnsembleSpec(100, seed), chi, params), allow.margin)
        assert rep.violations == 0


def test_monotonicity_refuses_undefined_frequency(setup):
    g, chi, params = setup
    pr = Problem(g, np.zeros(g.shape), constant_coefficients(), 0.5, 8)
    tr = frequency_trace(pr, EnsembleSpec(1), chi, params)
    assert not tr.defined.any() and H_FLOOR == 1e-30
    with pytest.raises(ValueError):
        check_monotonicity(tr)


def test_trace_csv_round_trip(setup, tmp_path):
    g, chi, params = setup
    pr = Problem(g, gaussian_bump(g), constant_coefficients(0.2, 0.2), 0.5, 16)
    tr = frequency_trace(pr, EnsembleSpec(5), chi, params)
    rep = check_monotonicity(tr)
    path = tmp_path / "trace.csv"
    write_trace_csv(path, tr, rep.margin)
    rows = list(csv.reader(open(path)))
    assert rows[0] == ["t", "H", "H_se", "D", "D_se", "N", "margin"]
    assert len(rows) == 18 and rows[1][6] == "" and rows[-1][6] == ""
    assert np.array_equal([float(r[1]) for r in rows[1:]], tr.H)
    assert np.array_equal([float(r[6]) for r in rows[2:-1]], rep.margin)
