"""Gaussian-weighted frequency functionals H, D, N = 2D/H along an ensemble.

For every time node the per-path functional records five integrals over
B_{R0}(x0):  u^2 G,  |grad u|^2 G,  u F G,  b^2 u^2 G,  F^2 G,  with u = chi phi,
plus the Ito increment of the martingale part of H.
Expectations, ratio estimates and derivative checks are all built from these
per-path values, so every term shares the same Brownian paths.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .ensemble import EnsembleSpec, Problem, evaluate_paths, summarize
from .lattice import Grid, Mask, ball_mask
from .sde import Coefficients, Trajectory
from .weights import CutoffProfile, WeightParams, localize, weight_field

H_FLOOR = 1e-30
TERMS = ("H", "D", "uFG", "b2u2G", "F2G", "dM")


def _stack_in_time(fn, times, grid: Grid) -> np.ndarray:
    vals = [np.asarray(fn(t), dtype=float) for t in times]
    if all(v.ndim == 0 for v in vals):
        return np.array(vals).reshape((len(times),) + (1,) * grid.dim)
    return np.stack([np.broadcast_to(v, grid.shape) for v in vals])


class FrequencyFunctional:
    """Per-path map trajectory -> array (6, K+1) of the weighted integrals.

    The sixth row is the Ito increment 2 (int b u^2 G)(t_k) dW_k of the
    martingale part of H (zero at the last node). It has mean zero exactly
    and serves as a control variate for time derivatives of H.
    """

    def __init__(self, chi: CutoffProfile, params: WeightParams, coeffs: Coefficients,
                 times: np.ndarray):
        self.grid = chi.grid
        self.chi = chi
        self.params = params
        self.times = np.asarray(times)
        self.ball = ball_mask(self.grid, params.x0, chi.outer)
        self.G = np.stack([weight_field(self.grid, t, params) for t in self.times])
        self.a = _stack_in_time(coeffs.a, self.times, self.grid)
        self.b = _stack_in_time(coeffs.b, self.times, self.grid)
        self.b_ball_norm = _ball_norm(coeffs, self.grid, self.ball, self.times)

    def fields(self, phi: np.ndarray):
        grid = self.grid
        loc = localize(phi, grid.gradient(phi), self.chi, self.a)
        grad_u = grid.gradient(loc.u)
        return loc, grad_u

    def __call__(self, traj: Trajectory) -> np.ndarray:
        out = self.terms(traj.fields)
        if traj.path is not None:
            out[5, :-1] *= 2 * traj.path.increments
        out[5, -1] = 0.0
        return out

    def terms(self, phi: np.ndarray) -> np.ndarray:
        grid, G, m = self.grid, self.G, self.ball
        loc, grad_u = self.fields(phi)
        u, F = loc.u, loc.F
        return np.stack([
            grid.integrate(u * u * G, m),
            grid.integrate(np.sum(grad_u**2, axis=0) * G, m),
            grid.integrate(u * F * G, m),
            grid.integrate(self.b**2 * u * u * G, m),
            grid.integrate(F * F * G, m),
            grid.integrate(self.b * u * u * G, m),
        ])


def _ball_norm(coeffs: Coefficients, grid: Grid, ball: Mask, times) -> float:
    """W^{1,inf}(B_{R0}) norm of b over the sampled times."""
    if coeffs.constant:
        return abs(coeffs.b_value)
    sup = 0.0
    for t in times:
        b = np.broadcast_to(np.asarray(coeffs.b(t), float), grid.shape)
        gb = np.sqrt(np.sum(grid.gradient(b) ** 2, axis=0))
        sup = max(sup, float(np.max(np.abs(b)[ball.values])), float(np.max(gb[ball.values])))
    return sup


@dataclass(eq=False)
class FrequencyTrace:
    times: np.ndarray
    H: np.ndarray
    H_se: np.ndarray
    D: np.ndarray
    D_se: np.ndarray
    N: np.ndarray
    N_se: np.ndarray
    params: WeightParams
    R0: float
    b_ball_norm: float
    terms: np.ndarray  # means of the per-node terms, (6, K+1)
    values: np.ndarray = field(repr=False)  # per-path terms, (M, 6, K+1)

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0])

    @property
    def defined(self) -> np.ndarray:
        return self.H > H_FLOOR


def frequency_from_values(values: np.ndarray, times, params: WeightParams, R0: float,
                          b_ball_norm: float) -> FrequencyTrace:
    est = summarize(values)
    mean = np.asarray(est.mean)
    se = np.asarray(est.se)
    H, D = mean[0], mean[1]
    defined = H > H_FLOOR
    N = np.full_like(H, np.nan)
    N[defined] = 2 * D[defined] / H[defined]
    infl = _n_influence(values, H, N)
    N_se = np.asarray(summarize(infl).se) if values.shape[0] > 1 else np.full_like(H, np.nan)
    return FrequencyTrace(np.asarray(times), H, se[0], D, se[1], N, N_se, params, R0,
                          b_ball_norm, mean, values)


def _n_influence(values, H, N):
    """Per-path linearisation of N = 2D/H about the ensemble means."""
    Hs = np.where(H > H_FLOOR, H, np.inf)
    return 2 * (values[:, 1] - 0.5 * np.nan_to_num(N) * values[:, 0]) / Hs


def frequency_trace(problem: Problem, spec: EnsembleSpec, chi: CutoffProfile,
                    params: WeightParams) -> FrequencyTrace:
    fn = FrequencyFunctional(chi, params, problem.coeffs, problem.times)
    values = evaluate_paths(fn, spec, problem)
    return frequency_from_values(values, problem.times, params, chi.outer, fn.b_ball_norm)


def frequency_at(fields: np.ndarray, chi: CutoffProfile, params: WeightParams, t: float,
                 coeffs: Coefficients | None = None) -> tuple[float, float, float]:
    """(H, D, N) at one time from a stack of per-path fields (M, *shape).

    N is NaN when H is below the floor.
    """
    from .sde import constant_coefficients

    coeffs = coeffs or constant_coefficients()
    fn = FrequencyFunctional(chi, params, coeffs, [t])
    phi = np.asarray(fields, float)
    if phi.ndim == chi.grid.dim:
        phi = phi[None]
    vals = np.stack([fn.terms(p[None])[:, 0] for p in phi])
    H = float(np.mean(vals[:, 0]))
    D = float(np.mean(vals[:, 1]))
    N = 2 * D / H if H > H_FLOOR else float("nan")
    return H, D, N


def centered_difference(x: np.ndarray, dt: float) -> np.ndarray:
    """(x[k+1] - x[k-1]) / (2 dt) along the last axis, interior nodes only."""
    return (x[..., 2:] - x[..., :-2]) / (2 * dt)


@dataclass(eq=False)
class DHReport:
    times: np.ndarray  # interior nodes
    lhs: np.ndarray
    rhs: np.ndarray
    residual: np.ndarray
    se: np.ndarray
    scale: float

    @property
    def max_residual(self) -> float:
        return float(np.max(np.abs(self.residual))) if self.residual.size else 0.0


def check_dH_identity(trace: FrequencyTrace, martingale_correction: bool = True) -> DHReport:
    """Residual of  dH/dt = -2D + 2 E int uFG + E int b^2 u^2 G  at interior nodes.

    With ``martingale_correction`` the per-path Ito increments, which have
    mean zero, are subtracted from the centred difference of H before
    averaging. The estimand is unchanged; the standard error drops from
    O((M dt)^{-1/2}) to O(M^{-1/2}).
    """
    if len(trace.times) < 3:
        raise ValueError("need at least three time nodes")
    dt = trace.dt
    v = trace.values
    h = centered_difference(v[:, 0], dt)
    if martingale_correction:
        h = h - (v[:, 5, :-2] + v[:, 5, 1:-1]) / (2 * dt)
    per_path = h - (-2 * v[:, 1] + 2 * v[:, 2] + v[:, 3])[:, 1:-1]
    m = trace.terms
    lhs = np.asarray(summarize(h).mean)
    rhs = (-2 * m[1] + 2 * m[2] + m[3])[1:-1]
    est = summarize(per_path)
    se = np.asarray(est.se) if v.shape[0] > 1 else np.zeros_like(lhs)
    scale = float(np.max(np.abs(rhs))) if rhs.size else 0.0
    return DHReport(trace.times[1:-1], lhs, rhs, lhs - rhs, se, scale)


@dataclass(eq=False)
class MonotonicityReport:
    times: np.ndarray
    dN: np.ndarray
    rhs: np.ndarray
    margin: np.ndarray
    se: np.ndarray
    tolerance: np.ndarray

    @property
    def min_margin(self) -> float:
        return float(np.min(self.margin))

    @property
    def violations(self) -> int:
        return int(np.sum(self.margin < -self.tolerance))


def monotonicity_rhs(trace: FrequencyTrace) -> np.ndarray:
    s = trace.params.T - trace.times + trace.params.lam
    bb = trace.b_ball_norm**2
    return (1 / s + 2 * bb) * trace.N + 2 * bb + trace.terms[4] / trace.H


def check_monotonicity(trace: FrequencyTrace, allowance=0.0, n_se: float = 3.0) -> MonotonicityReport:
    """Margin RHS - dN/dt of the frequency growth bound at interior nodes.

    ``allowance`` (scalar or per-interior-node array) absorbs time
    discretisation; the statistical part is n_se standard errors of the
    margin, from a per-path linearisation of every ratio involved.
    """
    if not np.all(trace.defined):
        raise ValueError("frequency undefined (H below floor) inside the window")
    dt = trace.dt
    rhs_all = monotonicity_rhs(trace)
    dN = centered_difference(trace.N, dt)
    rhs = rhs_all[1:-1]
    margin = rhs - dN
    v = trace.values
    if v.shape[0] > 1:
        H, N = trace.H, trace.N
        psi = _n_influence(v, H, N)
        s = trace.params.T - trace.times + trace.params.lam
        c = 1 / s + 2 * trace.b_ball_norm**2
        ff = trace.terms[4]
        rhs_infl = c * psi + (v[:, 4] - ff / H * v[:, 0]) / H
        infl = rhs_infl[:, 1:-1] - centered_difference(psi, dt)
        se = np.asarray(summarize(infl).se)
    else:
        se = np.zeros_like(margin)
    tol = n_se * se + np.broadcast_to(np.asarray(allowance, float), margin.shape)
    return MonotonicityReport(trace.times[1:-1], dN, rhs, margin, se, tol)


@dataclass(frozen=True)
class Allowance:
    """Discretisation allowances calibrated on the noise-free companion run.

    dH: safety * C_H * dt * exp(|b|^2 T), C_H = max|dH residual| / dt at b = 0.
    margin: safety * C_N * dt, C_N from the Richardson estimate 2|m_dt - m_{dt/2}| / dt.
    """
    dt: float
    C_H: float
    C_N: float
    safety: float
    growth: float

    @property
    def dH(self) -> float:
        return self.safety * self.C_H * self.dt * self.growth

    @property
    def margin(self) -> float:
        return self.safety * self.C_N * self.dt


def calibrate_allowance(problem: Problem, chi: CutoffProfile, params: WeightParams,
                        safety: float = 2.0) -> Allowance:
    quiet = Problem(problem.grid, problem.phi0, problem.coeffs.without_noise(), problem.T,
                    problem.steps)
    one = EnsembleSpec(1)
    coarse = frequency_trace(quiet, one, chi, params)
    fine = frequency_trace(quiet.with_steps(2 * problem.steps), one, chi, params)
    dt = problem.dt
    C_H = check_dH_identity(coarse).max_residual / dt
    if np.all(coarse.defined) and np.all(fine.defined):
        mc = check_monotonicity(coarse).margin
        mf = check_monotonicity(fine).margin[1::2]  # fine interior nodes at coarse times
        C_N = float(np.max(2 * np.abs(mc - mf))) / dt
    else:
        C_N = 0.0
    bnorm = FrequencyFunctional(chi, params, problem.coeffs, problem.times[:1]).b_ball_norm
    return Allowance(dt, C_H, C_N, safety, float(np.exp(bnorm**2 * problem.T)))


def scaled_frequency(trace: FrequencyTrace) -> np.ndarray:
    """(T - t + lambda) N(t); nonincreasing when b = 0 and F = 0."""
    return (trace.params.T - trace.times + trace.params.lam) * trace.N


def write_trace_csv(path, trace: FrequencyTrace, margin: np.ndarray | None = None) -> None:
    """Columns t, H, H_se, D, D_se, N, margin (margin empty at the end nodes)."""
    K1 = len(trace.times)
    full_margin = np.full(K1, np.nan)
    if margin is not None:
        full_margin[1:-1] = margin
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "H", "H_se", "D", "D_se", "N", "margin"])
        for k in range(K1):
            row = [trace.times[k], trace.H[k], trace.H_se[k], trace.D[k], trace.D_se[k],
                   trace.N[k], full_margin[k]]
            w.writerow(["" if np.isnan(x) else f"{x:.17g}" for x in row])
