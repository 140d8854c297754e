"""Backward heat-kernel weight, radial cutoffs and the localized state (u, F, g)."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar

from .lattice import Grid, GridError


@dataclass(frozen=True)
class WeightParams:
    lam: float
    x0: tuple[float, ...]
    T: float
    dim: int

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError("lambda must be positive")
        if not self.T > 0:
            raise ValueError("T must be positive")
        object.__setattr__(self, "x0", tuple(np.broadcast_to(np.asarray(self.x0, float), (self.dim,))))

    def scale(self, t: float) -> float:
        """T - t + lambda."""
        if t > self.T + 1e-12 * self.T:
            raise ValueError(f"t={t} exceeds the horizon T={self.T}")
        return self.T - t + self.lam


def gaussian_weight(x, t: float, params: WeightParams) -> np.ndarray:
    """(T-t+lam)^{-N/2} exp(-|x-x0|^2 / (4(T-t+lam))) for points x of shape (..., dim)."""
    s = params.scale(t)
    d = np.asarray(x, dtype=float) - np.asarray(params.x0)
    r2 = np.sum(d * d, axis=-1)
    return s ** (-params.dim / 2) * np.exp(-r2 / (4 * s))


def weight_field(grid: Grid, t: float, params: WeightParams) -> np.ndarray:
    """G on the lattice using the torus displacement from x0."""
    s = params.scale(t)
    d = grid.displacement(params.x0)
    return s ** (-grid.dim / 2) * np.exp(-np.sum(d * d, axis=0) / (4 * s))


def weight_gradient(grid: Grid, t: float, params: WeightParams) -> np.ndarray:
    s = params.scale(t)
    return -grid.displacement(params.x0) / (2 * s) * weight_field(grid, t, params)


def weight_hessian(grid: Grid, t: float, params: WeightParams) -> np.ndarray:
    """Analytic Hessian, shape (dim, dim, *shape)."""
    s = params.scale(t)
    d = grid.displacement(params.x0)
    G = weight_field(grid, t, params)
    H = np.einsum("i...,j...->ij...", d, d) / (4 * s * s) * G
    for i in range(grid.dim):
        H[i, i] -= G / (2 * s)
    return H


def weight_time_derivative(grid: Grid, t: float, params: WeightParams) -> np.ndarray:
    s = params.scale(t)
    d = grid.displacement(params.x0)
    r2 = np.sum(d * d, axis=0)
    return (grid.dim / (2 * s) - r2 / (4 * s * s)) * weight_field(grid, t, params)


@dataclass(frozen=True)
class WeightResiduals:
    gradient: float
    laplacian: float
    mixed: float
    heat_analytic: float
    heat_fd: float


def weight_identity_residuals(grid: Grid, params: WeightParams, t: float,
                              dt: float) -> WeightResiduals:
    """Max-norm residuals of the weight identities on |x - x0| <= L/4.

    gradient/laplacian/mixed compare the Hessian-based evaluation with the
    closed forms; heat_fd uses a centred time difference of width 2dt and the
    lattice Laplacian, and should fall like h^2 + dt^2.
    """
    inner = grid.distance(params.x0) <= grid.extent / 4
    s = params.scale(t)
    d = grid.displacement(params.x0)
    r2 = np.sum(d * d, axis=0)
    G = weight_field(grid, t, params)
    Gmax = float(np.max(G))

    grad = weight_gradient(grid, t, params)
    grad_formula = -d / (2 * s) * G
    res_grad = float(np.max(np.abs(grad - grad_formula)[:, inner])) / Gmax

    hess = weight_hessian(grid, t, params)
    lap = np.trace(hess)
    lap_formula = -grid.dim / (2 * s) * G + r2 / (4 * s * s) * G
    res_lap = float(np.max(np.abs(lap - lap_formula)[inner])) / Gmax

    res_mixed = 0.0
    if grid.dim == 2:
        mixed_formula = d[0] * d[1] / (4 * s * s) * G
        res_mixed = float(np.max(np.abs(hess[0, 1] - mixed_formula)[inner])) / Gmax

    res_heat = float(np.max(np.abs(weight_time_derivative(grid, t, params) + lap)[inner])) / Gmax

    lo, hi = t - dt, t + dt
    if lo < 0 or hi > params.T:
        raise ValueError("t +- dt must stay inside [0, T]")
    dGdt = (weight_field(grid, hi, params) - weight_field(grid, lo, params)) / (2 * dt)
    res_fd = float(np.max(np.abs(dGdt + grid.laplacian(G))[inner])) / Gmax
    return WeightResiduals(res_grad, res_lap, res_mixed, res_heat, res_fd)


# Quintic smoothstep s(u) = 6u^5 - 15u^4 + 10u^3 and derivatives.
def _s(u):
    return u**3 * (10 - 15 * u + 6 * u**2)


def _ds(u):
    return 30 * u**2 * (1 - u) ** 2


def _d2s(u):
    return 60 * u * (1 - u) * (1 - 2 * u)


SMOOTHSTEP_SLOPE = 1.875  # max of s'(u) on [0, 1]


@dataclass(frozen=True, eq=False)
class CutoffProfile:
    grid: Grid
    center: tuple[float, ...]
    inner: float
    outer: float
    values: np.ndarray
    gradient: np.ndarray
    laplacian: np.ndarray
    grad_sup: float
    lap_sup: float

    @property
    def width(self) -> float:
        return self.outer - self.inner

    def annulus(self) -> np.ndarray:
        rho = self.grid.distance(self.center)
        return (rho >= self.inner) & (rho <= self.outer)


def _radial_laplacian_sup(inner: float, outer: float, dim: int) -> float:
    w = outer - inner

    def neg(rho):
        u = (rho - inner) / w
        return -abs(-_d2s(u) / w**2 - (dim - 1) * _ds(u) / (w * rho))

    rho = np.linspace(inner, outer, 20001)
    vals = -neg(rho)
    i = int(np.argmax(vals))
    lo, hi = rho[max(i - 1, 0)], rho[min(i + 1, len(rho) - 1)]
    best = max(float(vals[i]), float(-minimize_scalar(neg, bounds=(lo, hi), method="bounded",
                                                     options={"xatol": 1e-13}).fun))
    return best * (1 + 1e-12)


def cutoff(grid: Grid, center, inner_radius: float, outer_radius: float) -> CutoffProfile:
    """Radial C^2 cutoff: 1 on B_inner, 0 outside B_outer, quintic smoothstep between."""
    if not 0 < inner_radius < outer_radius:
        raise ValueError("need 0 < inner < outer")
    if outer_radius >= grid.extent / 2:
        raise GridError("outer radius must be below L/2")
    center = tuple(np.broadcast_to(np.asarray(center, float), (grid.dim,)))
    w = outer_radius - inner_radius
    d = grid.displacement(center)
    rho = np.sqrt(np.sum(d * d, axis=0))
    u = np.clip((rho - inner_radius) / w, 0.0, 1.0)
    values = 1.0 - _s(u)
    dchi = -_ds(u) / w
    d2chi = -_d2s(u) / w**2
    safe = np.where(rho > 0, rho, 1.0)
    gradient = dchi * d / safe
    laplacian = d2chi + (grid.dim - 1) * dchi / safe
    return CutoffProfile(
        grid=grid, center=center, inner=inner_radius, outer=outer_radius,
        values=values, gradient=gradient, laplacian=laplacian,
        grad_sup=SMOOTHSTEP_SLOPE / w,
        lap_sup=_radial_laplacian_sup(inner_radius, outer_radius, grid.dim),
    )


def frequency_cutoff(grid: Grid, center, R: float, delta: float) -> CutoffProfile:
    """chi: 1 on B_{(1+3 delta/2) R}, supported in B_{R0}, R0 = (1+2 delta) R."""
    return cutoff(grid, center, (1 + 1.5 * delta) * R, (1 + 2 * delta) * R)


def observation_cutoff(grid: Grid, center, r: float, delta: float) -> CutoffProfile:
    """eta: 1 on B_{(1+3 delta/4) r}, supported in B_{(1+delta) r}."""
    return cutoff(grid, center, (1 + 0.75 * delta) * r, (1 + delta) * r)


@dataclass(frozen=True, eq=False)
class LocalizedState:
    u: np.ndarray
    F: np.ndarray
    g: np.ndarray
    chi: CutoffProfile


def localize(phi: np.ndarray, grad_phi: np.ndarray, chi: CutoffProfile, a=0.0) -> LocalizedState:
    """u = chi phi,  g = -2 grad chi . grad phi - phi Lap chi,  F = a u + g.

    ``phi`` may carry leading batch axes; ``grad_phi`` is (dim, *phi.shape).
    """
    grid = chi.grid
    grid.check_field(phi)
    if np.shape(grad_phi) != (grid.dim,) + np.shape(phi):
        raise GridError("gradient shape does not match the field")
    gshape = (grid.dim,) + (1,) * (np.ndim(phi) - grid.dim) + grid.shape
    dot = np.sum(chi.gradient.reshape(gshape) * grad_phi, axis=0)
    u = chi.values * phi
    g = -2.0 * dot - phi * chi.laplacian
    F = np.asarray(a) * u + g
    return LocalizedState(u, F, g, chi)
