"""Null-control synthesis by duality for the deterministic backward equation

    dy + Lap y dt = a1 y dt + 1_E 1_omega u dt,   y(T) = y_T,

driven to y(0) = 0. The adjoint  d yh - Lap yh dt = -a1 yh dt  runs forward.

The discrete adjoint and backward steps are exact transposes of each other,

    yh_{k+1} = P (1 - dt a1_k) yh_k,
    y_k      = (1 - dt a1_k) P y_{k+1} - dt w_k 1_omega u_k,

with P = (I - dt Lap_h)^{-1} symmetric and w_k = |E cap [t_k, t_{k+1})| / dt,
so  <yh_K, y_K> - <yh_0, y_0> = sum_k dt w_k <1_omega yh_k, u_k>  holds to round-off.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .lattice import Grid, Mask
from .observability import TimeSet, intersect_measure
from .sde import Coefficients, _implicit_factor, constant_coefficients, resolvent


class UnsupportedCase(ValueError):
    pass


class StagnationError(RuntimeError):
    def __init__(self, msg, history):
        super().__init__(msg)
        self.history = history


@dataclass(frozen=True, eq=False)
class ControlProblem:
    grid: Grid
    yT: np.ndarray
    omega: Mask
    E: TimeSet
    T: float
    steps: int
    a1: Coefficients = field(default_factory=constant_coefficients)
    tol: float = 1e-3
    max_iter: int = 200

    def __post_init__(self):
        if not self.a1.noise_free:
            raise UnsupportedCase("stochastic case b1 != 0 is not supported")
        if self.E.measure <= 0:
            raise ValueError("E must have positive measure")
        if self.omega.measure <= 0:
            raise ValueError("omega must have positive measure")
        if abs(self.E.T - self.T) > 1e-12 * self.T:
            raise ValueError("time set horizon differs from T")
        self.grid.check_field(self.yT)

    @property
    def dt(self) -> float:
        return self.T / self.steps

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.steps + 1) * self.dt

    def weights(self) -> np.ndarray:
        """w_k = |E cap [t_k, t_{k+1})| / dt."""
        t = self.times
        return np.array([intersect_measure(self.E, (t[k], t[k + 1])) for k in range(self.steps)]) / self.dt

    def inner(self, f, g) -> float:
        return float(self.grid.integrate(f * g))


class _Operators:
    def __init__(self, problem: ControlProblem):
        self.p = problem
        self.factor = _implicit_factor(problem.grid, problem.dt)
        self.w = problem.weights()
        self.a = [np.asarray(problem.a1.a(t), float) for t in problem.times[:-1]]
        self.chi = problem.omega.values.astype(float)

    def adjoint(self, yh0: np.ndarray) -> np.ndarray:
        p = self.p
        out = np.empty((p.steps + 1,) + p.grid.shape)
        out[0] = yh0
        for k in range(p.steps):
            out[k + 1] = resolvent(p.grid, out[k] - p.dt * self.a[k] * out[k], p.dt, self.factor)
        return out

    def backward(self, yT: np.ndarray, u: np.ndarray | None) -> np.ndarray:
        p = self.p
        out = np.empty((p.steps + 1,) + p.grid.shape)
        out[-1] = yT
        for k in range(p.steps - 1, -1, -1):
            Py = resolvent(p.grid, out[k + 1], p.dt, self.factor)
            y = Py - p.dt * self.a[k] * Py
            if u is not None and self.w[k] > 0:
                y = y - p.dt * self.w[k] * self.chi * u[k]
            out[k] = y
        return out

    def control_of(self, yh: np.ndarray) -> np.ndarray:
        """u_k = 1_omega yh_k on the steps touching E, zero elsewhere; shape (K, *shape)."""
        mask = (self.w > 0).astype(float).reshape((-1,) + (1,) * self.p.grid.dim)
        return yh[:-1] * self.chi * mask

    def gramian(self, yh0: np.ndarray) -> np.ndarray:
        yh = self.adjoint(yh0)
        z = self.backward(np.zeros_like(yh0), self.control_of(yh))
        return -z[0]


def gramian_apply(yh0: np.ndarray, problem: ControlProblem) -> np.ndarray:
    """Lambda yh0 = -z(0), z the backward solution from z(T) = 0 driven by the adjoint control.

    With this sign Lambda is symmetric positive semidefinite and
    <Lambda yh0, yh0> = sum_k dt w_k |1_omega yh_k|^2.
    """
    return _Operators(problem).gramian(np.asarray(yh0, float))


@dataclass(eq=False)
class Control:
    values: np.ndarray  # (K, *shape), zero off omega x E
    weights: np.ndarray  # w_k
    yh0: np.ndarray
    cost: float
    y0_norm: float
    yT_norm: float
    iterations: int
    residuals: list[float]
    problem: ControlProblem = field(repr=False)

    @property
    def y0_norm_ratio(self) -> float:
        return self.y0_norm / self.yT_norm if self.yT_norm > 0 else 0.0

    def support_ok(self) -> bool:
        off_space = np.any(self.values[:, ~self.problem.omega.values] != 0)
        off_time = np.any(self.values[self.weights == 0] != 0)
        return not (off_space or off_time)


def control_cost(u: np.ndarray, problem: ControlProblem) -> float:
    """sum_k dt w_k |u_k|^2_{L^2(omega)}."""
    w = problem.weights()
    return float(sum(problem.dt * w[k] * problem.inner(u[k], u[k]) for k in range(problem.steps)))


def solve_hum(problem: ControlProblem) -> Control:
    """Conjugate residuals on  Lambda yh0 = y_free(0); residual = y(0) of the controlled state.

    The residual norm, which is the achieved |y(0)|, is nonincreasing.
    """
    ops = _Operators(problem)
    yT = np.asarray(problem.yT, float)
    yT_norm = math.sqrt(problem.inner(yT, yT))
    shape = problem.grid.shape
    if yT_norm == 0:
        K = problem.steps
        return Control(np.zeros((K,) + shape), ops.w, np.zeros(shape), 0.0, 0.0, 0.0, 0, [0.0],
                       problem)
    ip = problem.inner
    b = ops.backward(yT, None)[0]
    x = np.zeros(shape)
    r = b.copy()
    Ar = ops.gramian(r)
    p, Ap = r.copy(), Ar.copy()
    rAr = ip(r, Ar)
    hist = [math.sqrt(ip(r, r))]
    it = 0
    target = problem.tol * yT_norm
    while hist[-1] > target:
        if it >= problem.max_iter:
            raise StagnationError(
                f"no convergence after {it} iterations: |y(0)|/|y_T| = {hist[-1] / yT_norm:.3e}", hist)
        ApAp = ip(Ap, Ap)
        if ApAp <= 0 or rAr <= 0:
            raise StagnationError("Krylov breakdown", hist)
        alpha = rAr / ApAp
        x = x + alpha * p
        r = r - alpha * Ap
        Ar_new = ops.gramian(r)
        rAr_new = ip(r, Ar_new)
        beta = rAr_new / rAr
        p = r + beta * p
        Ap = Ar_new + beta * Ap
        Ar, rAr = Ar_new, rAr_new
        it += 1
        hist.append(math.sqrt(ip(r, r)))
    yh = ops.adjoint(x)
    u = ops.control_of(yh)
    y = ops.backward(yT, u)
    y0_norm = math.sqrt(ip(y[0], y[0]))
    return Control(u, ops.w, x, control_cost(u, problem), y0_norm, yT_norm, it, hist, problem)


@dataclass(frozen=True)
class DualityResidual:
    terminal: float
    initial: float
    control: float
    residual: float
    scale: float

    @property
    def relative(self) -> float:
        return self.residual / self.scale if self.scale > 0 else 0.0


def verify_duality_identity(yh0: np.ndarray, u: np.ndarray | None, yT: np.ndarray,
                            problem: ControlProblem) -> DualityResidual:
    """|<yh(T), y(T)> - <yh0, y(0)> - sum dt w_k <1_omega yh_k, u_k>| relative to the term sizes."""
    ops = _Operators(problem)
    yh = ops.adjoint(np.asarray(yh0, float))
    y = ops.backward(np.asarray(yT, float), u)
    ip = problem.inner
    term_T = ip(yh[-1], y[-1])
    term_0 = ip(yh[0], y[0])
    if u is None:
        term_u = 0.0
    else:
        term_u = float(sum(problem.dt * ops.w[k] * ip(ops.chi * yh[k], u[k])
                           for k in range(problem.steps)))
    res = abs(term_T - term_0 - term_u)
    return DualityResidual(term_T, term_0, term_u, res, abs(term_T) + abs(term_0) + abs(term_u))


def write_control_csv(path, control: Control) -> None:
    """Rows k, t, w_k, node coordinates, u for nodes of omega x E."""
    p = control.problem
    coords = [c[p.omega.values] for c in p.grid.coords]
    names = ["x", "y"][: p.grid.dim]
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["k", "t", "w"] + names + ["u"])
        for k in range(p.steps):
            if control.weights[k] == 0:
                continue
            vals = control.values[k][p.omega.values]
            for j in range(len(vals)):
                w.writerow([k, f"{p.times[k]:.17g}", f"{control.weights[k]:.17g}"]
                           + [f"{c[j]:.17g}" for c in coords] + [f"{vals[j]:.17g}"])


def hum_summary(control: Control) -> dict:
    return {"cost": control.cost, "y0_norm_ratio": control.y0_norm_ratio,
            "iterations": control.iterations, "residuals": list(control.residuals)}
