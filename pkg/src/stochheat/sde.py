"""Time integration of  d phi - Lap phi dt = a phi dt + b phi dW  on the torus.

Diffusion is treated implicitly (diagonal in Fourier space), the potential and
the Ito noise explicitly:

    (I - dt Lap_h) phi_{k+1} = phi_k + dt a(., t_k) phi_k + b(., t_k) phi_k dW_k
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .lattice import Grid


class SolverError(RuntimeError):
    pass


def brownian_generator(seed) -> np.random.Generator:
    """Counter-based stream: Philox keyed by the (possibly tuple) seed."""
    words = [int(s) for s in np.atleast_1d(seed)]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(words)))


@dataclass(frozen=True, eq=False)
class BrownianPath:
    T: float
    increments: np.ndarray
    seed: object = None

    @property
    def steps(self) -> int:
        return len(self.increments)

    @property
    def dt(self) -> float:
        return self.T / self.steps

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.steps + 1) * self.dt

    @property
    def W(self) -> np.ndarray:
        return np.concatenate([[0.0], np.cumsum(self.increments)])

    def coarsen(self, factor: int) -> "BrownianPath":
        """Same path on a grid with `factor` times fewer steps."""
        if self.steps % factor:
            raise ValueError("factor must divide the step count")
        inc = self.increments.reshape(-1, factor).sum(axis=1)
        return BrownianPath(self.T, inc, self.seed)


def sample_brownian(T: float, steps: int, seed) -> BrownianPath:
    if not T > 0:
        raise ValueError("T must be positive")
    if steps < 1:
        raise ValueError("steps must be >= 1")
    rng = brownian_generator(seed)
    inc = rng.standard_normal(steps) * np.sqrt(T / steps)
    return BrownianPath(float(T), inc, seed)


FieldFn = Callable[[float], "np.ndarray | float"]


@dataclass(frozen=True, eq=False)
class Coefficients:
    """Deterministic potential a(x, t) and noise coefficient b(x, t).

    ``a`` and ``b`` map a time to either a scalar or a grid-shaped array. The
    sup norms are supplied by the constructors and bound every sample point.
    """

    a: FieldFn
    b: FieldFn
    a_sup: float
    b_sup: float
    grad_b_sup: float = 0.0
    constant: bool = False
    a_value: float = 0.0
    b_value: float = 0.0

    @property
    def b_norm(self) -> float:
        """W^{1,inf} norm of b: max of sup|b| and sup|grad b|."""
        return max(self.b_sup, self.grad_b_sup)

    @property
    def noise_free(self) -> bool:
        return self.b_sup == 0.0

    def without_noise(self) -> "Coefficients":
        """Same potential, b = 0."""
        return Coefficients(
            a=self.a, b=lambda t: 0.0, a_sup=self.a_sup, b_sup=0.0,
            constant=self.constant, a_value=self.a_value, b_value=0.0,
        )

    def negated(self) -> "Coefficients":
        a, b = self.a, self.b
        return Coefficients(
            a=lambda t: -np.asarray(a(t)),
            b=lambda t: -np.asarray(b(t)),
            a_sup=self.a_sup,
            b_sup=self.b_sup,
            grad_b_sup=self.grad_b_sup,
            constant=self.constant,
            a_value=-self.a_value,
            b_value=-self.b_value,
        )


def constant_coefficients(a: float = 0.0, b: float = 0.0) -> Coefficients:
    a, b = float(a), float(b)
    return Coefficients(
        a=lambda t: a, b=lambda t: b, a_sup=abs(a), b_sup=abs(b),
        constant=True, a_value=a, b_value=b,
    )


def sampled_coefficients(grid: Grid, a_fn, b_fn, T: float, steps: int) -> Coefficients:
    """Wrap callables a_fn(grid, t), b_fn(grid, t); norms are maxima over grid x time nodes."""
    times = np.arange(steps + 1) * (T / steps)
    a_sup = b_sup = gb_sup = 0.0
    for t in times:
        av = np.asarray(a_fn(grid, t), dtype=float)
        bv = np.broadcast_to(np.asarray(b_fn(grid, t), dtype=float), grid.shape)
        a_sup = max(a_sup, float(np.max(np.abs(av))))
        b_sup = max(b_sup, float(np.max(np.abs(bv))))
        gb = np.sqrt(np.sum(grid.gradient(bv) ** 2, axis=0))
        gb_sup = max(gb_sup, float(np.max(gb)))
    return Coefficients(
        a=lambda t: a_fn(grid, t), b=lambda t: b_fn(grid, t),
        a_sup=a_sup, b_sup=b_sup, grad_b_sup=gb_sup,
    )


def random_coefficients(grid: Grid, seed, a_max: float = 1.0, b_max: float = 0.5,
                        modes: int = 3) -> Coefficients:
    """Smooth random space-time fields with sup|a| <= a_max and sup|b| <= b_max.

    Each field is a sum of `modes` periodic Fourier modes modulated in time,
    normalised by the sum of amplitudes so the bound holds everywhere, then
    scaled by a random factor in [0.5, 1]. Gradient norms are exact suprema
    of the analytic derivative (bounded by the same amplitude sum).
    """
    rng = brownian_generator([int(s) for s in np.atleast_1d(seed)] + [0xC0EF])
    L = grid.extent

    def make(bound):
        ks = rng.integers(1, 4, size=(modes, grid.dim))
        phases = rng.uniform(0, 2 * np.pi, size=modes)
        omegas = rng.uniform(0, 2 * np.pi, size=modes)
        amps = rng.uniform(0.2, 1.0, size=modes)
        amps = amps / amps.sum() * bound * rng.uniform(0.5, 1.0)
        offset = rng.uniform(-1, 1)

        def fn(g, t):
            out = np.zeros(g.shape)
            for k, p, w, A in zip(ks, phases, omegas, amps):
                arg = sum(2 * np.pi * ki * xi / L for ki, xi in zip(k, g.coords))
                out += A * np.cos(arg + p + offset * w * t)
            return out

        grad_bound = float(sum(A * 2 * np.pi * np.linalg.norm(k) / L for k, A in zip(ks, amps)))
        return fn, float(amps.sum()), grad_bound

    a_fn, a_bound, _ = make(a_max)
    b_fn, b_bound, gb_bound = make(b_max)
    return Coefficients(
        a=lambda t: a_fn(grid, t), b=lambda t: b_fn(grid, t),
        a_sup=a_bound, b_sup=b_bound, grad_b_sup=gb_bound,
    )


@dataclass(frozen=True, eq=False)
class Trajectory:
    grid: Grid
    times: np.ndarray
    fields: np.ndarray  # (K+1, *grid.shape)
    path: BrownianPath | None = None

    @property
    def final(self) -> np.ndarray:
        return self.fields[-1]


def _implicit_factor(grid: Grid, dt: float) -> np.ndarray:
    return 1.0 / (1.0 - dt * grid.laplacian_symbol())


def _spatial_axes(grid: Grid, ndim: int) -> tuple[int, ...]:
    return tuple(range(ndim - grid.dim, ndim))


def resolvent(grid: Grid, f: np.ndarray, dt: float, factor: np.ndarray | None = None) -> np.ndarray:
    """Apply (I - dt Lap_h)^{-1} by fast diagonalisation."""
    if factor is None:
        factor = _implicit_factor(grid, dt)
    axes = _spatial_axes(grid, f.ndim)
    shape = [f.shape[a] for a in axes]
    out = np.fft.irfftn(np.fft.rfftn(f, axes=axes) * factor, s=shape, axes=axes)
    if not np.all(np.isfinite(out)):
        raise SolverError("implicit solve produced non-finite values")
    return out


def step_forward(grid: Grid, phi: np.ndarray, coeffs: Coefficients, t: float, dt: float,
                 dW, factor: np.ndarray | None = None) -> np.ndarray:
    """One semi-implicit Euler-Maruyama step.

    ``phi`` may carry leading batch axes; ``dW`` then has the batch shape.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    grid.check_field(phi)
    dW = np.asarray(dW, dtype=float).reshape(np.shape(dW) + (1,) * grid.dim)
    a = coeffs.a(t)
    b = coeffs.b(t)
    rhs = phi + dt * (a * phi) + (b * phi) * dW
    return resolvent(grid, rhs, dt, factor)


def integrate_paths(grid: Grid, phi0: np.ndarray, coeffs: Coefficients, T: float,
                    increments: np.ndarray, store: bool = True) -> np.ndarray:
    """Advance a batch of paths; increments has shape (B, K).

    Returns (B, K+1, *shape) when ``store`` else the final fields (B, *shape).
    """
    inc = np.atleast_2d(np.asarray(increments, dtype=float))
    B, K = inc.shape
    dt = T / K
    factor = _implicit_factor(grid, dt)
    phi = np.broadcast_to(np.asarray(phi0, dtype=float), (B,) + grid.shape).copy()
    if store:
        out = np.empty((B, K + 1) + grid.shape)
        out[:, 0] = phi
    for k in range(K):
        phi = step_forward(grid, phi, coeffs, k * dt, dt, inc[:, k], factor)
        if store:
            out[:, k + 1] = phi
    return out if store else phi


def solve_forward(grid: Grid, phi0: np.ndarray, coeffs: Coefficients, T: float,
                  path: BrownianPath) -> Trajectory:
    if not np.isclose(path.T, T, rtol=1e-12, atol=0.0):
        raise ValueError(f"path horizon {path.T} does not match T={T}")
    grid.check_field(phi0)
    fields = integrate_paths(grid, phi0, coeffs, T, path.increments[None, :])[0]
    return Trajectory(grid, path.times, fields, path)


def solve_adjoint(grid: Grid, y0: np.ndarray, coeffs: Coefficients, T: float,
                  path: BrownianPath) -> Trajectory:
    """Forward solve of  d y - Lap y dt = -a1 y dt - b1 y dW."""
    return solve_forward(grid, y0, coeffs.negated(), T, path)


def heat_semigroup(grid: Grid, f: np.ndarray, t: float) -> np.ndarray:
    """exp(t Lap) f with the continuous symbol -|k|^2 on the torus."""
    if t == 0:
        return np.array(f, dtype=float, copy=True)
    axes = _spatial_axes(grid, np.ndim(f))
    shape = [np.shape(f)[a] for a in axes]
    mult = np.exp(-t * grid.wavenumber_squared())
    return np.fft.irfftn(np.fft.rfftn(f, axes=axes) * mult, s=shape, axes=axes)


def exact_constant_coeff_solution(grid: Grid, phi0: np.ndarray, a: float, b: float,
                                  path: BrownianPath, t: float) -> np.ndarray:
    """exp((a - b^2/2) t + b W(t)) * exp(t Lap) phi0 at a path node t."""
    if np.ndim(a) or np.ndim(b):
        raise ValueError("closed form needs spatially and temporally constant coefficients")
    k = int(round(t / path.dt))
    if k < 0 or k > path.steps or not np.isclose(k * path.dt, t, rtol=0, atol=1e-12 * max(1.0, path.T)):
        raise ValueError(f"t={t} is not a node of the path")
    if k == 0:
        return np.array(phi0, dtype=float, copy=True)
    W = path.W[k]
    return np.exp((a - 0.5 * b * b) * t + b * W) * heat_semigroup(grid, phi0, t)


def gaussian_bump(grid: Grid, center: Sequence[float] | float = 0.0, width: float = 0.5,
                  amplitude: float = 1.0) -> np.ndarray:
    d = grid.displacement(center)
    return amplitude * np.exp(-np.sum(d * d, axis=0) / (2.0 * width**2))
