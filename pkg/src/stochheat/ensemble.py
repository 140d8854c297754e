"""Reproducible Monte Carlo expectations over Brownian paths.

Path i draws its increments from the counter-based stream keyed by
(base seed, i). Paths are simulated in chunks of fixed composition, so the
worker count only changes scheduling, never the arithmetic. Means and
standard errors use a pairwise summation tree whose shape depends on the
path count alone.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .lattice import Grid
from .sde import BrownianPath, Coefficients, Trajectory, integrate_paths, sample_brownian


class EnsembleError(RuntimeError):
    def __init__(self, failures: dict[int, BaseException]):
        self.failures = failures
        idx = sorted(failures)
        first = failures[idx[0]]
        super().__init__(
            f"functional failed on {len(idx)} path(s), first indices {idx[:5]}: {first!r}"
        )


@dataclass(frozen=True)
class EnsembleSpec:
    paths: int
    seed: int = 0
    workers: int = 1
    chunk: int = 32

    def __post_init__(self):
        if self.paths < 1:
            raise ValueError("need at least one path")
        if self.chunk < 1 or self.workers < 1:
            raise ValueError("chunk and workers must be positive")

    def path_seed(self, i: int) -> tuple[int, int]:
        return (int(self.seed), int(i))

    def brownian(self, i: int, T: float, steps: int) -> BrownianPath:
        return sample_brownian(T, steps, self.path_seed(i))


@dataclass(frozen=True, eq=False)
class Problem:
    grid: Grid
    phi0: np.ndarray
    coeffs: Coefficients
    T: float
    steps: int

    @property
    def dt(self) -> float:
        return self.T / self.steps

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.steps + 1) * self.dt

    def scaled(self, c: float) -> "Problem":
        return Problem(self.grid, c * np.asarray(self.phi0), self.coeffs, self.T, self.steps)

    def with_steps(self, steps: int) -> "Problem":
        return Problem(self.grid, self.phi0, self.coeffs, self.T, steps)


@dataclass(eq=False)
class Estimate:
    mean: np.ndarray | float
    se: np.ndarray | float
    n: int
    values: np.ndarray | None = field(default=None, repr=False)

    @property
    def se_defined(self) -> bool:
        return self.n >= 2


def pairwise_sum(x: np.ndarray) -> np.ndarray:
    """Sum along axis 0 with a fixed binary tree (leaves of up to 8 terms)."""
    n = x.shape[0]
    if n <= 8:
        acc = x[0].copy()
        for i in range(1, n):
            acc = acc + x[i]
        return acc
    mid = n // 2
    return pairwise_sum(x[:mid]) + pairwise_sum(x[mid:])


def summarize(values: np.ndarray, keep_values: bool = False) -> Estimate:
    values = np.asarray(values, dtype=float)
    M = values.shape[0]
    if np.all(values == values[0]):
        mean = values[0].copy()
        se = np.zeros_like(mean) if M >= 2 else np.full_like(mean, np.nan)
    else:
        mean = pairwise_sum(values) / M
        if M >= 2:
            dev = values - mean
            se = np.sqrt(pairwise_sum(dev * dev) / (M - 1) / M)
        else:
            se = np.full_like(mean, np.nan)
    if np.ndim(mean) == 0:
        mean, se = float(mean), float(se)
    return Estimate(mean, se, M, values if keep_values else None)


def _run_chunk(functional, spec: EnsembleSpec, problem: Problem, lo: int, hi: int):
    paths = [spec.brownian(i, problem.T, problem.steps) for i in range(lo, hi)]
    if problem.coeffs.noise_free:
        # b == 0: every path yields the same fields bit for bit.
        fields = integrate_paths(problem.grid, problem.phi0, problem.coeffs, problem.T,
                                 paths[0].increments[None, :])
        fields = np.broadcast_to(fields, (hi - lo,) + fields.shape[1:])
    else:
        inc = np.stack([p.increments for p in paths])
        fields = integrate_paths(problem.grid, problem.phi0, problem.coeffs, problem.T, inc)
    out, failures = [], {}
    times = problem.times
    for j, p in enumerate(paths):
        traj = Trajectory(problem.grid, times, fields[j], p)
        try:
            out.append(np.asarray(functional(traj), dtype=float))
        except Exception as exc:  # aggregated below with the path index
            failures[lo + j] = exc
            out.append(None)
    return out, failures


def evaluate_paths(functional: Callable[[Trajectory], object], spec: EnsembleSpec,
                   problem: Problem) -> np.ndarray:
    """Per-path values of ``functional``, stacked in path order."""
    bounds = [(lo, min(lo + spec.chunk, spec.paths)) for lo in range(0, spec.paths, spec.chunk)]
    if spec.workers == 1 or len(bounds) == 1:
        results = [_run_chunk(functional, spec, problem, lo, hi) for lo, hi in bounds]
    else:
        with ThreadPoolExecutor(max_workers=spec.workers) as pool:
            results = list(pool.map(lambda b: _run_chunk(functional, spec, problem, *b), bounds))
    failures = {}
    values = []
    for vals, fails in results:
        failures.update(fails)
        values.extend(vals)
    if failures:
        raise EnsembleError(failures)
    return np.stack(values)


def expect(functional: Callable[[Trajectory], float], spec: EnsembleSpec, problem: Problem,
           keep_values: bool = False) -> Estimate:
    values = evaluate_paths(functional, spec, problem)
    return summarize(values, keep_values)


@dataclass(eq=False)
class TraceEstimate(Estimate):
    times: np.ndarray | None = None


def expect_trace(functional: Callable[[Trajectory], np.ndarray], spec: EnsembleSpec,
                 problem: Problem, keep_values: bool = False) -> TraceEstimate:
    """Like ``expect`` for functionals returning one value per time node (last axis)."""
    values = evaluate_paths(functional, spec, problem)
    if values.shape[-1] != problem.steps + 1:
        raise ValueError("trace functional must return one value per time node on the last axis")
    est = summarize(values, keep_values)
    return TraceEstimate(est.mean, est.se, est.n, est.values, problem.times)


def ratio_estimate(num: np.ndarray, den: np.ndarray) -> Estimate:
    """Ratio of means with a delta-method standard error (common random numbers)."""
    num, den = np.asarray(num, float), np.asarray(den, float)
    en, ed = summarize(num), summarize(den)
    r = np.asarray(en.mean) / np.asarray(ed.mean)
    M = num.shape[0]
    if M < 2:
        return Estimate(r, np.full_like(r, np.nan), M)
    infl = (num - r * den) / np.asarray(ed.mean)
    se = summarize(infl).se
    return Estimate(r if np.ndim(r) else float(r), se, M)


def l2_norm_sq(traj: Trajectory) -> float:
    return float(traj.grid.integrate(traj.final**2))
