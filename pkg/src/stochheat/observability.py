"""Observation time sets, the geometric time sequence accumulating at a density
point, and the observability check built on two-point estimates.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .ensemble import EnsembleSpec, Problem
from .lattice import Mask
from .verifiers import InequalityReport, interp_integral, local_traces, ratio_se


@dataclass(frozen=True)
class TimeSet:
    """Finite union of disjoint open intervals inside (0, T)."""

    intervals: tuple[tuple[float, float], ...]
    T: float

    def __post_init__(self):
        iv = tuple(sorted((float(a), float(b)) for a, b in self.intervals))
        for a, b in iv:
            if not 0 <= a < b <= self.T:
                raise ValueError(f"interval ({a}, {b}) not inside (0, {self.T})")
        for (_, b0), (a1, _) in zip(iv, iv[1:]):
            if a1 < b0:
                raise ValueError("intervals overlap")
        if not iv:
            raise ValueError("time set must have positive measure")
        object.__setattr__(self, "intervals", iv)

    @property
    def measure(self) -> float:
        return sum(b - a for a, b in self.intervals)

    def largest(self) -> tuple[float, float]:
        return max(self.intervals, key=lambda ab: ab[1] - ab[0])

    def superset(self, other: "TimeSet") -> bool:
        return all(intersect_measure(self, iv) >= (iv[1] - iv[0]) * (1 - 1e-12) for iv in other.intervals)

    def integrate(self, times: np.ndarray, values: np.ndarray) -> np.ndarray:
        """Integral over E of the piecewise-linear interpolant of ``values``."""
        return sum(interp_integral(times, values, a, b) for a, b in self.intervals)


def intersect_measure(E: TimeSet, interval) -> float:
    lo, hi = interval
    return float(sum(max(0.0, min(b, hi) - max(a, lo)) for a, b in E.intervals))


def alpha_from_theta(theta: float) -> float:
    if not 0 < theta < 1:
        raise ValueError("theta must lie in (0, 1)")
    return theta / (1 - theta)


def choose_kappa(alpha: float) -> float:
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    return math.sqrt((alpha + 2) / (alpha + 1))


@dataclass(frozen=True, eq=False)
class TelescopingSequence:
    l: float
    l1: float
    kappa: float
    points: np.ndarray  # l_1, l_2, ..., l_{depth}
    E: TimeSet

    @property
    def depth(self) -> int:
        return len(self.points)

    def gaps(self) -> np.ndarray:
        return self.points[:-1] - self.points[1:]

    def measures(self) -> np.ndarray:
        return np.array([intersect_measure(self.E, (self.points[m + 1], self.points[m]))
                         for m in range(self.depth - 1)])

    def ok(self) -> np.ndarray:
        return self.gaps() <= 3 * self.measures() * (1 + 1e-12)


class TelescopingError(ValueError):
    def __init__(self, msg, diagnostics):
        super().__init__(msg)
        self.diagnostics = diagnostics


def geometric_points(l: float, l1: float, kappa: float, T: float, rel_depth: float = 1e-9) -> np.ndarray:
    """l_m = l + kappa^{1-m} (l1 - l) for m = 1, 2, ... until l_m - l < rel_depth * T."""
    depth = max(2, int(math.ceil(math.log((l1 - l) / (rel_depth * T)) / math.log(kappa))) + 1)
    m = np.arange(1, depth + 1)
    return l + kappa ** (1.0 - m) * (l1 - l)


def density_sequence(E: TimeSet, kappa: float, l: float | None = None, grid_points: int = 200,
                     rel_depth: float = 1e-9) -> TelescopingSequence:
    """Search l1 on a geometric grid descending from T toward l until every gap obeys
    l_m - l_{m+1} <= 3 |E cap (l_{m+1}, l_m)|."""
    if not kappa > 1:
        raise ValueError("kappa must exceed 1")
    if E.measure <= 0:
        raise ValueError("E must have positive measure")
    if l is None:
        a, b = E.largest()
        l = 0.5 * (a + b)
    T = E.T
    best = None
    span = T - l
    for j in range(1, grid_points + 1):
        l1 = l + 0.999 * span * 0.9 ** (j - 1)
        pts = geometric_points(l, l1, kappa, T, rel_depth)
        seq = TelescopingSequence(l, l1, kappa, pts, E)
        ok = seq.ok()
        if ok.all():
            return seq
        worst = float(np.max(seq.gaps() - 3 * seq.measures()))
        if best is None or worst < best[0]:
            best = (worst, l1, int(np.sum(~ok)))
    raise TelescopingError("no admissible l1 on the search grid",
                           {"l": l, "best_violation": best[0], "best_l1": best[1],
                            "violating_gaps": best[2]})


def telescoped_terms(values: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Terms w_j v_j - w_{j+1} v_{j+1} of a telescoping sum (finite sequences)."""
    wv = np.asarray(weights, float) * np.asarray(values, float)
    return wv[:-1] - wv[1:]


def telescoped_sum_identity(values, weights) -> tuple[float, float]:
    """(sum of telescoped terms, first minus last weighted value); equal in exact arithmetic."""
    wv = np.asarray(weights, float) * np.asarray(values, float)
    return float(math.fsum(telescoped_terms(values, weights))), float(wv[0] - wv[-1])


def write_telescoping_csv(path, seq: TelescopingSequence) -> None:
    gaps, meas, ok = seq.gaps(), seq.measures(), seq.ok()
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["m", "l_m", "gap", "E_measure_in_gap", "ok"])
        for m in range(seq.depth - 1):
            w.writerow([m + 1, f"{seq.points[m]:.17g}", f"{gaps[m]:.17g}", f"{meas[m]:.17g}",
                        int(ok[m])])


# ---- two-point step ---------------------------------------------------------

def required_two_point_constant(X, Y, Z, theta: float):
    """Smallest K with  Y <= eps X + K eps^{-alpha} Z  for every eps > 0.

    The maximiser eps* = alpha Y / ((1 + alpha) X) gives
    K = alpha^alpha Y^{1+alpha} / ((1+alpha)^{1+alpha} X^alpha Z).
    """
    al = alpha_from_theta(theta)
    X, Y, Z = (np.asarray(v, float) for v in (X, Y, Z))
    logK = (al * math.log(al) + (1 + al) * np.log(Y) - (1 + al) * math.log(1 + al)
            - al * np.log(X) - np.log(Z))
    return logK


@dataclass(frozen=True)
class TwoPointFit:
    K1: float
    K2: float
    log_K1: float
    theta: float

    @property
    def alpha(self) -> float:
        return alpha_from_theta(self.theta)

    def log_bound_constant(self, tau: float) -> float:
        return self.log_K1 + self.K2 / tau


def fit_two_point(times, total, observed, theta: float, stride: int = 4,
                  min_gap: float = 0.0) -> TwoPointFit:
    """Upper envelope log K_req(t1, t2) <= log K1 + K2/(t2 - t1) over node pairs."""
    idx = np.arange(0, len(times), stride)
    if idx[-1] != len(times) - 1:
        idx = np.append(idx, len(times) - 1)
    u, v = [], []
    for i in idx:
        for j in idx:
            tau = times[j] - times[i]
            if tau <= min_gap or observed[j] <= 0 or total[j] <= 0:
                continue
            u.append(1 / tau)
            v.append(float(required_two_point_constant(total[i], total[j], observed[j], theta)))
    u, v = np.array(u), np.array(v)
    if len(u) < 2:
        raise ValueError("not enough admissible time pairs")
    slope = float(np.polyfit(u, v, 1)[0])
    K2 = max(slope, 1e-12)
    logK1 = float(np.max(v - K2 * u))
    return TwoPointFit(math.exp(logK1) if logK1 < 700 else float("inf"), K2, logK1, theta)


def check_two_point(times, total, observed, fit: TwoPointFit, triples) -> list[dict]:
    """Evaluate  E|phi(t2)|^2 <= eps E|phi(t1)|^2 + K1 eps^-alpha e^{K2/(t2-t1)} E|phi(t2)|^2_omega."""
    out = []
    for t1, t2, eps in triples:
        X = float(np.interp(t1, times, total))
        Y = float(np.interp(t2, times, total))
        Z = float(np.interp(t2, times, observed))
        log_c = fit.log_bound_constant(t2 - t1) - fit.alpha * math.log(eps)
        rhs = eps * X + (math.exp(log_c) * Z if log_c < 700 else float("inf"))
        out.append({"t1": t1, "t2": t2, "eps": eps, "lhs": Y, "rhs": rhs, "ok": bool(Y <= rhs)})
    return out


def observability_report(problem: Problem, spec: EnsembleSpec, omega: Mask, E: TimeSet,
                         theta: float, seq: TelescopingSequence | None = None,
                         n_triples: int = 5, seed: int = 0) -> InequalityReport:
    """Ratio  E|phi(T)|^2 / E int_{omega x E} phi^2  against the telescoped bound

        e^{(2|a|+|b|^2)T} e^{(2+alpha) d kappa^2} (3/kappa) K3/K2,
        K3 = e^{(1+alpha)(2|a|+|b|^2)T} K1,  d = 2 K2 / [kappa (l1 - l)(kappa - 1)],

    with K1, K2 fitted on this ensemble's two-point data.
    """
    grid = problem.grid
    T = problem.T
    if abs(E.T - T) > 1e-12 * T:
        raise ValueError("time set horizon differs from the problem horizon")
    alpha = alpha_from_theta(theta)
    kappa = choose_kappa(alpha)
    if seq is None:
        seq = density_sequence(E, kappa)
    tr = local_traces(problem, spec, [grid.full_mask(), omega, grid.inner_half_mask()])
    t = tr.times
    total, observed = tr.mean[0], tr.mean[1]
    lhs = float(total[-1])
    rhs_obs = float(E.integrate(t, observed))
    per_path_obs = E.integrate(t, tr.values[:, 1])
    details = {"theta": theta, "alpha": alpha, "kappa": kappa, "l": seq.l, "l1": seq.l1,
               "depth": seq.depth, "E_measure": E.measure,
               "mass_leak": float(1 - tr.mean[2, -1] / lhs) if lhs > 0 else 0.0}
    if lhs == 0 and rhs_obs == 0:
        return InequalityReport("observability", 0.0, 0.0, float("nan"), theta, {}, 0.0, True,
                                "zero initial datum: vacuous", details)
    if rhs_obs == 0:
        return InequalityReport("observability", lhs, 0.0, float("inf"), theta, {}, 0.0, False,
                                "unique-continuation violation candidate", details)
    ratio = lhs / rhs_obs
    fit = fit_two_point(t, total, observed, theta)
    growth = (2 * problem.coeffs.a_sup + problem.coeffs.b_norm**2) * T
    log_K3 = (1 + alpha) * growth + fit.log_K1
    d = 2 * fit.K2 / (kappa * (seq.l1 - seq.l) * (kappa - 1))
    log_bound = growth + (2 + alpha) * d * kappa**2 + math.log(3 / kappa) + log_K3 - math.log(fit.K2)
    rng = np.random.default_rng(seed)
    triples = []
    for _ in range(n_triples):
        t1, t2 = np.sort(rng.uniform(0, T, size=2))
        if t2 - t1 < 2 * problem.dt:
            t2 = min(T, t1 + 2 * problem.dt)
        triples.append((float(t1), float(t2), float(10 ** rng.uniform(-3, 0))))
    steps = check_two_point(t, total, observed, fit, triples)
    se = float(ratio_se(tr.values[:, 0, -1], per_path_obs, ratio))
    bound_finite = math.isfinite(log_bound)
    verdict = (math.isfinite(ratio) and bound_finite and math.log(ratio) <= log_bound
               and all(s["ok"] for s in steps))
    details.update(K1_log=fit.log_K1, K2=fit.K2, d=d, log_bound_constant=log_bound,
                   two_point=steps, observed_integral=rhs_obs)
    return InequalityReport("observability", lhs, rhs_obs, ratio, theta, {"ratio": se}, 0.0,
                            bool(verdict), "", details)
