"""Threshold selection: MAP boundaries from fitted RESI distributions and
simulation-driven interior-point optimization.

Threshold vectors handed to the optimizer are in descending order,
``T = (T1, T2, ...)`` with ``T1 > T2 > ...``; for SSF ``T = (eta2, eta1, eta0)``
and for e-ARQ ``T = (eta1, eta0)``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np


class FitError(ValueError):
    pass


class GradientError(ArithmeticError):
    pass


class OptimizerError(ValueError):
    pass


# -- MAP ---------------------------------------------------------------------------------------

@dataclass(frozen=True)
class HypothesisFit:
    """Gaussian fit of RESI per hypothesis, classes in increasing hypothesis order."""

    means: tuple
    stds: tuple
    priors: tuple
    counts: tuple
    flagged: tuple = ()   # classes with fewer than ``min_samples`` samples

    def __post_init__(self):
        if not (len(self.means) == len(self.stds) == len(self.priors) == len(self.counts)):
            raise FitError("inconsistent class counts")
        if any(not s > 0 for s in self.stds):
            raise FitError("standard deviations must be positive")
        if abs(sum(self.priors) - 1.0) > 1e-9:
            raise FitError("priors must sum to 1")

    @property
    def n_classes(self) -> int:
        return len(self.means)

    def merged(self, groups: Sequence[Sequence[int]]) -> "HypothesisFit":
        """Pool classes into coarser ones (moment matching), e.g. ``[[0, 1], [2], [3]]``."""
        means, stds, priors, counts = [], [], [], []
        for group in groups:
            w = np.array([self.counts[i] for i in group], float)
            m = np.array([self.means[i] for i in group])
            s = np.array([self.stds[i] for i in group])
            mean = float(w @ m / w.sum())
            var = float(w @ (s ** 2 + (m - mean) ** 2) / w.sum())
            means.append(mean)
            stds.append(math.sqrt(var))
            priors.append(sum(self.priors[i] for i in group))
            counts.append(int(w.sum()))
        flagged = tuple(k for k, group in enumerate(groups) if any(i in self.flagged for i in group))
        return HypothesisFit(tuple(means), tuple(stds), tuple(priors), tuple(counts), flagged)


def fit_hypothesis_distributions(labels, values, n_classes: int = 4, min_samples: int = 10) -> HypothesisFit:
    """Per-class sample mean, std and empirical prior.

    ``labels`` are integer class indices ``0 .. n_classes-1``.
    """
    labels = np.asarray(labels, int)
    values = np.asarray(values, float)
    if labels.shape != values.shape:
        raise FitError("labels and values differ in length")
    empty = [k for k in range(n_classes) if not np.any(labels == k)]
    if empty:
        raise FitError("no samples for class " + ", ".join(f"H{k}" for k in empty))
    means, stds, counts = [], [], []
    for k in range(n_classes):
        x = values[labels == k]
        means.append(float(x.mean()))
        std = float(x.std(ddof=1)) if x.size > 1 else 0.0
        stds.append(max(std, 1e-9))
        counts.append(int(x.size))
    total = float(sum(counts))
    priors = [c / total for c in counts]
    flagged = tuple(k for k, c in enumerate(counts) if c < min_samples)
    return HypothesisFit(tuple(means), tuple(stds), tuple(priors), tuple(counts), flagged)


@dataclass(frozen=True)
class MapResult:
    """Ascending boundaries ``eta_0 < eta_1 < ...``; ``fallback[i]`` marks a midpoint fallback."""

    values: tuple
    fallback: tuple

    def descending(self) -> tuple:
        return tuple(reversed(self.values))


def gaussian_boundary(m1: float, s1: float, p1: float, m2: float, s2: float, p2: float) -> tuple:
    """Crossing of ``p1 N(m1, s1)`` and ``p2 N(m2, s2)`` between the two means.

    Returns ``(x, fallback)``; ``fallback`` is True when no crossing lies
    between the means and the midpoint is returned instead.
    """
    lo, hi = min(m1, m2), max(m1, m2)
    a = 0.5 / s2 ** 2 - 0.5 / s1 ** 2
    b = m1 / s1 ** 2 - m2 / s2 ** 2
    c = 0.5 * m2 ** 2 / s2 ** 2 - 0.5 * m1 ** 2 / s1 ** 2 + math.log(p1 * s2 / (p2 * s1))
    if abs(a) <= 1e-12 * max(abs(b), 1e-300):
        roots = [-c / b] if b != 0 else []
    else:
        disc = b * b - 4 * a * c
        if disc < 0:
            roots = []
        else:
            sq = math.sqrt(disc)
            # numerically stable pair
            q = -0.5 * (b + math.copysign(sq, b))
            roots = [q / a] + ([c / q] if q != 0 else [])
    inside = [r for r in roots if lo <= r <= hi]
    if not inside:
        return 0.5 * (m1 + m2), True
    mid = 0.5 * (m1 + m2)
    return min(inside, key=lambda r: abs(r - mid)), False


def map_thresholds(fit: HypothesisFit) -> MapResult:
    """MAP decision boundaries between consecutive classes, strictly increasing."""
    values, fallback = [], []
    for i in range(fit.n_classes - 1):
        x, fb = gaussian_boundary(fit.means[i], fit.stds[i], fit.priors[i],
                                  fit.means[i + 1], fit.stds[i + 1], fit.priors[i + 1])
        if values and x <= values[-1]:
            x = values[-1] + 1e-6
        values.append(float(x))
        fallback.append(fb)
    return MapResult(tuple(values), tuple(fallback))


# -- interior-point thresholding ---------------------------------------------------------------

@dataclass(frozen=True)
class OptimizerConfig:
    mu0: float = 0.1
    tau_decay: float = 0.5
    epsilon: float = 1e-3
    h: float = 0.05
    t_min: object = 0.0
    t_max: object = math.inf
    max_iter: int = 40
    armijo: float = 1e-4
    max_backtracks: int = 30

    def __post_init__(self):
        if not self.mu0 > 0:
            raise OptimizerError("mu0 must be positive")
        if not 0 < self.tau_decay < 1:
            raise OptimizerError("tau_decay must lie in (0, 1)")
        if not self.h > 0:
            raise OptimizerError("finite-difference step must be positive")
        if np.any(np.asarray(self.t_min, float) >= np.asarray(self.t_max, float)):
            raise OptimizerError("t_min must be below t_max")
        if self.max_iter < 1:
            raise OptimizerError("max_iter must be >= 1")


@dataclass(frozen=True)
class IterationRecord:
    iteration: int
    t: tuple
    f: float          # -P_det
    phi: float
    grad: tuple
    alpha: float
    mu: float


@dataclass
class OptimizationTrace:
    records: list = field(default_factory=list)
    calls: int = 0
    # line-search simulation calls of each iteration; gradients add 2n per estimate
    probes: list = field(default_factory=list)
    gradients: int = 0

    def to_csv(self, path) -> None:
        n = len(self.records[0].t) if self.records else 0
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["iteration"] + [f"T{i + 1}" for i in range(n)] + ["f", "phi", "alpha", "mu"])
            for r in self.records:
                w.writerow([r.iteration, *(repr(float(v)) for v in r.t), repr(r.f), repr(r.phi),
                            repr(r.alpha), repr(r.mu)])


def strictly_ordered(t) -> bool:
    t = np.asarray(t, float)
    return bool(np.all(np.isfinite(t)) and np.all(t[:-1] > t[1:]))


def barrier_objective(t, mu: float, pdet: float) -> float:
    """``-P_det - mu * sum(log(T_i - T_{i+1}))``; ``inf`` unless strictly ordered."""
    if not strictly_ordered(t):
        return math.inf
    gaps = -np.diff(np.asarray(t, float))
    if mu == 0:
        return -pdet
    return float(-pdet - mu * np.sum(np.log(gaps)))


def fd_gradient(objective: Callable, t, h: float, feasible: Optional[Callable] = strictly_ordered,
                h_min: float = 1e-9) -> np.ndarray:
    """Central differences; ``h`` is halved until every probe point is feasible."""
    t = np.asarray(t, float)
    n = t.size
    eye = np.eye(n)
    while feasible is not None and not all(feasible(t + s * h * eye[i]) for i in range(n) for s in (1, -1)):
        h *= 0.5
        if h < h_min:
            raise GradientError("finite-difference step underflow near the feasibility boundary")
    grad = np.empty(n)
    for i in range(n):
        grad[i] = (objective(t + h * eye[i]) - objective(t - h * eye[i])) / (2 * h)
    return grad


def optimize_thresholds(cfg: OptimizerConfig, t_init, pdet: Callable) -> tuple:
    """Maximize ``pdet(T)`` over strictly ordered, bounded ``T``.

    ``pdet`` must be deterministic in ``T`` (common random numbers).  Returns
    ``(best T, OptimizationTrace)`` where best is the highest-P_det iterate seen.
    """
    t = np.asarray(t_init, float)
    lo = np.broadcast_to(np.asarray(cfg.t_min, float), t.shape)
    hi = np.broadcast_to(np.asarray(cfg.t_max, float), t.shape)
    if not strictly_ordered(t) or np.any(t < lo) or np.any(t > hi):
        raise OptimizerError(f"initial thresholds {tuple(t)} are not strictly feasible")

    trace = OptimizationTrace()

    def evaluate(x):
        trace.calls += 1
        return float(pdet(x))

    mu = cfg.mu0
    p = evaluate(t)
    phi = barrier_objective(t, mu, p)
    best_t, best_f = t.copy(), -p
    trace.records.append(IterationRecord(0, tuple(t), -p, phi, (), 0.0, mu))

    def gradient(x, mu_k):
        trace.gradients += 1
        return fd_gradient(lambda y: barrier_objective(y, mu_k, evaluate(y)), x, cfg.h)

    g = gradient(t, mu)
    hinv = np.eye(t.size)
    for k in range(1, cfg.max_iter + 1):
        calls_before = trace.calls
        g_used = g
        d = -hinv @ g
        if not g @ d < 0:
            hinv = np.eye(t.size)
            d = -g
        alpha, accepted = 1.0, None
        for _ in range(cfg.max_backtracks):
            cand = np.clip(t + alpha * d, lo, hi)
            if strictly_ordered(cand) and not np.array_equal(cand, t):
                p_c = evaluate(cand)
                phi_c = barrier_objective(cand, mu, p_c)
                if phi_c <= phi + cfg.armijo * float(g @ (cand - t)):
                    accepted = (cand, p_c, phi_c)
                    break
            alpha *= 0.5
        if accepted is None:
            t_new, p_new, phi_new, alpha = t, p, phi, 0.0
        else:
            t_new, p_new, phi_new = accepted
        improvement = phi - phi_new
        trace.probes.append(trace.calls - calls_before)
        if -p_new < best_f:
            best_t, best_f = t_new.copy(), -p_new

        mu_next = cfg.tau_decay * mu
        stop = improvement < cfg.epsilon or k == cfg.max_iter
        if not stop:
            g_new = gradient(t_new, mu_next)
            s, y = t_new - t, g_new - g
            sy = float(s @ y)
            if sy > 1e-12:
                rho = 1.0 / sy
                eye = np.eye(t.size)
                hinv = (eye - rho * np.outer(s, y)) @ hinv @ (eye - rho * np.outer(y, s)) + rho * np.outer(s, s)
            else:
                hinv = np.eye(t.size)
            g = g_new
        trace.records.append(IterationRecord(k, tuple(t_new), -p_new, phi_new, tuple(g_used), alpha, mu))
        t, p = t_new, p_new
        mu = mu_next
        phi = barrier_objective(t, mu, p)
        if stop:
            break
    return tuple(best_t), trace
