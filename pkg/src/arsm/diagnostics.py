"""Gradient-variance tracking and the unbiasedness test harness.

Variance traces follow the moving-moment scheme: exponential moving averages
of the first and second moments of each gradient component, bias-corrected,
combined into a single log10 of the mean component variance.  The
unbiasedness harness compares Monte Carlo estimator means against the
analytic gradient with standard-error z-scores.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .estimators import analytic_grad_values, mc_grad_moments
from .rng import RngStream

__all__ = [
    "EmaMoments",
    "log_variance_report",
    "batch_log_variance",
    "UnbiasednessInstance",
    "UnbiasednessResult",
    "unbiasedness_suite",
]


@dataclass
class EmaMoments:
    """Running first/second moments with decay in (0,1) and bias correction."""

    decay: float
    m1: np.ndarray
    m2: np.ndarray
    count: int = 0

    @classmethod
    def zeros(cls, dim: int, decay: float) -> "EmaMoments":
        if not 0.0 < decay < 1.0:
            raise ValueError("decay must lie in (0, 1)")
        return cls(decay=decay, m1=np.zeros(dim), m2=np.zeros(dim))

    def update(self, sample: np.ndarray) -> "EmaMoments":
        x = np.asarray(sample, dtype=np.float64)
        if x.shape != self.m1.shape:
            raise ValueError("sample dimension changed")
        d = self.decay
        self.m1 = d * self.m1 + (1.0 - d) * x
        self.m2 = d * self.m2 + (1.0 - d) * np.square(x)
        self.count += 1
        return self

    def variance(self) -> np.ndarray:
        """Bias-corrected m2 - m1^2, clipped at zero (tolerating -1e-12 noise)."""
        if self.count == 0:
            return np.zeros_like(self.m1)
        correction = 1.0 - self.decay**self.count
        m1 = self.m1 / correction
        m2 = self.m2 / correction
        v = m2 - np.square(m1)
        if np.any(v < -1e-12):
            raise AssertionError("variance estimate fell below tolerance")
        return np.maximum(v, 0.0)


def log_variance_report(ema: EmaMoments, min_count: int = 10) -> float | None:
    """log10 of the mean component variance; None while cold or exactly zero.

    Averaging the component variances before taking the log keeps the trace
    defined even when individual components have seen no gradient yet.
    """
    if ema.count < min_count:
        return None
    mean_var = float(ema.variance().mean())
    if mean_var <= 0.0:
        return None
    return float(np.log10(mean_var))


def batch_log_variance(samples: np.ndarray) -> float | None:
    """Oracle counterpart: direct sample variance over a (n, dim) batch."""
    if samples.shape[0] < 2:
        return None
    mean_var = float(samples.var(axis=0, ddof=1).mean())
    if mean_var <= 0.0:
        return None
    return float(np.log10(mean_var))


@dataclass(frozen=True)
class UnbiasednessInstance:
    name: str
    logits: np.ndarray
    f_values: np.ndarray


@dataclass
class UnbiasednessResult:
    instance: str
    estimator: str
    max_abs_z: float
    z_scores: np.ndarray
    passed: bool


def default_instances(
    cs=(2, 3, 5, 10), per_c: int = 4, seed: int = 90210
) -> list[UnbiasednessInstance]:
    """Random logits crossed with polynomial/indicator rewards."""
    out = []
    stream = RngStream(seed)
    reward_kinds = ["linear", "square", "indicator"]
    i = 0
    for c in cs:
        for trial in range(per_c):
            phi = stream.derive(c, trial).generator().normal(size=c)
            kind = reward_kinds[i % len(reward_kinds)]
            if kind == "linear":
                fvals = np.arange(c, dtype=float) + 1.0
            elif kind == "square":
                fvals = (np.arange(c, dtype=float) + 1.0) ** 2
            else:
                fvals = (np.arange(c) == c - 1).astype(float)
            out.append(UnbiasednessInstance(f"C{c}-{kind}-{trial}", phi, fvals))
            i += 1
    return out


def unbiasedness_suite(
    estimator_id: str,
    instances: list[UnbiasednessInstance],
    n: int,
    stream: RngStream,
    z_limit: float = 4.0,
    sampler=None,
) -> list[UnbiasednessResult]:
    """Monte Carlo means vs the analytic gradient, componentwise z-scores.

    ``sampler`` overrides the estimator lookup (used by negative controls);
    it must match ``mc_grad_moments``'s signature without the estimator id.
    """
    results = []
    for idx, inst in enumerate(instances):
        exact = analytic_grad_values(inst.logits, inst.f_values)
        if sampler is None:
            mean, se = mc_grad_moments(
                estimator_id, inst.logits, inst.f_values, n, stream.derive(idx)
            )
        else:
            mean, se = sampler(inst.logits, inst.f_values, n, stream.derive(idx))
        if estimator_id == "ANALYTIC":
            z = np.zeros_like(exact)
        else:
            z = (mean - exact) / np.maximum(se, 1e-300)
        max_abs = float(np.max(np.abs(z)))
        results.append(
            UnbiasednessResult(inst.name, estimator_id, max_abs, z, max_abs <= z_limit)
        )
    return results
