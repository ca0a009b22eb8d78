"""Distribution primitives: softmax, Dirichlet(1,...,1) draws, and racing samplers.

Conventions: logits and probabilities are 1-D float64 arrays of length C >= 2;
batched variants stack draws along the leading axis.  A categorical draw from
softmax(logits) is realized as the argmin of ``log(pi) - logits`` over a
uniform-Dirichlet point ``pi`` (racing construction), which is the sampling
path every estimator in this package shares.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .rng import RngStream, as_generator, open_uniform

__all__ = [
    "SimplexPoint",
    "softmax",
    "log_softmax",
    "simplex_point",
    "sample_dirichlet_ones",
    "sample_dirichlet_ones_batch",
    "sample_dirichlet_heads",
    "racing_sample",
    "racing_sample_batch",
    "categorical_sample",
    "categorical_sample_batch",
    "exponential_racing_check",
]

_SUM_TOL = 1e-12


def _check_logits(logits) -> np.ndarray:
    phi = np.asarray(logits, dtype=np.float64)
    if phi.shape[-1] < 2:
        raise ValueError("need at least 2 categories")
    if not np.all(np.isfinite(phi)):
        raise ValueError("logits must be finite")
    return phi


def softmax(logits, axis: int = -1) -> np.ndarray:
    phi = _check_logits(logits)
    shifted = phi - phi.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=axis, keepdims=True)


def log_softmax(logits, axis: int = -1) -> np.ndarray:
    phi = _check_logits(logits)
    shifted = phi - phi.max(axis=axis, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=axis, keepdims=True))


@dataclass(frozen=True)
class SimplexPoint:
    """One point on the open C-simplex with its log values cached."""

    pi: np.ndarray
    log_pi: np.ndarray

    def __post_init__(self):
        if self.pi.shape != self.log_pi.shape or self.pi.ndim != 1:
            raise ValueError("pi and log_pi must be matching 1-D arrays")
        if abs(float(self.pi.sum()) - 1.0) > _SUM_TOL:
            raise ValueError("coordinates must sum to 1")
        if not (np.all(self.pi > 0.0) and np.all(self.pi < 1.0)):
            raise ValueError("coordinates must lie in (0, 1)")

    @property
    def c(self) -> int:
        return self.pi.shape[0]


def simplex_point(pi) -> SimplexPoint:
    arr = np.asarray(pi, dtype=np.float64)
    return SimplexPoint(pi=arr, log_pi=np.log(arr))


def sample_dirichlet_ones(c: int, rng: RngStream | np.random.Generator) -> SimplexPoint:
    """Draw from the uniform Dirichlet via normalized iid standard exponentials.

    e_i = -log(u_i) with u_i ~ Uniform(0,1) open, pi = e / sum(e); exact for
    the all-ones Dirichlet.
    """
    if c < 2:
        raise ValueError("need at least 2 categories")
    gen = as_generator(rng)
    e = -np.log(open_uniform(gen, c))
    pi = e / e.sum()
    return SimplexPoint(pi=pi, log_pi=np.log(pi))


def sample_dirichlet_ones_batch(
    c: int, n: int, rng: RngStream | np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """n independent uniform-Dirichlet points; returns (pi, log_pi), each (n, C)."""
    if c < 2:
        raise ValueError("need at least 2 categories")
    gen = as_generator(rng)
    e = -np.log(open_uniform(gen, (n, c)))
    pi = e / e.sum(axis=1, keepdims=True)
    return pi, np.log(pi)


def sample_dirichlet_heads(
    k: int, c: int, rng: RngStream | np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """One uniform-Dirichlet point per head; returns (pi, log_pi), each (K, C)."""
    return sample_dirichlet_ones_batch(c, k, rng)


def racing_sample(logits, point: SimplexPoint) -> int:
    """Categorical draw as argmin_i (log pi_i - logits_i); ties -> lowest index.

    Over fresh uniform-Dirichlet points this is distributed Cat(softmax(logits)).
    """
    phi = _check_logits(logits)
    if phi.shape != point.pi.shape:
        raise ValueError("dimension mismatch between logits and simplex point")
    return int(np.argmin(point.log_pi - phi))


def racing_sample_batch(logits, log_pi: np.ndarray) -> np.ndarray:
    """Row-wise racing draws; ``log_pi`` is (n, C) against shared 1-D logits."""
    phi = _check_logits(logits)
    if log_pi.ndim != 2 or log_pi.shape[1] != phi.shape[0]:
        raise ValueError("dimension mismatch between logits and simplex batch")
    return np.argmin(log_pi - phi[None, :], axis=1)


def categorical_sample(probs: np.ndarray, rng: RngStream | np.random.Generator) -> int:
    return int(categorical_sample_batch(probs, 1, rng)[0])


def categorical_sample_batch(
    probs: np.ndarray, n: int, rng: RngStream | np.random.Generator
) -> np.ndarray:
    """Inverse-CDF draws from a fixed probability vector."""
    gen = as_generator(rng)
    cum = np.cumsum(probs)
    u = open_uniform(gen, n)
    return np.minimum(np.searchsorted(cum, u, side="right"), probs.shape[0] - 1)


def exponential_racing_check(
    lambdas, n: int, rng: RngStream | np.random.Generator
) -> np.ndarray:
    """Empirical argmin frequencies of racing exponentials with the given rates.

    Test-support operation: the argmin of independent Exp(rate_i) draws lands
    on i with probability rate_i / sum(rates).
    """
    lam = np.asarray(lambdas, dtype=np.float64)
    if np.any(lam <= 0.0) or not np.all(np.isfinite(lam)):
        raise ValueError("rates must be positive and finite")
    gen = as_generator(rng)
    taus = gen.standard_exponential((n, lam.shape[0])) / lam[None, :]
    winners = np.argmin(taus, axis=1)
    return np.bincount(winners, minlength=lam.shape[0]) / float(n)
