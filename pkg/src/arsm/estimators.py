"""Gradient estimators for expected rewards over categorical variables.

All estimators target the gradient of E[f(z)] with respect to the logits of
Cat(softmax(logits)).  ANALYTIC evaluates the exact gradient (C reward
calls); REINFORCE is the score-function estimator (one call); AR rewrites
the gradient as an expectation over a uniform-Dirichlet point; ARS recenters
AR with a swapped-race baseline against a random reference category; ARSM
merges the ARS estimates over all references, paying at most one reward call
per distinct pseudo action.

Single-sample functions return a :class:`GradEstimate` and account reward
calls; ``*_grad_samples`` are the vectorized Monte Carlo counterparts used by
the diagnostics harness and the experiment CLI.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .pseudo_actions import (
    _order3,
    pair_entries,
    pseudo_action_column,
    pseudo_action_table_fast,
    pseudo_action_tables_batch,
)
from .rng import RngStream, as_generator, open_uniform
from .simplex import (
    SimplexPoint,
    _check_logits,
    categorical_sample_batch,
    racing_sample,
    sample_dirichlet_ones_batch,
    softmax,
)

ESTIMATOR_IDS = ("ANALYTIC", "REINFORCE", "AR", "ARS", "ARSM")


@dataclass
class GradEstimate:
    """A gradient estimate plus its cost: grads is (C,) or (K, C) per head."""

    grads: np.ndarray
    estimator_id: str
    f_evals: int


class RewardFn:
    """Reward evaluator with a call counter for cost accounting.

    Stochastic rewards are allowed as long as the wrapped callable captures
    its own seed, so replays are deterministic.
    """

    def __init__(self, fn: Callable):
        self._fn = fn
        self.calls = 0

    def __call__(self, z):
        self.calls += 1
        return float(self._fn(z))

    @classmethod
    def from_table(cls, values) -> "RewardFn":
        arr = np.asarray(values, dtype=np.float64)
        return cls(lambda z: arr[z])


def draw_reference(c: int, rng: RngStream | np.random.Generator) -> int:
    """Uniform reference category, from a stream separate from the pi draws."""
    return int(as_generator(rng).integers(c))


def surrogate_loss(grads: np.ndarray, logits: np.ndarray) -> float:
    """Scalar whose logits-gradient (grads held constant) equals the estimate.

    Backpropagating this through whatever network produced the logits chains
    the estimator into the network parameters.
    """
    g = np.asarray(grads, dtype=np.float64)
    phi = np.asarray(logits, dtype=np.float64)
    if g.shape != phi.shape:
        raise ValueError("gradient/logits shape mismatch")
    return float(np.sum(g * phi))


# ---------------------------------------------------------------------------
# univariate estimators, one sample at a time

def analytic_grad_univariate(logits, f: RewardFn) -> GradEstimate:
    """Exact gradient: sigma_c f(c) - sigma_c E, with E the exact expectation."""
    phi = _check_logits(logits)
    sig = softmax(phi)
    fvals = np.array([f(i) for i in range(phi.shape[0])])
    expected = float(sig @ fvals)
    return GradEstimate(sig * (fvals - expected), "ANALYTIC", phi.shape[0])


def reinforce_grad(logits, f: RewardFn, rng: RngStream | np.random.Generator) -> GradEstimate:
    phi = _check_logits(logits)
    sig = softmax(phi)
    z = int(categorical_sample_batch(sig, 1, rng)[0])
    val = f(z)
    grads = -val * sig
    grads[z] += val
    return GradEstimate(grads, "REINFORCE", 1)


def ar_grad(logits, f: RewardFn, point: SimplexPoint) -> GradEstimate:
    phi = _check_logits(logits)
    z = racing_sample(phi, point)
    return GradEstimate(f(z) * (1.0 - point.c * point.pi), "AR", 1)


def ars_grad(logits, f: RewardFn, point: SimplexPoint, reference: int) -> GradEstimate:
    phi = _check_logits(logits)
    col = pseudo_action_column(phi, point, reference)
    vals, n_evals = _values_by_category(f, col)
    fcol = vals[col]
    grads = (fcol - fcol.mean()) * (1.0 - point.c * point.pi[reference])
    return GradEstimate(grads, "ARS", n_evals)


def arsm_grad(logits, f: RewardFn, point: SimplexPoint, dense_limit: int | None = None) -> GradEstimate:
    phi = _check_logits(logits)
    if dense_limit is None:
        tab = pseudo_action_table_fast(phi, point)
    else:
        tab = pseudo_action_table_fast(phi, point, dense_limit=dense_limit)
    c = point.c
    if tab.table is not None:
        vals, n_evals = _values_by_category(f, tab.table.ravel())
        grads = arsm_merge_gradient(vals[tab.table], point.pi)
        return GradEstimate(grads, "ARSM", n_evals)
    # Sparse table: the constant f(z) cancels inside the merge bracket, so
    # only entries differing from the true action contribute.
    f0 = f(tab.true_action)
    n_evals = 1
    cache: dict[int, float] = {tab.true_action: f0}
    w = 1.0 / c - point.pi
    rowterm = np.zeros(c)
    colsum = np.zeros(c)
    for (a, b), v in tab.overrides.items():
        if v not in cache:
            cache[v] = f(v)
            n_evals += 1
        d = cache[v] - f0
        rowterm[a] += d * w[b]
        rowterm[b] += d * w[a]
        colsum[a] += d
        colsum[b] += d
    grads = rowterm - float(np.dot(colsum / c, w))
    return GradEstimate(grads, "ARSM", n_evals)


def arm_binary_grad(logits, f: RewardFn, u: float) -> GradEstimate:
    """Binary-case estimator driven by one shared uniform draw.

    Independent of the swap machinery: the merge estimator with C=2 must
    reproduce it sample-for-sample when pi = (u, 1-u).
    """
    phi = _check_logits(logits)
    if phi.shape[0] != 2:
        raise ValueError("binary estimator requires C=2")
    sig = 1.0 / (1.0 + np.exp(-(phi[0] - phi[1])))
    z_a = 0 if u < sig else 1
    z_b = 0 if (1.0 - u) < sig else 1
    if z_a == z_b:
        f(z_a)
        g1 = 0.0
        n_evals = 1
    else:
        g1 = (f(z_a) - f(z_b)) * (0.5 - u)
        n_evals = 2
    return GradEstimate(np.array([g1, -g1]), "ARSM", n_evals)


def _values_by_category(f: RewardFn, actions: np.ndarray) -> tuple[np.ndarray, int]:
    # Evaluate f once per distinct category appearing in `actions`.
    uniq = np.unique(actions)
    vals = np.zeros(int(actions.max()) + 1)
    for a in uniq.tolist():
        vals[a] = f(int(a))
    return vals, uniq.shape[0]


# ---------------------------------------------------------------------------
# shared merge/swap algebra

def arsm_merge_gradient(F: np.ndarray, pi: np.ndarray) -> np.ndarray:
    """Merge-step gradient from a filled reward table.

    F[c, j] holds the reward of the (c, j) pseudo action; pi is (C,) for one
    head or (K, C) for per-head weights sharing the same table.
    """
    c = F.shape[0]
    D = F - F.mean(axis=0, keepdims=True)
    w = 1.0 / c - pi
    if w.ndim == 1:
        return D @ w
    return w @ D.T


def ars_swap_gradient(fcol: np.ndarray, pi_ref: float) -> np.ndarray:
    """Swap-step gradient from one reference column of rewards."""
    c = fcol.shape[0]
    return (fcol - fcol.mean()) * (1.0 - c * pi_ref)


# ---------------------------------------------------------------------------
# multivariate estimators

def multivariate_grad(
    logits: np.ndarray,
    f: RewardFn,
    pi: np.ndarray,
    log_pi: np.ndarray,
    mode: str,
    references: np.ndarray | None = None,
) -> GradEstimate:
    """AR/ARS/ARSM for a K-vector of C-way variables sharing one reward call.

    ``logits``, ``pi`` and ``log_pi`` are (K, C).  ARS uses one reference per
    head; ARSM swaps every head against the same reference so a single
    reward table covers all heads (at most C(C-1)/2 + 1 reward calls).
    """
    phi = np.asarray(logits, dtype=np.float64)
    if phi.ndim != 2 or phi.shape != pi.shape or phi.shape != log_pi.shape:
        raise ValueError("logits, pi, log_pi must share shape (K, C)")
    k, c = phi.shape
    races = log_pi - phi
    z = np.argmin(races, axis=1)
    cache: dict[tuple, float] = {}

    def eval_vec(actions: np.ndarray) -> float:
        key = tuple(actions.tolist())
        if key not in cache:
            cache[key] = f(np.asarray(key, dtype=np.int64))
        return cache[key]

    if mode == "AR":
        val = eval_vec(z)
        grads = val * (1.0 - c * pi)
        return GradEstimate(grads, "AR", len(cache))

    orders = [_order3(races[h]) for h in range(k)]

    def head_entries(pairs_a: np.ndarray, pairs_b: np.ndarray) -> np.ndarray:
        # entries[h, i] = pseudo action of head h for unordered pair (a_i, b_i)
        out = np.empty((k, pairs_a.shape[0]), dtype=np.int64)
        for h in range(k):
            out[h] = pair_entries(phi[h], log_pi[h], races[h], orders[h], pairs_a, pairs_b)
        return out

    if mode == "ARS":
        if references is None or np.asarray(references).shape != (k,):
            raise ValueError("ARS needs one reference per head")
        refs = np.asarray(references, dtype=np.int64)
        cs = np.arange(c, dtype=np.int64)
        cols = np.empty((k, c), dtype=np.int64)
        for h in range(k):
            cols[h] = pair_entries(
                phi[h], log_pi[h], races[h], orders[h], cs, np.full(c, refs[h])
            )
        fvals = np.array([eval_vec(cols[:, ci]) for ci in range(c)])
        bracket = fvals - fvals.mean()
        factor = 1.0 - c * pi[np.arange(k), refs]
        return GradEstimate(np.outer(factor, bracket), "ARS", len(cache))

    if mode == "ARSM":
        F = np.empty((c, c))
        F[np.arange(c), np.arange(c)] = eval_vec(z)
        if c > 1:
            pairs = [(m, j) for m in range(c) for j in range(m)]
            pa = np.array([p[0] for p in pairs], dtype=np.int64)
            pb = np.array([p[1] for p in pairs], dtype=np.int64)
            ents = head_entries(pa, pb)
            for i, (m, j) in enumerate(pairs):
                val = eval_vec(ents[:, i])
                F[m, j] = val
                F[j, m] = val
        return GradEstimate(arsm_merge_gradient(F, pi), "ARSM", len(cache))

    raise ValueError(f"unknown multivariate mode {mode!r}")


# ---------------------------------------------------------------------------
# vectorized Monte Carlo sampling

def analytic_expected_reward(logits, f_values: np.ndarray) -> float:
    return float(softmax(logits) @ np.asarray(f_values, dtype=np.float64))


def analytic_grad_values(logits, f_values: np.ndarray) -> np.ndarray:
    sig = softmax(logits)
    fvals = np.asarray(f_values, dtype=np.float64)
    return sig * (fvals - float(sig @ fvals))


def reinforce_grad_samples(logits, f_values, n, gen) -> np.ndarray:
    phi = _check_logits(logits)
    sig = softmax(phi)
    fvals = np.asarray(f_values, dtype=np.float64)
    z = categorical_sample_batch(sig, n, gen)
    est = np.repeat(-sig[None, :], n, axis=0)
    est[np.arange(n), z] += 1.0
    est *= fvals[z][:, None]
    return est


def ar_grad_samples(logits, f_values, n, gen) -> np.ndarray:
    phi = _check_logits(logits)
    c = phi.shape[0]
    fvals = np.asarray(f_values, dtype=np.float64)
    pi, log_pi = sample_dirichlet_ones_batch(c, n, gen)
    z = np.argmin(log_pi - phi[None, :], axis=1)
    return fvals[z][:, None] * (1.0 - c * pi)


def ars_grad_samples(logits, f_values, n, gen, gen_ref) -> np.ndarray:
    """Reference category resampled per draw, from its own generator."""
    phi = _check_logits(logits)
    c = phi.shape[0]
    fvals = np.asarray(f_values, dtype=np.float64)
    pi, log_pi = sample_dirichlet_ones_batch(c, n, gen)
    refs = gen_ref.integers(c, size=n)
    table = pseudo_action_tables_batch(phi, log_pi)
    rows = np.arange(n)
    cols = table[rows, :, refs]
    fcol = fvals[cols]
    bracket = fcol - fcol.mean(axis=1, keepdims=True)
    return bracket * (1.0 - c * pi[rows, refs])[:, None]


def arsm_grad_samples(logits, f_values, n, gen) -> np.ndarray:
    phi = _check_logits(logits)
    c = phi.shape[0]
    fvals = np.asarray(f_values, dtype=np.float64)
    pi, log_pi = sample_dirichlet_ones_batch(c, n, gen)
    table = pseudo_action_tables_batch(phi, log_pi)
    F = fvals[table]
    D = F - F.mean(axis=1, keepdims=True)
    w = 1.0 / c - pi
    return np.einsum("ncj,nj->nc", D, w)


def arm_binary_grad_samples(logits, f_values, u: np.ndarray) -> np.ndarray:
    phi = _check_logits(logits)
    if phi.shape[0] != 2:
        raise ValueError("binary estimator requires C=2")
    fvals = np.asarray(f_values, dtype=np.float64)
    sig = 1.0 / (1.0 + np.exp(-(phi[0] - phi[1])))
    z_a = np.where(u < sig, 0, 1)
    z_b = np.where((1.0 - u) < sig, 0, 1)
    g1 = (fvals[z_a] - fvals[z_b]) * (0.5 - u)
    return np.stack([g1, -g1], axis=1)


def estimator_samples(
    estimator_id: str, logits, f_values, n: int, stream: RngStream
) -> np.ndarray:
    """Single-sample estimates, n of them, with pi/reference streams split."""
    module = sys.modules[__name__]
    if estimator_id == "REINFORCE":
        return module.reinforce_grad_samples(logits, f_values, n, stream.derive(1).generator())
    if estimator_id == "AR":
        return module.ar_grad_samples(logits, f_values, n, stream.derive(1).generator())
    if estimator_id == "ARS":
        return module.ars_grad_samples(
            logits, f_values, n, stream.derive(1).generator(), stream.derive(2).generator()
        )
    if estimator_id == "ARSM":
        return module.arsm_grad_samples(logits, f_values, n, stream.derive(1).generator())
    if estimator_id == "ANALYTIC":
        return np.repeat(analytic_grad_values(logits, f_values)[None, :], n, axis=0)
    raise ValueError(f"unknown estimator {estimator_id!r}")


def mc_grad_moments(
    estimator_id: str,
    logits,
    f_values,
    n: int,
    stream: RngStream,
    chunk: int = 1 << 16,
) -> tuple[np.ndarray, np.ndarray]:
    """Monte Carlo mean and standard error of an estimator, chunked.

    Chunks consume independent derived streams, so the result is
    deterministic and independent of chunk scheduling.
    """
    phi = _check_logits(logits)
    total = np.zeros(phi.shape[0])
    total_sq = np.zeros(phi.shape[0])
    done = 0
    part = 0
    while done < n:
        m = min(chunk, n - done)
        s = estimator_samples(estimator_id, phi, f_values, m, stream.derive(part))
        total += s.sum(axis=0)
        total_sq += np.square(s).sum(axis=0)
        done += m
        part += 1
    mean = total / n
    var = np.maximum(total_sq / n - mean**2, 0.0) * (n / max(n - 1, 1))
    return mean, np.sqrt(var / n)


def multivariate_arsm_mc_moments(
    logits: np.ndarray,
    f_vec: Callable[[np.ndarray], np.ndarray],
    n: int,
    stream: RngStream,
    chunk: int = 1 << 13,
) -> tuple[np.ndarray, np.ndarray]:
    """Monte Carlo moments of the multivariate merge estimator.

    ``f_vec`` maps an integer action array of shape (..., K) to rewards of
    shape (...); logits are (K, C).
    """
    phi = np.asarray(logits, dtype=np.float64)
    k, c = phi.shape
    total = np.zeros((k, c))
    total_sq = np.zeros((k, c))
    done = 0
    part = 0
    while done < n:
        m = min(chunk, n - done)
        gen = stream.derive(part).generator()
        pi_flat, log_pi_flat = sample_dirichlet_ones_batch(c, m * k, gen)
        pi = pi_flat.reshape(m, k, c)
        log_pi = log_pi_flat.reshape(m, k, c)
        actions = np.empty((m, c, c, k), dtype=np.int16)
        for h in range(k):
            actions[..., h] = pseudo_action_tables_batch(phi[h], log_pi[:, h, :])
        F = f_vec(actions)
        D = F - F.mean(axis=1, keepdims=True)
        w = 1.0 / c - pi
        s = np.einsum("ncj,nkj->nkc", D, w)
        total += s.sum(axis=0)
        total_sq += np.square(s).sum(axis=0)
        done += m
        part += 1
    mean = total / n
    var = np.maximum(total_sq / n - mean**2, 0.0) * (n / max(n - 1, 1))
    return mean, np.sqrt(var / n)
