"""Discrete-action policy gradients with pseudo-action rollouts.

An episode stores, per step, the logits, the Dirichlet point that produced
the action, and an environment snapshot.  Gradient estimation then revisits
the timesteps in random order, collects the distinct pseudo actions each
step's swap table generates (stopping when the rollout budget is spent),
estimates one Monte Carlo action value per distinct pseudo action from the
stored snapshot, and merges the resulting reward matrix into per-step logit
gradients that chain through the policy network.  There is no critic: the
pseudo-action returns themselves center the estimate.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .estimators import arsm_merge_gradient, ars_swap_gradient
from .nets import Adam, LayerSpec, Mlp, build_mlp
from .pseudo_actions import PseudoActionTable, pseudo_action_column, pseudo_action_table_fast
from .rng import RngStream, as_generator
from .simplex import SimplexPoint, sample_dirichlet_ones, softmax

__all__ = [
    "MlpPolicy",
    "TabularPolicy",
    "PolicyStep",
    "Trajectory",
    "run_episode",
    "select_rollout_set",
    "estimate_pseudo_q",
    "arsm_policy_gradient",
    "ars_policy_gradient",
    "RlTrainConfig",
    "train_policy",
    "build_cartpole_policy",
    "worker_count",
]


def worker_count() -> int:
    """Parallel rollout workers, capped by the ARSM_THREADS environment variable."""
    try:
        return max(1, int(os.environ.get("ARSM_THREADS", "1")))
    except ValueError:
        return 1


class MlpPolicy:
    """Feature-vector policy head: observations through a small network."""

    def __init__(self, net: Mlp):
        self.net = net

    def logits(self, obs) -> np.ndarray:
        return self.net.forward(np.asarray(obs, dtype=np.float64)[None, :])[0]

    def params(self) -> list[np.ndarray]:
        return self.net.params()

    def grad_zeros(self) -> list[np.ndarray]:
        return self.net.grad_zeros()

    def accumulate_grad(self, grads: list[np.ndarray], obs, g: np.ndarray) -> None:
        _, caches = self.net.forward_cached(np.asarray(obs, dtype=np.float64)[None, :])
        _, pgrads = self.net.backward(g[None, :], caches)
        for acc, pg in zip(grads, pgrads):
            acc += pg


class TabularPolicy:
    """One logit row per discrete state; observations are state indices."""

    def __init__(self, table: np.ndarray):
        self.table = table

    def logits(self, obs) -> np.ndarray:
        return self.table[int(obs)]

    def params(self) -> list[np.ndarray]:
        return [self.table]

    def grad_zeros(self) -> list[np.ndarray]:
        return [np.zeros_like(self.table)]

    def accumulate_grad(self, grads: list[np.ndarray], obs, g: np.ndarray) -> None:
        grads[0][int(obs)] += g


def build_cartpole_policy(stream: RngStream, hidden: int = 10, n_actions: int = 2) -> MlpPolicy:
    """The standard two-hidden-layer rectifier policy head."""
    net = build_mlp(
        [
            LayerSpec("linear", in_dim=4, out_dim=hidden),
            LayerSpec("leaky_relu", slope=0.0),
            LayerSpec("linear", in_dim=hidden, out_dim=hidden),
            LayerSpec("leaky_relu", slope=0.0),
            LayerSpec("linear", in_dim=hidden, out_dim=n_actions),
        ],
        stream,
    )
    return MlpPolicy(net)


@dataclass
class PolicyStep:
    obs: object
    snapshot: object
    logits: np.ndarray
    point: SimplexPoint
    action: int
    reward: float


@dataclass
class Trajectory:
    steps: list[PolicyStep]

    @property
    def horizon(self) -> int:
        return len(self.steps)

    @property
    def total_return(self) -> float:
        return float(sum(s.reward for s in self.steps))

    def returns_to_go(self, gamma: float) -> np.ndarray:
        out = np.zeros(len(self.steps))
        acc = 0.0
        for i in range(len(self.steps) - 1, -1, -1):
            acc = self.steps[i].reward + gamma * acc
            out[i] = acc
        return out


def run_episode(policy, env, rng) -> Trajectory:
    """Roll the racing-sampled policy to termination, storing per-step state."""
    gen = as_generator(rng)
    obs = env.reset(gen)
    steps: list[PolicyStep] = []
    done = False
    while not done:
        logits = policy.logits(obs)
        point = sample_dirichlet_ones(logits.shape[0], gen)
        action = int(np.argmin(point.log_pi - logits))
        snap = env.snapshot()
        next_obs, reward, done = env.step(action)
        steps.append(PolicyStep(obs, snap, logits, point, action, reward))
        obs = next_obs
    return Trajectory(steps)


@dataclass
class RolloutPlan:
    """Budget-selected timesteps with their pseudo-action structure."""

    retained: list[int]
    tables: dict[int, PseudoActionTable] = field(default_factory=dict)
    columns: dict[int, np.ndarray] = field(default_factory=dict)
    references: dict[int, int] = field(default_factory=dict)
    uniques: dict[int, np.ndarray] = field(default_factory=dict)

    @property
    def total_rollouts(self) -> int:
        return int(sum(u.size for u in self.uniques.values()))


def select_rollout_set(
    traj: Trajectory,
    s_max: int,
    rng,
    mode: str = "ARSM",
    ref_rng=None,
) -> RolloutPlan:
    """Visit timesteps in random order, keeping those whose distinct pseudo
    actions still fit the rollout budget; stop at the first overflow."""
    gen = as_generator(rng)
    plan = RolloutPlan(retained=[])
    order = gen.permutation(traj.horizon)
    if mode == "ARS":
        ref_gen = as_generator(ref_rng)
        for t, step in enumerate(traj.steps):
            plan.references[t] = int(ref_gen.integers(step.logits.shape[0]))
    used = 0
    for t in order.tolist():
        step = traj.steps[t]
        if mode == "ARSM":
            tab = pseudo_action_table_fast(step.logits, step.point)
            uniq = tab.unique_others
            plan.tables[t] = tab
        elif mode == "ARS":
            col = pseudo_action_column(step.logits, step.point, plan.references[t])
            uniq = np.unique(col)
            uniq = uniq[uniq != step.action]
            plan.columns[t] = col
        else:
            raise ValueError(f"unknown policy-gradient mode {mode!r}")
        if used + uniq.size > s_max:
            break
        used += uniq.size
        plan.uniques[t] = uniq
        plan.retained.append(t)
    plan.retained.sort()
    return plan


def estimate_pseudo_q(env, snapshot, action: int, policy, gamma: float, rng) -> float:
    """Monte Carlo action value: take the pseudo action, then follow the policy."""
    gen = as_generator(rng)
    obs = env.restore(snapshot)
    if env.done:
        raise RuntimeError("cannot roll out from a terminal snapshot")
    total = 0.0
    discount = 1.0
    obs, reward, done = env.step(action)
    total += reward
    while not done:
        logits = policy.logits(obs)
        point = sample_dirichlet_ones(logits.shape[0], gen)
        a = int(np.argmin(point.log_pi - logits))
        obs, reward, done = env.step(a)
        discount *= gamma
        total += discount * reward
    return total


def _fill_pseudo_values(
    env, traj, plan, policy, gamma, rollout_stream: RngStream
) -> dict[int, dict[int, float]]:
    """Q estimates per (timestep, pseudo action), rollouts optionally threaded."""
    jobs = []
    for t in plan.retained:
        for k, a in enumerate(plan.uniques[t].tolist()):
            jobs.append((t, k, int(a)))
    results: dict[int, dict[int, float]] = {t: {} for t in plan.retained}
    workers = worker_count()
    if workers > 1 and len(jobs) > 1:
        # one private env copy per job keeps restore/step isolated
        import copy

        def job(args):
            t, k, a = args
            local_env = copy.deepcopy(env)
            return t, a, estimate_pseudo_q(
                local_env, traj.steps[t].snapshot, a, policy, gamma,
                rollout_stream.derive(t, k),
            )

        with ThreadPoolExecutor(max_workers=workers) as pool:
            for t, a, q in pool.map(job, jobs):
                results[t][a] = q
    else:
        for t, k, a in jobs:
            results[t][a] = estimate_pseudo_q(
                env, traj.steps[t].snapshot, a, policy, gamma, rollout_stream.derive(t, k)
            )
    return results


def arsm_policy_gradient(
    policy,
    env,
    traj: Trajectory,
    plan: RolloutPlan,
    gamma: float,
    rollout_stream: RngStream,
    discount_weighting: bool = False,
) -> tuple[list[np.ndarray], dict]:
    """Merge-estimator policy gradient over the retained timesteps."""
    q_true = traj.returns_to_go(gamma)
    pseudo_q = _fill_pseudo_values(env, traj, plan, policy, gamma, rollout_stream)
    grads = policy.grad_zeros()
    per_step = {}
    for t in plan.retained:
        step = traj.steps[t]
        tab = plan.tables[t]
        r = np.full((tab.c, tab.c), q_true[t])
        for a, q in pseudo_q[t].items():
            r[tab.table == a] = q
        g = arsm_merge_gradient(r, step.point.pi)
        if discount_weighting:
            g = (gamma**t) * g
        per_step[t] = g
        policy.accumulate_grad(grads, step.obs, g)
    stats = {"rollouts": plan.total_rollouts, "retained": len(plan.retained), "per_step": per_step}
    return grads, stats


def ars_policy_gradient(
    policy,
    env,
    traj: Trajectory,
    plan: RolloutPlan,
    gamma: float,
    rollout_stream: RngStream,
    discount_weighting: bool = False,
) -> tuple[list[np.ndarray], dict]:
    """Swap-estimator policy gradient: one reference column per timestep."""
    q_true = traj.returns_to_go(gamma)
    pseudo_q = _fill_pseudo_values(env, traj, plan, policy, gamma, rollout_stream)
    grads = policy.grad_zeros()
    per_step = {}
    for t in plan.retained:
        step = traj.steps[t]
        col = plan.columns[t]
        rcol = np.full(col.shape[0], q_true[t])
        for a, q in pseudo_q[t].items():
            rcol[col == a] = q
        g = ars_swap_gradient(rcol, step.point.pi[plan.references[t]])
        if discount_weighting:
            g = (gamma**t) * g
        per_step[t] = g
        policy.accumulate_grad(grads, step.obs, g)
    stats = {"rollouts": plan.total_rollouts, "retained": len(plan.retained), "per_step": per_step}
    return grads, stats


def _entropy_gradient(logits: np.ndarray) -> np.ndarray:
    sig = softmax(logits)
    log_sig = np.log(sig)
    entropy = -float(sig @ log_sig)
    return -sig * (log_sig + entropy)


@dataclass
class RlTrainConfig:
    estimator: str = "ARSM"
    episodes: int = 500
    gamma: float = 0.99
    learning_rate: float = 1e-2
    s_max: int = 16
    discount_weighting: bool = False
    entropy_weight: float = 0.0
    ema_decay: float = 0.99


def train_policy(policy, env, cfg: RlTrainConfig, stream: RngStream, on_episode=None):
    """Episode loop: sample, budget-select, estimate, update.

    ``on_episode(ep, record)`` may return True to stop early.  Returns the
    list of per-episode records (return, rollouts, retained, mean uniques).
    """
    if cfg.estimator not in ("ARS", "ARSM"):
        raise ValueError("policy-gradient training supports ARS or ARSM")
    opt = Adam(lr=cfg.learning_rate)
    records = []
    for ep in range(cfg.episodes):
        traj = run_episode(policy, env, stream.derive(ep, 0))
        plan = select_rollout_set(
            traj,
            cfg.s_max,
            stream.derive(ep, 1),
            mode=cfg.estimator,
            ref_rng=stream.derive(ep, 2),
        )
        grad_fn = arsm_policy_gradient if cfg.estimator == "ARSM" else ars_policy_gradient
        grads, stats = grad_fn(
            policy,
            env,
            traj,
            plan,
            cfg.gamma,
            stream.derive(ep, 3),
            discount_weighting=cfg.discount_weighting,
        )
        if cfg.entropy_weight > 0.0:
            for t, step in enumerate(traj.steps):
                g_ent = cfg.entropy_weight * _entropy_gradient(step.logits)
                if cfg.discount_weighting:
                    g_ent = (cfg.gamma**t) * g_ent
                policy.accumulate_grad(grads, step.obs, g_ent)
        opt.step(policy.params(), grads)
        record = {
            "episode": ep,
            "return": traj.total_return,
            "rollouts": stats["rollouts"],
            "retained": stats["retained"],
            "mean_unique": stats["rollouts"] / max(stats["retained"], 1),
            "grad_flat": np.concatenate([g.ravel() for g in grads]),
        }
        records.append(record)
        if on_episode is not None and on_episode(ep, record):
            break
    return records
