"""Snapshot-restorable environments: classic cart-pole and an enumerable chain MDP.

Both expose reset/step/snapshot/restore; restoring a snapshot and replaying
the same actions reproduces the continuation bitwise, which is what lets
pseudo-action rollouts branch off a stored state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .rng import as_generator

__all__ = ["CartPoleEnv", "ChainMdpConfig", "ChainMdpEnv", "default_chain_config"]


class CartPoleEnv:
    """Cart-pole balancing with the standard physical constants.

    Force +/-10 N applied by actions {1, 0}; reward 1 per step; episode ends
    when the pole leaves +/-12 degrees, the cart leaves +/-2.4, or after
    ``max_steps`` steps.  Dynamics are deterministic; randomness enters only
    through the reset state.
    """

    GRAVITY = 9.8
    MASS_CART = 1.0
    MASS_POLE = 0.1
    TOTAL_MASS = MASS_CART + MASS_POLE
    LENGTH = 0.5  # half pole length
    POLE_MASS_LENGTH = MASS_POLE * LENGTH
    FORCE_MAG = 10.0
    TAU = 0.02
    THETA_LIMIT = 12 * 2 * math.pi / 360
    X_LIMIT = 2.4

    n_actions = 2
    obs_dim = 4

    def __init__(self, max_steps: int = 500):
        self.max_steps = max_steps
        self.state = (0.0, 0.0, 0.0, 0.0)
        self.steps = 0
        self.done = True

    def reset(self, rng) -> np.ndarray:
        gen = as_generator(rng)
        self.state = tuple(gen.uniform(-0.05, 0.05, size=4).tolist())
        self.steps = 0
        self.done = False
        return np.array(self.state)

    @staticmethod
    def dynamics(state, force: float):
        """One Euler step of the cart-pole equations under the given force."""
        x, x_dot, theta, theta_dot = state
        cos_t = math.cos(theta)
        sin_t = math.sin(theta)
        temp = (force + CartPoleEnv.POLE_MASS_LENGTH * theta_dot**2 * sin_t) / CartPoleEnv.TOTAL_MASS
        theta_acc = (CartPoleEnv.GRAVITY * sin_t - cos_t * temp) / (
            CartPoleEnv.LENGTH
            * (4.0 / 3.0 - CartPoleEnv.MASS_POLE * cos_t**2 / CartPoleEnv.TOTAL_MASS)
        )
        x_acc = temp - CartPoleEnv.POLE_MASS_LENGTH * theta_acc * cos_t / CartPoleEnv.TOTAL_MASS
        return (
            x + CartPoleEnv.TAU * x_dot,
            x_dot + CartPoleEnv.TAU * x_acc,
            theta + CartPoleEnv.TAU * theta_dot,
            theta_dot + CartPoleEnv.TAU * theta_acc,
        )

    def step(self, action: int):
        if self.done:
            raise RuntimeError("step() on a finished episode; reset or restore first")
        force = self.FORCE_MAG if action == 1 else -self.FORCE_MAG
        self.state = self.dynamics(self.state, force)
        self.steps += 1
        x, _, theta, _ = self.state
        self.done = (
            abs(x) > self.X_LIMIT or abs(theta) > self.THETA_LIMIT or self.steps >= self.max_steps
        )
        return np.array(self.state), 1.0, self.done

    def snapshot(self):
        return (self.state, self.steps, self.done)

    def restore(self, snap) -> np.ndarray:
        self.state, self.steps, self.done = snap
        return np.array(self.state)


@dataclass(frozen=True)
class ChainMdpConfig:
    """Deterministic tabular MDP: next_state[s, a], reward[s, a], fixed horizon."""

    next_state: np.ndarray
    rewards: np.ndarray
    horizon: int
    start_state: int = 0

    def __post_init__(self):
        if self.next_state.shape != self.rewards.shape:
            raise ValueError("next_state and rewards tables must share shape (S, C)")
        s = self.next_state.shape[0]
        if np.any(self.next_state < 0) or np.any(self.next_state >= s):
            raise ValueError("next_state entries must be valid state indices")
        if self.horizon < 1:
            raise ValueError("horizon must be positive")

    @property
    def n_states(self) -> int:
        return self.next_state.shape[0]

    @property
    def n_actions(self) -> int:
        return self.next_state.shape[1]


def default_chain_config(n_actions: int = 3, horizon: int = 3) -> ChainMdpConfig:
    """The two-state chain used by the CLI and the unbiasedness checks.

    Rewards differ per (state, action) so that no action is uniformly best
    and the exact gradient has nontrivial components.
    """
    if n_actions < 2:
        raise ValueError("need at least two actions")
    rewards = np.array(
        [
            [1.0 + 0.5 * a for a in range(n_actions)],
            [2.0 - 0.7 * a for a in range(n_actions)],
        ]
    )
    next_state = np.array(
        [[(a % 2) for a in range(n_actions)], [((a + 1) % 2) for a in range(n_actions)]]
    )
    return ChainMdpConfig(next_state=next_state, rewards=rewards, horizon=horizon)


class ChainMdpEnv:
    """Finite-horizon tabular MDP; observations are plain state indices."""

    def __init__(self, config: ChainMdpConfig):
        self.config = config
        self.state = config.start_state
        self.steps = 0
        self.done = True

    @property
    def n_actions(self) -> int:
        return self.config.n_actions

    def reset(self, rng) -> int:
        self.state = self.config.start_state
        self.steps = 0
        self.done = False
        return self.state

    def step(self, action: int):
        if self.done:
            raise RuntimeError("step() on a finished episode; reset or restore first")
        if not 0 <= action < self.config.n_actions:
            raise ValueError(f"action {action} out of range")
        reward = float(self.config.rewards[self.state, action])
        self.state = int(self.config.next_state[self.state, action])
        self.steps += 1
        self.done = self.steps >= self.config.horizon
        return self.state, reward, self.done

    def snapshot(self):
        return (self.state, self.steps, self.done)

    def restore(self, snap) -> int:
        self.state, self.steps, self.done = snap
        return self.state
