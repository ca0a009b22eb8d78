"""Stochastic categorical networks trained without continuous relaxation.

A model here is a chain of T categorical stochastic layers (K heads of C
categories each) between binary data and a uniform top-level prior, with a
mirrored generative chain.  The training reward is the single-sample evidence
lower bound integrand; encoder logits receive estimator gradients (REINFORCE,
AR, ARS, or the merge estimator) chained through hand-written backprop, while
the generative nets get their exact pathwise gradients.

Per-layer gradients follow the layered scheme: resample a fresh posterior
trajectory for the layer, build its pseudo-action table head-by-head against
shared references, resample the downstream layers once per distinct pseudo
vector, and merge the reward table.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .estimators import arsm_merge_gradient
from .nets import Adam, LayerSpec, Mlp, build_mlp
from .pseudo_actions import _order3, pair_entries
from .rng import RngStream, as_generator, open_uniform
from .simplex import log_softmax, sample_dirichlet_heads, softmax

__all__ = [
    "ElboSample",
    "CategoricalLayerSample",
    "TrajectorySample",
    "VaeSpec",
    "HierarchicalCategoricalVae",
    "build_hierarchical_vae",
    "bernoulli_loglik",
    "onehot_code",
    "bars_and_stripes",
]


@dataclass
class ElboSample:
    """One-sample lower-bound decomposition: elbo = loglik + log_prior - log_q."""

    log_likelihood: float
    log_prior: float
    log_q: float

    @property
    def elbo(self) -> float:
        return self.log_likelihood + self.log_prior - self.log_q


@dataclass
class CategoricalLayerSample:
    logits: np.ndarray  # (K, C)
    pi: np.ndarray
    log_pi: np.ndarray
    actions: np.ndarray  # (K,)


@dataclass
class TrajectorySample:
    layers: list[CategoricalLayerSample]

    @property
    def actions_array(self) -> np.ndarray:
        return np.stack([layer.actions for layer in self.layers], axis=0)


def bernoulli_loglik(logits: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Row-wise log Bernoulli(x; sigmoid(logits)), numerically stable."""
    pos = -np.logaddexp(0.0, -logits)
    neg = -np.logaddexp(0.0, logits)
    return (x * pos + (1.0 - x) * neg).sum(axis=-1)


def onehot_code(actions: np.ndarray, classes: int) -> np.ndarray:
    """(…, K) integer codes to (…, K*C) one-hot floats."""
    flat = np.eye(classes)[actions]
    return flat.reshape(*actions.shape[:-1], actions.shape[-1] * classes)


def bars_and_stripes(n_side: int, n_samples: int, rng) -> np.ndarray:
    """Binary bar/stripe images, (n_samples, n_side**2) in {0, 1}."""
    gen = as_generator(rng)
    horizontal = gen.integers(2, size=n_samples).astype(bool)
    bits = gen.integers(2, size=(n_samples, n_side)).astype(np.float64)
    rows = np.repeat(bits[:, :, None], n_side, axis=2)
    cols = np.repeat(bits[:, None, :], n_side, axis=1)
    imgs = np.where(horizontal[:, None, None], rows, cols)
    return imgs.reshape(n_samples, n_side * n_side)


@dataclass(frozen=True)
class VaeSpec:
    n_visible: int = 64
    hidden: int = 32
    heads: int = 4
    classes: int = 4
    layers: int = 1
    leaky_slope: float = 0.01


class HierarchicalCategoricalVae:
    def __init__(self, spec: VaeSpec, enc_nets: list[Mlp], dec_x: Mlp, dec_latents: list[Mlp]):
        self.spec = spec
        self.enc_nets = enc_nets
        self.dec_x = dec_x
        self.dec_latents = dec_latents

    # -- sampling -----------------------------------------------------------

    def _enc_input(self, x: np.ndarray, prev_actions: np.ndarray | None) -> np.ndarray:
        if prev_actions is None:
            return x[None, :]
        return onehot_code(prev_actions, self.spec.classes)[None, :]

    def layer_logits(self, x: np.ndarray, t: int, prev_actions: np.ndarray | None) -> np.ndarray:
        return self.enc_nets[t].forward(self._enc_input(x, prev_actions))[0]

    def sample_posterior(self, x: np.ndarray, rng) -> TrajectorySample:
        gen = as_generator(rng)
        spec = self.spec
        layers = []
        prev = None
        for t in range(spec.layers):
            logits = self.layer_logits(x, t, prev)
            pi, log_pi = sample_dirichlet_heads(spec.heads, spec.classes, gen)
            actions = np.argmin(log_pi - logits, axis=1)
            layers.append(CategoricalLayerSample(logits, pi, log_pi, actions))
            prev = actions
        return TrajectorySample(layers)

    def sample_downstream(self, x: np.ndarray, start_actions: np.ndarray, t: int, gen) -> np.ndarray:
        """Actions for layers t+1..T-1 given layer t's actions; (T-1-t, K)."""
        spec = self.spec
        out = []
        prev = start_actions
        for s in range(t + 1, spec.layers):
            logits = self.layer_logits(x, s, prev)
            _, log_pi = sample_dirichlet_heads(spec.heads, spec.classes, gen)
            prev = np.argmin(log_pi - logits, axis=1)
            out.append(prev)
        if not out:
            return np.zeros((0, spec.heads), dtype=np.int64)
        return np.stack(out, axis=0)

    # -- reward (lower-bound integrand) --------------------------------------

    def reward_batch(self, x: np.ndarray, actions: np.ndarray) -> np.ndarray:
        """Lower-bound integrand for each latent configuration in (B, T, K)."""
        spec = self.spec
        b = actions.shape[0]
        total = np.full(b, -spec.heads * np.log(spec.classes))  # uniform top prior

        logits0 = self.enc_nets[0].forward(x[None, :])
        ls0 = log_softmax(logits0, axis=-1)
        total -= np.take_along_axis(
            np.repeat(ls0, b, axis=0), actions[:, 0, :, None], axis=2
        )[..., 0].sum(axis=1)
        for t in range(1, spec.layers):
            inp = onehot_code(actions[:, t - 1, :], spec.classes)
            ls = log_softmax(self.enc_nets[t].forward(inp), axis=-1)
            total -= np.take_along_axis(ls, actions[:, t, :, None], axis=2)[..., 0].sum(axis=1)

        for t in range(spec.layers - 1, 0, -1):
            psi = self.dec_latents[t - 1].forward(onehot_code(actions[:, t, :], spec.classes))
            ls = log_softmax(psi, axis=-1)
            total += np.take_along_axis(ls, actions[:, t - 1, :, None], axis=2)[..., 0].sum(axis=1)

        x_logits = self.dec_x.forward(onehot_code(actions[:, 0, :], spec.classes))
        total += bernoulli_loglik(x_logits, x[None, :])
        return total

    def reward(self, x: np.ndarray, actions: np.ndarray) -> float:
        return float(self.reward_batch(x, actions[None])[0])

    def elbo_estimate(self, x: np.ndarray, rng) -> ElboSample:
        traj = self.sample_posterior(x, rng)
        return self.elbo_of(x, traj)

    def elbo_of(self, x: np.ndarray, traj: TrajectorySample) -> ElboSample:
        spec = self.spec
        actions = traj.actions_array
        log_q = 0.0
        for layer in traj.layers:
            ls = log_softmax(layer.logits, axis=-1)
            log_q += float(np.take_along_axis(ls, layer.actions[:, None], axis=1).sum())
        log_prior = -spec.heads * np.log(spec.classes)
        for t in range(spec.layers - 1, 0, -1):
            psi = self.dec_latents[t - 1].forward(
                onehot_code(actions[t], spec.classes)[None, :]
            )[0]
            ls = log_softmax(psi, axis=-1)
            log_prior += float(np.take_along_axis(ls, actions[t - 1][:, None], axis=1).sum())
        x_logits = self.dec_x.forward(onehot_code(actions[0], spec.classes)[None, :])
        log_likelihood = float(bernoulli_loglik(x_logits, x[None, :])[0])
        return ElboSample(log_likelihood, float(log_prior), log_q)

    def marginal_loglik_estimate(self, x: np.ndarray, n_samples: int, rng) -> float:
        """Log-mean of n conditional likelihoods with latents from the prior side."""
        if n_samples < 1:
            raise ValueError("need at least one sample")
        spec = self.spec
        gen = as_generator(rng)
        z = gen.integers(spec.classes, size=(n_samples, spec.heads))
        for t in range(spec.layers - 1, 0, -1):
            psi = self.dec_latents[t - 1].forward(onehot_code(z, spec.classes))
            probs = softmax(psi, axis=-1)
            u = open_uniform(gen, (n_samples, spec.heads, 1))
            cum = np.cumsum(probs, axis=-1)
            z = np.minimum((cum < u).sum(axis=-1), spec.classes - 1)
        lls = bernoulli_loglik(self.dec_x.forward(onehot_code(z, spec.classes)), x[None, :])
        peak = lls.max()
        return float(peak + np.log(np.mean(np.exp(lls - peak))))

    # -- per-layer estimator gradients ---------------------------------------

    def layer_arsm_gradient(
        self, x: np.ndarray, traj: TrajectorySample, t: int, rng
    ) -> tuple[np.ndarray, int]:
        """Merge-estimator gradient for layer t's logits; (K, C) plus reward calls."""
        gen = as_generator(rng)
        spec = self.spec
        k, c = spec.heads, spec.classes
        layer = traj.layers[t]
        races = layer.log_pi - layer.logits
        orders = [_order3(races[h]) for h in range(k)]
        true_actions = traj.actions_array
        true_key = tuple(layer.actions.tolist())

        pairs = [(m, j) for m in range(c) for j in range(m)]
        ents = np.empty((k, len(pairs)), dtype=np.int64)
        if pairs:
            pa = np.array([p[0] for p in pairs])
            pb = np.array([p[1] for p in pairs])
            for h in range(k):
                ents[h] = pair_entries(
                    layer.logits[h], layer.log_pi[h], races[h], orders[h], pa, pb
                )

        keys = [true_key] + [tuple(ents[:, i].tolist()) for i in range(len(pairs))]
        new_keys = []
        seen = {true_key}
        for key in keys[1:]:
            if key not in seen:
                seen.add(key)
                new_keys.append(key)

        configs = [true_actions]
        for key in new_keys:
            vec = np.asarray(key, dtype=np.int64)
            tail = self.sample_downstream(x, vec, t, gen)
            configs.append(np.concatenate([true_actions[:t], vec[None, :], tail], axis=0))
        values = self.reward_batch(x, np.stack(configs, axis=0))
        by_key = {true_key: values[0]}
        by_key.update(zip(new_keys, values[1:]))

        F = np.full((c, c), values[0])
        for i, (m, j) in enumerate(pairs):
            val = by_key[tuple(ents[:, i].tolist())]
            F[m, j] = val
            F[j, m] = val
        return arsm_merge_gradient(F, layer.pi), len(configs)

    def layer_ars_gradient(
        self, x: np.ndarray, traj: TrajectorySample, t: int, references: np.ndarray, rng
    ) -> tuple[np.ndarray, int]:
        """Swap-estimator gradient for layer t with one reference per head."""
        gen = as_generator(rng)
        spec = self.spec
        k, c = spec.heads, spec.classes
        layer = traj.layers[t]
        races = layer.log_pi - layer.logits
        true_actions = traj.actions_array
        true_key = tuple(layer.actions.tolist())

        cs = np.arange(c, dtype=np.int64)
        cols = np.empty((k, c), dtype=np.int64)
        for h in range(k):
            cols[h] = pair_entries(
                layer.logits[h],
                layer.log_pi[h],
                races[h],
                _order3(races[h]),
                cs,
                np.full(c, references[h], dtype=np.int64),
            )

        keys = [tuple(cols[:, ci].tolist()) for ci in range(c)]
        new_keys = []
        seen = {true_key}
        for key in keys:
            if key not in seen:
                seen.add(key)
                new_keys.append(key)
        configs = [true_actions]
        for key in new_keys:
            vec = np.asarray(key, dtype=np.int64)
            tail = self.sample_downstream(x, vec, t, gen)
            configs.append(np.concatenate([true_actions[:t], vec[None, :], tail], axis=0))
        values = self.reward_batch(x, np.stack(configs, axis=0))
        by_key = {true_key: values[0]}
        by_key.update(zip(new_keys, values[1:]))

        fcol = np.array([by_key[key] for key in keys])
        factor = 1.0 - c * layer.pi[np.arange(k), references]
        return np.outer(factor, fcol - fcol.mean()), len(configs)

    # -- backprop plumbing ----------------------------------------------------

    def encoder_param_grads(
        self, x: np.ndarray, traj: TrajectorySample, t: int, logit_grads: np.ndarray
    ) -> list[np.ndarray]:
        prev = traj.layers[t - 1].actions if t > 0 else None
        inp = self._enc_input(x, prev)
        _, caches = self.enc_nets[t].forward_cached(inp)
        _, grads = self.enc_nets[t].backward(logit_grads[None], caches)
        return grads

    def decoder_param_grads(
        self, x: np.ndarray, actions: np.ndarray
    ) -> tuple[list[np.ndarray], list[list[np.ndarray]]]:
        """Exact pathwise gradients of the generative log terms at one sample."""
        spec = self.spec
        inp = onehot_code(actions[0], spec.classes)[None, :]
        logits, caches = self.dec_x.forward_cached(inp)
        gy = x[None, :] - 1.0 / (1.0 + np.exp(-logits))
        _, dec_x_grads = self.dec_x.backward(gy, caches)
        latent_grads = []
        for t in range(1, spec.layers):
            inp = onehot_code(actions[t], spec.classes)[None, :]
            psi, caches = self.dec_latents[t - 1].forward_cached(inp)
            gy = -softmax(psi, axis=-1)
            gy[0, np.arange(spec.heads), actions[t - 1]] += 1.0
            _, grads = self.dec_latents[t - 1].backward(gy, caches)
            latent_grads.append(grads)
        return dec_x_grads, latent_grads

    # -- one training step ----------------------------------------------------

    def train_step_hierarchical(
        self,
        x: np.ndarray,
        mode: str,
        stream: RngStream,
        enc_opts: list[Adam],
        dec_x_opt: Adam,
        dec_latent_opts: list[Adam],
    ) -> "TrainStepStats":
        spec = self.spec
        t_layers = spec.layers
        layer_grads: list[np.ndarray] = []
        layer_evals: list[int] = []
        enc_grads: list[list[np.ndarray]] = []

        if mode in ("REINFORCE", "AR"):
            traj = self.sample_posterior(x, stream.derive(0))
            base = self.reward(x, traj.actions_array)
            for t in range(t_layers):
                layer = traj.layers[t]
                if mode == "REINFORCE":
                    g = -softmax(layer.logits, axis=-1)
                    g[np.arange(spec.heads), layer.actions] += 1.0
                    g = base * g
                else:
                    g = base * (1.0 - spec.classes * layer.pi)
                layer_grads.append(g)
                layer_evals.append(1 if t == 0 else 0)
                enc_grads.append(self.encoder_param_grads(x, traj, t, g))
            dec_traj = traj
        elif mode in ("ARS", "ARSM"):
            dec_traj = None
            for t in range(t_layers):
                traj = self.sample_posterior(x, stream.derive(1 + t, 0))
                if mode == "ARSM":
                    g, evals = self.layer_arsm_gradient(x, traj, t, stream.derive(1 + t, 1))
                else:
                    refs = stream.derive(1 + t, 2).generator().integers(
                        spec.classes, size=spec.heads
                    )
                    g, evals = self.layer_ars_gradient(
                        x, traj, t, refs, stream.derive(1 + t, 1)
                    )
                layer_grads.append(g)
                layer_evals.append(evals)
                enc_grads.append(self.encoder_param_grads(x, traj, t, g))
                if t == 0:
                    dec_traj = traj
        else:
            raise ValueError(f"unknown training mode {mode!r}")

        dec_x_grads, dec_latent_grads = self.decoder_param_grads(x, dec_traj.actions_array)
        for t in range(t_layers):
            enc_opts[t].step(self.enc_nets[t].params(), enc_grads[t])
        dec_x_opt.step(self.dec_x.params(), dec_x_grads)
        for i, (opt, grads) in enumerate(zip(dec_latent_opts, dec_latent_grads)):
            opt.step(self.dec_latents[i].params(), grads)

        flat = np.concatenate([g.ravel() for gs in enc_grads for g in gs])
        return TrainStepStats(
            layer_logit_grads=layer_grads,
            layer_f_evals=layer_evals,
            elbo=self.elbo_of(x, dec_traj),
            encoder_grad_flat=flat,
        )


@dataclass
class TrainStepStats:
    layer_logit_grads: list[np.ndarray]
    layer_f_evals: list[int]
    elbo: ElboSample
    encoder_grad_flat: np.ndarray


def build_hierarchical_vae(spec: VaeSpec, stream: RngStream) -> HierarchicalCategoricalVae:
    kc = spec.heads * spec.classes
    enc_nets = [
        build_mlp(
            [
                LayerSpec("linear", in_dim=spec.n_visible, out_dim=spec.hidden),
                LayerSpec("leaky_relu", slope=spec.leaky_slope),
                LayerSpec("linear", in_dim=spec.hidden, out_dim=kc),
                LayerSpec("softmax_heads", out_dim=kc, heads=spec.heads, classes=spec.classes),
            ],
            stream.derive(100),
        )
    ]
    for t in range(1, spec.layers):
        enc_nets.append(
            build_mlp(
                [
                    LayerSpec("linear", in_dim=kc, out_dim=kc),
                    LayerSpec("softmax_heads", out_dim=kc, heads=spec.heads, classes=spec.classes),
                ],
                stream.derive(100 + t),
            )
        )
    dec_x = build_mlp(
        [
            LayerSpec("linear", in_dim=kc, out_dim=spec.hidden),
            LayerSpec("leaky_relu", slope=spec.leaky_slope),
            LayerSpec("linear", in_dim=spec.hidden, out_dim=spec.n_visible),
        ],
        stream.derive(200),
    )
    dec_latents = [
        build_mlp(
            [
                LayerSpec("linear", in_dim=kc, out_dim=kc),
                LayerSpec("softmax_heads", out_dim=kc, heads=spec.heads, classes=spec.classes),
            ],
            stream.derive(200 + t),
        )
        for t in range(1, spec.layers)
    ]
    return HierarchicalCategoricalVae(spec, enc_nets, dec_x, dec_latents)
