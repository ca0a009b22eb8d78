"""Estimator correctness against the analytic gradient and exact identities."""

import numpy as np
import pytest

from arsm.estimators import (
    GradEstimate,
    RewardFn,
    analytic_grad_univariate,
    analytic_grad_values,
    ar_grad,
    arm_binary_grad,
    arm_binary_grad_samples,
    ars_grad,
    arsm_grad,
    arsm_grad_samples,
    draw_reference,
    estimator_samples,
    mc_grad_moments,
    multivariate_arsm_mc_moments,
    multivariate_grad,
    reinforce_grad,
    surrogate_loss,
)
from arsm.rng import RngStream, open_uniform
from arsm.simplex import (
    sample_dirichlet_heads,
    sample_dirichlet_ones,
    sample_dirichlet_ones_batch,
    simplex_point,
    softmax,
)


def test_analytic_constant_reward_is_zero():
    g = analytic_grad_univariate(np.array([0.3, -0.2, 1.0]), RewardFn(lambda z: 2.5))
    np.testing.assert_allclose(g.grads, 0.0, atol=1e-15)
    assert g.f_evals == 3


def test_analytic_hand_value():
    g = analytic_grad_univariate(np.zeros(2), RewardFn.from_table([0.0, 1.0]))
    np.testing.assert_allclose(g.grads, [-0.25, 0.25], atol=1e-15)


def test_analytic_toy_instance():
    # f(z) = 0.5 + (z+1)/(C*R) at zero logits: E = 0.5 + (C+1)/(2*C*R)
    c = r = 30
    fvals = 0.5 + (np.arange(c) + 1.0) / (c * r)
    g = analytic_grad_values(np.zeros(c), fvals)
    expected_e = 0.5 + (c + 1) / (2.0 * c * r)
    manual = (fvals - expected_e) / c
    np.testing.assert_allclose(g, manual, atol=1e-15)


def test_reinforce_zero_reward():
    g = reinforce_grad(np.zeros(4), RewardFn(lambda z: 0.0), RngStream(1))
    np.testing.assert_array_equal(g.grads, np.zeros(4))
    assert g.f_evals == 1


def test_reinforce_single_sample_value():
    # observing category 1 (0-based) of three with f=6 at uniform logits
    f = RewardFn(lambda z: 6.0 if z == 1 else 0.0)
    seen = None
    for seed in range(50):
        g = reinforce_grad(np.zeros(3), f, RngStream(seed))
        if g.grads[1] > 0:
            seen = g.grads
            break
    np.testing.assert_allclose(seen, [-2.0, 4.0, -2.0], atol=1e-12)


def test_ar_zero_cases():
    f = RewardFn(lambda z: 3.0)
    point = simplex_point(np.full(4, 0.25))
    g = ar_grad(np.array([0.1, 0.2, 0.3, 0.4]), f, point)
    np.testing.assert_allclose(g.grads, 0.0, atol=1e-15)
    g = ar_grad(np.zeros(3), RewardFn(lambda z: 0.0), sample_dirichlet_ones(3, RngStream(2)))
    np.testing.assert_array_equal(g.grads, np.zeros(3))


def test_ars_zero_sum_and_degenerate():
    stream = RngStream(5)
    phi = stream.derive(0).generator().normal(size=5)
    for trial in range(50):
        point = sample_dirichlet_ones(5, stream.derive(1, trial))
        ref = draw_reference(5, stream.derive(2, trial))
        g = ars_grad(phi, RewardFn(lambda z: float(z * z)), point, ref)
        assert abs(g.grads.sum()) < 1e-10
    # all pseudo actions identical -> bracket vanishes
    phi = np.array([50.0, 0.0, 0.0, 0.0, 0.0])
    point = sample_dirichlet_ones(5, stream.derive(3))
    g = ars_grad(phi, RewardFn(lambda z: float(z)), point, 2)
    np.testing.assert_allclose(g.grads, 0.0, atol=1e-15)


def test_arsm_zero_sum_and_degenerate():
    stream = RngStream(6)
    phi = stream.derive(0).generator().normal(size=6)
    for trial in range(50):
        point = sample_dirichlet_ones(6, stream.derive(1, trial))
        g = arsm_grad(phi, RewardFn(lambda z: float(z * z)), point)
        assert abs(g.grads.sum()) < 1e-10
    phi = np.array([50.0, 0.0, 0.0])
    point = simplex_point([0.2, 0.5, 0.3])
    f = RewardFn(lambda z: float(z + 1))
    g = arsm_grad(phi, f, point)
    np.testing.assert_array_equal(g.grads, np.zeros(3))
    assert g.f_evals == 1
    assert f.calls == 1


def test_arsm_f_evals_bounded():
    stream = RngStream(8)
    for c in (3, 5, 10):
        phi = stream.derive(c, 0).generator().normal(size=c)
        for trial in range(20):
            point = sample_dirichlet_ones(c, stream.derive(c, 1, trial))
            f = RewardFn(lambda z: float(z))
            g = arsm_grad(phi, f, point)
            assert g.f_evals == f.calls
            assert g.f_evals <= min(c * (c - 1) // 2 + 1, c)


def test_arsm_sparse_path_matches_dense():
    stream = RngStream(9)
    c = 24
    phi = stream.derive(0).generator().normal(scale=1.5, size=c)
    fvals = stream.derive(1).generator().normal(size=c)
    for trial in range(30):
        point = sample_dirichlet_ones(c, stream.derive(2, trial))
        dense = arsm_grad(phi, RewardFn.from_table(fvals), point)
        sparse = arsm_grad(phi, RewardFn.from_table(fvals), point, dense_limit=4)
        np.testing.assert_allclose(sparse.grads, dense.grads, atol=1e-12)
        assert sparse.f_evals == dense.f_evals


@pytest.mark.parametrize(
    "estimator", ["REINFORCE", "AR", "ARS", "ARSM"]
)
def test_mc_unbiasedness_moderate(estimator):
    # tighter statistical check lives in the acceptance suite at N=1e6
    c = 5
    stream = RngStream(200)
    phi = stream.derive(0).generator().normal(size=c)
    fvals = (np.arange(c) ** 2).astype(float)
    exact = analytic_grad_values(phi, fvals)
    mean, se = mc_grad_moments(estimator, phi, fvals, 120_000, stream.derive(1))
    z = (mean - exact) / se
    assert np.max(np.abs(z)) < 4.5


def test_batch_samples_zero_sum():
    c = 6
    stream = RngStream(210)
    phi = stream.derive(0).generator().normal(size=c)
    fvals = np.arange(c, dtype=float)
    s = arsm_grad_samples(phi, fvals, 2000, stream.derive(1).generator())
    assert np.max(np.abs(s.sum(axis=1))) < 1e-10
    s = estimator_samples("ARS", phi, fvals, 2000, stream.derive(2))
    assert np.max(np.abs(s.sum(axis=1))) < 1e-10


def test_arsm_single_matches_batch():
    c = 5
    stream = RngStream(220)
    phi = stream.derive(0).generator().normal(size=c)
    fvals = np.arange(c, dtype=float) ** 2
    pi, log_pi = sample_dirichlet_ones_batch(c, 40, stream.derive(1))
    batch = arsm_grad_samples_from(phi, fvals, pi, log_pi)
    for i in range(40):
        single = arsm_grad(phi, RewardFn.from_table(fvals), simplex_point(pi[i]))
        np.testing.assert_allclose(single.grads, batch[i], atol=1e-12)


def arsm_grad_samples_from(phi, fvals, pi, log_pi):
    from arsm.pseudo_actions import pseudo_action_tables_batch

    c = phi.shape[0]
    table = pseudo_action_tables_batch(phi, log_pi)
    F = np.asarray(fvals, dtype=float)[table]
    D = F - F.mean(axis=1, keepdims=True)
    return np.einsum("ncj,nj->nc", D, 1.0 / c - pi)


def test_corollary_binary_equivalence():
    # shared uniform draw: merge estimator with C=2 equals the binary form
    stream = RngStream(230)
    phi = np.array([0.7, -0.4])
    fvals = np.array([2.0, -1.0])
    u = open_uniform(stream.generator(), 5000)
    arm = arm_binary_grad_samples(phi, fvals, u)
    pi = np.stack([u, 1.0 - u], axis=1)
    merged = arsm_grad_samples_from(phi, fvals, pi, np.log(pi))
    np.testing.assert_allclose(arm[:, 0], merged[:, 0], atol=1e-12)
    np.testing.assert_allclose(arm[:, 1], merged[:, 1], atol=1e-12)


def test_arm_binary_single_sample():
    phi = np.array([0.3, -0.3])
    f = RewardFn.from_table([1.0, 4.0])
    g = arm_binary_grad(phi, f, 0.5)
    np.testing.assert_allclose(g.grads, 0.0, atol=1e-15)
    single = arm_binary_grad(phi, f, 0.97)
    point = simplex_point([0.97, 0.03])
    merged = arsm_grad(phi, RewardFn.from_table([1.0, 4.0]), point)
    np.testing.assert_allclose(single.grads[0], merged.grads[0], atol=1e-12)
    with pytest.raises(ValueError):
        arm_binary_grad(np.zeros(3), f, 0.2)


def test_multivariate_degenerate_and_zero_sum():
    k, c = 3, 4
    stream = RngStream(240)
    phi = np.zeros((k, c))
    phi[:, 0] = 50.0
    pi, log_pi = sample_dirichlet_heads(k, c, stream)
    f = RewardFn(lambda zv: float(np.sum(zv)))
    g = multivariate_grad(phi, f, pi, log_pi, "ARSM")
    np.testing.assert_array_equal(g.grads, np.zeros((k, c)))
    assert g.f_evals == 1

    phi = stream.derive(1).generator().normal(size=(k, c))
    for trial in range(30):
        pi, log_pi = sample_dirichlet_heads(k, c, stream.derive(2, trial))
        f = RewardFn(lambda zv: float(np.prod(zv + 1)))
        g = multivariate_grad(phi, f, pi, log_pi, "ARSM")
        assert np.max(np.abs(g.grads.sum(axis=1))) < 1e-10
        assert g.f_evals <= c * (c - 1) // 2 + 1


def test_multivariate_ars_reference_shape():
    k, c = 2, 3
    stream = RngStream(250)
    phi = stream.generator().normal(size=(k, c))
    pi, log_pi = sample_dirichlet_heads(k, c, stream.derive(1))
    f = RewardFn(lambda zv: float(zv[0] == 2))
    with pytest.raises(ValueError):
        multivariate_grad(phi, f, pi, log_pi, "ARS")
    g = multivariate_grad(phi, f, pi, log_pi, "ARS", references=np.array([0, 2]))
    assert g.grads.shape == (k, c)
    assert g.f_evals <= c
    assert np.max(np.abs(g.grads.sum(axis=1))) < 1e-10


def test_multivariate_arsm_unbiased_vs_enumeration():
    # K=2, C=3 indicator reward; exact gradient by enumerating all 9 outcomes
    k, c = 2, 3
    stream = RngStream(260)
    phi = stream.derive(0).generator().normal(size=(k, c))

    def f_vec(actions):
        return ((actions[..., 0] == 2) & (actions[..., 1] == 2)).astype(float)

    probs = softmax(phi, axis=1)
    exact = np.zeros((k, c))
    for z0 in range(c):
        for z1 in range(c):
            q = probs[0, z0] * probs[1, z1]
            val = float(z0 == 2 and z1 == 2)
            onehot = np.zeros((k, c))
            onehot[0, z0] = 1.0
            onehot[1, z1] = 1.0
            exact += q * val * (onehot - probs)

    mean, se = multivariate_arsm_mc_moments(phi, f_vec, 150_000, stream.derive(1))
    z = (mean - exact) / se
    assert np.max(np.abs(z)) < 4.5


def test_surrogate_loss_identity():
    g = np.array([[0.5, -0.5], [1.0, -1.0]])
    phi = np.array([[2.0, 1.0], [0.0, 3.0]])
    assert surrogate_loss(g, phi) == pytest.approx(float(np.sum(g * phi)))
    assert surrogate_loss(np.zeros_like(g), phi) == 0.0
    with pytest.raises(ValueError):
        surrogate_loss(np.zeros(3), np.zeros(4))


def test_negative_control_biased_probe_fails():
    # AR with a frozen pi (never resampled) is biased; the z-scores must blow up
    c = 5
    stream = RngStream(270)
    phi = stream.derive(0).generator().normal(size=c)
    fvals = np.arange(c, dtype=float)
    exact = analytic_grad_values(phi, fvals)
    pi, _ = sample_dirichlet_ones_batch(c, 1, stream.derive(1))
    frozen = np.repeat(pi, 50_000, axis=0)
    log_pi = np.log(frozen)
    z_draw = np.argmin(log_pi - phi[None, :], axis=1)
    est = fvals[z_draw][:, None] * (1.0 - c * frozen)
    mean = est.mean(axis=0)
    se = est.std(axis=0, ddof=1) / np.sqrt(est.shape[0]) + 1e-30
    assert np.max(np.abs((mean - exact) / se)) > 10.0
