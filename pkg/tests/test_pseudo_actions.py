"""Swap construction and fast/naive pseudo-action table equivalence."""

import time

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from arsm.pseudo_actions import (
    pseudo_action_column,
    pseudo_action_table_fast,
    pseudo_action_table_naive,
    pseudo_action_tables_batch,
    pseudo_action_tables_batch_naive,
    swap,
)
from arsm.rng import RngStream
from arsm.simplex import sample_dirichlet_ones, sample_dirichlet_ones_batch, simplex_point


def random_instance(c, stream):
    phi = stream.derive(0).generator().normal(scale=2.0, size=c)
    point = sample_dirichlet_ones(c, stream.derive(1))
    return phi, point


def test_swap_basic():
    p = simplex_point([0.2, 0.3, 0.5])
    np.testing.assert_array_equal(swap(p, 0, 2).pi, [0.5, 0.3, 0.2])


def test_swap_identity_and_involution():
    p = sample_dirichlet_ones(5, RngStream(1))
    assert swap(p, 2, 2) is p
    q = swap(swap(p, 1, 3), 1, 3)
    np.testing.assert_array_equal(q.pi, p.pi)
    np.testing.assert_array_equal(q.log_pi, p.log_pi)


def test_swap_out_of_range():
    p = simplex_point([0.5, 0.5])
    with pytest.raises(ValueError):
        swap(p, 0, 2)


@given(st.integers(0, 4), st.integers(0, 4))
@settings(max_examples=25)
def test_swap_is_permutation(m, j):
    p = sample_dirichlet_ones(5, RngStream(9))
    q = swap(p, m, j)
    np.testing.assert_array_equal(np.sort(q.pi), np.sort(p.pi))


def test_naive_table_structure_binary():
    phi = np.array([0.4, -0.7])
    point = simplex_point([0.3, 0.7])
    tab = pseudo_action_table_naive(phi, point)
    assert tab.table[0, 1] == tab.table[1, 0]
    assert len(np.unique(tab.table)) <= 2


def test_dominant_logit_all_entries_true_action():
    phi = np.array([50.0, 0.0, 0.0, 0.0])
    point = simplex_point([0.1, 0.3, 0.35, 0.25])
    tab = pseudo_action_table_naive(phi, point)
    assert tab.true_action == 0
    assert np.all(tab.table == 0)
    assert tab.unique_others.size == 0
    fast = pseudo_action_table_fast(phi, point)
    assert np.array_equal(fast.table, tab.table)


@pytest.mark.parametrize("c", [2, 3, 5, 8, 13])
def test_fast_equals_naive_random(c):
    for trial in range(40):
        phi, point = random_instance(c, RngStream(100 + c, trial))
        naive = pseudo_action_table_naive(phi, point)
        fast = pseudo_action_table_fast(phi, point)
        assert fast.true_action == naive.true_action
        np.testing.assert_array_equal(fast.table, naive.table)
        np.testing.assert_array_equal(fast.unique_others, naive.unique_others)


def test_table_invariants_random():
    for trial in range(30):
        phi, point = random_instance(6, RngStream(7, trial))
        tab = pseudo_action_table_fast(phi, point)
        assert np.array_equal(tab.table, tab.table.T)
        assert np.all(np.diag(tab.table) == tab.true_action)
        assert 0 <= tab.unique_others.size <= 5
        # unique_others empty iff every entry equals the true action
        assert (tab.unique_others.size == 0) == bool(np.all(tab.table == tab.true_action))


def test_uniform_logits_structure():
    phi = np.zeros(5)
    point = sample_dirichlet_ones(5, RngStream(77))
    tab = pseudo_action_table_fast(phi, point)
    naive = pseudo_action_table_naive(phi, point)
    np.testing.assert_array_equal(tab.table, naive.table)
    assert np.all(np.diag(tab.table) == tab.true_action)


def test_tie_heavy_instances():
    # duplicated pi coordinates and logits force exact float ties; the fast
    # path must still resolve every entry exactly like the argmin oracle
    phi = np.array([0.0, 1.0, 0.0, 1.0, 0.0])
    pi = np.array([0.2, 0.2, 0.2, 0.2, 0.2])
    point = simplex_point(pi)
    naive = pseudo_action_table_naive(phi, point)
    fast = pseudo_action_table_fast(phi, point)
    np.testing.assert_array_equal(fast.table, naive.table)

    phi = np.zeros(4)
    point = simplex_point([0.25, 0.25, 0.3, 0.2])
    np.testing.assert_array_equal(
        pseudo_action_table_fast(phi, point).table,
        pseudo_action_table_naive(phi, point).table,
    )


def test_sparse_matches_dense():
    for trial in range(20):
        phi, point = random_instance(40, RngStream(900, trial))
        dense = pseudo_action_table_fast(phi, point)
        sparse = pseudo_action_table_fast(phi, point, dense_limit=8)
        assert sparse.table is None
        assert sparse.true_action == dense.true_action
        np.testing.assert_array_equal(sparse.unique_others, dense.unique_others)
        for j in range(40):
            np.testing.assert_array_equal(sparse.column(j), dense.table[:, j])


def test_sparse_large_c_is_fast():
    c = 10_000
    stream = RngStream(123)
    # trained-looking logits: one strongly preferred category
    phi = stream.derive(0).generator().normal(scale=0.1, size=c)
    phi[17] += 12.0
    point = sample_dirichlet_ones(c, stream.derive(1))
    start = time.perf_counter()
    tab = pseudo_action_table_fast(phi, point)
    elapsed = time.perf_counter() - start
    assert elapsed < 1.0
    assert tab.c == c
    assert tab.entry(3, 3) == tab.true_action


def test_batch_fast_equals_batch_naive():
    for c in (2, 3, 7, 12, 20):
        stream = RngStream(300 + c)
        phi = stream.derive(0).generator().normal(scale=1.5, size=c)
        _, log_pi = sample_dirichlet_ones_batch(c, 400, stream.derive(1))
        fast = pseudo_action_tables_batch(phi, log_pi)
        naive = pseudo_action_tables_batch_naive(phi, log_pi)
        np.testing.assert_array_equal(fast, naive)


def test_batch_matches_single_instance():
    c = 6
    stream = RngStream(55)
    phi = stream.derive(0).generator().normal(size=c)
    pi, log_pi = sample_dirichlet_ones_batch(c, 25, stream.derive(1))
    batch = pseudo_action_tables_batch(phi, log_pi)
    for i in range(25):
        point = simplex_point(pi[i])
        single = pseudo_action_table_fast(phi, point)
        np.testing.assert_array_equal(batch[i], single.table)


def test_column_matches_table():
    for trial in range(20):
        phi, point = random_instance(7, RngStream(61, trial))
        tab = pseudo_action_table_naive(phi, point)
        for j in range(7):
            np.testing.assert_array_equal(pseudo_action_column(phi, point, j), tab.table[:, j])


def test_confidence_shrinks_pseudo_actions():
    # pushing one logit up should (weakly) shrink the expected number of
    # distinct pseudo actions
    c = 8
    n = 10_000
    means, ses = [], []
    for t in (0.0, 2.0, 4.0, 8.0):
        phi = np.zeros(c)
        phi[0] = t
        _, log_pi = sample_dirichlet_ones_batch(c, n, RngStream(71, int(t)))
        tables = pseudo_action_tables_batch(phi, log_pi)
        z = tables[:, 0, 0]
        counts = np.array(
            [np.setdiff1d(tables[i].ravel(), [z[i]]).size for i in range(n)]
        )
        means.append(counts.mean())
        ses.append(counts.std(ddof=1) / np.sqrt(n))
    for a, b, se_a, se_b in zip(means[1:], means[:-1], ses[1:], ses[:-1]):
        assert a <= b + 2 * np.hypot(se_a, se_b)


def test_dimension_mismatch():
    point = simplex_point([0.5, 0.5])
    with pytest.raises(ValueError):
        pseudo_action_table_fast(np.zeros(3), point)
    with pytest.raises(ValueError):
        pseudo_action_table_naive(np.zeros(3), point)
