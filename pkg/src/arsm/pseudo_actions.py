"""Swapped simplex points and the pseudo-action table.

For a racing draw z = argmin_i (log pi_i - logits_i), the (m, j) pseudo action
is the argmin after exchanging coordinates m and j of pi.  Only three
positions can win that race: the two swapped slots and the best unswapped
slot, so each entry is decided from O(1) candidates after an O(C log C)
precomputation.  ``pseudo_action_table_naive`` recomputes every argmin from
scratch and serves as the oracle the fast path must match exactly,
including tie cases (ties always resolve to the lowest index).

Above ``dense_limit`` categories the table is kept sparse: only entries that
differ from the true action are stored, which is what the merge estimator
needs and keeps very large category counts (e.g. C = 10,000) cheap.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .simplex import SimplexPoint, racing_sample, _check_logits

__all__ = [
    "PseudoActionTable",
    "swap",
    "pseudo_action_table_naive",
    "pseudo_action_table_fast",
    "pseudo_action_column",
    "pseudo_action_tables_batch",
    "pseudo_action_tables_batch_naive",
]

DENSE_LIMIT = 512


def swap(point: SimplexPoint, m: int, j: int) -> SimplexPoint:
    """Exchange coordinates m and j (0-based); swap(point, j, j) is the identity."""
    c = point.c
    if not (0 <= m < c and 0 <= j < c):
        raise ValueError(f"swap indices out of range for C={c}")
    if m == j:
        return point
    pi = point.pi.copy()
    log_pi = point.log_pi.copy()
    pi[[m, j]] = pi[[j, m]]
    log_pi[[m, j]] = log_pi[[j, m]]
    return SimplexPoint(pi=pi, log_pi=log_pi)


@dataclass
class PseudoActionTable:
    """All C x C swapped-race outcomes for one (logits, pi) draw.

    The diagonal equals the true action and the table is symmetric.  Dense
    storage keeps the full integer matrix; sparse storage keeps only the
    entries that differ from the true action, keyed by the unordered pair.
    """

    true_action: int
    c: int
    table: np.ndarray | None = None
    overrides: dict[tuple[int, int], int] | None = None
    unique_others: np.ndarray | None = None

    def entry(self, m: int, j: int) -> int:
        if self.table is not None:
            return int(self.table[m, j])
        key = (m, j) if m <= j else (j, m)
        return self.overrides.get(key, self.true_action)

    def column(self, j: int) -> np.ndarray:
        """Entries (c, j) for all c: the pseudo actions against reference j."""
        if self.table is not None:
            return self.table[:, j].copy()
        col = np.full(self.c, self.true_action, dtype=np.int64)
        for (a, b), v in self.overrides.items():
            if a == j:
                col[b] = v
            elif b == j:
                col[a] = v
        return col

    def unique_actions(self) -> np.ndarray:
        """Sorted distinct actions in the table, always including the true one."""
        return np.union1d(self.unique_others, [self.true_action])


def _finish_unique(z: int, values: np.ndarray) -> np.ndarray:
    others = np.unique(values)
    return others[others != z]


def pseudo_action_table_naive(logits, point: SimplexPoint) -> PseudoActionTable:
    """O(C^3) oracle: every entry from an explicit swap plus a fresh argmin."""
    phi = _check_logits(logits)
    if phi.shape != point.pi.shape:
        raise ValueError("dimension mismatch between logits and simplex point")
    c = point.c
    z = racing_sample(phi, point)
    table = np.full((c, c), z, dtype=np.int64)
    for m in range(c):
        for j in range(m):
            e = racing_sample(phi, swap(point, m, j))
            table[m, j] = e
            table[j, m] = e
    return PseudoActionTable(
        true_action=z, c=c, table=table, unique_others=_finish_unique(z, table.ravel())
    )


def _lex_min(v1, i1, v2, i2):
    # argmin tie rule: smaller value wins, equal values go to the lower index.
    take2 = (v2 < v1) | ((v2 == v1) & (i2 < i1))
    return np.where(take2, v2, v1), np.where(take2, i2, i1)


def _order3(race: np.ndarray) -> tuple[int, int, int]:
    order = np.argsort(race, kind="stable")
    b0 = int(order[0])
    b1 = int(order[1])
    b2 = int(order[2]) if race.shape[0] > 2 else -1
    return b0, b1, b2


def pair_entries(
    phi: np.ndarray,
    log_pi: np.ndarray,
    race: np.ndarray,
    order3: tuple[int, int, int],
    a: np.ndarray,
    b: np.ndarray,
) -> np.ndarray:
    """Swapped-race argmins for unordered index pairs (a_i, b_i), vectorized.

    After swapping, position a holds pi_b and position b holds pi_a; every
    other position keeps its race value, so the winner is the lex-min of
    those two moved values and the best untouched position (drawn from the
    three smallest original race values, of which at most two are excluded).
    """
    b0, b1, b2 = order3
    in0 = (a == b0) | (b == b0)
    in1 = (a == b1) | (b == b1)
    cand_idx = np.where(~in0, b0, np.where(~in1, b1, b2))
    cand_val = np.where(cand_idx >= 0, race[np.clip(cand_idx, 0, None)], np.inf)
    v_at_a = log_pi[b] - phi[a]
    v_at_b = log_pi[a] - phi[b]
    v, i = _lex_min(cand_val, cand_idx, v_at_a, a)
    _, i = _lex_min(v, i, v_at_b, b)
    return i


def _fast_dense(phi: np.ndarray, log_pi: np.ndarray, race: np.ndarray, z: int) -> PseudoActionTable:
    c = race.shape[0]
    order3 = _order3(race)
    m_idx, j_idx = np.meshgrid(np.arange(c), np.arange(c), indexing="ij")
    table = pair_entries(phi, log_pi, race, order3, m_idx.ravel(), j_idx.ravel())
    table = table.reshape(c, c).astype(np.int64)
    return PseudoActionTable(
        true_action=z, c=c, table=table, unique_others=_finish_unique(z, table.ravel())
    )


def _fast_sparse(phi: np.ndarray, log_pi: np.ndarray, race: np.ndarray, z: int) -> PseudoActionTable:
    c = race.shape[0]
    o_min = race[z]
    order3 = _order3(race)
    overrides: dict[tuple[int, int], int] = {}

    # Pairs involving the true action can move the winner anywhere, so each
    # is decided from its O(1) candidate set.
    others = np.arange(c)
    others = others[others != z]
    ents = pair_entries(
        phi, log_pi, race, order3, np.full(c - 1, z, dtype=np.int64), others
    )
    for m, e in zip(others.tolist(), ents.tolist()):
        if e != z:
            overrides[(min(m, z), max(m, z))] = int(e)

    # A pair that leaves z untouched can only beat it when a coordinate lands
    # on a slot whose logit pushes it below the current minimum; scan those.
    sorted_idx = np.argsort(log_pi, kind="stable")
    sorted_lp = log_pi[sorted_idx]
    thresholds = o_min + phi
    counts = np.searchsorted(sorted_lp, thresholds, side="right")
    pending_a: list[int] = []
    pending_b: list[int] = []
    seen: set[tuple[int, int]] = set()
    for j in range(c):
        if j == z or counts[j] == 0:
            continue
        for m in sorted_idx[: counts[j]].tolist():
            if m == j or m == z:
                continue
            key = (m, j) if m < j else (j, m)
            if key in seen:
                continue
            seen.add(key)
            pending_a.append(key[0])
            pending_b.append(key[1])
    if pending_a:
        a = np.asarray(pending_a, dtype=np.int64)
        b = np.asarray(pending_b, dtype=np.int64)
        ents = pair_entries(phi, log_pi, race, order3, a, b)
        for lo, hi, e in zip(pending_a, pending_b, ents.tolist()):
            if e != z:
                overrides[(lo, hi)] = int(e)

    uniques = np.unique(np.asarray(list(overrides.values()), dtype=np.int64))
    return PseudoActionTable(
        true_action=z, c=c, overrides=overrides, unique_others=uniques
    )


def pseudo_action_table_fast(
    logits, point: SimplexPoint, dense_limit: int = DENSE_LIMIT
) -> PseudoActionTable:
    """Full pseudo-action table without per-entry argmins; matches the naive oracle."""
    phi = _check_logits(logits)
    if phi.shape != point.pi.shape:
        raise ValueError("dimension mismatch between logits and simplex point")
    race = point.log_pi - phi
    z = int(np.argmin(race))
    if point.c <= dense_limit:
        return _fast_dense(phi, point.log_pi, race, z)
    return _fast_sparse(phi, point.log_pi, race, z)


def pseudo_action_column(logits, point: SimplexPoint, j: int) -> np.ndarray:
    """Pseudo actions against a single reference category, in O(C)."""
    phi = _check_logits(logits)
    if phi.shape != point.pi.shape:
        raise ValueError("dimension mismatch between logits and simplex point")
    c = point.c
    if not 0 <= j < c:
        raise ValueError(f"reference {j} out of range for C={c}")
    race = point.log_pi - phi
    order3 = _order3(race)
    cs = np.arange(c, dtype=np.int64)
    return pair_entries(
        phi, point.log_pi, race, order3, cs, np.full(c, j, dtype=np.int64)
    ).astype(np.int64)


def _batch_order3(race: np.ndarray) -> np.ndarray:
    n, c = race.shape
    order = np.argsort(race, axis=1, kind="stable")[:, : min(3, c)]
    if c == 2:
        order = np.concatenate([order, np.full((n, 1), -1, dtype=order.dtype)], axis=1)
    return order


def pseudo_action_tables_batch(logits, log_pi: np.ndarray) -> np.ndarray:
    """Tables for a batch of simplex draws; returns (n, C, C) int16.

    Fully vectorized over rows and pairs; callers chunk the batch to keep
    the O(n * C^2) temporaries bounded.  The best untouched position per
    pair is selected from per-row scalars (the three smallest race values),
    avoiding any per-pair gather.
    """
    phi = _check_logits(logits)
    c = phi.shape[0]
    n = log_pi.shape[0]
    race = log_pi - phi[None, :]
    order = _batch_order3(race).astype(np.int16)
    rows = np.arange(n)
    b0 = order[:, 0][:, None, None]
    b1 = order[:, 1][:, None, None]
    b2 = order[:, 2][:, None, None]
    v0 = race[rows, order[:, 0]][:, None, None]
    v1 = race[rows, order[:, 1]][:, None, None]
    v2 = (
        race[rows, np.clip(order[:, 2], 0, None)][:, None, None]
        if c > 2
        else np.full((n, 1, 1), np.inf)
    )
    m_idx = np.arange(c, dtype=np.int16)[None, :, None]
    j_idx = np.arange(c, dtype=np.int16)[None, None, :]
    in0 = (m_idx == b0) | (j_idx == b0)
    in1 = (m_idx == b1) | (j_idx == b1)
    pick1 = in0 & ~in1
    pick2 = in0 & in1
    cand_idx = np.where(pick1, b1, np.where(pick2, b2, b0))
    cand_val = np.where(pick1, v1, np.where(pick2, v2, v0))
    o = log_pi[:, :, None] - phi[None, None, :]  # o[i, a, b] = log pi_a - phi_b
    v, i = _lex_min(cand_val, cand_idx, o.transpose(0, 2, 1), m_idx)
    _, i = _lex_min(v, i, o, j_idx)
    return i.astype(np.int16, copy=False)


def pseudo_action_tables_batch_naive(logits, log_pi: np.ndarray) -> np.ndarray:
    """Batched oracle: one full argmin per swapped race."""
    phi = _check_logits(logits)
    c = phi.shape[0]
    n = log_pi.shape[0]
    race = log_pi - phi[None, :]
    z = np.argmin(race, axis=1)
    table = np.empty((n, c, c), dtype=np.int16)
    table[:] = z[:, None, None].astype(np.int16)
    for m in range(c):
        for j in range(m):
            swapped = race.copy()
            swapped[:, m] = log_pi[:, j] - phi[m]
            swapped[:, j] = log_pi[:, m] - phi[j]
            e = np.argmin(swapped, axis=1)
            table[:, m, j] = e
            table[:, j, m] = e
    return table
