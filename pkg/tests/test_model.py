import math

import numpy as np
import pytest

from hdpcrf.conjugate import GammaPoissonParams, NormalGammaParams
from hdpcrf.model import (
    GroupedDataset,
    HdpHyper,
    InconsistentState,
    ModelError,
    SeatingState,
    check_consistency,
    crf_log_prior,
    init_seating,
    log_joint,
)
from hdpcrf.oracle import set_partitions

GP11 = GammaPoissonParams(1.0, 1.0)


def hyper(a0=1.0, g=1.0, prior=GP11):
    return HdpHyper(g, a0, prior)


def test_dataset_validation():
    with pytest.raises(ModelError):
        GroupedDataset.counts([])
    with pytest.raises(ModelError):
        GroupedDataset.counts([[1], []])
    with pytest.raises(ModelError):
        GroupedDataset.counts([[1, -2]])
    with pytest.raises(ModelError):
        GroupedDataset.vectors([[[1.0, 2.0], [1.0]]])
    with pytest.raises(ModelError):
        GroupedDataset.vectors([[[1.0, math.inf]]])


def test_init_together():
    data = GroupedDataset.counts([[1, 2, 3]])
    s = init_seating(data, GP11, "together")
    assert s.num_tables == 1 and s.num_dishes == 1 and s.n_jt == [[3]]
    assert check_consistency(s, data) == []


def test_init_singleton():
    data = GroupedDataset.counts([[1, 2], [3, 4]])
    s = init_seating(data, GP11, "singleton")
    assert s.num_tables == 4 and s.num_dishes == 4
    assert all(n == 1 for row in s.n_jt for n in row)
    assert check_consistency(s, data) == []


def test_init_rejects_bad_mode_and_family():
    data = GroupedDataset.counts([[1]])
    with pytest.raises(ModelError):
        init_seating(data, GP11, "random")
    with pytest.raises(ModelError):
        init_seating(data, NormalGammaParams((0.0,), 1, 1, 1))


def test_consistency_reports_count_fault():
    data = GroupedDataset.counts([[1, 2, 3]])
    s = init_seating(data, GP11)
    s.n_jt[0][0] -= 1
    problems = check_consistency(s, data)
    assert any("table (0,0)" in p for p in problems)


def test_consistency_reports_stale_dish_stats():
    data = GroupedDataset.counts([[1, 2], [5]])
    s = init_seating(data, GP11, "singleton")
    s.dish_stats[1].add(7)
    problems = check_consistency(s, data)
    assert any("dish 1" in p and "stale" in p for p in problems)


def test_consistency_reports_stale_vector_stats():
    data = GroupedDataset.vectors([[[0.0, 1.0], [2.0, 2.0]]])
    s = init_seating(data, NormalGammaParams((0.0, 0.0), 1, 1, 1))
    s.dish_stats[0].sum_sq += 1.0
    assert any("dish 0" in p for p in check_consistency(s, data))


def test_crf_prior_single_customer():
    data = GroupedDataset.counts([[4]])
    s = init_seating(data, GP11)
    for a0, g in [(1.0, 1.0), (0.3, 7.0)]:
        assert crf_log_prior(s, hyper(a0, g)) == pytest.approx(0.0, abs=1e-15)


def test_crf_prior_two_customers_one_table():
    data = GroupedDataset.counts([[0, 0]])
    s = init_seating(data, GP11, "together")
    assert crf_log_prior(s, hyper(1.0, 1.0)) == pytest.approx(math.log(0.5), abs=1e-15)


def test_crf_prior_two_tables_one_dish():
    data = GroupedDataset.counts([[0, 0]])
    s = SeatingState.from_assignments(data, GP11, [[0, 1]], [[0, 0]])
    assert crf_log_prior(s, hyper(1.0, 1.0)) == pytest.approx(math.log(0.25), abs=1e-15)


def test_crf_prior_rejects_detached_state():
    data = GroupedDataset.counts([[0, 0]])
    s = init_seating(data, GP11)
    s.unseat(0, 0, 0)
    with pytest.raises(InconsistentState):
        crf_log_prior(s, hyper())


def _all_states(data, prior):
    """Every seating of ``data`` as a SeatingState (brute force)."""
    group_parts = [list(set_partitions(n)) for n in data.sizes]

    def rec(j, acc):
        if j == len(group_parts):
            yield acc
            return
        for p in group_parts[j]:
            yield from rec(j + 1, acc + [p])

    for tabs in rec(0, []):
        ntab = [1 + max(p) for p in tabs]
        flat = [(j, t) for j, T in enumerate(ntab) for t in range(T)]
        for rgs in set_partitions(len(flat)):
            dishes = {key: k for key, k in zip(flat, rgs)}
            yield SeatingState.from_assignments(data, prior, tabs, dishes)


@pytest.mark.parametrize("sizes", [[1], [2], [3], [4], [1, 1], [2, 1], [2, 2], [3, 1]])
@pytest.mark.parametrize("a0, g", [(1.0, 1.0), (0.4, 2.5)])
def test_crf_prior_normalises(sizes, a0, g):
    data = GroupedDataset.counts([[0] * n for n in sizes])
    logs = [crf_log_prior(s, hyper(a0, g)) for s in _all_states(data, GP11)]
    top = max(logs)
    total = top + math.log(math.fsum(math.exp(v - top) for v in logs))
    assert abs(total) < 1e-10


def test_log_joint_single_observation():
    data = GroupedDataset.counts([[0]])
    s = init_seating(data, GP11)
    assert log_joint(s, data, hyper()) == pytest.approx(math.log(0.5), abs=1e-15)


def test_log_joint_order_invariant():
    data = GroupedDataset.counts([[1, 5, 2, 9], [0, 3]])
    tables = [[0, 1, 0, 2], [0, 0]]
    dishes = [[0, 1, 0], [1]]
    s = SeatingState.from_assignments(data, GP11, tables, dishes)
    order = [[3, 1, 0, 2], [1, 0]]
    pdata = data.permuted(order)
    ptables = [[tables[j][i] for i in o] for j, o in enumerate(order)]
    ps = SeatingState.from_assignments(pdata, GP11, ptables, dishes)
    assert log_joint(s, data, hyper()) == pytest.approx(log_joint(ps, pdata, hyper()), abs=1e-12)


def test_log_joint_relabel_invariant():
    data = GroupedDataset.vectors([[[0.1], [2.0], [0.3]], [[2.2], [-1.0]]])
    prior = NormalGammaParams((0.0,), 1.0, 2.0, 1.0)
    a = SeatingState.from_assignments(data, prior, [[0, 1, 0], [0, 1]], [[0, 1], [1, 2]])
    b = SeatingState.from_assignments(data, prior, [["x", "y", "x"], [9, 4]],
                                      {(0, "x"): "c", (0, "y"): "a", (1, 9): "a", (1, 4): "b"})
    h = hyper(0.7, 1.3, prior)
    assert a.canonical() == b.canonical()
    assert log_joint(a, data, h) == pytest.approx(log_joint(b, data, h), abs=1e-12)


def test_log_joint_after_removal_matches_scratch():
    # incremental removal of one customer equals rebuilding without it
    data = GroupedDataset.counts([[1, 5, 2], [0, 3]])
    tables = [[0, 1, 0], [0, 0]]
    dishes = [[0, 1], [1]]
    s = SeatingState.from_assignments(data, GP11, tables, dishes)
    s.unseat(0, 1, 5)  # empties table 1 of group 0; dish 1 survives via group 1
    reduced = GroupedDataset.counts([[1, 2], [0, 3]])
    scratch = SeatingState.from_assignments(reduced, GP11, [[0, 0], [0, 0]], [[0], [1]])
    rebuilt = SeatingState.from_assignments(reduced, GP11, [[s.table_of[0][0], s.table_of[0][2]], s.table_of[1]],
                                            s.dish_of_table)
    h = hyper(1.0, 1.0)
    assert log_joint(rebuilt, reduced, h) == pytest.approx(log_joint(scratch, reduced, h), abs=1e-12)
    assert s.num_dishes == 2 and s.m_k == [1, 1]


def test_swap_with_last_compaction():
    data = GroupedDataset.counts([[1, 2, 3]])
    s = init_seating(data, GP11, "singleton")
    s.relabels = []
    s.unseat(0, 0, 1)
    assert s.num_tables == 2 and s.num_dishes == 2
    assert s.table_of[0] == [-1, 1, 0]
    assert ("table", 0, 2, 0) in s.relabels and ("dish", None, 2, 0) in s.relabels
    s.seat(0, 0, 1, 0)
    assert check_consistency(s, data) == []


def test_canonical_is_label_free():
    data = GroupedDataset.counts([[1, 2, 3], [4]])
    a = SeatingState.from_assignments(data, GP11, [[5, 5, 2], [0]], {(0, 5): 1, (0, 2): 0, (1, 0): 1})
    assert a.canonical() == (((0, 0, 1), (0,)), ((0, 1), (0,)))


def test_state_copy_is_independent():
    data = GroupedDataset.counts([[1, 2]])
    s = init_seating(data, GP11)
    c = s.copy()
    c.unseat(0, 0, 1)
    assert check_consistency(s, data) == []
