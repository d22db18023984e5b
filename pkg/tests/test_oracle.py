import math

import numpy as np
import pytest

from hdpcrf.conjugate import GammaPoissonParams, NormalGammaParams
from hdpcrf.model import GroupedDataset, HdpHyper
from hdpcrf.oracle import (
    STAT_NAMES,
    InstanceTooLarge,
    QuadSpec,
    enumerate_exact_posterior,
    geweke_check,
    half_line_log_integral,
    label_agreement,
    quad_log_evidence_ng,
    quad_pred_gp,
    quad_pred_ng,
    set_partitions,
    total_variation,
)
from hdpcrf.validation import TWO_CUSTOMER, TWO_CUSTOMER_EXPECTED

GP11 = GammaPoissonParams(1.0, 1.0)
NG1 = NormalGammaParams((0.0,), 1.0, 1.0, 1.0)


def test_quad_spec_validation():
    with pytest.raises(ValueError):
        QuadSpec(nodes=16)
    with pytest.raises(ValueError):
        QuadSpec(rtol=0.0)


def test_half_line_integral_gamma_function():
    # int_0^inf v^(a-1) e^-v dv = Gamma(a), written in s = log v
    for a in (0.3, 1.0, 4.5, 60.0):
        got = half_line_log_integral(lambda s: a * s - np.exp(s))
        assert got == pytest.approx(math.lgamma(a), abs=1e-11)


def test_quad_pred_gp_examples():
    assert quad_pred_gp(GP11, [], 0) == pytest.approx(0.5, rel=1e-12)
    assert quad_pred_gp(GP11, [2], 0) == pytest.approx(8 / 27, rel=1e-12)
    # geometric(1/2) prior predictive
    assert quad_pred_gp(GP11, [], 3) == pytest.approx(1 / 16, rel=1e-12)


def test_quad_pred_gp_stable_under_node_doubling():
    prior = GammaPoissonParams(0.7, 2.0)
    a = quad_pred_gp(prior, [3, 0, 8], 2, QuadSpec(nodes=64))
    b = quad_pred_gp(prior, [3, 0, 8], 2, QuadSpec(nodes=512))
    assert a == pytest.approx(b, rel=1e-12)


def test_quad_pred_ng_examples():
    assert quad_pred_ng(NG1, [], 0.0) == pytest.approx(0.25, rel=1e-12)
    sym = [-1.2, 1.2, 0.4, -0.4]
    for x in (0.3, 2.0):
        assert quad_pred_ng(NG1, sym, x) == pytest.approx(quad_pred_ng(NG1, sym, -x), rel=1e-12)


def test_quad_ng_rejects_vectors():
    with pytest.raises(ValueError):
        quad_log_evidence_ng(NormalGammaParams((0.0, 0.0), 1, 1, 1), [[1.0, 2.0]])


def test_set_partitions_bell_numbers():
    assert [len(list(set_partitions(n))) for n in range(1, 7)] == [1, 2, 5, 15, 52, 203]
    assert list(set_partitions(0)) == [()]


def test_enumeration_two_customers():
    post = enumerate_exact_posterior(*TWO_CUSTOMER)
    assert set(post) == set(TWO_CUSTOMER_EXPECTED)
    for cfg, p in TWO_CUSTOMER_EXPECTED.items():
        assert post[cfg] == pytest.approx(p, abs=1e-12)


def test_enumeration_single_customer():
    post = enumerate_exact_posterior(GroupedDataset.counts([[3]]), HdpHyper(2.0, 0.5, GP11))
    assert post == {(((0,),), ((0,),)): pytest.approx(1.0, abs=1e-15)}


@pytest.mark.parametrize("values", [[[0, 1, 1]], [[0, 2], [1]], [[1, 0], [0, 3]]])
def test_enumeration_sums_to_one_and_is_order_free(values):
    h = HdpHyper(1.3, 0.6, GammaPoissonParams(2.0, 1.5))
    post = enumerate_exact_posterior(GroupedDataset.counts(values), h)
    assert math.fsum(post.values()) == pytest.approx(1.0, abs=1e-12)
    rev = enumerate_exact_posterior(GroupedDataset.counts([v[::-1] for v in values]), h)
    # reversing observations maps configs through a relabelling, so compare the
    # sorted probability multisets
    assert sorted(post.values()) == pytest.approx(sorted(rev.values()), abs=1e-12)


def test_enumeration_order_free_exact_configs():
    h = HdpHyper(1.0, 1.0, GP11)
    a = enumerate_exact_posterior(GroupedDataset.counts([[0, 0, 1]]), h)
    b = enumerate_exact_posterior(GroupedDataset.counts([[0, 1, 0]]), h)
    # swapping two equal-valued customers leaves each config's probability
    # unchanged when the seating is permuted along with them
    perm = (0, 2, 1)
    for (tabs, dishes), p in a.items():
        t = [tabs[0][i] for i in perm]
        relabel = {}
        for v in t:
            relabel.setdefault(v, len(relabel))
        canon_t = tuple(relabel[v] for v in t)
        old = {new: old for old, new in relabel.items()}
        canon_d = tuple(dishes[0][old[n]] for n in range(len(relabel)))
        rd = {}
        for v in canon_d:
            rd.setdefault(v, len(rd))
        key = ((canon_t,), (tuple(rd[v] for v in canon_d),))
        assert b[key] == pytest.approx(p, abs=1e-13)


def test_enumeration_limit():
    with pytest.raises(InstanceTooLarge):
        enumerate_exact_posterior(GroupedDataset.counts([[0] * 9]), HdpHyper(1, 1, GP11))


def test_total_variation():
    assert total_variation({"a": 1.0}, {"b": 1.0}) == 1.0
    assert total_variation({"a": 0.5, "b": 0.5}, {"a": 0.25, "b": 0.75}) == 0.25


GEWEKE_GP = HdpHyper(1.0, 1.0, GammaPoissonParams(2.0, 1.0))


def test_geweke_report_shape():
    rep = geweke_check(GEWEKE_GP, [2, 2], 500, np.random.default_rng(0), batches=10)
    assert [s.name for s in rep.stats] == list(STAT_NAMES)
    assert all(math.isfinite(s.z) for s in rep.stats)


def test_geweke_flags_corrupted_sampler():
    rep = geweke_check(GEWEKE_GP, [3, 3], 5000, np.random.default_rng(3), fault="skip-detach", batches=50)
    assert rep.max_abs_z > 4


def test_geweke_normal_gamma_small():
    h = HdpHyper(1.0, 1.0, NormalGammaParams((0.0,), 1.0, 3.0, 2.0))
    rep = geweke_check(h, [2, 2], 3000, np.random.default_rng(8), batches=50)
    assert rep.max_abs_z < 4


def test_label_agreement():
    assert label_agreement([0, 0, 1, 1], [5, 5, 2, 2]) == 1.0
    assert label_agreement([0, 0, 1, 1], [0, 0, 0, 0]) == 0.5
    assert label_agreement([[0, 1], [2]], [[1, 0], [0]]) == pytest.approx(2 / 3)
    with pytest.raises(ValueError):
        label_agreement([0], [0, 1])
