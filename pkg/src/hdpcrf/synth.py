"""Forward sampling from the HDP through its Chinese restaurant franchise.

Random variates come from ``numpy.random.Generator``.  Gamma draws use
numpy's Marsaglia-Tsang sampler; for shape < 1 it draws at shape + 1 and
rescales by ``U**(1/shape)``, which is exact for small shapes.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from hdpcrf.conjugate import FamilyPrior, GammaPoissonParams, NormalGammaParams
from hdpcrf.model import GroupedDataset, HdpHyper, SeatingState


class UnknownScenario(KeyError):
    pass


def sample_crf_seating(gamma: float, alpha0: float, group_sizes, rng: np.random.Generator):
    """Sequential two-level Polya urn.

    Returns ``(tables, dishes)``: ``tables[j][i]`` is the table of customer i
    and ``dishes[j][t]`` the dish of table t, all in order of creation.
    """
    if len(group_sizes) == 0 or any(int(n) != n or n < 1 for n in group_sizes):
        raise ValueError(f"group sizes must be positive integers, got {group_sizes!r}")
    m_k: list[int] = []
    tables, dishes = [], []
    for nj in group_sizes:
        n_t: list[int] = []
        tab: list[int] = []
        dsh: list[int] = []
        for i in range(int(nj)):
            # P(table t) = n_t / (i + alpha0), P(new) = alpha0 / (i + alpha0)
            u = rng.random() * (i + alpha0)
            t = _pick(n_t, u)
            if t == len(n_t):
                v = rng.random() * (sum(m_k) + gamma)
                k = _pick(m_k, v)
                if k == len(m_k):
                    m_k.append(0)
                m_k[k] += 1
                n_t.append(0)
                dsh.append(k)
            n_t[t] += 1
            tab.append(t)
        tables.append(tab)
        dishes.append(dsh)
    return tables, dishes


def _pick(weights, u) -> int:
    acc = 0.0
    for idx, w in enumerate(weights):
        acc += w
        if u < acc:
            return idx
    return len(weights)


@dataclass
class ForwardSample:
    data: GroupedDataset
    state: SeatingState
    dish_params: list
    tables: list
    dishes: list


def _draw_data(prior: FamilyPrior, tables, dishes, params, rng):
    groups = []
    for tab, dsh in zip(tables, dishes):
        groups.append([prior.sample_obs(params[dsh[t]], rng, 1)[0] for t in tab])
    if isinstance(prior, GammaPoissonParams):
        return GroupedDataset.counts(groups)
    return GroupedDataset.vectors(groups)


def forward_sample(hyper: HdpHyper, group_sizes, rng: np.random.Generator) -> ForwardSample:
    """Draw seating, one parameter per dish from the base measure, and data."""
    prior = hyper.family_prior
    tables, dishes = sample_crf_seating(hyper.gamma, hyper.alpha0, group_sizes, rng)
    K = 1 + max(max(d) for d in dishes)
    params = [prior.sample_param(rng) for _ in range(K)]
    data = _draw_data(prior, tables, dishes, params, rng)
    state = SeatingState.from_assignments(data, prior, tables, dishes)
    return ForwardSample(data, state, params, tables, dishes)


def resample_data(prior: FamilyPrior, state: SeatingState, rng: np.random.Generator) -> GroupedDataset:
    """Fresh data given the seating: one new parameter per dish, then
    observations.  Exact draw from p(x | seating) with parameters integrated."""
    params = [prior.sample_param(rng) for _ in range(state.num_dishes)]
    return _draw_data(prior, state.table_of, state.dish_of_table, params, rng)


# ---------------------------------------------------------------------------
# canned scenarios
# ---------------------------------------------------------------------------


@dataclass
class Scenario:
    name: str
    data: GroupedDataset
    labels: list  # labels[j][i]: true dish of each observation
    dish_params: list
    hyper: HdpHyper

    @property
    def num_dishes(self) -> int:
        return len(self.dish_params)


def _gp_3rates() -> Scenario:
    rng = np.random.default_rng(20240301)
    rates = [1.0, 20.0, 400.0]
    groups, labels = [], []
    for j in range(3):
        lab = [k for k in range(3) for _ in range(10)]
        groups.append([int(rng.poisson(rates[k])) for k in lab])
        labels.append(lab)
    hyper = HdpHyper(1.0, 1.0, GammaPoissonParams(1.0, 0.01))
    return Scenario("gp-3rates", GroupedDataset.counts(groups, ["g0", "g1", "g2"]),
                    labels, rates, hyper)


def _ng_3means() -> Scenario:
    rng = np.random.default_rng(20240302)
    means = [np.array([0.0, 0.0]), np.array([5.0, 5.0]), np.array([-5.0, 5.0])]
    groups, labels = [], []
    for j in range(3):
        lab = [k for k in range(3) for _ in range(10)]
        groups.append([rng.normal(means[k], 1.0) for k in lab])
        labels.append(lab)
    hyper = HdpHyper(1.0, 1.0, NormalGammaParams((0.0, 0.0), 0.01, 3.0, 3.0))
    params = [(m.tolist(), 1.0) for m in means]
    return Scenario("ng-3means", GroupedDataset.vectors(groups, ["g0", "g1", "g2"]),
                    labels, params, hyper)


SCENARIOS = {"gp-3rates": _gp_3rates, "ng-3means": _ng_3means}


def fixed_scenario(name: str) -> Scenario:
    """Deterministic dataset with known ground truth."""
    try:
        return SCENARIOS[name]()
    except KeyError:
        raise UnknownScenario(f"unknown scenario {name!r}; choose from {sorted(SCENARIOS)}") from None
