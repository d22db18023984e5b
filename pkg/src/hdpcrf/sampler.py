"""Fully collapsed Gibbs sampler for the Chinese restaurant franchise.

Dish parameters are never instantiated: every weight is a posterior
predictive computed from the sufficient statistics held by the seating
state.  One sweep resamples every customer's table and then every table's
dish.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from math import log

import numpy as np

from hdpcrf.model import (
    NEW,
    ChainTrace,
    GroupedDataset,
    HdpHyper,
    InconsistentState,
    SeatingState,
    check_consistency,
    init_seating,
    log_joint,
)

FAULTS = (None, "skip-detach")


@dataclass(frozen=True)
class SamplerConfig:
    sweeps: int = 100
    burn_in: int = 0
    snapshot_every: int = 0
    rng_seed: int = 0
    scan_order: str = "shuffled"  # or "fixed"
    init_mode: str = "together"
    debug: bool = False

    def __post_init__(self):
        if self.sweeps < 1:
            raise ValueError("sweeps must be >= 1")
        if not 0 <= self.burn_in < self.sweeps:
            raise ValueError("burn_in must satisfy 0 <= burn_in < sweeps")
        if self.snapshot_every < 0:
            raise ValueError("snapshot_every must be >= 0")
        if self.scan_order not in ("shuffled", "fixed"):
            raise ValueError(f"unknown scan order {self.scan_order!r}")


def chain_rng(seed: int, chain: int = 0) -> np.random.Generator:
    """Independent stream for chain ``chain`` derived from the run seed."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(chain,)))


def sample_log_categorical(logw, rng: np.random.Generator) -> int:
    """Inverse-CDF draw from unnormalised log weights (one uniform)."""
    m = max(logw)
    if m == -math.inf or m != m:
        raise FloatingPointError("categorical weights have no finite support")
    w = [math.exp(v - m) for v in logw]
    u = rng.random() * sum(w)
    acc = 0.0
    last = len(w) - 1
    for idx in range(last):
        acc += w[idx]
        if u < acc:
            return idx
    return last


# ---------------------------------------------------------------------------
# weights
# ---------------------------------------------------------------------------


def customer_log_preds(state: SeatingState, x) -> tuple[list[float], float]:
    """log p_c(x -> k) for every live dish, and for a new dish."""
    prior = state.prior
    lp = [prior.log_pred_one(s, x) for s in state.dish_stats]
    return lp, prior.log_pred_one(prior.new_stats(), x)


def table_log_weights(state: SeatingState, j: int, x, hyper: HdpHyper, preds=None) -> list[float]:
    """Unnormalised log weights for customer x in group j: one per existing
    table, then the new-table weight with its dish marginalised out."""
    lp, lp_new = preds if preds is not None else customer_log_preds(state, x)
    out = [log(n) + lp[k] for n, k in zip(state.n_jt[j], state.dish_of_table[j])]
    m_k = state.m_k
    mtot = sum(m_k)
    terms = [log(m) + l for m, l in zip(m_k, lp)]
    terms.append(log(hyper.gamma) + lp_new)
    mx = max(terms)
    mix = mx + log(sum(math.exp(v - mx) for v in terms)) - log(mtot + hyper.gamma)
    out.append(log(hyper.alpha0) + mix)
    return out


def new_table_dish_log_weights(state: SeatingState, x, hyper: HdpHyper, preds=None) -> list[float]:
    """Log weights m_k p_c(x -> k), then gamma p_c(x -> k*)."""
    lp, lp_new = preds if preds is not None else customer_log_preds(state, x)
    out = [log(m) + l for m, l in zip(state.m_k, lp)]
    out.append(log(hyper.gamma) + lp_new)
    return out


def table_dish_log_weights(state: SeatingState, j: int, t: int, hyper: HdpHyper) -> list[float]:
    """Log weights m_k p_t(block -> k), then gamma p_t(block -> k*), for a
    table whose block has been detached from its dish."""
    prior = state.prior
    block = state.table_stats[j][t]
    out = [log(m) + prior.log_pred_block(s, block) for m, s in zip(state.m_k, state.dish_stats)]
    out.append(log(hyper.gamma) + prior.log_pred_block(prior.new_stats(), block))
    return out


# ---------------------------------------------------------------------------
# moves
# ---------------------------------------------------------------------------


def detach_customer(state: SeatingState, data: GroupedDataset, j: int, i: int) -> SeatingState:
    state.unseat(j, i, data.values[j][i])
    return state


def sample_table(state: SeatingState, j: int, x, hyper: HdpHyper, rng, preds=None) -> int:
    """Draw a table for a detached customer; ``NEW`` means a fresh table."""
    logw = table_log_weights(state, j, x, hyper, preds)
    idx = sample_log_categorical(logw, rng)
    return NEW if idx == len(logw) - 1 else idx


def sample_dish_for_new_table(state: SeatingState, x, hyper: HdpHyper, rng, preds=None) -> int:
    """Draw the dish of a table just opened for x; allocates a new dish if chosen."""
    logw = new_table_dish_log_weights(state, x, hyper, preds)
    idx = sample_log_categorical(logw, rng)
    return state.new_dish() if idx == len(logw) - 1 else idx


def sample_dish_for_table(state: SeatingState, j: int, t: int, hyper: HdpHyper, rng) -> int:
    """Resample the dish of table (j, t) and reattach its block."""
    logw = table_dish_log_weights(state, j, t, hyper)
    idx = sample_log_categorical(logw, rng)
    k = state.new_dish() if idx == len(logw) - 1 else idx
    state.attach_table(j, t, k)
    return k


def _resample_customer(state, data, j, i, hyper, rng, fault):
    x = data.values[j][i]
    if fault == "skip-detach":
        # corrupted control: weights see the customer still in its table and
        # dish statistics
        t0 = state.table_of[j][i]
        k0 = state.dish_of_table[j][t0]
        keeps_table = state.n_jt[j][t0] > 1
        keeps_dish = keeps_table or state.m_k[k0] > 1
        state.unseat(j, i, x)
        # dropping a table never renumbers dishes, so k0 stays valid
        if keeps_dish:
            state.dish_stats[k0].add(x)
        if keeps_table:
            state.n_jt[j][t0] += 1
        preds = customer_log_preds(state, x)
        logw = table_log_weights(state, j, x, hyper, preds)
        if keeps_dish:
            state.dish_stats[k0].remove(x)
        if keeps_table:
            state.n_jt[j][t0] -= 1
        idx = sample_log_categorical(logw, rng)
        t = NEW if idx == len(logw) - 1 else idx
    else:
        state.unseat(j, i, x)
        preds = customer_log_preds(state, x)
        t = sample_table(state, j, x, hyper, rng, preds)
    if t == NEW:
        k = sample_dish_for_new_table(state, x, hyper, rng, preds)
        t = state.new_table(j, k)
    state.seat(j, i, x, t)


def gibbs_sweep(state: SeatingState, data: GroupedDataset, hyper: HdpHyper, rng,
                scan_order: str = "shuffled", debug: bool = False, fault=None) -> SeatingState:
    """One pass over all customers (table moves) then all tables (dish moves).

    ``fault`` injects a known bug for sampler-validation controls.
    """
    if fault not in FAULTS:
        raise ValueError(f"unknown fault {fault!r}")
    customers = [(j, i) for j, n in enumerate(data.sizes) for i in range(n)]
    if scan_order == "shuffled":
        customers = [customers[p] for p in rng.permutation(len(customers))]
    for j, i in customers:
        _resample_customer(state, data, j, i, hyper, rng, fault)
        if debug:
            _assert_consistent(state, data, f"after customer ({j},{i})")

    tables = [(j, t) for j in range(data.num_groups) for t in range(len(state.n_jt[j]))]
    if scan_order == "shuffled":
        tables = [tables[p] for p in rng.permutation(len(tables))]
    for j, t in tables:
        state.detach_table(j, t)
        sample_dish_for_table(state, j, t, hyper, rng)
        if debug:
            _assert_consistent(state, data, f"after table ({j},{t})")
    return state


def _assert_consistent(state, data, where):
    problems = check_consistency(state, data)
    if problems:
        raise InconsistentState(f"{where}: " + "; ".join(problems))


def run_chain(data: GroupedDataset, hyper: HdpHyper, config: SamplerConfig,
              chain: int = 0, state: SeatingState | None = None) -> tuple[ChainTrace, SeatingState]:
    """Run ``config.sweeps`` sweeps from the configured initial seating."""
    rng = chain_rng(config.rng_seed, chain)
    if state is None:
        state = init_seating(data, hyper.family_prior, config.init_mode)
    else:
        data.check_prior(hyper.family_prior)
    trace = ChainTrace(burn_in=config.burn_in)
    for sweep in range(config.sweeps):
        gibbs_sweep(state, data, hyper, rng, config.scan_order, config.debug)
        trace.record(sweep, state.num_dishes, log_joint(state, data, hyper))
        if config.snapshot_every and (sweep + 1) % config.snapshot_every == 0:
            trace.snapshots.append((sweep, state.canonical()))
    return trace, state
