"""Independent checks for the closed forms and the sampler.

* Numerical quadrature of the predictive integrals.  Each predictive is
  computed as Z(data + query) / Z(data) where Z is the integral of prior
  density times raw likelihoods, evaluated numerically with no use of the
  conjugate update formulas.
* Exhaustive enumeration of the posterior over seatings for tiny instances.
* A Geweke joint-distribution test comparing forward draws with
  successive-conditional draws (Gibbs sweep, then fresh data).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from math import lgamma, log

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.special import gammaln, logsumexp

from hdpcrf.conjugate import CountStats, FamilyPrior, GammaPoissonParams, NormalGammaParams
from hdpcrf.model import GroupedDataset, HdpHyper, SeatingState
from hdpcrf.sampler import gibbs_sweep
from hdpcrf.synth import forward_sample, resample_data, sample_crf_seating


class QuadratureError(RuntimeError):
    pass


class InstanceTooLarge(ValueError):
    pass


@dataclass(frozen=True)
class QuadSpec:
    """Trapezoid rule on a transformed axis.

    Half-line variables (rates, precisions) are integrated in ``s = log v``;
    the real-line mean is integrated on an affine grid.  ``nodes`` is the
    starting count and is doubled until successive estimates agree to
    ``rtol``.
    """

    nodes: int = 128
    max_nodes: int = 16384
    rtol: float = 1e-12
    mean_nodes: int = 96
    mean_halfwidth: float = 14.0  # in conditional standard deviations
    cutoff: float = 60.0  # drop integrand below max * exp(-cutoff)

    def __post_init__(self):
        if self.nodes < 32:
            raise ValueError("quadrature needs at least 32 nodes")
        if self.rtol <= 0:
            raise ValueError("tolerance must be positive")


def _trapezoid_log(logf_vals: np.ndarray, h: float) -> float:
    w = np.full(logf_vals.shape[-1], log(h))
    w[0] = w[-1] = log(0.5 * h)
    return float(logsumexp(logf_vals + w, axis=-1))


def _support(logf, spec: QuadSpec, lo: float = -400.0, hi: float = 60.0) -> tuple[float, float]:
    s = np.linspace(lo, hi, 4601)
    vals = logf(s)
    vals = np.where(np.isfinite(vals), vals, -np.inf)
    top = vals.max()
    keep = np.nonzero(vals > top - spec.cutoff)[0]
    if keep.size == 0:
        raise QuadratureError("integrand has no finite support")
    step = s[1] - s[0]
    a, b = s[keep[0]] - 2 * step, s[keep[-1]] + 2 * step
    if keep[0] == 0 or keep[-1] == len(s) - 1:
        raise QuadratureError("integrand support exceeds the search window")
    return a, b


def half_line_log_integral(logf, spec: QuadSpec = QuadSpec()) -> float:
    """log of the integral over s in R of exp(logf(s)), with node doubling.

    ``logf`` must be vectorised and already include the Jacobian of the map
    from the half-line (e.g. ``+ s`` for ``v = exp(s)``).
    """
    a, b = _support(logf, spec)
    n = spec.nodes
    prev = None
    while n <= spec.max_nodes:
        s = np.linspace(a, b, n + 1)
        cur = _trapezoid_log(logf(s), (b - a) / n)
        if prev is not None and abs(math.expm1(cur - prev)) < spec.rtol:
            return cur
        prev = cur
        n *= 2
    raise QuadratureError(f"no convergence within {spec.max_nodes} nodes")


# -- Gamma-Poisson ---------------------------------------------------------


def _gp_logf(prior: GammaPoissonParams, xs):
    xs = np.asarray(xs, dtype=float)
    sx, n = float(xs.sum()), xs.size
    const = prior.alpha * log(prior.beta) - lgamma(prior.alpha) - float(gammaln(xs + 1).sum())

    def logf(s):
        phi = np.exp(s)
        # Gamma(alpha, beta) density times Poisson likelihoods, times dphi/ds
        return const + (prior.alpha - 1.0 + sx) * s - (prior.beta + n) * phi + s

    return logf


def quad_log_evidence_gp(prior: GammaPoissonParams, xs, spec: QuadSpec = QuadSpec()) -> float:
    return half_line_log_integral(_gp_logf(prior, list(xs)), spec)


def quad_pred_gp(prior: GammaPoissonParams, data, x: int, spec: QuadSpec = QuadSpec()) -> float:
    """Predictive density of count x given conditioning counts, by quadrature."""
    data = list(data)
    num = quad_log_evidence_gp(prior, data + [x], spec)
    den = quad_log_evidence_gp(prior, data, spec)
    return math.exp(num - den)


# -- Normal-Gamma (d = 1) --------------------------------------------------


def _ng_logf(prior: NormalGammaParams, xs, spec: QuadSpec):
    if prior.dim != 1:
        raise ValueError("quadrature oracle supports d = 1 only")
    xs = np.asarray(xs, dtype=float).reshape(-1)
    mu0, k0, a0, b0 = prior.mu0[0], prior.kappa0, prior.alpha0, prior.beta0
    n = xs.size
    centre = (k0 * mu0 + xs.sum()) / (k0 + n)
    u = np.linspace(-spec.mean_halfwidth, spec.mean_halfwidth, spec.mean_nodes + 1)
    hu = u[1] - u[0]
    wu = np.full(u.size, log(hu))
    wu[0] = wu[-1] = log(0.5 * hu)
    const = a0 * log(b0) - lgamma(a0) - 0.5 * (n + 1) * math.log(2 * math.pi) + 0.5 * log(k0)

    def logf(s):
        s = np.asarray(s, dtype=float)[:, None]
        lam = np.exp(s)
        width = 1.0 / np.sqrt(lam * (k0 + n))
        mu = centre + u[None, :] * width
        # prior N(mu | mu0, 1/(k0 lam)) Gamma(lam | a0, b0) and likelihood
        quad = k0 * (mu - mu0) ** 2
        if n:
            quad = quad + ((xs[None, None, :] - mu[:, :, None]) ** 2).sum(axis=2)
        logg = (const + (a0 - 1.0 + 0.5 * (n + 1)) * s - b0 * lam - 0.5 * lam * quad)
        inner = logsumexp(logg + wu[None, :], axis=1) + np.log(width[:, 0])
        return inner + s[:, 0]

    return logf


def quad_log_evidence_ng(prior: NormalGammaParams, xs, spec: QuadSpec = QuadSpec()) -> float:
    logf = _ng_logf(prior, list(np.ravel(xs)), spec)
    return half_line_log_integral(logf, spec)


def quad_pred_ng(prior: NormalGammaParams, data, x: float, spec: QuadSpec = QuadSpec()) -> float:
    """Predictive density of scalar x given conditioning scalars, by 2-D quadrature."""
    data = [float(v) for v in np.ravel(data)]
    num = quad_log_evidence_ng(prior, data + [float(np.ravel(x)[0])], spec)
    den = quad_log_evidence_ng(prior, data, spec)
    return math.exp(num - den)


# ---------------------------------------------------------------------------
# exact enumeration
# ---------------------------------------------------------------------------


def set_partitions(n: int):
    """All set partitions of n items as restricted growth strings."""
    if n == 0:
        yield ()
        return
    a = [0] * n

    def rec(i, top):
        if i == n:
            yield tuple(a)
            return
        for v in range(top + 2):
            a[i] = v
            yield from rec(i + 1, max(top, v))

    a[0] = 0
    yield from rec(1, 0)


def _product(seqs):
    if not seqs:
        yield ()
        return
    for head in seqs[0]:
        for rest in _product(seqs[1:]):
            yield (head,) + rest


def _crf_log_prior_counts(table_sizes, dish_sizes, sizes, a0, g) -> float:
    lp = 0.0
    for counts, nj in zip(table_sizes, sizes):
        lp += len(counts) * log(a0) + sum(lgamma(c) for c in counts)
        lp -= lgamma(nj + a0) - lgamma(a0)
    m = sum(dish_sizes)
    lp += len(dish_sizes) * log(g) + sum(lgamma(c) for c in dish_sizes) - (lgamma(m + g) - lgamma(g))
    return lp


def enumerate_exact_posterior(data: GroupedDataset, hyper: HdpHyper, max_customers: int = 8) -> dict:
    """Exact posterior over canonical configurations ``(tables, dishes)``.

    ``tables[j]`` lists the table label of each customer of group j and
    ``dishes[j]`` the dish label of each table, both in first-appearance
    order (the format of ``SeatingState.canonical``).
    """
    if data.total > max_customers:
        raise InstanceTooLarge(f"{data.total} customers > {max_customers}")
    prior = hyper.family_prior
    data.check_prior(prior)
    scores = {}
    group_parts = [list(set_partitions(n)) for n in data.sizes]
    for tabs in _product(group_parts):
        ntab = [1 + max(r) for r in tabs]
        table_sizes = [[r.count(t) for t in range(T)] for r, T in zip(tabs, ntab)]
        flat = [(j, t) for j, T in enumerate(ntab) for t in range(T)]
        for rgs in set_partitions(len(flat)):
            K = 1 + max(rgs)
            stats = [prior.new_stats() for _ in range(K)]
            dish_sizes = [0] * K
            for (j, t), k in zip(flat, rgs):
                dish_sizes[k] += 1
            for j, r in enumerate(tabs):
                offset = sum(ntab[:j])
                for i, t in enumerate(r):
                    stats[rgs[offset + t]].add(data.values[j][i])
            lp = _crf_log_prior_counts(table_sizes, dish_sizes, data.sizes, hyper.alpha0, hyper.gamma)
            lp += math.fsum(prior.log_marginal(s) for s in stats)
            dishes = []
            pos = 0
            for T in ntab:
                dishes.append(tuple(rgs[pos:pos + T]))
                pos += T
            scores[(tuple(tabs), tuple(dishes))] = lp
    top = max(scores.values())
    z = top + log(math.fsum(math.exp(v - top) for v in scores.values()))
    return {cfg: math.exp(v - z) for cfg, v in scores.items()}


def total_variation(p: dict, q: dict) -> float:
    keys = set(p) | set(q)
    return 0.5 * sum(abs(p.get(k, 0.0) - q.get(k, 0.0)) for k in keys)


def gibbs_config_frequencies(data: GroupedDataset, hyper: HdpHyper, sweeps: int, burn_in: int,
                             rng: np.random.Generator, scan_order: str = "shuffled") -> dict:
    """Empirical distribution of canonical configurations along a chain."""
    from hdpcrf.model import init_seating

    state = init_seating(data, hyper.family_prior, "together")
    counts: dict = {}
    for sweep in range(burn_in + sweeps):
        gibbs_sweep(state, data, hyper, rng, scan_order)
        if sweep >= burn_in:
            cfg = state.canonical()
            counts[cfg] = counts.get(cfg, 0) + 1
    return {k: v / sweeps for k, v in counts.items()}


def crf_config_frequencies(hyper: HdpHyper, group_sizes, draws: int, rng) -> dict:
    """Empirical distribution of forward-sampled seatings (canonical form)."""
    counts: dict = {}
    for _ in range(draws):
        tables, dishes = sample_crf_seating(hyper.gamma, hyper.alpha0, group_sizes, rng)
        # creation order is already first-appearance order
        cfg = (tuple(tuple(t) for t in tables), tuple(tuple(d) for d in dishes))
        counts[cfg] = counts.get(cfg, 0) + 1
    return {k: v / draws for k, v in counts.items()}


# ---------------------------------------------------------------------------
# Geweke joint test
# ---------------------------------------------------------------------------


def _data_mean(data: GroupedDataset) -> float:
    if data.kind == "count":
        return float(np.mean([x for g in data.values for x in g]))
    return float(np.mean([np.mean(x) for g in data.values for x in g]))


def joint_statistics(state: SeatingState, data: GroupedDataset) -> tuple:
    return (state.num_dishes, state.num_tables, _data_mean(data))


STAT_NAMES = ("num_dishes", "num_tables", "data_mean")


@dataclass
class GewekeStat:
    name: str
    forward_mean: float
    conditional_mean: float
    z: float


@dataclass
class GewekeReport:
    iterations: int
    stats: list = field(default_factory=list)

    @property
    def max_abs_z(self) -> float:
        return max(abs(s.z) for s in self.stats)


def _batch_se(x: np.ndarray, batches: int) -> float:
    n = len(x) // batches * batches
    means = x[:n].reshape(batches, -1).mean(axis=1)
    return float(means.std(ddof=1) / math.sqrt(batches))


def geweke_check(hyper: HdpHyper, group_sizes, iterations: int, rng: np.random.Generator,
                 fault=None, batches: int = 100) -> GewekeReport:
    """Forward vs successive-conditional comparison of joint statistics."""
    prior = hyper.family_prior
    fwd = np.empty((iterations, len(STAT_NAMES)))
    for it in range(iterations):
        s = forward_sample(hyper, group_sizes, rng)
        fwd[it] = joint_statistics(s.state, s.data)

    start = forward_sample(hyper, group_sizes, rng)
    state, data = start.state, start.data
    cond = np.empty_like(fwd)
    for it in range(iterations):
        gibbs_sweep(state, data, hyper, rng, "shuffled", fault=fault)
        data = resample_data(prior, state, rng)
        state = SeatingState.from_assignments(data, prior, state.table_of, state.dish_of_table)
        cond[it] = joint_statistics(state, data)

    report = GewekeReport(iterations)
    for c, name in enumerate(STAT_NAMES):
        se_f = fwd[:, c].std(ddof=1) / math.sqrt(iterations)
        se_c = _batch_se(cond[:, c], batches)
        se = math.hypot(se_f, se_c)
        diff = fwd[:, c].mean() - cond[:, c].mean()
        z = diff / se if se > 0 else (0.0 if diff == 0 else math.inf)
        report.stats.append(GewekeStat(name, float(fwd[:, c].mean()), float(cond[:, c].mean()), float(z)))
    return report


# ---------------------------------------------------------------------------
# label agreement
# ---------------------------------------------------------------------------


def _flat(labels) -> np.ndarray:
    """Labels as a flat array; accepts ragged per-group lists."""
    if len(labels) and isinstance(labels[0], (list, tuple, np.ndarray)):
        return np.asarray([v for group in labels for v in group])
    return np.asarray(labels).ravel()


def label_agreement(truth, estimate) -> float:
    """Fraction of items whose estimated label matches the truth under the
    best one-to-one relabelling of the estimate."""
    truth, estimate = _flat(truth), _flat(estimate)
    if truth.size != estimate.size:
        raise ValueError("label arrays differ in length")
    tv, ti = np.unique(truth, return_inverse=True)
    ev, ei = np.unique(estimate, return_inverse=True)
    table = np.zeros((tv.size, ev.size))
    np.add.at(table, (ti, ei), 1)
    rows, cols = linear_sum_assignment(-table)
    return float(table[rows, cols].sum() / truth.size)
