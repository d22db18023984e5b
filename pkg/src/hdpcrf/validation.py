"""Self-verification suite behind ``hdpcrf validate``.

Each check compares a closed form or the sampler against an independent
route and yields one ``CheckResult`` line.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, stats as sps

from hdpcrf.conjugate import (
    CountStats,
    GammaPoissonParams,
    NormalGammaParams,
    VectorStats,
    gp_log_marginal,
    gp_log_pred_block,
    gp_log_pred_one,
    gp_posterior,
    ng_log_marginal,
    ng_log_pred_block,
    ng_log_pred_one,
    ng_posterior,
)
from hdpcrf.model import GroupedDataset, HdpHyper
from hdpcrf.oracle import (
    enumerate_exact_posterior,
    geweke_check,
    gibbs_config_frequencies,
    quad_pred_gp,
    quad_pred_ng,
    total_variation,
)


@dataclass
class CheckResult:
    name: str
    expected: str
    got: float
    tolerance: str
    passed: bool

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{self.name}\texpected={self.expected}\tgot={self.got:.6g}\ttol={self.tolerance}\t{status}"


# -- grids -----------------------------------------------------------------


def gp_grid(quick: bool = False):
    """(prior, conditioning counts, query) cases for the count family."""
    rng = np.random.default_rng(101)
    alphas = (0.5, 1.0, 2.0, 5.0)
    betas = (0.5, 1.0, 3.0)
    sizes = (0, 3) if quick else range(6)
    cases = []
    q = 0
    for a in alphas:
        for b in betas:
            for n in sizes:
                data = [int(v) for v in rng.integers(0, 7, size=n)]
                for _ in range(1 if quick else 3):
                    cases.append((GammaPoissonParams(a, b), data, q % 11))
                    q += 1
    return cases


def ng_grid(quick: bool = False):
    """(prior, conditioning scalars, query) cases for the d = 1 normal family."""
    rng = np.random.default_rng(202)
    cases = []
    for k0 in (0.1, 1.0, 10.0):
        for a0 in (0.5, 1.0, 3.0):
            for b0 in (0.5, 2.0):
                for n in ((0, 4) if quick else range(6)):
                    mu0 = float(rng.uniform(-2, 2))
                    data = [float(v) for v in rng.normal(mu0, 1.5, size=n)]
                    x = float(rng.uniform(-4, 4))
                    cases.append((NormalGammaParams((mu0,), k0, a0, b0), data, x))
    return cases


def check_gp_quadrature(quick: bool = False) -> CheckResult:
    worst = 0.0
    cases = gp_grid(quick)
    for prior, data, x in cases:
        closed = math.exp(gp_log_pred_one(gp_posterior(prior, CountStats(data)), x))
        worst = max(worst, abs(closed / quad_pred_gp(prior, data, x) - 1.0))
    return CheckResult(f"gp_closed_vs_quadrature[{len(cases)}]", "0", worst, "1e-08", worst <= 1e-8)


def check_ng_quadrature(quick: bool = False) -> CheckResult:
    worst = 0.0
    cases = ng_grid(quick)
    for prior, data, x in cases:
        post = ng_posterior(prior, VectorStats(1, [[v] for v in data]))
        closed = math.exp(ng_log_pred_one(post, [x]))
        worst = max(worst, abs(closed / quad_pred_ng(prior, data, x) - 1.0))
    return CheckResult(f"ng_closed_vs_quadrature[{len(cases)}]", "0", worst, "1e-06", worst <= 1e-6)


def nb_settings():
    return [GammaPoissonParams(a, b) for a in (0.5, 1.0, 2.5, 7.0, 30.0) for b in (0.2, 1.0, 4.0, 15.0)]


def nb_mass(post: GammaPoissonParams, tail: float = 1e-12) -> float:
    p = post.beta / (post.beta + 1.0)
    top = int(sps.nbinom.isf(tail, post.alpha, p)) + 1
    return math.fsum(math.exp(gp_log_pred_one(post, x)) for x in range(top + 1))


def check_nb_normalization() -> CheckResult:
    worst = max(abs(nb_mass(p) - 1.0) for p in nb_settings())
    return CheckResult("nb_predictive_mass[20]", "1", worst, "1e-08", worst <= 1e-8)


def t_settings():
    rng = np.random.default_rng(303)
    out = []
    for a in (0.5, 0.75, 1.0, 1.5, 2.0, 3.0, 5.0, 10.0, 0.6, 25.0):
        out.append(NormalGammaParams((float(rng.uniform(-3, 3)),), float(rng.uniform(0.1, 5)),
                                     a, float(rng.uniform(0.2, 4))))
    return out


def t_mass(post: NormalGammaParams) -> float:
    mu = post.mu0[0]

    def f(x):
        return math.exp(ng_log_pred_one(post, [x]))

    opts = dict(epsabs=1e-14, epsrel=1e-12, limit=500)
    left, _ = integrate.quad(f, -np.inf, mu, **opts)
    right, _ = integrate.quad(f, mu, np.inf, **opts)
    return left + right


def check_t_normalization() -> CheckResult:
    worst = max(abs(t_mass(p) - 1.0) for p in t_settings())
    return CheckResult("t_predictive_mass[10]", "1", worst, "1e-08", worst <= 1e-8)


def block_routes_gp(prior: GammaPoissonParams, w: list, block: list) -> tuple[float, float, float]:
    """(closed form, marginal ratio, sequential chain) for a count block."""
    post = gp_posterior(prior, CountStats(w))
    closed = gp_log_pred_block(post, block)
    ratio = gp_log_marginal(prior, CountStats(w + block)) - gp_log_marginal(prior, CountStats(w))
    chain = math.fsum(gp_log_pred_one(gp_posterior(prior, CountStats(w + block[:i])), x)
                      for i, x in enumerate(block))
    return closed, ratio, chain


def block_routes_ng(prior: NormalGammaParams, w: list, block: list) -> tuple[float, float, float]:
    d = prior.dim
    post = ng_posterior(prior, VectorStats(d, w))
    closed = ng_log_pred_one(post, block[0]) if len(block) == 1 else ng_log_pred_block(post, block)
    ratio = ng_log_marginal(prior, VectorStats(d, w + block)) - ng_log_marginal(prior, VectorStats(d, w))
    chain = math.fsum(ng_log_pred_one(ng_posterior(prior, VectorStats(d, w + block[:i])), x)
                      for i, x in enumerate(block))
    return closed, ratio, chain


def block_cases(family: str):
    rng = np.random.default_rng(404 if family == "gp" else 505)
    cases = []
    for rep in range(30):
        size = 1 + rep % 4
        nw = int(rng.integers(0, 5))
        if family == "gp":
            prior = GammaPoissonParams(float(rng.choice([0.5, 1, 3])), float(rng.choice([0.3, 1, 4])))
            w = [int(v) for v in rng.integers(0, 15, size=nw)]
            block = [int(v) for v in rng.integers(0, 15, size=size)]
        else:
            d = 1 + rep % 3
            prior = NormalGammaParams(tuple(rng.normal(size=d)), float(rng.uniform(0.1, 3)),
                                      float(rng.uniform(0.5, 4)), float(rng.uniform(0.2, 3)))
            w = list(rng.normal(1.0, 2.0, size=(nw, d)))
            block = list(rng.normal(-1.0, 2.0, size=(size, d)))
        cases.append((prior, w, block))
    return cases


def check_block_agreement(family: str) -> CheckResult:
    route = block_routes_gp if family == "gp" else block_routes_ng
    worst = 0.0
    for prior, w, block in block_cases(family):
        a, b, c = route(prior, w, block)
        worst = max(worst, abs(a - b), abs(a - c), abs(b - c))
    return CheckResult(f"{family}_block_three_way[30]", "0", worst, "1e-10", worst <= 1e-10)


# -- enumeration and sampler -------------------------------------------------


TWO_CUSTOMER = (GroupedDataset.counts([[0, 0]]), HdpHyper(1.0, 1.0, GammaPoissonParams(1.0, 1.0)))
TWO_CUSTOMER_EXPECTED = {
    (((0, 0),), ((0,),)): 8 / 15,
    (((0, 1),), ((0, 0),)): 4 / 15,
    (((0, 1),), ((0, 1),)): 3 / 15,
}


def check_exact_two_customer() -> CheckResult:
    post = enumerate_exact_posterior(*TWO_CUSTOMER)
    err = max(abs(post.get(k, 0.0) - v) for k, v in TWO_CUSTOMER_EXPECTED.items())
    err = max(err, abs(sum(post.values()) - 1.0))
    ok = err <= 1e-12 and set(post) == set(TWO_CUSTOMER_EXPECTED)
    return CheckResult("exact_posterior_two_customers", "8/15,4/15,3/15", err, "1e-12", ok)


def check_gibbs_vs_exact(sweeps: int = 200_000, seed: int = 7) -> CheckResult:
    data, hyper = TWO_CUSTOMER
    freq = gibbs_config_frequencies(data, hyper, sweeps, 1000, np.random.default_rng(seed))
    tv = total_variation(freq, enumerate_exact_posterior(data, hyper))
    return CheckResult(f"gibbs_vs_exact_tv[{sweeps}]", "0", tv, "0.02", tv <= 0.02)


GEWEKE_HYPER = HdpHyper(1.0, 1.0, GammaPoissonParams(2.0, 1.0))


def check_geweke(iterations: int = 100_000, seed: int = 11) -> list[CheckResult]:
    good = geweke_check(GEWEKE_HYPER, [3, 3], iterations, np.random.default_rng(seed))
    bad = geweke_check(GEWEKE_HYPER, [3, 3], iterations, np.random.default_rng(seed), fault="skip-detach")
    out = [CheckResult(f"geweke_{s.name}[{iterations}]", "|z|<4", s.z, "4", abs(s.z) < 4) for s in good.stats]
    out.append(CheckResult(f"geweke_corrupted_control[{iterations}]", "max|z|>4", bad.max_abs_z, "4",
                           bad.max_abs_z > 4))
    return out


def run_suite(grid: str = "quick"):
    """Yield check results; ``quick`` skips the long stochastic checks."""
    if grid not in ("quick", "full"):
        raise ValueError(f"unknown grid {grid!r}")
    quick = grid == "quick"
    yield check_gp_quadrature(quick)
    yield check_ng_quadrature(quick)
    yield check_nb_normalization()
    yield check_t_normalization()
    yield check_block_agreement("gp")
    yield check_block_agreement("ng")
    yield check_exact_two_customer()
    if quick:
        yield check_gibbs_vs_exact(sweeps=20_000)
    else:
        yield check_gibbs_vs_exact()
        yield from check_geweke()
