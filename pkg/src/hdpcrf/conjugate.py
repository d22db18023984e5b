"""Conjugate likelihood families used as HDP dish distributions.

Two families are provided:

* Gamma-Poisson: counts ``x ~ Poisson(phi)``, ``phi ~ Gamma(alpha, beta)``
  (shape/rate).  Predictives are Negative Binomial.
* Normal-Gamma-Normal: vectors ``x ~ N(mu, lambda^-1 I)`` with
  ``(mu, lambda) ~ NG(mu0, kappa0, alpha0, beta0)``.  Predictives are
  isotropic multivariate Student-t.

Every density is returned in log domain.  Data enter only through additive
sufficient statistics (``CountStats`` / ``VectorStats``), so leave-one-out
and leave-table-out sets are realised by removing observations from a stats
object and the new-dish case is simply an empty stats object.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from math import lgamma, log, log1p
from typing import Iterable, Sequence, Union

import numpy as np

log_ = logging.getLogger(__name__)

LOG_2PI = math.log(2.0 * math.pi)
LOG_PI = math.log(math.pi)

#: raw scatter below this is treated as a numerical fault, not round-off
SCATTER_FLOOR = -1e-9


class FamilyError(ValueError):
    """Raised for statistics/parameters of the wrong family or dimension."""


# ---------------------------------------------------------------------------
# sufficient statistics
# ---------------------------------------------------------------------------


class CountStats:
    """Additive statistics for a multiset of non-negative counts.

    The multiset itself is kept (value -> multiplicity) so that add/remove are
    exact inverses and ``sum_log_fact`` does not depend on insertion order.
    """

    __slots__ = ("n", "sum_x", "_counts", "_slf")

    def __init__(self, values: Iterable[int] = ()):
        self.n = 0
        self.sum_x = 0
        self._counts: dict[int, int] = {}
        self._slf: float | None = 0.0
        for v in values:
            self.add(v)

    def add(self, x: int) -> None:
        self.n += 1
        self.sum_x += x
        self._counts[x] = self._counts.get(x, 0) + 1
        self._slf = None

    def remove(self, x: int) -> None:
        c = self._counts.get(x, 0)
        if c == 0:
            raise FamilyError(f"cannot remove {x!r}: not present in stats")
        if c == 1:
            del self._counts[x]
        else:
            self._counts[x] = c - 1
        self.n -= 1
        self.sum_x -= x
        self._slf = None

    def merge(self, other: "CountStats") -> None:
        """In-place union with ``other``."""
        counts = self._counts
        for v, c in other._counts.items():
            counts[v] = counts.get(v, 0) + c
        self.n += other.n
        self.sum_x += other.sum_x
        self._slf = None

    def subtract(self, other: "CountStats") -> None:
        """In-place removal of a sub-multiset ``other``."""
        counts = self._counts
        for v, c in other._counts.items():
            have = counts.get(v, 0)
            if have < c:
                raise FamilyError(f"cannot remove {c} x {v!r}: only {have} present")
            if have == c:
                del counts[v]
            else:
                counts[v] = have - c
        self.n -= other.n
        self.sum_x -= other.sum_x
        self._slf = None

    @property
    def sum_log_fact(self) -> float:
        """Sum of log(x!) over the multiset (cached)."""
        if self._slf is None:
            self._slf = math.fsum(c * lgamma(v + 1.0) for v, c in sorted(self._counts.items()))
        return self._slf

    def copy(self) -> "CountStats":
        out = CountStats()
        out.n, out.sum_x = self.n, self.sum_x
        out._counts = dict(self._counts)
        out._slf = self._slf
        return out

    def __add__(self, other: "CountStats") -> "CountStats":
        out = self.copy()
        out.merge(other)
        return out

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, CountStats):
            return NotImplemented
        return self.n == other.n and self.sum_x == other.sum_x and self._counts == other._counts

    def __repr__(self) -> str:
        return f"CountStats(n={self.n}, sum_x={self.sum_x})"


class VectorStats:
    """Additive statistics (n, sum x, sum ||x||^2) for d-dimensional vectors."""

    __slots__ = ("n", "sum_x", "sum_sq", "dim")

    def __init__(self, dim: int, values: Iterable[np.ndarray] = ()):
        self.dim = int(dim)
        self.n = 0
        self.sum_x = np.zeros(self.dim)
        self.sum_sq = 0.0
        for v in values:
            self.add(v)

    def _check(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dim,):
            raise FamilyError(f"expected vector of dimension {self.dim}, got shape {x.shape}")
        return x

    def add(self, x: np.ndarray) -> None:
        x = self._check(x)
        self.n += 1
        self.sum_x = self.sum_x + x
        self.sum_sq += float(x @ x)

    def remove(self, x: np.ndarray) -> None:
        if self.n == 0:
            raise FamilyError("cannot remove from empty stats")
        x = self._check(x)
        self.n -= 1
        if self.n == 0:
            # snap back to exact zero so drift cannot survive an emptied dish
            self.sum_x = np.zeros(self.dim)
            self.sum_sq = 0.0
        else:
            self.sum_x = self.sum_x - x
            self.sum_sq -= float(x @ x)

    def merge(self, other: "VectorStats") -> None:
        if other.dim != self.dim:
            raise FamilyError("dimension mismatch")
        self.n += other.n
        self.sum_x = self.sum_x + other.sum_x
        self.sum_sq += other.sum_sq

    def subtract(self, other: "VectorStats") -> None:
        if other.dim != self.dim:
            raise FamilyError("dimension mismatch")
        if other.n > self.n:
            raise FamilyError("cannot remove more observations than present")
        self.n -= other.n
        if self.n == 0:
            self.sum_x = np.zeros(self.dim)
            self.sum_sq = 0.0
        else:
            self.sum_x = self.sum_x - other.sum_x
            self.sum_sq -= other.sum_sq

    @property
    def scatter(self) -> float:
        """Centered scatter sum ||x - xbar||^2, clamped at zero."""
        if self.n == 0:
            return 0.0
        s = self.sum_sq - float(self.sum_x @ self.sum_x) / self.n
        if s < 0.0:
            if s < SCATTER_FLOOR * max(1.0, self.sum_sq):
                log_.warning("negative scatter %.3e clamped; stats may have drifted", s)
            s = 0.0
        return s

    def copy(self) -> "VectorStats":
        out = VectorStats(self.dim)
        out.n, out.sum_x, out.sum_sq = self.n, self.sum_x.copy(), self.sum_sq
        return out

    def __add__(self, other: "VectorStats") -> "VectorStats":
        out = self.copy()
        out.merge(other)
        return out

    def __repr__(self) -> str:
        return f"VectorStats(n={self.n}, sum_x={self.sum_x.tolist()}, sum_sq={self.sum_sq!r})"


SuffStats = Union[CountStats, VectorStats]


def stats_add(stats: SuffStats, x) -> SuffStats:
    """Return a copy of ``stats`` with ``x`` folded in."""
    out = stats.copy()
    out.add(x)
    return out


def stats_remove(stats: SuffStats, x) -> SuffStats:
    """Return a copy of ``stats`` with a previously added ``x`` removed."""
    if stats.n == 0:
        raise FamilyError("cannot remove from empty stats")
    out = stats.copy()
    out.remove(x)
    return out


# ---------------------------------------------------------------------------
# Gamma-Poisson
# ---------------------------------------------------------------------------


def _check_count(x) -> int:
    if isinstance(x, (bool, np.bool_)) or int(x) != x or x < 0:
        raise FamilyError(f"count observations must be integers >= 0, got {x!r}")
    return int(x)


@dataclass(frozen=True)
class GammaPoissonParams:
    """Gamma(shape=alpha, rate=beta) prior or posterior on a Poisson rate."""

    alpha: float
    beta: float

    kind = "count"

    def __post_init__(self):
        if not (self.alpha > 0 and self.beta > 0) or not math.isfinite(self.alpha + self.beta):
            raise FamilyError(f"Gamma-Poisson needs alpha > 0 and beta > 0, got {self}")

    # -- family protocol used by the model and sampler --------------------

    def new_stats(self) -> CountStats:
        return CountStats()

    def stats_of(self, xs: Iterable[int]) -> CountStats:
        return CountStats(_check_count(x) for x in xs)

    def posterior(self, stats: CountStats) -> "GammaPoissonParams":
        return gp_posterior(self, stats)

    def log_pred_one(self, stats: CountStats, x: int) -> float:
        a = self.alpha + stats.sum_x
        b = self.beta + stats.n
        return lgamma(x + a) - lgamma(a) - lgamma(x + 1.0) + a * log(b) - (x + a) * log(b + 1.0)

    def log_pred_block(self, stats: CountStats, block: CountStats) -> float:
        a = self.alpha + stats.sum_x
        b = self.beta + stats.n
        s = block.sum_x
        return (lgamma(s + a) - lgamma(a) - block.sum_log_fact
                + a * log(b) - (s + a) * log(b + block.n))

    def log_marginal(self, stats: CountStats) -> float:
        return gp_log_marginal(self, stats)

    def sample_param(self, rng: np.random.Generator) -> float:
        # numpy's gamma sampler is Marsaglia-Tsang with the shape+1 boost
        # (u^(1/shape) rescaling) for shape < 1
        return float(rng.gamma(self.alpha, 1.0 / self.beta))

    def sample_obs(self, phi: float, rng: np.random.Generator, size: int) -> list[int]:
        return [int(v) for v in rng.poisson(phi, size)]

    def to_dict(self) -> dict:
        return {"alpha": self.alpha, "beta": self.beta}


def _as_count_stats(xs) -> CountStats:
    if isinstance(xs, CountStats):
        return xs
    if isinstance(xs, VectorStats):
        raise FamilyError("Gamma-Poisson needs count statistics")
    return CountStats(_check_count(x) for x in xs)


def gp_posterior(prior: GammaPoissonParams, stats: CountStats) -> GammaPoissonParams:
    """Conjugate update ``(alpha + sum x, beta + n)``."""
    if not isinstance(stats, CountStats):
        raise FamilyError("Gamma-Poisson needs count statistics")
    if stats.n == 0:
        return prior
    return GammaPoissonParams(prior.alpha + stats.sum_x, prior.beta + stats.n)


def gp_log_pred_one(post: GammaPoissonParams, x: int) -> float:
    """Log NB(x; r=alpha, p=beta/(beta+1)) predictive for a single count."""
    x = _check_count(x)
    return post.log_pred_one(CountStats(), x)


def gp_log_pred_block(post: GammaPoissonParams, xs) -> float:
    """Joint log predictive of a block of counts under one shared rate."""
    block = _as_count_stats(xs)
    if block.n == 0:
        raise FamilyError("block predictive needs at least one observation")
    return post.log_pred_block(CountStats(), block)


def gp_log_marginal(prior: GammaPoissonParams, stats) -> float:
    """Log evidence of the counts in ``stats`` under the Gamma-Poisson prior."""
    stats = _as_count_stats(stats)
    if stats.n == 0:
        return 0.0
    a, b = prior.alpha, prior.beta
    s = stats.sum_x
    return (-stats.sum_log_fact + a * log(b) - lgamma(a)
            + lgamma(a + s) - (a + s) * log(b + stats.n))


# ---------------------------------------------------------------------------
# Normal-Gamma-Normal
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class NormalGammaParams:
    """Normal-Gamma prior: ``lambda ~ Gamma(alpha0, beta0)``,
    ``mu | lambda ~ N(mu0, (kappa0 lambda)^-1 I)``."""

    mu0: tuple
    kappa0: float
    alpha0: float
    beta0: float
    _mu: np.ndarray = field(init=False, repr=False, compare=False)

    kind = "vector"

    def __post_init__(self):
        mu = np.atleast_1d(np.asarray(self.mu0, dtype=float))
        if mu.ndim != 1 or not np.all(np.isfinite(mu)):
            raise FamilyError(f"mu0 must be a finite vector, got {self.mu0!r}")
        if not (self.kappa0 > 0 and self.alpha0 > 0 and self.beta0 > 0):
            raise FamilyError(f"Normal-Gamma needs kappa0, alpha0, beta0 > 0, got {self}")
        if not math.isfinite(self.kappa0 + self.alpha0 + self.beta0):
            raise FamilyError("Normal-Gamma hyperparameters must be finite")
        object.__setattr__(self, "mu0", tuple(float(v) for v in mu))
        mu.setflags(write=False)
        object.__setattr__(self, "_mu", mu)

    @property
    def dim(self) -> int:
        return len(self.mu0)

    @property
    def mu(self) -> np.ndarray:
        return self._mu

    @property
    def scale2(self) -> float:
        """Isotropic Student-t scale beta (kappa + 1) / (alpha kappa)."""
        return self.beta0 * (self.kappa0 + 1.0) / (self.alpha0 * self.kappa0)

    # -- family protocol ---------------------------------------------------

    def new_stats(self) -> VectorStats:
        return VectorStats(self.dim)

    def stats_of(self, xs: Iterable[np.ndarray]) -> VectorStats:
        return VectorStats(self.dim, xs)

    def posterior(self, stats: VectorStats) -> "NormalGammaParams":
        return ng_posterior(self, stats)

    def _post(self, stats: VectorStats):
        n = stats.n
        if n == 0:
            return self._mu, self.kappa0, self.alpha0, self.beta0
        d = self.dim
        kn = self.kappa0 + n
        xbar = stats.sum_x / n
        diff = xbar - self._mu
        mn = (self.kappa0 * self._mu + stats.sum_x) / kn
        an = self.alpha0 + 0.5 * d * n
        bn = self.beta0 + 0.5 * stats.scatter + 0.5 * self.kappa0 * n / kn * float(diff @ diff)
        return mn, kn, an, bn

    def log_pred_one(self, stats: VectorStats, x: np.ndarray) -> float:
        mu, k, a, b = self._post(stats)
        return _student_t_logpdf(x, mu, k, a, b)

    def log_pred_block(self, stats: VectorStats, block: VectorStats) -> float:
        return _ng_log_marginal_raw(*self._post(stats), block)

    def log_marginal(self, stats: VectorStats) -> float:
        return ng_log_marginal(self, stats)

    def sample_param(self, rng: np.random.Generator) -> tuple[np.ndarray, float]:
        lam = float(rng.gamma(self.alpha0, 1.0 / self.beta0))
        mu = rng.normal(self._mu, 1.0 / math.sqrt(self.kappa0 * lam))
        return mu, lam

    def sample_obs(self, phi, rng: np.random.Generator, size: int) -> list[np.ndarray]:
        mu, lam = phi
        draws = rng.normal(mu, 1.0 / math.sqrt(lam), size=(size, self.dim))
        return list(draws)

    def to_dict(self) -> dict:
        return {"mu0": list(self.mu0), "kappa0": self.kappa0,
                "alpha0": self.alpha0, "beta0": self.beta0}


def _student_t_logpdf(x, mu, kappa, alpha, beta) -> float:
    x = np.asarray(x, dtype=float)
    d = mu.shape[0]
    nu = 2.0 * alpha
    s2 = beta * (kappa + 1.0) / (alpha * kappa)
    diff = x - mu
    q = float(diff @ diff)
    return (lgamma(0.5 * (nu + d)) - lgamma(0.5 * nu)
            - 0.5 * d * (log(nu * s2) + LOG_PI)
            - 0.5 * (nu + d) * log1p(q / (nu * s2)))


def _ng_log_marginal_raw(mu, kappa, alpha, beta, stats: VectorStats) -> float:
    n = stats.n
    if n == 0:
        return 0.0
    d = mu.shape[0]
    kn = kappa + n
    xbar = stats.sum_x / n
    diff = xbar - mu
    an = alpha + 0.5 * d * n
    bn = beta + 0.5 * stats.scatter + 0.5 * kappa * n / kn * float(diff @ diff)
    return (0.5 * d * (log(kappa) - log(kn)) + alpha * log(beta) - an * log(bn)
            + lgamma(an) - lgamma(alpha) - 0.5 * n * d * LOG_2PI)


def _as_vector_stats(dim: int, xs) -> VectorStats:
    if isinstance(xs, VectorStats):
        if xs.dim != dim:
            raise FamilyError(f"dimension mismatch: stats {xs.dim}, prior {dim}")
        return xs
    if isinstance(xs, CountStats):
        raise FamilyError("Normal-Gamma needs vector statistics")
    return VectorStats(dim, xs)


def ng_posterior(prior: NormalGammaParams, stats: VectorStats) -> NormalGammaParams:
    """Conjugate Normal-Gamma update from vector statistics."""
    stats = _as_vector_stats(prior.dim, stats)
    if stats.n == 0:
        return prior
    mu, k, a, b = prior._post(stats)
    return NormalGammaParams(tuple(mu), k, a, b)


def ng_log_pred_one(post: NormalGammaParams, x) -> float:
    """Log density of the multivariate Student-t predictive
    ``t_{2 alpha}(x | mu, beta (kappa + 1) / (alpha kappa) I)``."""
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.shape != (post.dim,):
        raise FamilyError(f"expected dimension {post.dim}, got {x.shape[0]}")
    if not np.all(np.isfinite(x)):
        raise FamilyError("observation must be finite")
    return _student_t_logpdf(x, post.mu, post.kappa0, post.alpha0, post.beta0)


def ng_log_pred_block(post: NormalGammaParams, xs) -> float:
    """Joint log predictive of a block of vectors sharing one (mu, lambda).

    Defined as the evidence of the block under ``post`` used as prior, which
    equals the ratio of marginal likelihoods with and without the block.
    """
    block = _as_vector_stats(post.dim, xs)
    if block.n == 0:
        raise FamilyError("block predictive needs at least one observation")
    return _ng_log_marginal_raw(post.mu, post.kappa0, post.alpha0, post.beta0, block)


def ng_log_marginal(prior: NormalGammaParams, stats) -> float:
    """Log evidence of the vectors in ``stats`` under the Normal-Gamma prior."""
    stats = _as_vector_stats(prior.dim, stats)
    return _ng_log_marginal_raw(prior.mu, prior.kappa0, prior.alpha0, prior.beta0, stats)


FamilyPrior = Union[GammaPoissonParams, NormalGammaParams]


def log_marginal(prior: FamilyPrior, stats: SuffStats) -> float:
    return prior.log_marginal(stats)


def log_sum_exp(values: Sequence[float]) -> float:
    m = max(values)
    if m == -math.inf:
        return m
    return m + log(math.fsum(math.exp(v - m) for v in values))
