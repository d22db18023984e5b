"""Grouped data, Chinese restaurant franchise seating state, and scoring.

Tables are identified per group by dense ids ``0..T_j-1`` and dishes
globally by dense ids ``0..K-1``.  Removing a table or dish moves the last
id into the freed slot (swap-with-last), so ids stay dense.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from math import lgamma, log
from typing import Sequence

import numpy as np

from hdpcrf.conjugate import (
    CountStats,
    FamilyPrior,
    GammaPoissonParams,
    NormalGammaParams,
    VectorStats,
)


class ModelError(ValueError):
    pass


class InconsistentState(ModelError):
    pass


@dataclass(frozen=True, eq=False)
class GroupedDataset:
    """Immutable grouped observations.

    ``values[j][i]`` is a Python int (count data) or a read-only float vector
    of length ``dim`` (real-vector data).  ``keys`` are the external group
    names, in first-appearance order.
    """

    values: tuple
    kind: str
    dim: int | None = None
    keys: tuple = ()

    def __post_init__(self):
        if len(self.values) == 0:
            raise ModelError("dataset needs at least one group")
        if self.kind not in ("count", "vector"):
            raise ModelError(f"unknown observation kind {self.kind!r}")
        for j, g in enumerate(self.values):
            if len(g) == 0:
                raise ModelError(f"group {j} is empty")
        if not self.keys:
            object.__setattr__(self, "keys", tuple(str(j) for j in range(len(self.values))))
        if len(self.keys) != len(self.values):
            raise ModelError("one key per group required")

    @classmethod
    def counts(cls, groups: Sequence[Sequence[int]], keys: Sequence[str] = ()) -> "GroupedDataset":
        out = []
        for j, g in enumerate(groups):
            row = []
            for x in g:
                if isinstance(x, (bool, np.bool_)) or int(x) != x or x < 0:
                    raise ModelError(f"group {j}: counts must be integers >= 0, got {x!r}")
                row.append(int(x))
            out.append(tuple(row))
        return cls(tuple(out), "count", None, tuple(keys))

    @classmethod
    def vectors(cls, groups: Sequence[Sequence], keys: Sequence[str] = ()) -> "GroupedDataset":
        out = []
        dim = None
        for j, g in enumerate(groups):
            row = []
            for x in g:
                v = np.array(x, dtype=float).reshape(-1)
                if dim is None:
                    if v.size < 1:
                        raise ModelError("vectors need dimension >= 1")
                    dim = v.size
                if v.size != dim:
                    raise ModelError(f"group {j}: ragged dimension {v.size} != {dim}")
                if not np.all(np.isfinite(v)):
                    raise ModelError(f"group {j}: non-finite observation")
                v.setflags(write=False)
                row.append(v)
            out.append(tuple(row))
        return cls(tuple(out), "vector", dim, tuple(keys))

    @property
    def num_groups(self) -> int:
        return len(self.values)

    @property
    def sizes(self) -> list[int]:
        return [len(g) for g in self.values]

    @property
    def total(self) -> int:
        return sum(self.sizes)

    def check_prior(self, prior: FamilyPrior) -> None:
        if self.kind == "count" and not isinstance(prior, GammaPoissonParams):
            raise ModelError("count data needs a Gamma-Poisson prior")
        if self.kind == "vector":
            if not isinstance(prior, NormalGammaParams):
                raise ModelError("vector data needs a Normal-Gamma prior")
            if prior.dim != self.dim:
                raise ModelError(f"prior dimension {prior.dim} != data dimension {self.dim}")

    def permuted(self, orders: Sequence[Sequence[int]]) -> "GroupedDataset":
        """Dataset with observations of group j reordered by ``orders[j]``."""
        vals = tuple(tuple(g[i] for i in o) for g, o in zip(self.values, orders))
        return GroupedDataset(vals, self.kind, self.dim, self.keys)


@dataclass(frozen=True)
class HdpHyper:
    gamma: float
    alpha0: float
    family_prior: FamilyPrior

    def __post_init__(self):
        if not (self.gamma > 0 and math.isfinite(self.gamma)):
            raise ModelError(f"gamma must be > 0, got {self.gamma}")
        if not (self.alpha0 > 0 and math.isfinite(self.alpha0)):
            raise ModelError(f"alpha0 must be > 0, got {self.alpha0}")


@dataclass
class ChainTrace:
    """Per-sweep record of a single chain."""

    burn_in: int = 0
    num_dishes: list = field(default_factory=list)
    log_joint: list = field(default_factory=list)
    snapshots: list = field(default_factory=list)  # (sweep, canonical config)

    def record(self, sweep: int, k: int, score: float) -> None:
        self.num_dishes.append(k)
        self.log_joint.append(score)

    def __len__(self) -> int:
        return len(self.num_dishes)

    def modal_k(self) -> int:
        ks = self.num_dishes[self.burn_in:] or self.num_dishes
        values, counts = np.unique(ks, return_counts=True)
        return int(values[np.argmax(counts)])


NEW = -1


class SeatingState:
    """Mutable CRF seating with count bookkeeping and per-dish statistics.

    Attributes (all lists indexed by dense ids):

    ``table_of[j][i]``     table of customer i in group j (``NEW``/-1 when detached)
    ``n_jt[j][t]``         customers at table t of group j
    ``dish_of_table[j][t]`` dish served at table t (-1 while a table is detached)
    ``table_stats[j][t]``  statistics of the customers at table t
    ``m_jk[j][k]``         tables of group j serving dish k
    ``m_k[k]``             tables serving dish k over all groups
    ``dish_stats[k]``      statistics of the customers eating dish k
    """

    def __init__(self, sizes: Sequence[int], prior: FamilyPrior, track_relabels: bool = False):
        self.prior = prior
        self.sizes = list(sizes)
        J = len(self.sizes)
        self.table_of = [[NEW] * n for n in self.sizes]
        self.n_jt = [[] for _ in range(J)]
        self.dish_of_table = [[] for _ in range(J)]
        self.table_stats = [[] for _ in range(J)]
        self.m_jk = [[] for _ in range(J)]
        self.m_k: list[int] = []
        self.dish_stats: list = []
        self.relabels: list | None = [] if track_relabels else None

    # -- sizes -----------------------------------------------------------

    @property
    def num_dishes(self) -> int:
        return len(self.m_k)

    @property
    def num_tables(self) -> int:
        return sum(len(t) for t in self.n_jt)

    @property
    def next_table_ids(self) -> list[int]:
        return [len(t) for t in self.n_jt]

    @property
    def next_dish_id(self) -> int:
        return len(self.m_k)

    # -- construction ----------------------------------------------------

    @classmethod
    def from_assignments(cls, data: GroupedDataset, prior: FamilyPrior,
                         tables: Sequence[Sequence[int]],
                         dishes: Sequence[Sequence[int]] | dict) -> "SeatingState":
        """Build a state from arbitrary labels.

        ``tables[j][i]`` is any hashable table label within group j;
        ``dishes[j][label]`` (or ``dishes[(j, label)]``) is any dish label.
        Labels are compacted to dense ids in order of first appearance.
        """
        state = cls(data.sizes, prior)
        dish_ids: dict = {}
        for j, group in enumerate(data.values):
            table_ids: dict = {}
            for i, x in enumerate(group):
                tl = tables[j][i]
                if tl not in table_ids:
                    dl = dishes[(j, tl)] if isinstance(dishes, dict) else dishes[j][tl]
                    if dl not in dish_ids:
                        dish_ids[dl] = state.new_dish()
                    table_ids[tl] = state.new_table(j, dish_ids[dl])
                state.seat(j, i, x, table_ids[tl])
        return state

    # -- low-level moves ---------------------------------------------------

    def new_dish(self) -> int:
        k = len(self.m_k)
        self.m_k.append(0)
        self.dish_stats.append(self.prior.new_stats())
        for row in self.m_jk:
            row.append(0)
        return k

    def new_table(self, j: int, k: int) -> int:
        """Open an empty table in group j serving dish k."""
        t = len(self.n_jt[j])
        self.n_jt[j].append(0)
        self.dish_of_table[j].append(k)
        self.table_stats[j].append(self.prior.new_stats())
        self.m_jk[j][k] += 1
        self.m_k[k] += 1
        return t

    def seat(self, j: int, i: int, x, t: int) -> None:
        if self.table_of[j][i] != NEW:
            raise ModelError(f"customer ({j},{i}) is already seated")
        self.table_of[j][i] = t
        self.n_jt[j][t] += 1
        self.table_stats[j][t].add(x)
        self.dish_stats[self.dish_of_table[j][t]].add(x)

    def unseat(self, j: int, i: int, x) -> None:
        """Remove customer (j, i); drop emptied table and dish."""
        t = self.table_of[j][i]
        if t == NEW:
            raise ModelError(f"customer ({j},{i}) is not seated")
        k = self.dish_of_table[j][t]
        self.table_of[j][i] = NEW
        self.n_jt[j][t] -= 1
        self.table_stats[j][t].remove(x)
        self.dish_stats[k].remove(x)
        if self.n_jt[j][t] == 0:
            self.m_jk[j][k] -= 1
            self.m_k[k] -= 1
            self._drop_table(j, t)
            if self.m_k[k] == 0:
                self._drop_dish(k)

    def detach_table(self, j: int, t: int) -> int:
        """Take table (j, t)'s block off its dish.  Returns the former dish id,
        or ``NEW`` if that dish was left without tables and removed."""
        k = self.dish_of_table[j][t]
        if k == NEW:
            raise ModelError(f"table ({j},{t}) already detached")
        self.dish_stats[k].subtract(self.table_stats[j][t])
        self.m_jk[j][k] -= 1
        self.m_k[k] -= 1
        self.dish_of_table[j][t] = NEW
        if self.m_k[k] == 0:
            self._drop_dish(k)
            return NEW
        return k

    def attach_table(self, j: int, t: int, k: int) -> None:
        if self.dish_of_table[j][t] != NEW:
            raise ModelError(f"table ({j},{t}) is attached")
        self.dish_of_table[j][t] = k
        self.dish_stats[k].merge(self.table_stats[j][t])
        self.m_jk[j][k] += 1
        self.m_k[k] += 1

    def _drop_table(self, j: int, t: int) -> None:
        last = len(self.n_jt[j]) - 1
        if t != last:
            self.n_jt[j][t] = self.n_jt[j][last]
            self.dish_of_table[j][t] = self.dish_of_table[j][last]
            self.table_stats[j][t] = self.table_stats[j][last]
            tab = self.table_of[j]
            for i, tt in enumerate(tab):
                if tt == last:
                    tab[i] = t
            if self.relabels is not None:
                self.relabels.append(("table", j, last, t))
        self.n_jt[j].pop()
        self.dish_of_table[j].pop()
        self.table_stats[j].pop()

    def _drop_dish(self, k: int) -> None:
        last = len(self.m_k) - 1
        if k != last:
            self.m_k[k] = self.m_k[last]
            self.dish_stats[k] = self.dish_stats[last]
            for row in self.m_jk:
                row[k] = row[last]
            for dot in self.dish_of_table:
                for t, kk in enumerate(dot):
                    if kk == last:
                        dot[t] = k
            if self.relabels is not None:
                self.relabels.append(("dish", None, last, k))
        self.m_k.pop()
        self.dish_stats.pop()
        for row in self.m_jk:
            row.pop()

    # -- views -------------------------------------------------------------

    def dish_of_customer(self, j: int, i: int) -> int:
        return self.dish_of_table[j][self.table_of[j][i]]

    def canonical(self) -> tuple:
        """Label-free configuration: tables relabelled by first customer
        within each group, dishes by first table scanning groups in order."""
        tables = []
        dishes = []
        dish_map: dict = {}
        for j, tab in enumerate(self.table_of):
            tmap: dict = {}
            row = []
            for t in tab:
                if t not in tmap:
                    tmap[t] = len(tmap)
                row.append(tmap[t])
            tables.append(tuple(row))
            drow = []
            for t in sorted(tmap, key=tmap.get):
                k = self.dish_of_table[j][t]
                if k not in dish_map:
                    dish_map[k] = len(dish_map)
                drow.append(dish_map[k])
            dishes.append(tuple(drow))
        return tuple(tables), tuple(dishes)

    def canonical_dish_ids(self) -> list[int]:
        """Map from internal dish id to canonical (first-appearance) id."""
        order: dict = {}
        for j, tab in enumerate(self.table_of):
            for t in tab:
                k = self.dish_of_table[j][t]
                if k not in order:
                    order[k] = len(order)
        return [order[k] for k in range(self.num_dishes)]

    def copy(self) -> "SeatingState":
        out = SeatingState.__new__(SeatingState)
        out.prior = self.prior
        out.sizes = list(self.sizes)
        out.table_of = [list(r) for r in self.table_of]
        out.n_jt = [list(r) for r in self.n_jt]
        out.dish_of_table = [list(r) for r in self.dish_of_table]
        out.table_stats = [[s.copy() for s in r] for r in self.table_stats]
        out.m_jk = [list(r) for r in self.m_jk]
        out.m_k = list(self.m_k)
        out.dish_stats = [s.copy() for s in self.dish_stats]
        out.relabels = None if self.relabels is None else list(self.relabels)
        return out


def init_seating(data: GroupedDataset, prior: FamilyPrior, mode: str = "together") -> SeatingState:
    """Deterministic starting configuration.

    ``"together"``: one table per group, every table on a single shared dish.
    ``"singleton"``: every customer at its own table with its own dish.
    """
    if data is None or data.num_groups == 0:
        raise ModelError("empty dataset")
    data.check_prior(prior)
    state = SeatingState(data.sizes, prior)
    if mode == "together":
        k = state.new_dish()
        for j, group in enumerate(data.values):
            t = state.new_table(j, k)
            for i, x in enumerate(group):
                state.seat(j, i, x, t)
    elif mode == "singleton":
        for j, group in enumerate(data.values):
            for i, x in enumerate(group):
                t = state.new_table(j, state.new_dish())
                state.seat(j, i, x, t)
    else:
        raise ModelError(f"unknown init mode {mode!r}")
    return state


def _stats_close(a, b) -> bool:
    if isinstance(a, CountStats):
        return a == b
    if a.n != b.n:
        return False
    scale = max(1.0, abs(b.sum_sq))
    return (abs(a.sum_sq - b.sum_sq) <= 1e-9 * scale
            and np.allclose(a.sum_x, b.sum_x, rtol=1e-9, atol=1e-9 * scale))


def check_consistency(state: SeatingState, data: GroupedDataset) -> list[str]:
    """Return a list of violated invariants (empty when consistent)."""
    problems: list[str] = []
    if state.sizes != data.sizes:
        return [f"group sizes {state.sizes} != data sizes {data.sizes}"]
    K = state.num_dishes
    J = data.num_groups
    if len(state.dish_stats) != K or any(len(r) != K for r in state.m_jk):
        problems.append("dish arrays have inconsistent lengths")
        return problems
    fresh_dish = [state.prior.new_stats() for _ in range(K)]
    m_jk = [[0] * K for _ in range(J)]
    for j, group in enumerate(data.values):
        T = len(state.n_jt[j])
        counts = [0] * T
        fresh_tab = [state.prior.new_stats() for _ in range(T)]
        for i, x in enumerate(group):
            t = state.table_of[j][i]
            if not 0 <= t < T:
                problems.append(f"customer ({j},{i}) has invalid table {t}")
                continue
            counts[t] += 1
            fresh_tab[t].add(x)
            k = state.dish_of_table[j][t]
            if 0 <= k < K:
                fresh_dish[k].add(x)
        for t in range(T):
            if state.n_jt[j][t] != counts[t]:
                problems.append(f"table ({j},{t}): n_jt={state.n_jt[j][t]} but {counts[t]} customers")
            if counts[t] < 1:
                problems.append(f"table ({j},{t}) is empty")
            k = state.dish_of_table[j][t]
            if not 0 <= k < K:
                problems.append(f"table ({j},{t}) serves invalid dish {k}")
            else:
                m_jk[j][k] += 1
            if not _stats_close(state.table_stats[j][t], fresh_tab[t]):
                problems.append(f"table ({j},{t}): stale table statistics")
        if sum(state.n_jt[j]) != data.sizes[j]:
            problems.append(f"group {j}: sum n_jt={sum(state.n_jt[j])} != n_j={data.sizes[j]}")
    for k in range(K):
        col = [m_jk[j][k] for j in range(J)]
        if [state.m_jk[j][k] for j in range(J)] != col:
            problems.append(f"dish {k}: m_jk does not match table assignments")
        if state.m_k[k] != sum(col):
            problems.append(f"dish {k}: m_k={state.m_k[k]} != sum_j m_jk={sum(col)}")
        if sum(col) < 1:
            problems.append(f"dish {k} has no tables")
        if not _stats_close(state.dish_stats[k], fresh_dish[k]):
            problems.append(f"dish {k}: stale dish statistics")
    return problems


def _require_seated(state: SeatingState) -> None:
    for j, tab in enumerate(state.table_of):
        if NEW in tab:
            raise InconsistentState(f"group {j} has a detached customer")
        if any(n < 1 for n in state.n_jt[j]):
            raise InconsistentState(f"group {j} has an empty table")
        if NEW in state.dish_of_table[j]:
            raise InconsistentState(f"group {j} has a detached table")
    if any(m < 1 for m in state.m_k):
        raise InconsistentState("dish with no tables")


def crf_log_prior(state: SeatingState, hyper: HdpHyper) -> float:
    """Log probability of the seating (as set partitions) under the CRF."""
    _require_seated(state)
    a0, g = hyper.alpha0, hyper.gamma
    lp = 0.0
    for j, counts in enumerate(state.n_jt):
        nj = state.sizes[j]
        lp += len(counts) * log(a0) + sum(lgamma(n) for n in counts)
        lp -= lgamma(nj + a0) - lgamma(a0)
    m_total = sum(state.m_k)
    lp += len(state.m_k) * log(g) + sum(lgamma(m) for m in state.m_k)
    lp -= lgamma(m_total + g) - lgamma(g)
    return lp


def log_joint(state: SeatingState, data: GroupedDataset, hyper: HdpHyper) -> float:
    """CRF log prior plus the collapsed log likelihood of every dish."""
    prior = hyper.family_prior
    return crf_log_prior(state, hyper) + math.fsum(prior.log_marginal(s) for s in state.dish_stats)
