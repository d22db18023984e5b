"""Dataset, configuration and result files.

Datasets are JSON lines, one observation per line::

    {"group": "a", "value": 3}            # counts
    {"group": "a", "value": [0.1, -2.0]}  # real vectors

Groups are numbered by first appearance.
"""
from __future__ import annotations

import csv
import dataclasses
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from hdpcrf.conjugate import GammaPoissonParams, NormalGammaParams
from hdpcrf.model import ChainTrace, GroupedDataset, HdpHyper, SeatingState
from hdpcrf.sampler import SamplerConfig

FAMILIES = ("gamma-poisson", "normal-gamma")


class DatasetError(ValueError):
    pass


class ConfigError(ValueError):
    pass


def parse_dataset(path, family: str) -> GroupedDataset:
    """Read a JSON-lines dataset for ``family`` ("gamma-poisson" or "normal-gamma")."""
    if family not in FAMILIES:
        raise DatasetError(f"unknown family {family!r}")
    counts = family == "gamma-poisson"
    groups: dict[str, list] = {}
    dim = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetError(f"line {lineno}: invalid JSON ({exc.msg})") from None
            if not isinstance(rec, dict) or "group" not in rec or "value" not in rec:
                raise DatasetError(f"line {lineno}: expected an object with 'group' and 'value'")
            key, value = rec["group"], rec["value"]
            if not isinstance(key, str):
                raise DatasetError(f"line {lineno}: group must be a string")
            if counts:
                if isinstance(value, bool) or not isinstance(value, int):
                    raise DatasetError(f"line {lineno}: count value must be an integer, got {value!r}")
                if value < 0:
                    raise DatasetError(f"line {lineno}: negative count {value}")
            else:
                if not isinstance(value, list) or not value:
                    raise DatasetError(f"line {lineno}: vector value must be a non-empty list")
                if any(isinstance(v, bool) or not isinstance(v, (int, float)) for v in value):
                    raise DatasetError(f"line {lineno}: vector entries must be numbers")
                if not all(math.isfinite(v) for v in value):
                    raise DatasetError(f"line {lineno}: non-finite vector entry")
                if dim is None:
                    dim = len(value)
                elif len(value) != dim:
                    raise DatasetError(f"line {lineno}: ragged dimension {len(value)} (expected {dim})")
            groups.setdefault(key, []).append(value)
    if not groups:
        raise DatasetError(f"{path}: no observations")
    keys = list(groups)
    if counts:
        return GroupedDataset.counts([groups[k] for k in keys], keys)
    return GroupedDataset.vectors([groups[k] for k in keys], keys)


def write_dataset(data: GroupedDataset, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for key, group in zip(data.keys, data.values):
            for x in group:
                value = x if data.kind == "count" else [float(v) for v in x]
                fh.write(json.dumps({"group": key, "value": value}) + "\n")


# ---------------------------------------------------------------------------
# run configuration
# ---------------------------------------------------------------------------


@dataclass
class RunConfig:
    family: str = "gamma-poisson"
    gamma: float = 1.0
    alpha0: float = 1.0
    # Gamma-Poisson prior
    alpha: float = 1.0
    beta: float = 1.0
    # Normal-Gamma prior
    mu0: list = field(default_factory=lambda: [0.0])
    kappa0: float = 1.0
    alpha0_ng: float = 1.0
    beta0: float = 1.0
    # sampler
    sweeps: int = 200
    burn_in: int = 50
    chains: int = 1
    seed: int = 0
    snapshot_every: int = 0
    init_mode: str = "together"
    scan_order: str = "shuffled"
    # files
    input: str | None = None
    output_dir: str = "out"
    # forward sampling (generate --config)
    group_sizes: list = field(default_factory=lambda: [10, 10, 10])

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConfigError(f"family must be one of {FAMILIES}, got {self.family!r}")
        for name in ("gamma", "alpha0", "alpha", "beta", "kappa0", "alpha0_ng", "beta0"):
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, (int, float)) or not (v > 0 and math.isfinite(v)):
                raise ConfigError(f"{name} must be a positive number, got {v!r}")
        for name in ("sweeps", "burn_in", "chains", "seed", "snapshot_every"):
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, int):
                raise ConfigError(f"{name} must be an integer, got {v!r}")
        if self.chains < 1:
            raise ConfigError("chains must be >= 1")
        if self.seed < 0 or self.seed >= 2**64:
            raise ConfigError("seed must be a 64-bit unsigned integer")
        if self.init_mode not in ("together", "singleton"):
            raise ConfigError(f"init_mode must be 'together' or 'singleton', got {self.init_mode!r}")
        if not self.group_sizes or any(
                isinstance(n, bool) or not isinstance(n, int) or n < 1 for n in self.group_sizes):
            raise ConfigError("group_sizes must be a non-empty list of positive integers")
        try:
            self.sampler_config()
            self.hyper()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigError(f"unknown config fields: {', '.join(unknown)}")
        return cls(**d)

    @classmethod
    def load(cls, path) -> "RunConfig":
        with open(path, encoding="utf-8") as fh:
            try:
                raw = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{path}: invalid JSON ({exc.msg})") from None
        if not isinstance(raw, dict):
            raise ConfigError(f"{path}: config must be a JSON object")
        cfg = cls.from_dict(raw)
        base = Path(path).parent
        if cfg.input is not None and not Path(cfg.input).is_absolute():
            cfg.input = str(base / cfg.input)
        if not Path(cfg.output_dir).is_absolute():
            cfg.output_dir = str(base / cfg.output_dir)
        return cfg

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def family_prior(self):
        if self.family == "gamma-poisson":
            return GammaPoissonParams(float(self.alpha), float(self.beta))
        return NormalGammaParams(tuple(self.mu0), float(self.kappa0),
                                 float(self.alpha0_ng), float(self.beta0))

    def hyper(self) -> HdpHyper:
        return HdpHyper(float(self.gamma), float(self.alpha0), self.family_prior())

    def sampler_config(self) -> SamplerConfig:
        return SamplerConfig(sweeps=self.sweeps, burn_in=self.burn_in,
                             snapshot_every=self.snapshot_every, rng_seed=self.seed,
                             scan_order=self.scan_order, init_mode=self.init_mode)


# ---------------------------------------------------------------------------
# results
# ---------------------------------------------------------------------------


def _params_json(params) -> dict:
    return {k: (list(v) if isinstance(v, tuple) else v) for k, v in params.to_dict().items()}


def write_results(trace: ChainTrace, state: SeatingState, data: GroupedDataset,
                  hyper: HdpHyper, out_dir, config: RunConfig | None = None) -> dict:
    """Write assignments.jsonl, trace.csv and summary.json into ``out_dir``."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc}") from exc
    canon = state.canonical_dish_ids()
    tables, _ = state.canonical()

    with open(out / "assignments.jsonl", "w", encoding="utf-8") as fh:
        for j, key in enumerate(data.keys):
            for i in range(data.sizes[j]):
                rec = {"group": key, "index": i, "table": tables[j][i],
                       "dish": canon[state.dish_of_customer(j, i)]}
                fh.write(json.dumps(rec) + "\n")

    with open(out / "trace.csv", "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["sweep", "K", "log_joint"])
        for sweep, (k, lj) in enumerate(zip(trace.num_dishes, trace.log_joint)):
            w.writerow([sweep, k, repr(float(lj))])

    prior = hyper.family_prior
    dishes = [None] * state.num_dishes
    for k, stats in enumerate(state.dish_stats):
        dishes[canon[k]] = {"dish": canon[k], "customers": stats.n, "tables": state.m_k[k],
                            "posterior": _params_json(prior.posterior(stats))}
    summary = {
        "modal_K": trace.modal_k(),
        "final_K": state.num_dishes,
        "burn_in": trace.burn_in,
        "sweeps": len(trace),
        "seed": None if config is None else config.seed,
        "groups": {key: j for j, key in enumerate(data.keys)},
        "dishes": dishes,
        "config": None if config is None else config.to_dict(),
        "snapshots": [{"sweep": s, "tables": [list(t) for t in cfg[0]],
                       "dishes": [list(d) for d in cfg[1]]} for s, cfg in trace.snapshots],
    }
    with open(out / "summary.json", "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2)
        fh.write("\n")
    return summary


def write_truth(scenario_or_sample, path, labels, dish_params, keys) -> None:
    """Ground-truth sidecar for generated datasets."""
    def plain(p):
        if isinstance(p, tuple):
            mu, lam = p
            return {"mu": [float(v) for v in np.ravel(mu)], "lambda": float(lam)}
        if isinstance(p, (list, np.ndarray)):
            return [float(v) for v in np.ravel(p)]
        return float(p)

    doc = {
        "source": scenario_or_sample,
        "groups": list(keys),
        "labels": [list(map(int, row)) for row in labels],
        "dish_params": [plain(p) for p in dish_params],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")
