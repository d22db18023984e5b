"""Command line entry point: ``hdpcrf fit | generate | validate``."""
from __future__ import annotations

import argparse
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from hdpcrf.io import (
    ConfigError,
    DatasetError,
    RunConfig,
    parse_dataset,
    write_dataset,
    write_results,
    write_truth,
)
from hdpcrf.model import ModelError
from hdpcrf.sampler import run_chain
from hdpcrf.synth import SCENARIOS, fixed_scenario, forward_sample

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _load_config(path) -> RunConfig:
    if not Path(path).is_file():
        raise UsageError(f"config file not found: {path}")
    try:
        return RunConfig.load(path)
    except ConfigError as exc:
        raise UsageError(f"bad config {path}: {exc}") from None


def _fit_one(args):
    data, cfg, chain, out_dir = args
    trace, state = run_chain(data, cfg.hyper(), cfg.sampler_config(), chain=chain)
    summary = write_results(trace, state, data, cfg.hyper(), out_dir, cfg)
    return chain, summary["modal_K"], str(out_dir)


def cmd_fit(ns) -> int:
    cfg = _load_config(ns.config)
    if cfg.input is None:
        raise UsageError("config has no 'input' dataset path")
    try:
        data = parse_dataset(cfg.input, cfg.family)
        data.check_prior(cfg.family_prior())
    except FileNotFoundError:
        raise UsageError(f"dataset not found: {cfg.input}") from None
    except (DatasetError, ModelError) as exc:
        raise UsageError(f"{cfg.input}: {exc}") from None
    out = Path(cfg.output_dir)
    if cfg.chains == 1:
        jobs = [(data, cfg, 0, out)]
    else:
        jobs = [(data, cfg, c, out / f"chain-{c}") for c in range(cfg.chains)]
    if len(jobs) == 1:
        results = [_fit_one(jobs[0])]
    else:
        with ProcessPoolExecutor(max_workers=len(jobs)) as pool:
            results = list(pool.map(_fit_one, jobs))
    for chain, modal_k, where in results:
        print(f"chain {chain}: modal K = {modal_k} -> {where}")
    return EXIT_OK


def cmd_generate(ns) -> int:
    if (ns.scenario is None) == (ns.config is None):
        raise UsageError("generate needs exactly one of --scenario or --config")
    if ns.scenario is not None:
        if ns.out is None:
            raise UsageError("generate --scenario needs --out")
        if ns.scenario not in SCENARIOS:
            raise UsageError(f"unknown scenario {ns.scenario!r}; choose from {sorted(SCENARIOS)}")
        sc = fixed_scenario(ns.scenario)
        data, labels, params, source = sc.data, sc.labels, sc.dish_params, ns.scenario
    else:
        cfg = _load_config(ns.config)
        rng = np.random.default_rng(cfg.seed)
        draw = forward_sample(cfg.hyper(), cfg.group_sizes, rng)
        data = draw.data
        labels = [[draw.dishes[j][t] for t in tab] for j, tab in enumerate(draw.tables)]
        params, source = draw.dish_params, f"forward_sample(seed={cfg.seed})"
        if ns.out is None:
            ns.out = str(Path(cfg.output_dir) / "generated.jsonl")
    out = Path(ns.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_dataset(data, out)
    truth = out.with_name(out.stem + ".truth.json")
    write_truth(source, truth, labels, params, data.keys)
    print(f"wrote {data.total} observations to {out} (ground truth: {truth})")
    return EXIT_OK


def cmd_validate(ns) -> int:
    from hdpcrf.validation import run_suite

    ok = True
    for res in run_suite(ns.grid):
        print(res.line(), flush=True)
        ok &= res.passed
    print("ALL PASS" if ok else "VALIDATION FAILED")
    return EXIT_OK if ok else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hdpcrf", description="HDP mixtures with conjugate families")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    f = sub.add_parser("fit", help="run Gibbs chains on a dataset")
    f.add_argument("--config", required=True)
    f.set_defaults(func=cmd_fit)

    g = sub.add_parser("generate", help="write a synthetic dataset")
    g.add_argument("--scenario")
    g.add_argument("--config")
    g.add_argument("--out")
    g.set_defaults(func=cmd_generate)

    v = sub.add_parser("validate", help="run the oracle suite")
    v.add_argument("--grid", choices=("quick", "full"), default="quick")
    v.set_defaults(func=cmd_validate)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    logging.basicConfig(level=logging.DEBUG if ns.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return ns.func(ns)
    except UsageError as exc:
        print(f"hdpcrf {ns.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
