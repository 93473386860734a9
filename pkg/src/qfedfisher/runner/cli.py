"""Command-line interface: ``qfedfisher run | validate | oracle``."""
from __future__ import annotations

import argparse
import json
import logging
import sys

import numpy as np

from .. import oracles, qsim
from ..fedcore import ClientUpdate, aggregate_fedavg, aggregate_fedfisher
from .config import PRESETS, ConfigError, parse_config
from .experiment import run_experiment


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("config", nargs="?", help="YAML key-value config file")
    p.add_argument("--preset", choices=sorted(PRESETS))
    p.add_argument("--strategy", action="append", help="strategy to run (repeatable or comma separated)")
    p.add_argument("--rounds", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output directory (default: $QFEDFISHER_OUT or ./runs)")
    p.add_argument("--threads", type=int)


def _overrides(args) -> dict:
    strategies = None
    if args.strategy:
        strategies = [s.strip() for item in args.strategy for s in item.split(",") if s.strip()]
    return {
        "strategies": strategies,
        "rounds": args.rounds,
        "seed": args.seed,
        "out_dir": args.out,
        "threads": args.threads,
    }


def cmd_run(args) -> int:
    config = parse_config(args.config, _overrides(args), args.preset)
    results = run_experiment(config)
    for name, res in results.items():
        last = res.reports[-1]
        print(f"{name}: round {last.round} test_accuracy={last.test_accuracy:.4f} test_loss={last.test_loss:.4f}")
    print(f"artifacts written to {config.out_dir}")
    return 0


def cmd_validate(args) -> int:
    config = parse_config(args.config, _overrides(args), args.preset)
    print(json.dumps(config.to_dict(), indent=2))
    return 0


def oracle_report(cases: int, seed: int) -> dict:
    """Cross-check fast paths against the brute-force oracles on random instances."""
    rng = np.random.default_rng(seed)
    grad_dev = ps_dev = sim_dev = agg_dev = 0.0
    membership_ok = True
    vectors = []
    for _ in range(cases):
        n, layers = int(rng.integers(1, 5)), int(rng.integers(1, 4))
        layout = qsim.CircuitLayout(n, layers)
        params = rng.uniform(-np.pi, np.pi, layout.n_params)
        x = rng.normal(size=layout.dim)
        state = qsim.amplitude_encode(x)
        weights = rng.normal(size=n)
        dense = oracles.circuit_unitary(n, layers, params) @ state.amplitudes
        sim_dev = max(sim_dev, float(np.abs(qsim.run_circuit(layout, params, state).amplitudes - dense).max()))
        adj = qsim.adjoint_gradient(layout, params, state, weights)
        shift = oracles.parameter_shift_gradient(n, layers, params, state.amplitudes, weights)
        ps_dev = max(ps_dev, float(np.abs(adj - shift).max()))
        fd = oracles.central_difference(
            lambda t: oracles.expectation(n, layers, t, state.amplitudes, weights), params)
        grad_dev = max(grad_dev, float(np.abs(adj - fd).max()))

        c, p = int(rng.integers(1, 6)), int(rng.integers(1, 21))
        thetas = rng.normal(size=(c, p))
        fishers = rng.uniform(0, 1, size=(c, p)) * (rng.uniform(size=(c, p)) < 0.7)
        sizes = rng.integers(1, 500, size=c)
        delta = float(rng.choice([0.0, 0.01, 0.5]))
        updates = [ClientUpdate(i, thetas[i], int(sizes[i]), fishers[i]) for i in range(c)]
        got, sub = aggregate_fedfisher(updates, delta)
        ref, ref_sub = oracles.fedfisher(thetas.tolist(), fishers.tolist(), sizes.tolist(), delta)
        agg_dev = max(agg_dev, float(np.abs(got - np.array(ref)).max()))
        agg_dev = max(agg_dev, float(np.abs(aggregate_fedavg(updates)
                                            - np.array(oracles.fedavg(thetas.tolist(), sizes.tolist()))).max()))
        membership_ok &= sub.tolist() == ref_sub
        vectors.append({
            "params": thetas.tolist(), "fisher": fishers.tolist(), "sizes": sizes.tolist(),
            "delta": delta, "theta_s": ref, "substituted": ref_sub,
        })
    return {
        "cases": cases,
        "seed": seed,
        "max_dev_run_circuit_vs_dense": sim_dev,
        "max_dev_adjoint_vs_parameter_shift": ps_dev,
        "max_dev_adjoint_vs_finite_difference": grad_dev,
        "max_dev_aggregation": agg_dev,
        "substitution_sets_match": bool(membership_ok),
        "aggregation_vectors": vectors,
    }


def cmd_oracle(args) -> int:
    report = oracle_report(args.cases, args.seed)
    ok = (
        report["max_dev_run_circuit_vs_dense"] < 1e-12
        and report["max_dev_adjoint_vs_parameter_shift"] < 1e-10
        and report["max_dev_adjoint_vs_finite_difference"] < 1e-5
        and report["max_dev_aggregation"] < 1e-12
        and report["substitution_sets_match"]
    )
    if args.dump:
        with open(args.dump, "w") as f:
            json.dump(report, f, indent=2)
    summary = {k: v for k, v in report.items() if k != "aggregation_vectors"}
    summary["ok"] = ok
    print(json.dumps(summary, indent=2))
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qfedfisher", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment and write metrics")
    _common(run)
    run.set_defaults(func=cmd_run)

    val = sub.add_parser("validate", help="resolve and check a config without running it")
    _common(val)
    val.set_defaults(func=cmd_validate)

    orc = sub.add_parser("oracle", help="check fast paths against brute-force oracles")
    orc.add_argument("--cases", type=int, default=20)
    orc.add_argument("--seed", type=int, default=0)
    orc.add_argument("--dump", help="write the generated test vectors to this JSON file")
    orc.set_defaults(func=cmd_oracle)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
