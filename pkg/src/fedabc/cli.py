"""Command-line entry point.

Usage::

    fedabc run --config cfg.json --out results/ [--seed 7]
    fedabc run --config cfg.json --out results/ --transport socket --listen 127.0.0.1:9000
    fedabc run --config cfg.json --connect 127.0.0.1:9000 --site-id 1

The first form runs a scenario end to end in one process over the transport
named in the config. The second listens for externally launched site
processes; the third is one such site. Exit codes: 0 success, 1 configuration
error, 2 runtime error.
"""
from __future__ import annotations

import argparse
import json
import sys

from .errors import FedAbcError
from .experiments import default_config, load_config, run_scenario, run_site_process


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fedabc")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a scenario or serve one site")
    run.add_argument("--config", required=True, help="path to the JSON config")
    run.add_argument("--out", default=None, help="output directory (overrides config)")
    run.add_argument("--seed", type=int, default=None, help="seed override")
    run.add_argument(
        "--transport",
        choices=["inprocess", "socket"],
        default=None,
        help="transport override for the in-process harness",
    )
    run.add_argument(
        "--listen",
        default=None,
        help="host:port to await externally launched sites (coordinator role)",
    )
    run.add_argument("--connect", default=None, help="coordinator host:port (site role)")
    run.add_argument("--site-id", type=int, default=None, help="site id for --connect")

    init = sub.add_parser("init", help="write a default scenario config")
    init.add_argument("scenario", choices=["trimodal", "imbalance", "scarce"])
    init.add_argument("--seed", type=int, default=0)
    init.add_argument("--out", default="-", help="file path or - for stdout")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)

    if args.command == "init":
        doc = json.dumps(default_config(args.scenario, args.seed).to_dict(), indent=2)
        if args.out == "-":
            print(doc)
        else:
            with open(args.out, "w") as handle:
                handle.write(doc + "\n")
        return 0

    if args.connect is not None and args.listen is not None:
        print("--connect and --listen are mutually exclusive", file=sys.stderr)
        return 1
    if args.connect is not None and args.site_id is None:
        print("--connect requires --site-id", file=sys.stderr)
        return 1

    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg.seed = args.seed
        if args.transport is not None:
            cfg.transport.kind = args.transport
        out_dir = args.out if args.out is not None else cfg.output_dir
    except FedAbcError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1

    try:
        if args.connect is not None:
            run_site_process(cfg, args.site_id, args.connect)
            return 0
        result = run_scenario(cfg, out_dir, listen=args.listen)
    except FedAbcError as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return 2

    if cfg.scenario == "trimodal":
        print(
            f"trimodal: max mu error {result['max_mu_error']:.3f}, "
            f"max pi error {result['max_pi_error']:.3f}, "
            f"epsilon {result['epsilon']:.4f} "
            f"({result['seconds']:.1f}s)"
        )
    else:
        for row in result["reports"]:
            sd = f" +/- {row['auc_sd']:.3f}" if row["auc_sd"] != "" else ""
            print(
                f"{row['scenario']} site={row['site']} {row['condition']}: "
                f"auc={row['auc']:.4f}{sd} f1={row['f1']:.4f} cutoff={row['cutoff']:.4f}"
            )
    print(f"outputs written to {out_dir}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
