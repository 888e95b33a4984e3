"""Command-line harness.

Exit codes: 0 success, 1 configuration error, 2 divergence (the partial trace is still
written to the output directory).
"""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

from qconsensus.config import ConfigError, ScenarioConfig, bundled_scenarios, load_config, resolve_config_path
from qconsensus.scenario import compare, run_dos_gen, run_params, run_scenario, write_comparison
from qconsensus.trace import DivergenceError

EXIT_OK, EXIT_CONFIG, EXIT_DIVERGED = 0, 1, 2


def _load(name: str, args) -> ScenarioConfig:
    cfg = load_config(resolve_config_path(name))
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    return cfg


def _out_for(args, cfg: ScenarioConfig, many: bool) -> Path | None:
    if args.out is None:
        return None
    return Path(args.out) / cfg.name if many else Path(args.out)


def _run_one(command: str, name: str, args) -> tuple[int, str]:
    """Execute one config; returns (exit code, text for stdout/stderr)."""
    try:
        cfg = _load(name, args)
        many = len(args.configs) > 1
        if command in ("linear", "nonlinear"):
            if (command == "linear") != cfg.is_linear:
                raise ConfigError("mode", f"{cfg.name} is not a {command} scenario")
            res = run_scenario(cfg, _out_for(args, cfg, many), plot=args.plot)
            return EXIT_OK, f"# {cfg.name} -> {res.out_dir}\n" + res.summary.to_text()
        if command == "params":
            rep = run_params(cfg, _out_for(args, cfg, many))
            return EXIT_OK, f"# {cfg.name}\n" + rep.to_text()
        if command == "dos-gen":
            info = run_dos_gen(cfg, _out_for(args, cfg, many))
            return EXIT_OK, f"# {cfg.name}\n" + json.dumps(info, indent=2, sort_keys=True) + "\n"
        raise ConfigError("", f"unknown command {command!r}")
    except ConfigError as exc:
        return EXIT_CONFIG, f"config error in {name}: {exc}\n"
    except DivergenceError as exc:
        return EXIT_DIVERGED, f"{name} diverged: {exc}\n"


def _cmd_compare(args) -> int:
    try:
        a, b = (_load(n, args) for n in args.configs)
        runs = compare(a, b, min_k=args.min_k)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    from qconsensus.scenario import comparison_text

    out = Path(args.out) if args.out else Path("runs") / f"compare_{a.name}_{b.name}"
    write_comparison(runs, out)
    print(comparison_text(runs), end="")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="qconsensus", description="Quantized consensus under DoS: simulations and checks.")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, nargs="+"):
        p.add_argument("configs", nargs=nargs, metavar="config", help="YAML scenario file or bundled scenario name")
        p.add_argument("--seed", type=int, default=None, help="override the scenario seed")
        p.add_argument("--out", default=None, help="output directory (one subdirectory per config when several)")

    for name, helptext in [
        ("linear", "simulate known linear agents"),
        ("nonlinear", "simulate ESO-based agents"),
        ("params", "check parameters against the guarantee conditions"),
        ("dos-gen", "generate and check a DoS schedule"),
    ]:
        p = sub.add_parser(name, help=helptext)
        common(p)
        p.add_argument("--plot", action="store_true", help="also write plot.svg")
        p.add_argument("--jobs", type=int, default=1, help="run several configs in parallel")
    p = sub.add_parser("compare", help="ZIH against ZIZO on one plant, graph and DoS schedule")
    common(p, nargs=2)
    p.add_argument("--min-k", action="store_true", help="bisect the smallest unsaturated K for each run")
    sub.add_parser("list", help="list bundled scenarios")
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "list":
        for name, path in bundled_scenarios().items():
            print(f"{name}\t{path}")
        return EXIT_OK
    if args.command == "compare":
        return _cmd_compare(args)

    if args.jobs > 1 and len(args.configs) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            futures = [pool.submit(_run_one, args.command, n, args) for n in args.configs]
            results = [f.result() for f in futures]
    else:
        results = [_run_one(args.command, n, args) for n in args.configs]
    code = EXIT_OK
    for rc, text in results:
        print(text, end="", file=sys.stdout if rc == EXIT_OK else sys.stderr)
        code = max(code, rc)
    return code


if __name__ == "__main__":
    sys.exit(main())
