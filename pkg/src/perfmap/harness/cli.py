"""Command-line entry point.

    perfmap run --config run.json [--out DIR] [--seed N] [--threads N]
    perfmap design-run [--out DIR] [--seed N]     # built-in preset
    perfmap show-preset regret-run > regret.json

Exit codes: 0 success, 2 invalid configuration, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

from perfmap import __version__
from perfmap.errors import NumericalError, PerfmapError
from perfmap.harness.config import PRESETS, ConfigError, RunConfig, config_from_dict, load_config
from perfmap.harness.experiments import run
from perfmap.harness.output import write_manifest, write_outputs

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


def _add_run_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--out", type=Path, help="output directory (default: OUTPUT_DIR, the config, or ./runs/<experiment>)")
    parser.add_argument("--seed", type=int, help="master seed, overrides RNG_SEED and the config")
    parser.add_argument("--threads", type=int, default=1, help="worker threads for replications (default 1)")
    parser.add_argument("--no-figures", action="store_true", help="skip PNG rendering")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="perfmap", description="Distribution-map learning experiments.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    run_parser = sub.add_parser("run", help="run an experiment from a JSON config")
    run_parser.add_argument("--config", type=Path, required=True, help="JSON run configuration")
    _add_run_options(run_parser)

    for name in PRESETS:
        preset = sub.add_parser(name, help=f"run the built-in {name} preset")
        _add_run_options(preset)

    show = sub.add_parser("show-preset", help="print a preset config as JSON")
    show.add_argument("name", choices=sorted(PRESETS))
    return parser


def resolve_config(args) -> RunConfig:
    if args.command == "run":
        config = load_config(args.config)
    else:
        config = config_from_dict(json.loads(json.dumps(PRESETS[args.command])))
    seed = args.seed
    if seed is None and os.environ.get("RNG_SEED"):
        try:
            seed = int(os.environ["RNG_SEED"])
        except ValueError:
            raise ConfigError("RNG_SEED", f"expected an integer, got {os.environ['RNG_SEED']!r}") from None
    if seed is not None:
        if not 0 <= seed < 2**64:
            raise ConfigError("seed", f"must lie in [0, 2**64), got {seed}")
        config.seed = seed
    if args.threads < 1:
        raise ConfigError("threads", f"must be >= 1, got {args.threads}")
    return config


def output_dir(args, config: RunConfig) -> Path:
    if args.out is not None:
        return args.out
    if os.environ.get("OUTPUT_DIR"):
        return Path(os.environ["OUTPUT_DIR"])
    if config.output_dir:
        return Path(config.output_dir)
    return Path("runs") / config.experiment


def execute(args) -> int:
    try:
        config = resolve_config(args)
    except ConfigError as exc:
        print(f"perfmap: invalid config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"perfmap: cannot read config: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    out = output_dir(args, config)
    start = time.perf_counter()
    try:
        result = run(config, threads=args.threads)
    except (PerfmapError, ArithmeticError) as exc:
        module = type(exc).__module__
        print(f"perfmap: numerical failure ({type(exc).__name__} in {module}): {exc}", file=sys.stderr)
        if isinstance(exc, NumericalError) and exc.diagnostics:
            print(f"perfmap: diagnostics: {json.dumps(exc.diagnostics, default=str)}", file=sys.stderr)
        return EXIT_NUMERICAL
    paths = write_outputs(out, result, figures=not args.no_figures)
    write_manifest(out, config, config.seed, paths, time.perf_counter() - start, __version__, result.summary)
    print(f"wrote {len(paths)} files to {out}")
    for key, value in result.summary.items():
        print(f"  {key}: {value}")
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "show-preset":
        print(json.dumps(PRESETS[args.name], indent=2))
        return EXIT_OK
    return execute(args)


if __name__ == "__main__":
    sys.exit(main())
