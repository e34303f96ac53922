"""Command line entry point.

Exit codes: 0 success, 2 configuration error, 3 every per-point solve failed.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .clustering import AffinityError
from .datasets import DatasetError
from .group_algebra import RepresentationError
from .harness import (ConfigError, ExperimentConfig, RunOptions, _TraceSink,
                      run_dataset_experiment, run_geometry_experiment,
                      run_synthetic_experiment, write_outputs)

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER = 0, 2, 3

_MODES = {"synth": "synthetic", "dataset": "dataset", "geometry": "geometry"}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ssmc", description="Sparse submodule clustering experiments")
    p.add_argument("command", choices=sorted(_MODES))
    p.add_argument("--config", required=True, help="experiment configuration (JSON)")
    p.add_argument("--trace", action="store_true", help="write per-iteration solver records")
    p.add_argument("--save-affinity", action="store_true", help="dump best-lambda affinities")
    p.add_argument("--no-timestamp", action="store_true",
                   help="omit wall-clock fields so reports are bit-reproducible")
    p.add_argument("--out", help="output directory (overrides the config)")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = ExperimentConfig.load(args.config)
        if cfg.mode != _MODES[args.command]:
            raise ConfigError(f"config mode {cfg.mode!r} does not match command {args.command!r}")
    except (ConfigError, RepresentationError) as exc:
        print(f"ssmc: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    out = Path(args.out or cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    opts = RunOptions(trace_path=out / "trace.jsonl" if args.trace else None,
                      save_affinity=out / "affinity" if args.save_affinity else None,
                      timestamps=not args.no_timestamp)
    sink = _TraceSink(opts.trace_path) if opts.trace_path else None
    try:
        if cfg.mode == "synthetic":
            result = run_synthetic_experiment(cfg, opts, sink)
        elif cfg.mode == "dataset":
            result = run_dataset_experiment(cfg, opts, sink)
        else:
            result = run_geometry_experiment(cfg, opts)
    except (ConfigError, DatasetError, RepresentationError) as exc:
        print(f"ssmc: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except AffinityError as exc:
        print(f"ssmc: solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    finally:
        if sink is not None:
            sink.close()
    write_outputs(result, out)
    print(out / "report.json")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
