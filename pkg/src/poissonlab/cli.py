"""Command line: ``poissonlab run <experiment> --config FILE`` and ``poissonlab replay MANIFEST``.

Exit codes: 0 when the experiment passes, 2 on a property violation (or a
replay whose outputs differ), 1 on any execution or configuration error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import platform
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .config import EXPERIMENTS, SCHEMA_VERSION, ConfigError, ExperimentConfig, config_from_dict, load_config
from .harness import StudyResult, run_study
from .potential import SUBSTREAM_ALGORITHM

MANIFEST_NAME = "manifest.json"


def render_csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def sha256(text: str) -> str:
    return hashlib.sha256(text.encode()).hexdigest()


def write_outputs(result: StudyResult, config: ExperimentConfig, out: Path, jobs: int) -> dict:
    out.mkdir(parents=True, exist_ok=True)
    files = {f"{result.name}.csv": render_csv(result.header, result.rows)}
    if result.summary_header:
        files[f"{result.name}_summary.csv"] = render_csv(result.summary_header, result.summary_rows)
    for name, text in files.items():
        (out / name).write_text(text)
    cfg = config.to_dict()
    cfg_text = json.dumps(cfg, sort_keys=True)
    manifest = {
        "schema": SCHEMA_VERSION,
        "experiment": result.name,
        "config": cfg,
        "config_sha256": sha256(cfg_text),
        "seeds": config.seeds(),
        "verdict": "PASS" if result.passed else "FAIL",
        "violations": result.violations,
        "outputs": {name: sha256(text) for name, text in files.items()},
        "versions": {
            "poissonlab": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "substreams": SUBSTREAM_ALGORITHM,
        },
        "jobs": jobs,
        "timings": result.timings,
    }
    (out / MANIFEST_NAME).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest


def _run(experiment: str, config: ExperimentConfig, out: Path, jobs: int) -> tuple[int, dict]:
    result = run_study(experiment, config, jobs=jobs)
    manifest = write_outputs(result, config, out, jobs)
    print(f"{experiment}: {'PASS' if result.passed else 'FAIL'} -> {out}")
    for v in result.violations[:20]:
        print(f"  violation: {v}")
    return (0 if result.passed else 2), manifest


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="poissonlab", description="Random Schrodinger operator experiments")
    sub = ap.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run an experiment from a config file")
    run.add_argument("experiment", choices=EXPERIMENTS)
    run.add_argument("--config", required=True, type=Path, help="TOML config file")
    run.add_argument("--seed", type=int, default=None, help="override master_seed (unsigned 64-bit)")
    run.add_argument("--out", type=Path, default=None, help="output directory (default: config 'out')")
    run.add_argument("--dense-threshold", type=int, default=None, help="largest size for dense solves")
    run.add_argument("--jobs", type=int, default=1, help="parallel realizations")
    rep = sub.add_parser("replay", help="rerun from a manifest and compare outputs")
    rep.add_argument("manifest", type=Path)
    rep.add_argument("--out", type=Path, default=None, help="output directory (default: <manifest dir>/replay)")
    rep.add_argument("--jobs", type=int, default=1)
    return ap


def run_cli(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            config = load_config(args.config)
            if args.seed is not None:
                if not 0 <= args.seed < 2**64:
                    raise ConfigError("--seed: must be an unsigned 64-bit integer")
                config = config.with_seed(args.seed)
            if args.dense_threshold is not None:
                config = replace(config, dense_threshold=args.dense_threshold)
            out = args.out if args.out is not None else Path(config.out)
            code, _ = _run(args.experiment, config, out, args.jobs)
            return code
        manifest = json.loads(args.manifest.read_text())
        config = config_from_dict(manifest["config"])
        out = args.out if args.out is not None else args.manifest.parent / "replay"
        code, fresh = _run(manifest["experiment"], config, out, args.jobs)
        if fresh["outputs"] != manifest["outputs"]:
            for name in sorted(set(fresh["outputs"]) | set(manifest["outputs"])):
                if fresh["outputs"].get(name) != manifest["outputs"].get(name):
                    print(f"replay mismatch: {name}")
            return 2
        print("replay: outputs identical")
        return code
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return 1
    except Exception as err:  # noqa: BLE001 - any failure is an execution error
        print(f"error: {type(err).__name__}: {err}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run_cli())
