"""``linker`` command line entry point."""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from importlib import resources
from pathlib import Path

from .config import load_config
from .errors import LinkerError
from .pipeline import STAGES, Pipeline

EXIT_OK, EXIT_VALIDATION = 0, 2

DEMO_CONFIG = """\
[pipeline]
workdir = {workdir}
cache_dir = {workdir}/cache
workers = {workers}

[thresholds]
name_similarity = 90
ipccat_score = 800
ipc_prefix_len = 4

[geocode]
min_confidence = 0.3

[sampling]
mode = fraction
fraction = 0.30
seed = {seed}

[backends]
patents = fixture
publications = fixture
classifier = stub
geocoder = fixture

[fixtures]
publications = {data}/publications.json
lexicon = {data}/lexicon.txt
geocode = {data}/geocode.json

[corpus:Univ]
query = (pa=univ* or pa=institut or pa=laboratoire) AND (ic=A61) AND (pd within "2014, 2016") AND pr=FR
description = demo subset: public research applicants, A61
period = 2014-2016
fixture = {data}/univ.jsonl

[corpus:Large]
query = (ic=A63 OR IC=A62) AND (pd within "2014, 2016") AND pr=FR
description = demo subset: any applicant, A63/A62
period = 2014-2016
fixture = {data}/large.jsonl
"""


def demo_data_dir() -> Path:
    return Path(str(resources.files("inventor_linker") / "demo"))


def write_demo_config(workdir: Path, workers: int = 1, seed: int = 7) -> Path:
    workdir = Path(workdir).resolve()
    workdir.mkdir(parents=True, exist_ok=True)
    path = workdir / "demo.ini"
    path.write_text(
        DEMO_CONFIG.format(workdir=workdir, data=demo_data_dir(), workers=workers, seed=seed),
        encoding="utf-8",
    )
    return path


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="pipeline config file (INI)")
    common.add_argument("--corpus", help="restrict to one corpus id")
    common.add_argument("--force", action="store_true", help="rerun even if up to date")
    common.add_argument("--seed", type=int, help="sampling seed")
    common.add_argument("--format", choices=("txt", "structured"), default="txt")
    common.add_argument("--workers", type=int)
    common.add_argument("--name-threshold", type=int)
    common.add_argument("--ipccat-threshold", type=int)
    common.add_argument("--ipc-prefix-len", type=int)
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(
        prog="linker",
        description="Find inventors who are also academic authors by matching "
                    "publication IPC categorisations against patent IPC codes.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for stage in STAGES:
        sub.add_parser(stage, parents=[common], help=f"run the {stage} stage")
    sub.add_parser("run-all", parents=[common], help="run every stage in order")
    v = sub.add_parser("verdict", parents=[common], help="record a verification verdict")
    v.add_argument("cluster_id")
    v.add_argument("verdict", choices=("verified", "doubt", "error"))
    d = sub.add_parser("demo", parents=[common], help="run the bundled offline demo")
    d.add_argument("--workdir", type=Path, default=Path("linker-demo"))
    return parser


def _apply_overrides(cfg, args):
    if args.workers is not None:
        cfg.workers = args.workers
    if args.name_threshold is not None:
        cfg.name_threshold = args.name_threshold
    if args.ipccat_threshold is not None:
        cfg.score_threshold = args.ipccat_threshold
    if args.ipc_prefix_len is not None:
        cfg.prefix_len = args.ipc_prefix_len
    if args.seed is not None:
        cfg.sampling = dataclasses.replace(cfg.sampling, seed=args.seed)
    return cfg


def _print_report(pipeline: Pipeline, fmt: str) -> None:
    name = "report.txt" if fmt == "txt" else "report.json"
    sys.stdout.write((pipeline.config.workdir / name).read_text(encoding="utf-8"))


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        if args.command == "demo":
            config_path = args.config or write_demo_config(args.workdir, seed=args.seed or 7)
        else:
            if args.config is None:
                print("linker: --config is required", file=sys.stderr)
                return EXIT_VALIDATION
            config_path = args.config
        cfg = _apply_overrides(load_config(config_path), args)
        pipeline = Pipeline(cfg)

        if args.command in ("run-all", "demo"):
            pipeline.run_all(args.corpus, force=args.force)
            _print_report(pipeline, args.format)
        elif args.command == "verdict":
            if not args.corpus:
                print("linker: verdict needs --corpus", file=sys.stderr)
                return EXIT_VALIDATION
            pipeline.record_verdict(args.corpus, args.cluster_id, args.verdict)
        else:
            pipeline.run_stage(args.command, args.corpus, force=args.force)
            if args.command == "report":
                _print_report(pipeline, args.format)
    except LinkerError as exc:
        print(f"linker: {exc}", file=sys.stderr)
        return exc.exit_code
    except ValueError as exc:
        print(f"linker: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
