"""``docclass`` command line.

Subcommands: ingest, embed, classify-embed, classify-vlm, cluster-metrics,
evaluate, report. Failures exit nonzero and print a JSON error object on
stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import pipeline
from .errors import DocClassError, StageError

SUBCOMMANDS = ("ingest", "embed", "classify-embed", "classify-vlm", "cluster-metrics", "evaluate", "report")
EXIT_STAGE = 1
EXIT_USAGE = 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", type=Path, help="YAML/JSON config with providers, raster and run sections")
    common.add_argument("--manifest", type=Path)
    common.add_argument("--provider", help="embedding provider id (or chat provider id for classify-vlm)")
    common.add_argument("--template", help="prompt template name or file")
    common.add_argument("--out", type=Path, help="output directory")
    common.add_argument("--workers", type=int)
    common.add_argument("--max-dim", type=int)
    common.add_argument("--unparsed-policy", choices=("count_wrong", "exclude"))
    common.add_argument("--class-text", choices=("definitions", "names"),
                        help="embed rich class definitions or bare class names")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="docclass", description="Benchmark document classifiers against inference endpoints.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name, parents=[common])
        if name == "report":
            p.add_argument("--format", choices=("table", "csv", "json"), default="table")
    return parser


def _run_config(args) -> pipeline.RunConfig:
    overrides = {
        "manifest_path": str(args.manifest) if args.manifest else None,
        "template_name": args.template,
        "worker_count": args.workers,
        "output_dir": str(args.out) if args.out else None,
        "max_dim": args.max_dim,
        "unparsed_policy": args.unparsed_policy,
        "class_text": args.class_text,
    }
    if args.provider:
        key = "chat_provider_id" if args.command == "classify-vlm" else "provider_id"
        overrides[key] = args.provider
    if args.config:
        return pipeline.RunConfig.from_file(args.config, **overrides)
    # without a config file, paths are relative to the working directory
    return pipeline.RunConfig.from_mapping({}, base=Path.cwd(), **overrides)


def _dispatch(args) -> object:
    rc = _run_config(args)
    cmd = args.command
    if cmd == "ingest":
        rows = pipeline.stage_ingest(rc)
        return {"ingested": len(rows)}
    if cmd == "embed":
        vectors = pipeline.stage_embed(rc)
        return {"embedded": len(vectors)}
    if cmd == "classify-embed":
        preds = pipeline.stage_classify_embed(rc)
        return {"predictions": len(preds), "run": pipeline.embed_run_name(rc)}
    if cmd == "classify-vlm":
        preds = pipeline.stage_classify_vlm(rc)
        unparsed = sum(p.excluded for p in preds)
        return {"predictions": len(preds), "unparsed": unparsed}
    if cmd == "cluster-metrics":
        return pipeline.stage_cluster_metrics(rc).to_dict()
    if cmd == "evaluate":
        reports = pipeline.stage_evaluate(rc)
        return [{"method": r.method, "model": r.model, "config": r.config,
                 "accuracy": r.accuracy, "macro_f1": r.macro_f1} for r in reports]
    if cmd == "report":
        sys.stdout.write(pipeline.stage_report(rc, args.format))
        return None
    raise UsageError(f"unknown subcommand {cmd}")


def _fail(kind: str, message: str, stage: str | None, code: int) -> int:
    sys.stderr.write(json.dumps({"error": kind, "stage": stage, "message": message}) + "\n")
    return code


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        return _fail("UsageError", str(exc), None, EXIT_USAGE)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        result = _dispatch(args)
    except UsageError as exc:
        return _fail("UsageError", str(exc), args.command, EXIT_USAGE)
    except (DocClassError, ValueError, OSError) as exc:
        stage = exc.stage if isinstance(exc, StageError) and exc.stage else args.command
        return _fail(type(exc).__name__, str(exc), stage, EXIT_STAGE)
    if result is not None:
        sys.stdout.write(json.dumps(result, sort_keys=True) + "\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())
