"""Command-line entry point: config-driven pipeline runs plus direct
subcommands for the individual stages and fixture generation.

Exit codes: 0 success, 1 stage runtime failure, 2 missing input file,
3 config schema violation.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .config import STAGES, ConfigError, SCHEMA, validate_config
from .pipeline import StageError, generate_fixture, run_pipeline, run_stage

logger = logging.getLogger("aporokit")

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_MISSING_INPUT = 2
EXIT_CONFIG = 3


def _default_config(base_dir: str = ".") -> dict:
    cfg: dict = {"_base_dir": base_dir}
    for section, keys in SCHEMA.items():
        cfg[section] = {
            key: (list(spec.default) if isinstance(spec.default, list) else spec.default)
            for key, spec in keys.items()
        }
    cfg["run"]["work_dir"] = "."
    return cfg


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="aporokit", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run pipeline stages from a config file")
    run.add_argument("--config", required=True)
    run.add_argument("--stage", choices=STAGES, help="run a single stage")

    check = sub.add_parser("validate-config", help="validate a config file")
    check.add_argument("--config", required=True)

    ing = sub.add_parser("ingest", help="load, filter, and mask a raw record file")
    ing.add_argument("--in", dest="input", required=True)
    ing.add_argument("--format", choices=("jsonl", "csv"), default="jsonl")
    ing.add_argument("--fail-fast", action="store_true")
    ing.add_argument("--placeholder", default="[GROUP]")
    ing.add_argument("--out", default="records.masked.jsonl")
    ing.add_argument("--log", default="rejections.json")
    ing.add_argument("--runs-dir", default="runs")

    geo_cmd = sub.add_parser("geolocate", help="tag records with regions")
    geo_cmd.add_argument("--in", dest="input", required=True)
    geo_cmd.add_argument("--gazetteer", default="")
    geo_cmd.add_argument("--out", default="records.regions.jsonl")
    geo_cmd.add_argument("--runs-dir", default="runs")

    top = sub.add_parser("topics", help="cluster masked records into topics")
    top.add_argument("--in", dest="input", required=True, help="region-tagged records file")
    top.add_argument("--embeddings", default="embeddings.bin", help="embedding cache path")
    top.add_argument("--encoder", default="hashed-ngram-v1-d256")
    top.add_argument("--min-cluster-size", type=int, default=0, help="0 selects the size heuristic")
    top.add_argument("--min-df", type=float, default=0.05)
    top.add_argument("--k", type=int, default=10)
    top.add_argument("--model-out", default="topics.json")
    top.add_argument("--tagged-out", default="tagged.jsonl")
    top.add_argument("--selection-file", default="")
    top.add_argument("--select-all", action="store_true")
    top.add_argument("--runs-dir", default="runs")

    samp = sub.add_parser("sample", help="stratified sampling from tagged records")
    samp.add_argument("--pool", required=True)
    samp.add_argument("--quotas", default="", help="quota file (topic_id<TAB>quota)")
    samp.add_argument("--default-quota", type=int, default=30)
    samp.add_argument("--selection", default="", help="selection JSON from the topics stage")
    samp.add_argument("--seed", type=int, default=17)
    samp.add_argument("--out", default="sample_manifest.json")
    samp.add_argument("--sampled-out", default="sampled.jsonl")
    samp.add_argument("--runs-dir", default="runs")

    serve = sub.add_parser("annotate-serve", help="serve the annotation HTTP API")
    serve.add_argument("--store", required=True)
    serve.add_argument("--items", default="", help="optional records file to register")
    serve.add_argument("--annotators", default="", help="comma list; assigns items when given")
    serve.add_argument("--per-item", type=int, default=2)
    serve.add_argument("--seed", type=int, default=11)
    serve.add_argument("--guidelines", default="")
    serve.add_argument("--frontend", default="", help="path to built UI assets")
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8400)

    fix = sub.add_parser("fixtures", help="generate synthetic corpora")
    fix_sub = fix.add_subparsers(dest="which", required=True)
    fsyn = fix_sub.add_parser("synthetic", help="raw 500-record pipeline fixture")
    fsyn.add_argument("--out", default="fixtures/synthetic_corpus_500.jsonl")
    fsyn.add_argument("--n", type=int, default=500)
    fsyn.add_argument("--seed", type=int, default=7)
    fref = fix_sub.add_parser("reference", help="dataset matching the published statistics")
    fref.add_argument("--out", default="fixtures/reference_dataset.csv")

    return parser


def _cmd_run(args) -> int:
    cfg = validate_config(args.config)
    manifests = run_pipeline(cfg, only=[args.stage] if args.stage else None)
    for manifest in manifests:
        print(f"stage {manifest.stage}: ok ({len(manifest.outputs)} outputs)")
    return EXIT_OK


def _cmd_validate(args) -> int:
    validate_config(args.config)
    print("config ok")
    return EXIT_OK


def _cmd_ingest(args) -> int:
    cfg = _default_config()
    cfg["run"]["runs_dir"] = args.runs_dir
    cfg["ingest"].update(
        {
            "input": args.input,
            "format": args.format,
            "fail_fast": args.fail_fast,
            "placeholder": args.placeholder,
            "output": args.out,
            "rejection_log": args.log,
        }
    )
    manifest = run_stage("ingest", cfg)
    print(json.dumps(manifest.notes, indent=2, sort_keys=True))
    return EXIT_OK


def _cmd_geolocate(args) -> int:
    cfg = _default_config()
    cfg["run"]["runs_dir"] = args.runs_dir
    cfg["ingest"]["output"] = args.input
    cfg["geo"].update({"gazetteer": args.gazetteer, "output": args.out})
    manifest = run_stage("geolocate", cfg)
    print(json.dumps(manifest.notes, indent=2, sort_keys=True))
    return EXIT_OK


def _cmd_topics(args) -> int:
    cfg = _default_config()
    cfg["run"]["runs_dir"] = args.runs_dir
    cfg["geo"]["output"] = args.input
    cfg["topics"].update(
        {
            "encoder": args.encoder,
            "embedding_cache": args.embeddings,
            "min_cluster_size": args.min_cluster_size,
            "min_df": args.min_df,
            "top_k": args.k,
            "model_out": args.model_out,
            "tagged_out": args.tagged_out,
            "selection_file": args.selection_file,
            "select_all": args.select_all or not args.selection_file,
        }
    )
    manifest = run_stage("topics", cfg)
    print(json.dumps(manifest.notes, indent=2, sort_keys=True))
    return EXIT_OK


def _cmd_sample(args) -> int:
    cfg = _default_config()
    cfg["run"]["runs_dir"] = args.runs_dir
    cfg["topics"]["tagged_out"] = args.pool
    if args.selection:
        cfg["topics"]["selection_out"] = args.selection
    else:
        # derive the selection from the pool's topic tags
        from . import ingest as ingest_mod

        records = ingest_mod.read_processed(Path(args.pool))
        topic_ids = sorted({r.topic_id for r in records if r.topic_id is not None and r.topic_id >= 0})
        selection_path = Path(args.out).parent / "selection.derived.json"
        selection_path.parent.mkdir(parents=True, exist_ok=True)
        selection_path.write_text(
            json.dumps({"selected_topic_ids": topic_ids, "rationale": {}}, sort_keys=True) + "\n",
            encoding="utf-8",
        )
        cfg["topics"]["selection_out"] = str(selection_path)
    cfg["sample"].update(
        {
            "quotas_file": args.quotas,
            "default_quota": args.default_quota,
            "seed": args.seed,
            "manifest_out": args.out,
            "sampled_out": args.sampled_out,
        }
    )
    manifest = run_stage("sample", cfg)
    print(json.dumps(manifest.notes, indent=2, sort_keys=True))
    return EXIT_OK


def _cmd_serve(args) -> int:
    import uvicorn

    from .annotation.api import create_app
    from .annotation.store import AnnotationStore

    store = AnnotationStore(args.store)
    if args.items:
        from . import ingest as ingest_mod

        records = ingest_mod.read_processed(Path(args.items))
        store.register_items(
            [
                {"id": r.id, "text": r.text, "region": r.region, "topic_id": r.topic_id, "month": r.month}
                for r in records
            ]
        )
    if args.annotators:
        store.assign_items(
            [a.strip() for a in args.annotators.split(",") if a.strip()],
            per_item=args.per_item,
            seed=args.seed,
        )
    app = create_app(
        store,
        guidelines_path=args.guidelines or None,
        frontend_dist=args.frontend or None,
    )
    uvicorn.run(app, host=args.host, port=args.port)
    return EXIT_OK


def _cmd_fixtures(args) -> int:
    if args.which == "synthetic":
        path = generate_fixture(args.out, n=args.n, seed=args.seed)
        print(f"wrote {path}")
    else:
        from .fixtures import write_reference_dataset

        rows = write_reference_dataset(args.out)
        print(f"wrote {args.out} ({len(rows)} rows)")
    return EXIT_OK


_COMMANDS = {
    "run": _cmd_run,
    "validate-config": _cmd_validate,
    "ingest": _cmd_ingest,
    "geolocate": _cmd_geolocate,
    "topics": _cmd_topics,
    "sample": _cmd_sample,
    "annotate-serve": _cmd_serve,
    "fixtures": _cmd_fixtures,
}


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    args = _build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except FileNotFoundError as exc:
        logger.error("missing input: %s", exc)
        return EXIT_MISSING_INPUT
    except ConfigError as exc:
        for err in exc.errors:
            logger.error("config: %s", err)
        return EXIT_CONFIG
    except StageError as exc:
        logger.error("stage failed: %s", exc)
        return EXIT_RUNTIME
    except Exception:
        logger.exception("stage failed")
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
