"""Stage orchestration behind the CLI: each stage reads its inputs, does the
work through the library modules, writes its outputs, and emits a run
manifest with content digests. Deterministic stages produce byte-identical
outputs across reruns of the same config.
"""

from __future__ import annotations

import json
import logging
from pathlib import Path

from . import bench, evalreport, fixtures, geo, ingest, sampler, topics
from .adapters import AdapterConfig, MockGenerativeAdapter, HttpChatAdapter, make_adapter, train_and_predict, generative_predict
from .annotation.simulate import simulate_annotation
from .annotation.store import LABELS, AnnotationStore
from .bench import DatasetSplit, PromptSpec, collapse_binary, default_prompt_spec, load_dataset
from .config import STAGES, config_hash, resolve_path
from .encoders import embed_documents, get_encoder, load_embedding_cache, save_embedding_cache
from .manifest import RunManifest

logger = logging.getLogger(__name__)


class StageError(Exception):
    pass


def _require(path: Path) -> Path:
    if not path.exists():
        raise FileNotFoundError(path)
    return path


def _finetune_factory(cfg: dict):
    bench_cfg = cfg["bench"]
    adapter_config = AdapterConfig(
        adapter_id=bench_cfg["adapter"],
        kind="finetune",
        backbone=bench_cfg["backbone"],
        batch_size=bench_cfg["batch_size"],
        epochs=bench_cfg["epochs"],
        learning_rate=bench_cfg["learning_rate"],
        hash_dim=bench_cfg["hash_dim"],
    )
    return lambda: make_adapter(adapter_config)


def _generative_adapter(cfg: dict):
    bench_cfg = cfg["bench"]
    adapter_config = AdapterConfig(
        adapter_id=bench_cfg["generative_adapter"],
        kind="generative",
        endpoint=bench_cfg["endpoint"],
        model=bench_cfg["generative_model"],
        credential_env=bench_cfg["credential_env"],
        mock_garble_rate=bench_cfg["mock_garble_rate"],
    )
    if adapter_config.adapter_id == "http-chat":
        return HttpChatAdapter(adapter_config)
    return MockGenerativeAdapter(adapter_config)


def _prompt_spec(cfg: dict) -> PromptSpec:
    bench_cfg = cfg["bench"]
    if bench_cfg["prompt_spec"]:
        return PromptSpec.load(resolve_path(cfg, bench_cfg["prompt_spec"], in_work_dir=False))
    return default_prompt_spec(few_shot=bench_cfg["prompt_mode"] == "fewshot")


# -- stage implementations -----------------------------------------------------


def stage_ingest(cfg: dict, manifest: RunManifest) -> None:
    section = cfg["ingest"]
    src = _require(resolve_path(cfg, section["input"], in_work_dir=False))
    manifest.add_input(src)
    loaded = ingest.load_records_detailed(src, fmt=section["format"], fail_fast=section["fail_fast"])
    kept, rejections = ingest.ingest_records(loaded.records, placeholder=section["placeholder"])
    out = resolve_path(cfg, section["output"])
    ingest.write_records(kept, out)
    log_path = resolve_path(cfg, section["rejection_log"])
    log_path.parent.mkdir(parents=True, exist_ok=True)
    log_path.write_text(
        json.dumps(
            {"rejections": rejections, "loaded": len(loaded.records), "skipped_rows": len(loaded.skipped), "kept": len(kept)},
            indent=2,
            sort_keys=True,
        )
        + "\n",
        encoding="utf-8",
    )
    manifest.add_output(out)
    manifest.add_output(log_path)
    manifest.notes["kept"] = len(kept)
    manifest.notes["rejections"] = rejections


def stage_geolocate(cfg: dict, manifest: RunManifest) -> None:
    src = _require(resolve_path(cfg, cfg["ingest"]["output"]))
    manifest.add_input(src)
    gaz_path = cfg["geo"]["gazetteer"] or None
    if gaz_path:
        gaz_path = _require(resolve_path(cfg, gaz_path, in_work_dir=False))
        manifest.add_input(gaz_path)
    gaz = geo.load_gazetteer(gaz_path)
    records = ingest.read_processed(src)
    geo.tag_regions(records, gaz)
    out = resolve_path(cfg, cfg["geo"]["output"])
    ingest.write_records(records, out)
    manifest.add_output(out)
    manifest.notes["distribution"] = geo.region_distribution(records)["counts"]


def stage_topics(cfg: dict, manifest: RunManifest) -> None:
    section = cfg["topics"]
    src = _require(resolve_path(cfg, cfg["geo"]["output"]))
    manifest.add_input(src)
    records = ingest.read_processed(src)
    texts_by_id = {r.id: (r.masked_text or r.text) for r in records}
    doc_ids = [r.id for r in records]

    cache_path = resolve_path(cfg, section["embedding_cache"])
    encoder = get_encoder(section["encoder"])
    if cache_path.exists():
        emb = load_embedding_cache(cache_path)
        if emb.encoder_id != encoder.encoder_id or emb.doc_ids != doc_ids:
            emb = embed_documents([texts_by_id[i] for i in doc_ids], doc_ids, encoder)
            save_embedding_cache(emb, cache_path)
    else:
        emb = embed_documents([texts_by_id[i] for i in doc_ids], doc_ids, encoder)
        save_embedding_cache(emb, cache_path)

    cluster_cfg = topics.ClusterConfig(
        min_cluster_size=section["min_cluster_size"] or None,
        reduce=section["reduce"],
        n_components=section["n_components"],
    )
    model = topics.build_topic_model(
        emb,
        texts_by_id,
        min_cluster_size=section["min_cluster_size"] or None,
        k=section["top_k"],
        min_df=section["min_df"],
        config=cluster_cfg,
    )
    model_out = resolve_path(cfg, section["model_out"])
    topics.save_topic_model(model, model_out)

    if section["select_all"]:
        selection = topics.select_all_topics(model)
    elif section["selection_file"]:
        selection = topics.select_topics(model, resolve_path(cfg, section["selection_file"], in_work_dir=False))
    else:
        raise StageError("topics stage needs selection_file or select_all = true")
    selection_out = resolve_path(cfg, section["selection_out"])
    selection_out.parent.mkdir(parents=True, exist_ok=True)
    selection_out.write_text(
        json.dumps(
            {"selected_topic_ids": selection.selected_topic_ids,
             "rationale": {str(k): v for k, v in selection.rationale.items()}},
            indent=2,
            sort_keys=True,
        )
        + "\n",
        encoding="utf-8",
    )

    topic_of = {}
    for topic in model.topics:
        for doc_id in topic.member_ids:
            topic_of[doc_id] = topic.topic_id
    for record in records:
        record.topic_id = topic_of.get(record.id, topics.OUTLIER_TOPIC_ID)
    tagged_out = resolve_path(cfg, section["tagged_out"])
    ingest.write_records(records, tagged_out)

    for path in (cache_path, model_out, selection_out, tagged_out):
        manifest.add_output(path)
    manifest.notes["n_topics"] = len(model.topics)
    manifest.notes["n_outliers"] = len(model.outlier_ids)
    manifest.notes["encoder_id"] = model.encoder_id
    manifest.notes["params"] = model.params


def stage_sample(cfg: dict, manifest: RunManifest) -> None:
    section = cfg["sample"]
    tagged = _require(resolve_path(cfg, cfg["topics"]["tagged_out"]))
    selection_path = _require(resolve_path(cfg, cfg["topics"]["selection_out"]))
    manifest.add_input(tagged)
    manifest.add_input(selection_path)
    selection = json.loads(selection_path.read_text(encoding="utf-8"))
    selected = selection["selected_topic_ids"]

    if section["quotas_file"]:
        quotas_path = _require(resolve_path(cfg, section["quotas_file"], in_work_dir=False))
        manifest.add_input(quotas_path)
        quotas = {t: q for t, q in sampler.load_quotas(quotas_path).items() if t in selected}
    else:
        quotas = {t: section["default_quota"] for t in selected}

    records = ingest.read_processed(tagged)
    pool = [
        {"id": r.id, "topic_id": r.topic_id, "region": r.region, "month": r.month}
        for r in records
        if r.topic_id is not None and r.topic_id in quotas
    ]
    result = sampler.stratified_sample(pool, quotas, seed=section["seed"])
    manifest_out = resolve_path(cfg, section["manifest_out"])
    result.save(manifest_out)
    check = sampler.verify_manifest(result, pool)
    if not check["ok"]:
        raise StageError(f"sample manifest failed verification: {check['violations']}")

    sampled_ids = set(result.sampled_ids)
    sampled_out = resolve_path(cfg, section["sampled_out"])
    ingest.write_records([r for r in records if r.id in sampled_ids], sampled_out)
    manifest.add_output(manifest_out)
    manifest.add_output(sampled_out)
    manifest.seeds = [section["seed"]]
    manifest.notes["sampled"] = len(result.sampled_ids)
    manifest.notes["shortfalls"] = len(result.shortfalls)


def stage_annotate(cfg: dict, manifest: RunManifest) -> None:
    section = cfg["annotate"]
    src = _require(resolve_path(cfg, cfg["sample"]["sampled_out"]))
    manifest.add_input(src)
    store_path = resolve_path(cfg, section["store"])
    export_path = resolve_path(cfg, section["export"])
    if section["mode"] == "serve":
        import uvicorn

        from .annotation.api import create_app

        store = AnnotationStore(store_path)
        app = create_app(store, guidelines_path=section["guidelines"] or None)
        uvicorn.run(app, host=section["host"], port=section["port"])
        return

    # simulate: rebuild the round from scratch so reruns are reproducible
    if store_path.exists():
        store_path.unlink()
    store = AnnotationStore(store_path)
    records = ingest.read_processed(src)
    store.register_items(
        [
            {"id": r.id, "text": r.text, "region": r.region, "topic_id": r.topic_id, "month": r.month}
            for r in records
        ]
    )
    stats = simulate_annotation(
        store,
        annotators=section["annotators"],
        per_item=section["per_item"],
        seed=section["seed"],
        noise=section["noise"],
        insufficient_rate=section["insufficient_rate"],
    )
    counts = store.export_dataset(export_path)
    manifest.add_output(store_path)
    manifest.add_output(export_path)
    manifest.seeds = [section["seed"]]
    manifest.notes["simulation"] = stats
    manifest.notes["class_counts"] = counts
    agreement = store.pairwise_agreement()
    if agreement["pooled"]:
        manifest.notes["pooled_percent_agreement"] = agreement["pooled"]["percent_agreement"]
        manifest.notes["pooled_kappa"] = agreement["pooled"]["cohen_kappa"]


def stage_split(cfg: dict, manifest: RunManifest) -> None:
    section = cfg["bench"]
    dataset_path = _require(resolve_path(cfg, cfg["annotate"]["export"]))
    manifest.add_input(dataset_path)
    rows = load_dataset(dataset_path)
    split = bench.chronological_split(rows, cut=section["cut"])
    out = resolve_path(cfg, section["split_out"])
    split.save(out)
    manifest.add_output(out)
    manifest.notes["train"] = len(split.train_ids)
    manifest.notes["test"] = len(split.test_ids)


def _load_dataset_and_split(cfg: dict, manifest: RunManifest):
    dataset_path = _require(resolve_path(cfg, cfg["annotate"]["export"]))
    split_path = _require(resolve_path(cfg, cfg["bench"]["split_out"]))
    manifest.add_input(dataset_path)
    manifest.add_input(split_path)
    rows = load_dataset(dataset_path)
    split = DatasetSplit.load(split_path)
    return rows, split


def stage_train(cfg: dict, manifest: RunManifest) -> None:
    rows, split = _load_dataset_and_split(cfg, manifest)
    rows_by_id = {r.id: r for r in rows}
    seeds = cfg["bench"]["seeds"]
    preds_dir = resolve_path(cfg, cfg["bench"]["predictions_dir"])
    results = train_and_predict(_finetune_factory(cfg), split, rows_by_id, seeds, run_dir=preds_dir)
    for seed, pset in results.items():
        manifest.add_output(preds_dir / f"{pset.adapter_id}_seed{seed}.csv")
    manifest.seeds = list(seeds)
    manifest.notes["adapter"] = cfg["bench"]["adapter"]


def stage_prompt_eval(cfg: dict, manifest: RunManifest) -> None:
    rows, split = _load_dataset_and_split(cfg, manifest)
    rows_by_id = {r.id: r for r in rows}
    test_rows = [rows_by_id[i] for i in split.test_ids]
    spec = _prompt_spec(cfg)
    adapter = _generative_adapter(cfg)
    preds_dir = resolve_path(cfg, cfg["bench"]["predictions_dir"])
    pset = generative_predict(adapter, spec, test_rows, run_dir=preds_dir)
    manifest.add_output(preds_dir / f"{pset.adapter_id}.csv")
    manifest.notes["adapter"] = pset.adapter_id
    manifest.notes["parse_failures"] = sum(1 for f in pset.parse_flags if f)
    manifest.notes["prompt_mode"] = cfg["bench"]["prompt_mode"]
    manifest.notes["decoding"] = spec.decoding


def stage_evaluate(cfg: dict, manifest: RunManifest) -> None:
    rows, split = _load_dataset_and_split(cfg, manifest)
    rows_by_id = {r.id: r for r in rows}
    min_support = cfg["eval"]["min_support"]
    preds_dir = resolve_path(cfg, cfg["bench"]["predictions_dir"])

    results: dict[str, dict] = {}
    binary_results: dict[str, dict] = {}
    details: dict[str, dict] = {}

    finetune_id = cfg["bench"]["adapter"]
    seed_reports = []
    binary_accum = []
    for seed in cfg["bench"]["seeds"]:
        path = preds_dir / f"{finetune_id}_seed{seed}.csv"
        if not path.exists():
            continue
        manifest.add_input(path)
        pred_rows = bench.read_predictions(path)
        ids = [r["id"] for r in pred_rows]
        gold = [r["gold"] for r in pred_rows]
        pred = [r["pred"] for r in pred_rows]
        regions = {i: rows_by_id[i].region for i in ids}
        topic_tags = {i: rows_by_id[i].topic_id for i in ids}
        seed_reports.append(
            evalreport.build_report(
                finetune_id, ids, gold, pred, seed=seed, regions=regions, topics=topic_tags,
                min_support=min_support,
            )
        )
        binary_accum.append(
            evalreport.weighted_metrics(collapse_binary(gold), collapse_binary(pred))
        )
    if seed_reports:
        averaged = evalreport.seed_average(seed_reports)
        results[finetune_id] = {
            "accuracy": averaged.accuracy,
            "precision": averaged.precision,
            "recall": averaged.recall,
            "f1": averaged.f1,
        }
        details[finetune_id] = averaged.to_dict()
        binary_results[finetune_id] = {
            m: sum(b[m] for b in binary_accum) / len(binary_accum)
            for m in ("accuracy", "precision", "recall", "f1")
        }

    gen_id = cfg["bench"]["generative_adapter"]
    gen_path = preds_dir / f"{gen_id}.csv"
    if gen_path.exists():
        manifest.add_input(gen_path)
        pred_rows = bench.read_predictions(gen_path)
        ids = [r["id"] for r in pred_rows]
        gold = [r["gold"] for r in pred_rows]
        pred = [r["pred"] for r in pred_rows]
        flags = [r["parse_flag"] in ("1", "True", "true") for r in pred_rows]
        regions = {i: rows_by_id[i].region for i in ids}
        topic_tags = {i: rows_by_id[i].topic_id for i in ids}
        mode = cfg["bench"]["prompt_mode"]
        gen_report = evalreport.build_report(
            f"{gen_id}-{mode}", ids, gold, pred, regions=regions, topics=topic_tags,
            parse_flags=flags, min_support=min_support,
        )
        results[f"{gen_id}-{mode}"] = {
            "accuracy": gen_report.accuracy,
            "precision": gen_report.precision,
            "recall": gen_report.recall,
            "f1": gen_report.f1,
        }
        details[f"{gen_id}-{mode}"] = gen_report.to_dict()
        binary_results[f"{gen_id}-{mode}"] = evalreport.weighted_metrics(
            collapse_binary(gold), collapse_binary(pred)
        )
        binary_results[f"{gen_id}-{mode}"] = {
            m: binary_results[f"{gen_id}-{mode}"][m] for m in ("accuracy", "precision", "recall", "f1")
        }

    if not results:
        raise StageError("no prediction files found; run the train or prompt-eval stage first")

    split_stats = {"train": {l: 0 for l in LABELS}, "test": {l: 0 for l in LABELS}, "overall": {l: 0 for l in LABELS}}
    for row_id in split.train_ids:
        split_stats["train"][rows_by_id[row_id].label] += 1
        split_stats["overall"][rows_by_id[row_id].label] += 1
    for row_id in split.test_ids:
        split_stats["test"][rows_by_id[row_id].label] += 1
        split_stats["overall"][rows_by_id[row_id].label] += 1
    region_stats: dict[str, dict] = {}
    for row in rows:
        region_stats.setdefault(row.region, {l: 0 for l in LABELS})[row.label] += 1

    bundle = {
        "results": results,
        "binary_results": binary_results,
        "details": details,
        "split_stats": split_stats,
        "region_stats": region_stats,
        "seeds": cfg["bench"]["seeds"],
    }
    out = resolve_path(cfg, cfg["eval"]["report_out"])
    evalreport.save_report(bundle, out)
    manifest.add_output(out)
    manifest.notes["models"] = sorted(results)


def stage_ablate(cfg: dict, manifest: RunManifest) -> None:
    rows, split = _load_dataset_and_split(cfg, manifest)
    regions_kept = tuple(cfg["eval"]["ablation_regions"])
    result = evalreport.region_ablation(
        rows, split, _finetune_factory(cfg), cfg["bench"]["seeds"], regions_kept=regions_kept
    )
    result["directional_check"] = {
        "ablated_overall": result["ablated"]["f1"],
        "baseline_overall": result["baseline"]["f1"],
        "ablated_leq_baseline": result["ablated"]["f1"] <= result["baseline"]["f1"],
    }
    out = resolve_path(cfg, cfg["eval"]["ablation_out"])
    evalreport.save_report(result, out)
    manifest.add_output(out)
    manifest.seeds = list(cfg["bench"]["seeds"])
    manifest.notes["regions_kept"] = list(regions_kept)
    manifest.notes["directional_check"] = result["directional_check"]


def stage_report(cfg: dict, manifest: RunManifest) -> None:
    report_path = _require(resolve_path(cfg, cfg["eval"]["report_out"]))
    manifest.add_input(report_path)
    bundle = json.loads(report_path.read_text(encoding="utf-8"))
    ablation_path = resolve_path(cfg, cfg["eval"]["ablation_out"])
    if ablation_path.exists():
        manifest.add_input(ablation_path)
        bundle["ablation"] = json.loads(ablation_path.read_text(encoding="utf-8"))
    tables_dir = resolve_path(cfg, cfg["eval"]["tables_dir"])
    written = evalreport.emit_tables(bundle, tables_dir, fmt="markdown")
    written += evalreport.emit_tables(bundle, tables_dir, fmt="csv")
    summary = tables_dir / "summary.md"
    lines = ["# Run summary", ""]
    for model_id, metrics in sorted(bundle.get("results", {}).items()):
        lines.append(
            f"- {model_id}: accuracy {metrics['accuracy']:.3f}, weighted F1 {metrics['f1']:.3f}"
        )
    if "ablation" in bundle:
        check = bundle["ablation"].get("directional_check", {})
        lines.append(
            f"- region ablation: overall F1 {check.get('ablated_overall', 0.0):.3f} "
            f"(region-restricted) vs {check.get('baseline_overall', 0.0):.3f} (full training)"
        )
    summary.write_text("\n".join(lines) + "\n", encoding="utf-8")
    written.append(summary)
    for path in written:
        manifest.add_output(path)


_STAGE_FUNCS = {
    "ingest": stage_ingest,
    "geolocate": stage_geolocate,
    "topics": stage_topics,
    "sample": stage_sample,
    "annotate-serve": stage_annotate,
    "split": stage_split,
    "train": stage_train,
    "prompt-eval": stage_prompt_eval,
    "evaluate": stage_evaluate,
    "ablate": stage_ablate,
    "report": stage_report,
}


def run_stage(stage: str, cfg: dict) -> RunManifest:
    """Execute one stage and write its manifest under the runs dir."""
    if stage not in _STAGE_FUNCS:
        raise StageError(f"unknown stage {stage!r}; expected one of {', '.join(STAGES)}")
    manifest = RunManifest(stage=stage, config_hash=config_hash(cfg)).start()
    _STAGE_FUNCS[stage](cfg, manifest)
    manifest.finish()
    runs_dir = resolve_path(cfg, cfg["run"]["runs_dir"], in_work_dir=False)
    manifest.save(runs_dir)
    return manifest


def run_pipeline(cfg: dict, only: list[str] | None = None) -> list[RunManifest]:
    manifests = []
    for stage in only or cfg["run"]["stages"]:
        logger.info("running stage %s", stage)
        manifests.append(run_stage(stage, cfg))
    return manifests


def generate_fixture(out_path: str | Path, n: int = 500, seed: int = 7) -> Path:
    rows = fixtures.synthetic_corpus(n=n, seed=seed)
    fixtures.write_raw_corpus(rows, out_path)
    return Path(out_path)
