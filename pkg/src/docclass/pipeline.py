"""Disk-backed pipeline stages behind the command-line interface.

Output directory layout::

    pages/<doc_id>.png                      first page, capped
    ingest.jsonl                            doc_id, size, page file
    embeddings/<provider>/provider.json     provider settings the cache belongs to
    embeddings/<provider>/documents.jsonl   doc_id, unit vector
    embeddings/<provider>/classes-<text>.jsonl
    embeddings/<provider>/cluster.json
    runs/<run>/predictions.jsonl, report.json, meta.json
    table.txt, plot.csv

Per-document stages append to a ``*.partial.jsonl`` file as work completes,
so an interrupted stage resumes without repeating provider calls; the final
file is written in manifest order once every document is done.
"""

from __future__ import annotations

import json
import logging
import threading
from concurrent.futures import FIRST_EXCEPTION, ThreadPoolExecutor, wait
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import yaml

from .classify import (
    DEFAULT_EMBED_INSTRUCTION,
    ClassDefinition,
    Prediction,
    classify_generative,
    definitions_from_manifest,
    doc_key,
    embed_class_definitions,
    load_template,
    render_prompt,
    similarity_vote,
    text_digest,
)
from .clustermetrics import ClusterQualityReport, LabeledEmbeddingSet, cluster_report
from .dataset import (
    DatasetManifest,
    PageImage,
    RasterConfig,
    cap_resize,
    load_manifest,
    rasterize_first_page,
)
from .errors import MissingFile, ProviderError, StageError
from .evalreport import (
    EvaluationReport,
    config_digest,
    dump_json,
    emit_plot_data,
    evaluate,
    persist_results,
    read_predictions,
    render_table,
    write_predictions,
)
from .providers import Provider, ProviderConfig, load_registry

log = logging.getLogger(__name__)


@dataclass
class RunConfig:
    manifest_path: Path | None = None
    provider_id: str | None = None
    chat_provider_id: str | None = None
    template_name: str = "plus"
    max_dim: int | None = None
    worker_count: int = 1
    output_dir: Path = Path("out")
    unparsed_policy: str = "count_wrong"
    class_text: str = "definitions"
    raster: RasterConfig = field(default_factory=RasterConfig)
    registry: dict[str, ProviderConfig] = field(default_factory=dict)
    embedding_instruction: str = DEFAULT_EMBED_INSTRUCTION
    families: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if self.worker_count < 1:
            raise ValueError("worker_count must be >= 1")
        for pid in (self.provider_id, self.chat_provider_id):
            if pid is not None and pid not in self.registry:
                raise ValueError(f"provider {pid!r} is not in the registry")
        if self.max_dim is not None:
            self.raster.max_dim = self.max_dim

    @classmethod
    def from_file(cls, path, **overrides) -> RunConfig:
        path = Path(path)
        if not path.is_file():
            raise MissingFile(str(path))
        data = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
        return cls.from_mapping(data, base=path.parent, **overrides)

    @classmethod
    def from_mapping(cls, data: dict, base: Path | None = None, **overrides) -> RunConfig:
        base = base or Path.cwd()
        run = dict(data.get("run") or {})
        run.update({k: v for k, v in overrides.items() if v is not None})
        registry = load_registry(data.get("providers"))
        families = {pid: entry.get("family") for pid, entry in _provider_entries(data.get("providers"))
                    if entry.get("family")}

        def resolve(p):
            if p is None:
                return None
            p = Path(p)
            return p if p.is_absolute() else base / p

        manifest = run.get("manifest_path", run.get("manifest"))
        return cls(
            manifest_path=resolve(manifest),
            provider_id=run.get("provider_id"),
            chat_provider_id=run.get("chat_provider_id"),
            template_name=run.get("template_name", "plus"),
            max_dim=run.get("max_dim"),
            worker_count=int(run.get("worker_count", 1)),
            output_dir=resolve(run.get("output_dir", "out")),
            unparsed_policy=run.get("unparsed_policy", "count_wrong"),
            class_text=run.get("class_text", "definitions"),
            raster=RasterConfig.from_mapping(data.get("raster")),
            registry=registry,
            embedding_instruction=data.get("embedding_instruction") or DEFAULT_EMBED_INSTRUCTION,
            families=families,
        )

    def provider(self, pid: str | None, role: str) -> Provider:
        if pid is None:
            raise StageError(f"no {role} provider configured (use --provider)")
        if pid not in self.registry:
            raise StageError(f"provider {pid!r} is not in the registry")
        return Provider(self.registry[pid])


def _provider_entries(entries):
    if isinstance(entries, dict):
        return [(k, v) for k, v in entries.items()]
    return [(e.get("provider_id"), e) for e in entries or []]


# -- helpers -----------------------------------------------------------------

def _write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    tmp.replace(path)


def _read_jsonl(path: Path) -> list[dict]:
    rows = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            try:
                rows.append(json.loads(line))
            except json.JSONDecodeError:
                # torn trailing line from an interrupted write
                break
    return rows


def _jsonl(rows: Sequence[dict]) -> str:
    return "".join(json.dumps(r, sort_keys=True, ensure_ascii=False) + "\n" for r in rows)


def resumable_map(keys: Sequence[str], work: Callable[[str], dict], final_path: Path, workers: int = 1) -> list[dict]:
    """Run ``work`` for every key not already recorded and return rows in ``keys`` order.

    Each row must carry its key under ``"doc_id"``.
    """
    partial = final_path.with_name(final_path.stem + ".partial.jsonl")
    done: dict[str, dict] = {}
    for path in (final_path, partial):
        if path.exists():
            for row in _read_jsonl(path):
                done[row["doc_id"]] = row
    todo = [k for k in keys if k not in done]
    if todo:
        final_path.parent.mkdir(parents=True, exist_ok=True)
        lock = threading.Lock()
        with open(partial, "a", encoding="utf-8") as fh:

            def record(row):
                with lock:
                    fh.write(json.dumps(row, sort_keys=True, ensure_ascii=False) + "\n")
                    fh.flush()
                    done[row["doc_id"]] = row

            if workers <= 1:
                for k in todo:
                    record(work(k))
            else:
                with ThreadPoolExecutor(max_workers=workers) as pool:
                    futures = [pool.submit(lambda k=k: record(work(k))) for k in todo]
                    finished, pending = wait(futures, return_when=FIRST_EXCEPTION)
                    for f in pending:
                        f.cancel()
                    for f in futures:
                        if not f.cancelled():
                            f.result()
    rows = [done[k] for k in keys]
    if todo or not final_path.exists():
        _write_text(final_path, _jsonl(rows))
    if partial.exists():
        partial.unlink()
    return rows


def _manifest(rc: RunConfig) -> DatasetManifest:
    if rc.manifest_path is None:
        raise StageError("no manifest given (use --manifest)")
    return load_manifest(rc.manifest_path)


def _load_pages(rc: RunConfig, manifest: DatasetManifest) -> None:
    pages_dir = rc.output_dir / "pages"
    for doc in manifest.documents:
        page_file = pages_dir / f"{doc.doc_id}.png"
        if not page_file.is_file():
            raise StageError(f"no ingested page for {doc.doc_id}; run ingest first")
        doc.page = PageImage.from_bytes(page_file.read_bytes())


def _embed_dir(rc: RunConfig, provider: Provider) -> Path:
    d = rc.output_dir / "embeddings" / provider.cfg.provider_id
    settings = provider.cfg.public_dict()
    settings["embedding_instruction"] = rc.embedding_instruction
    marker = d / "provider.json"
    text = dump_json(settings)
    if marker.exists() and marker.read_text(encoding="utf-8") != text:
        log.warning("provider %s settings changed; discarding cached embeddings", provider.cfg.provider_id)
        for f in d.glob("*.jsonl"):
            f.unlink()
        for f in d.glob("cluster.json"):
            f.unlink()
    if not marker.exists() or marker.read_text(encoding="utf-8") != text:
        _write_text(marker, text)
    return d


# -- stages ------------------------------------------------------------------

def stage_ingest(rc: RunConfig) -> list[dict]:
    manifest = _manifest(rc)
    pages_dir = rc.output_dir / "pages"
    pages_dir.mkdir(parents=True, exist_ok=True)

    def work(doc_id):
        doc = manifest.document(doc_id)
        page = cap_resize(rasterize_first_page(doc, rc.raster), rc.raster.max_dim)
        _write_text_bytes(pages_dir / f"{doc_id}.png", page.to_png())
        return {"doc_id": doc_id, "width": page.width, "height": page.height, "page": f"pages/{doc_id}.png",
                "label": doc.true_label}

    keys = [d.doc_id for d in manifest.documents]
    # a page file without its ingest row is redone
    return resumable_map(keys, work, rc.output_dir / "ingest.jsonl", rc.worker_count)


def _write_text_bytes(path: Path, data: bytes) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(data)
    tmp.replace(path)


def stage_embed(rc: RunConfig, provider: Provider | None = None,
                manifest: DatasetManifest | None = None) -> dict[str, np.ndarray]:
    manifest = manifest or _manifest(rc)
    provider = provider or rc.provider(rc.provider_id, "embedding")
    _load_pages(rc, manifest)
    out_dir = _embed_dir(rc, provider)

    def work(doc_id):
        doc = manifest.document(doc_id)
        try:
            vec = provider.embed_image(doc.page, rc.embedding_instruction, key=doc_key(doc))
        except ProviderError as exc:
            raise exc.with_context(f"doc {doc_id}") from exc
        return {"doc_id": doc_id, "vector": vec.tolist()}

    rows = resumable_map([d.doc_id for d in manifest.documents], work, out_dir / "documents.jsonl",
                         rc.worker_count)
    return {r["doc_id"]: np.asarray(r["vector"], dtype=np.float64) for r in rows}


def _class_definitions(rc: RunConfig, provider: Provider, manifest: DatasetManifest) -> list[ClassDefinition]:
    if rc.class_text not in ("definitions", "names"):
        raise StageError(f"class_text must be 'definitions' or 'names', got {rc.class_text!r}")
    defs = definitions_from_manifest(manifest, use_definitions=rc.class_text == "definitions")
    path = _embed_dir(rc, provider) / f"classes-{rc.class_text}.jsonl"
    cache: dict = {}
    if path.exists():
        for row in _read_jsonl(path):
            cache[(provider.cfg.provider_id, row["digest"])] = np.asarray(row["vector"], dtype=np.float64)
    defs = embed_class_definitions(defs, provider, cache)
    rows = [{"label": d.label, "digest": text_digest(d.definition_text), "vector": d.embedding.tolist()}
            for d in defs]
    text = _jsonl(rows)
    if not path.exists() or path.read_text(encoding="utf-8") != text:
        _write_text(path, text)
    return defs


def _run_dir(rc: RunConfig, name: str) -> Path:
    return rc.output_dir / "runs" / name


def embed_run_name(rc: RunConfig) -> str:
    return f"embed_vote__{rc.provider_id}__{rc.class_text}"


def vlm_run_name(rc: RunConfig, template_name: str) -> str:
    return f"vlm_{template_name}__{rc.chat_provider_id}"


def _run_meta(rc: RunConfig, method: str, provider: Provider, config: str, family: str, **extra) -> dict:
    cfg = {
        "method": method,
        "provider": provider.cfg.public_dict(),
        "config": config,
        "manifest": rc.manifest_path.name if rc.manifest_path else None,
        "max_dim": rc.raster.max_dim,
        "dpi": rc.raster.dpi,
    }
    cfg.update(extra)
    return {
        "method": method,
        "model": provider.cfg.model_name,
        "config": config,
        "family": rc.families.get(provider.cfg.provider_id, family),
        "provider_ids": [provider.cfg.provider_id],
        "config_digest": config_digest(cfg),
    }


def stage_classify_embed(rc: RunConfig) -> list[Prediction]:
    manifest = _manifest(rc)
    with rc.provider(rc.provider_id, "embedding") as provider:
        vectors = stage_embed(rc, provider, manifest)
        defs = _class_definitions(rc, provider, manifest)
        preds = [similarity_vote(vectors[d.doc_id], defs, doc_id=d.doc_id) for d in manifest.documents]
        run = _run_dir(rc, embed_run_name(rc))
        run.mkdir(parents=True, exist_ok=True)
        write_predictions(preds, run / "predictions.jsonl")
        meta = _run_meta(rc, "embed_vote", provider, rc.class_text, "embedding",
                         embedding_instruction=rc.embedding_instruction)
        _write_text(run / "run.json", dump_json(meta))
    return preds


def stage_classify_vlm(rc: RunConfig) -> list[Prediction]:
    manifest = _manifest(rc)
    template = load_template(rc.template_name)
    rendered = render_prompt(template, manifest)
    _load_pages(rc, manifest)
    run = _run_dir(rc, vlm_run_name(rc, template.name))
    with rc.provider(rc.chat_provider_id, "vision-chat") as provider:

        def work(doc_id):
            return classify_generative(manifest.document(doc_id), template, provider, manifest, rendered).to_dict()

        rows = resumable_map([d.doc_id for d in manifest.documents], work, run / "progress.jsonl",
                             rc.worker_count)
        preds = [Prediction.from_dict(r) for r in rows]
        write_predictions(preds, run / "predictions.jsonl")
        meta = _run_meta(rc, template.method, provider, template.name, "vlm",
                         template=template.to_text())
        _write_text(run / "run.json", dump_json(meta))
    return preds


def stage_cluster_metrics(rc: RunConfig) -> ClusterQualityReport:
    manifest = _manifest(rc)
    with rc.provider(rc.provider_id, "embedding") as provider:
        path = _embed_dir(rc, provider) / "documents.jsonl"
        if not path.exists():
            raise StageError(f"no document embeddings for {provider.cfg.provider_id}; run embed first")
        rows = {r["doc_id"]: r["vector"] for r in _read_jsonl(path)}
        missing = [d.doc_id for d in manifest.documents if d.doc_id not in rows]
        if missing:
            raise StageError(f"embeddings missing for {len(missing)} documents (first: {missing[0]})")
        items = [(d.doc_id, d.true_label, rows[d.doc_id]) for d in manifest.documents]
        report = cluster_report(LabeledEmbeddingSet.from_items(items))
        body = report.to_dict()
        body["flags"] = report.flags
        body["per_class_intra"] = report.per_class_intra
        _write_text(path.parent / "cluster.json", dump_json(body))
    return report


def stage_evaluate(rc: RunConfig) -> list[EvaluationReport]:
    manifest = _manifest(rc)
    runs_dir = rc.output_dir / "runs"
    runs = sorted(p.parent for p in runs_dir.glob("*/predictions.jsonl")) if runs_dir.exists() else []
    if not runs:
        raise StageError("no predictions found")
    reports = []
    for run in runs:
        preds = read_predictions(run / "predictions.jsonl")
        meta = json.loads((run / "run.json").read_text(encoding="utf-8")) if (run / "run.json").exists() else {}
        tags = {k: meta.get(k, "") for k in ("model", "config", "family")}
        report = evaluate(preds, manifest, rc.unparsed_policy, **tags)
        if meta.get("method") == "embed_vote":
            pid = meta["provider_ids"][0]
            cluster_file = rc.output_dir / "embeddings" / pid / "cluster.json"
            if cluster_file.exists():
                data = json.loads(cluster_file.read_text(encoding="utf-8"))
                report.cluster_quality = ClusterQualityReport.from_dict(data)
                report.cluster_quality.flags = data.get("flags", [])
        meta["unparsed_policy"] = rc.unparsed_policy
        persist_results(preds, report, run, meta)
        reports.append(report)
    return reports


def collect_reports(out_dir: Path) -> list[EvaluationReport]:
    runs_dir = Path(out_dir) / "runs"
    runs = sorted(p.parent for p in runs_dir.glob("*/report.json")) if runs_dir.exists() else []
    if not runs:
        raise StageError("no reports found; run evaluate first")
    reports = []
    for run in runs:
        body = json.loads((run / "report.json").read_text(encoding="utf-8"))
        for b in body if isinstance(body, list) else [body]:
            reports.append(EvaluationReport.from_dict(b))
    return reports


def stage_report(rc: RunConfig, fmt: str = "table") -> str:
    reports = collect_reports(rc.output_dir)
    if fmt == "json":
        return dump_json([r.to_dict() for r in reports])
    table_fmt = "csv" if fmt == "csv" else "text"
    groups = [
        [r for r in reports if r.cluster_quality is not None],
        [r for r in reports if r.cluster_quality is None],
    ]
    text = "\n".join(render_table(g, table_fmt) for g in groups if g)
    _write_text(rc.output_dir / "table.txt", text)
    plottable = [r for r in reports if r.family]
    if plottable:
        _write_text(rc.output_dir / "plot.csv", emit_plot_data(plottable))
    return text


def run_pipeline(rc: RunConfig) -> list[EvaluationReport]:
    """ingest → classify-embed → cluster-metrics → classify-vlm → evaluate, for whichever providers are set."""
    stage_ingest(rc)
    if rc.provider_id:
        stage_classify_embed(rc)
        stage_cluster_metrics(rc)
    if rc.chat_provider_id:
        stage_classify_vlm(rc)
    return stage_evaluate(rc)

