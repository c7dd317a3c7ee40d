"""Classification scoring, run persistence and table/plot rendering."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
import time
import uuid
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from pathlib import Path
from typing import Sequence

import numpy as np

from .classify import UNPARSED, Prediction
from .clustermetrics import ClusterQualityReport
from .dataset import DatasetManifest
from .errors import DuplicateKey, DuplicatePrediction, EmptyInput, IoError, UnknownDoc

POLICIES = ("count_wrong", "exclude")
FAMILIES = ("embedding", "vlm", "vlm_sft")


@dataclass
class ConfusionMatrix:
    """Rows are true labels, columns predicted labels plus a trailing ``__unparsed__`` column."""

    labels: list[str]
    counts: np.ndarray

    @property
    def columns(self) -> list[str]:
        return self.labels + [UNPARSED]

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def correct(self) -> int:
        return int(np.trace(self.counts[:, : len(self.labels)]))

    def to_dict(self) -> dict:
        return {"labels": self.labels, "columns": self.columns, "counts": self.counts.tolist()}


@dataclass
class ClassScore:
    precision: float
    recall: float
    f1: float
    support: int
    undefined: list[str] = field(default_factory=list)


@dataclass
class EvaluationReport:
    method: str
    accuracy: float
    macro_f1: float
    per_class: dict[str, ClassScore] = field(default_factory=dict)
    unparsed_count: int = 0
    total: int = 0
    cluster_quality: ClusterQualityReport | None = None
    model: str = ""
    config: str = ""
    family: str = ""
    unparsed_policy: str = "count_wrong"

    def to_dict(self) -> dict:
        out = {
            "method": self.method,
            "model": self.model,
            "config": self.config,
            "family": self.family,
            "accuracy": self.accuracy,
            "macro_f1": self.macro_f1,
            "total": self.total,
            "unparsed_count": self.unparsed_count,
            "unparsed_policy": self.unparsed_policy,
            "macro_convention": "mean over all manifest classes; zero-support classes contribute f1=0",
            "per_class": {
                k: {"precision": v.precision, "recall": v.recall, "f1": v.f1, "support": v.support,
                    "undefined": v.undefined}
                for k, v in self.per_class.items()
            },
        }
        if self.cluster_quality is not None:
            out["cluster_quality"] = self.cluster_quality.to_dict()
            out["cluster_flags"] = list(self.cluster_quality.flags)
        return out

    @classmethod
    def from_dict(cls, data: dict) -> EvaluationReport:
        cq = None
        if data.get("cluster_quality") is not None:
            cq = ClusterQualityReport.from_dict(data["cluster_quality"])
            cq.flags = list(data.get("cluster_flags", []))
        per_class = {
            k: ClassScore(v["precision"], v["recall"], v["f1"], v["support"], list(v.get("undefined", [])))
            for k, v in data.get("per_class", {}).items()
        }
        return cls(
            method=data.get("method", ""),
            accuracy=data["accuracy"],
            macro_f1=data["macro_f1"],
            per_class=per_class,
            unparsed_count=data.get("unparsed_count", 0),
            total=data.get("total", 0),
            cluster_quality=cq,
            model=data.get("model", ""),
            config=data.get("config", ""),
            family=data.get("family", ""),
            unparsed_policy=data.get("unparsed_policy", "count_wrong"),
        )


def _scored(predictions: Sequence[Prediction], manifest: DatasetManifest, unparsed_policy: str):
    if unparsed_policy not in POLICIES:
        raise ValueError(f"unparsed_policy must be one of {POLICIES}")
    truth = {d.doc_id: d.true_label for d in manifest.documents}
    classes = set(manifest.class_ids)
    seen = set()
    pairs = []
    for p in predictions:
        if p.doc_id not in truth:
            raise UnknownDoc(p.doc_id)
        key = (p.doc_id, p.method)
        if key in seen:
            raise DuplicatePrediction(f"{p.doc_id} ({p.method})")
        seen.add(key)
        if p.predicted != UNPARSED and p.predicted not in classes:
            raise ValueError(f"prediction for {p.doc_id} names unknown class {p.predicted!r}")
        if p.predicted == UNPARSED and unparsed_policy == "exclude":
            continue
        pairs.append((truth[p.doc_id], p.predicted))
    return pairs


def confusion(predictions: Sequence[Prediction], manifest: DatasetManifest,
              unparsed_policy: str = "count_wrong") -> ConfusionMatrix:
    labels = manifest.class_ids
    col = {lab: i for i, lab in enumerate(labels)}
    col[UNPARSED] = len(labels)
    counts = np.zeros((len(labels), len(labels) + 1), dtype=np.int64)
    for true, pred in _scored(predictions, manifest, unparsed_policy):
        counts[col[true], col[pred]] += 1
    return ConfusionMatrix(labels, counts)


def evaluate(predictions: Sequence[Prediction], manifest: DatasetManifest,
             unparsed_policy: str = "count_wrong", **tags) -> EvaluationReport:
    """Accuracy, per-class precision/recall/F1 and macro F1 over all manifest classes.

    Undefined ratios (zero denominators) are reported as 0 and listed in the
    class's ``undefined`` field.
    """
    cm = confusion(predictions, manifest, unparsed_policy)
    k = len(cm.labels)
    counts = cm.counts
    per_class = {}
    for i, lab in enumerate(cm.labels):
        tp = int(counts[i, i])
        fp = int(counts[:, i].sum()) - tp
        fn = int(counts[i, :].sum()) - tp
        undefined = []
        if tp + fp == 0:
            undefined.append("precision")
        if tp + fn == 0:
            undefined.append("recall")
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / (tp + fn) if tp + fn else 0.0
        if precision + recall == 0:
            f1 = 0.0
            undefined.append("f1")
        else:
            f1 = 2 * precision * recall / (precision + recall)
        per_class[lab] = ClassScore(precision, recall, f1, tp + fn, undefined)
    total = cm.total
    methods = {p.method for p in predictions}
    return EvaluationReport(
        method=tags.pop("method", None) or (methods.pop() if len(methods) == 1 else ""),
        accuracy=cm.correct / total if total else 0.0,
        macro_f1=sum(s.f1 for s in per_class.values()) / k if k else 0.0,
        per_class=per_class,
        unparsed_count=sum(1 for p in predictions if p.predicted == UNPARSED),
        total=total,
        unparsed_policy=unparsed_policy,
        **tags,
    )


# -- rendering ---------------------------------------------------------------

def fmt_half_up(x: float, places: int) -> str:
    if x is None:
        return "-"
    if isinstance(x, float) and math.isinf(x):
        return "inf" if x > 0 else "-inf"
    q = Decimal(1).scaleb(-places)
    return str(Decimal(repr(float(x))).quantize(q, rounding=ROUND_HALF_UP))


CLUSTER_COLUMNS = [("Intra", "intra", 3), ("Inter", "inter", 3), ("Ratio", "ratio", 3),
                   ("Silh.", "silhouette", 3), ("DB", "davies_bouldin", 3), ("CH", "calinski_harabasz", 3)]
SCORE_COLUMNS = [("F1", "macro_f1", 2), ("Acc.", "accuracy", 2)]


def _row_name(r, i):
    return getattr(r, "model", "") or getattr(r, "method", "") or f"row{i}"


def table_rows(reports: Sequence) -> tuple[list[str], list[list[str]]]:
    """Header and formatted cells for a homogeneous list of reports.

    * ClusterQualityReport rows give the six cluster columns.
    * EvaluationReports that all carry cluster quality give cluster columns
      followed by F1 and accuracy (embedding-model layout).
    * Other EvaluationReports are pivoted to one row per model with an
      accuracy/F1 pair per configuration, in first-seen configuration order.
    """
    if not reports:
        raise EmptyInput("no rows to render")
    if all(isinstance(r, ClusterQualityReport) for r in reports):
        header = ["Model"] + [c[0] for c in CLUSTER_COLUMNS]
        rows = [[f"row{i}"] + [fmt_half_up(getattr(r, a), p) for _, a, p in CLUSTER_COLUMNS]
                for i, r in enumerate(reports)]
        return header, rows
    if not all(isinstance(r, EvaluationReport) for r in reports):
        raise TypeError("rows must all be ClusterQualityReport or all EvaluationReport")
    if all(r.cluster_quality is not None for r in reports):
        header = ["Model"] + [c[0] for c in CLUSTER_COLUMNS] + [c[0] for c in SCORE_COLUMNS]
        rows = []
        for i, r in enumerate(reports):
            cq = r.cluster_quality
            rows.append([_row_name(r, i)]
                        + [fmt_half_up(getattr(cq, a), p) for _, a, p in CLUSTER_COLUMNS]
                        + [fmt_half_up(getattr(r, a), p) for _, a, p in SCORE_COLUMNS])
        return header, rows
    if any(r.cluster_quality is not None for r in reports):
        raise TypeError("mixed rows: some reports carry cluster quality and some do not")

    configs: list[str] = []
    models: list[str] = []
    cells: dict[tuple[str, str], EvaluationReport] = {}
    for i, r in enumerate(reports):
        name = _row_name(r, i)
        cfg = r.config or r.method
        if (name, cfg) in cells:
            raise DuplicateKey(f"{name} / {cfg}")
        cells[(name, cfg)] = r
        if cfg not in configs:
            configs.append(cfg)
        if name not in models:
            models.append(name)
    header = ["Model"]
    for cfg in configs:
        header += [f"{cfg} Accuracy", f"{cfg} F1"]
    rows = []
    for m in models:
        row = [m]
        for cfg in configs:
            r = cells.get((m, cfg))
            row += [fmt_half_up(r.accuracy, 2), fmt_half_up(r.macro_f1, 2)] if r else ["-", "-"]
        rows.append(row)
    return header, rows


def render_table(reports: Sequence, fmt: str = "text", delimiter: str = ",") -> str:
    header, rows = table_rows(reports)
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, delimiter=delimiter, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
        return buf.getvalue()
    if fmt != "text":
        raise ValueError(f"unknown table format {fmt!r}")
    widths = [max(len(str(x)) for x in col) for col in zip(header, *rows)]
    lines = []
    for row in [header] + rows:
        first = row[0].ljust(widths[0])
        rest = [str(c).rjust(w) for c, w in zip(row[1:], widths[1:])]
        lines.append(" ".join([first] + rest).rstrip())
    return "\n".join(lines) + "\n"


PLOT_FIELDS = ["family", "model", "config", "accuracy", "macro_f1"]


def emit_plot_data(reports: Sequence[EvaluationReport], group_keys: Sequence[str] = ("model", "config")) -> str:
    """CSV records (one per model/configuration) for a dot-comparison plot."""
    if not reports:
        raise EmptyInput("no reports")
    seen = set()
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(PLOT_FIELDS)
    for r in reports:
        if r.family not in FAMILIES:
            raise ValueError(f"report {r.model!r} has no valid family tag (got {r.family!r})")
        key = tuple(getattr(r, k) for k in group_keys)
        if key in seen:
            raise DuplicateKey(str(key))
        seen.add(key)
        w.writerow([r.family, r.model, r.config, repr(float(r.accuracy)), repr(float(r.macro_f1))])
    return buf.getvalue()


# -- persistence -------------------------------------------------------------

def config_digest(obj) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True, default=str).encode()).hexdigest()


def _timestamp() -> float:
    # SOURCE_DATE_EPOCH pins the clock for reproducible artifacts
    env = os.environ.get("SOURCE_DATE_EPOCH")
    return float(env) if env else time.time()


def dump_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def write_predictions(predictions: Sequence[Prediction], path) -> None:
    lines = [json.dumps(p.to_dict(), sort_keys=True, ensure_ascii=False) for p in predictions]
    Path(path).write_text("".join(line + "\n" for line in lines), encoding="utf-8")


def read_predictions(path) -> list[Prediction]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                out.append(Prediction.from_dict(json.loads(line)))
    return out


def persist_results(predictions: Sequence[Prediction], reports, path, meta: dict | None = None) -> dict:
    """Write ``predictions.jsonl``, ``report.json`` and ``meta.json`` into directory ``path``."""
    path = Path(path)
    if isinstance(reports, EvaluationReport):
        reports = [reports]
    meta = dict(meta or {})
    ts = _timestamp()
    digest = meta.get("config_digest") or config_digest(meta.get("config", {}))
    stamp = time.strftime("%Y%m%dT%H%M%S", time.gmtime(ts)) + f"{ts % 1:.6f}"[1:]
    run_id = f"{stamp}-{digest[:12]}"
    if "SOURCE_DATE_EPOCH" not in os.environ:
        run_id += "-" + uuid.uuid4().hex[:6]
    meta.update(config_digest=digest, timestamp=ts, run_id=run_id)
    try:
        path.mkdir(parents=True, exist_ok=True)
        write_predictions(predictions, path / "predictions.jsonl")
        body = [r.to_dict() for r in reports]
        (path / "report.json").write_text(dump_json(body[0] if len(body) == 1 else body), encoding="utf-8")
        (path / "meta.json").write_text(dump_json(meta), encoding="utf-8")
    except OSError as exc:
        raise IoError(f"{path}: {exc}") from exc
    return meta


def load_results(path) -> tuple[list[Prediction], list[EvaluationReport], dict]:
    path = Path(path)
    try:
        preds = read_predictions(path / "predictions.jsonl")
        body = json.loads((path / "report.json").read_text(encoding="utf-8"))
        meta = json.loads((path / "meta.json").read_text(encoding="utf-8"))
    except OSError as exc:
        raise IoError(f"{path}: {exc}") from exc
    if isinstance(body, dict):
        body = [body]
    return preds, [EvaluationReport.from_dict(b) for b in body], meta
