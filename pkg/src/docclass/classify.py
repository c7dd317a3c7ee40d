"""Zero-shot classification by similarity voting and by generative prompting."""

from __future__ import annotations

import hashlib
import re
import string
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Sequence

import numpy as np

from .dataset import ClassLabel, DatasetManifest, DocumentRecord
from .errors import (
    DimensionMismatch,
    EmptyClassSet,
    MissingPlaceholder,
    ProviderError,
    Unparseable,
    ZeroVector,
)
from .providers import Provider
from .vectorspace import as_vector, cosine_similarity

UNPARSED = "__unparsed__"
METHODS = ("embed_vote", "vlm_base", "vlm_plus")
DEFAULT_EMBED_INSTRUCTION = "Generate a vector representation of this document."
TIE_TOLERANCE = 1e-12


@dataclass
class ClassDefinition:
    label: str
    definition_text: str
    embedding: np.ndarray | None = None

    def __post_init__(self):
        if not self.definition_text or not self.definition_text.strip():
            raise ValueError(f"definition for {self.label!r} is empty")


def definitions_from_manifest(manifest: DatasetManifest, use_definitions: bool = True) -> list[ClassDefinition]:
    """One definition per class; ``use_definitions=False`` embeds bare display names instead."""
    return [
        ClassDefinition(c.id, manifest.definitions[c.id] if use_definitions else c.display_name)
        for c in manifest.classes
    ]


@dataclass
class Prediction:
    doc_id: str
    method: str
    predicted: str
    scores: dict[str, float] | None = None
    raw_output: str | None = None
    tie_broken: bool = False
    excluded: bool = False

    def to_dict(self) -> dict:
        return {
            "doc_id": self.doc_id,
            "method": self.method,
            "predicted": self.predicted,
            "scores": self.scores,
            "raw_output": self.raw_output,
            "tie_broken": self.tie_broken,
            "excluded": self.excluded,
        }

    @classmethod
    def from_dict(cls, data: dict) -> Prediction:
        return cls(**{k: data.get(k) for k in ("doc_id", "method", "predicted", "scores", "raw_output")},
                   tie_broken=bool(data.get("tie_broken", False)), excluded=bool(data.get("excluded", False)))


def text_digest(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def embed_class_definitions(defs: Sequence[ClassDefinition], provider: Provider,
                            cache: dict | None = None) -> list[ClassDefinition]:
    """Attach a unit embedding to each definition.

    Embeddings are cached per ``(provider_id, sha256(definition_text))``; the
    provider's own cache is used unless another mapping is passed.
    """
    if not defs:
        raise EmptyClassSet("no class definitions")
    cache = provider.cache if cache is None else cache
    out = []
    dim = None
    for d in defs:
        key = (provider.cfg.provider_id, text_digest(d.definition_text))
        vec = cache.get(key)
        if vec is None:
            try:
                vec = provider.embed_text(d.definition_text, key=f"class:{d.label}")
            except ProviderError as exc:
                raise exc.with_context(f"class {d.label}") from exc
            cache[key] = vec
        if dim is None:
            dim = vec.shape[0]
        elif vec.shape[0] != dim:
            raise DimensionMismatch(f"class {d.label}: dim {vec.shape[0]} != {dim}")
        out.append(ClassDefinition(d.label, d.definition_text, vec))
    return out


def similarity_vote(doc_embedding, defs: Sequence[ClassDefinition], doc_id: str = "") -> Prediction:
    """Predict the class whose definition embedding is most cosine-similar.

    Ties (within 1e-12) go to the lexicographically smallest label id and set
    ``tie_broken``.
    """
    if not defs:
        raise EmptyClassSet("no class definitions")
    doc = as_vector(doc_embedding)
    if np.linalg.norm(doc) == 0.0:
        raise ZeroVector(f"document {doc_id} has a zero embedding")
    scores = {}
    for d in defs:
        if d.embedding is None:
            raise ValueError(f"definition {d.label!r} has no embedding")
        emb = as_vector(d.embedding)
        if emb.shape != doc.shape:
            raise DimensionMismatch(f"class {d.label}: dim {emb.shape[0]} != {doc.shape[0]}")
        scores[d.label] = cosine_similarity(doc, emb)
    best = max(scores.values())
    winners = sorted(label for label, s in scores.items() if best - s <= TIE_TOLERANCE)
    return Prediction(doc_id, "embed_vote", winners[0], scores=scores, tie_broken=len(winners) > 1)


# -- prompting ---------------------------------------------------------------

@dataclass
class PromptTemplate:
    name: str
    system_text: str
    user_template: str
    answer_marker: str = "Final answer:"
    path: Path | None = field(default=None, compare=False)

    def __post_init__(self):
        if "{class_list}" not in self.user_template:
            raise MissingPlaceholder(f"template {self.name!r} lacks {{class_list}}")
        if self.name == "plus" and "{class_definitions}" not in self.user_template:
            raise MissingPlaceholder("plus template lacks {class_definitions}")

    @property
    def method(self) -> str:
        return f"vlm_{self.name}"

    def to_text(self) -> str:
        return (f"name: {self.name}\nanswer_marker: {self.answer_marker}\n---\n"
                f"{self.system_text}\n---\n{self.user_template}\n")


def parse_template(text: str, path: Path | None = None) -> PromptTemplate:
    """Parse a template file: ``key: value`` front matter, then system and user sections split by ``---`` lines."""
    sections: list[list[str]] = [[]]
    for line in text.splitlines():
        if line.strip() == "---" and len(sections) < 3:
            sections.append([])
        else:
            sections[-1].append(line)
    if len(sections) != 3:
        raise ValueError(f"template {path or ''} needs front matter, system and user sections")
    meta = {}
    for line in sections[0]:
        if line.strip():
            key, _, value = line.partition(":")
            meta[key.strip()] = value.strip()
    if "name" not in meta:
        raise ValueError(f"template {path or ''} front matter lacks 'name'")
    return PromptTemplate(
        name=meta["name"],
        system_text="\n".join(sections[1]).strip(),
        user_template="\n".join(sections[2]).strip(),
        answer_marker=meta.get("answer_marker", "Final answer:"),
        path=path,
    )


def load_template(name_or_path: str | Path) -> PromptTemplate:
    """Load a bundled template by name (``base``, ``plus``) or a template file by path."""
    p = Path(name_or_path)
    if p.suffix or p.exists():
        return parse_template(p.read_text(encoding="utf-8"), p)
    res = resources.files("docclass") / "templates" / f"{name_or_path}.txt"
    if not res.is_file():
        raise FileNotFoundError(f"no bundled template {name_or_path!r}")
    return parse_template(res.read_text(encoding="utf-8"))


def render_prompt(template: PromptTemplate, manifest: DatasetManifest) -> tuple[str, str]:
    if "{class_list}" not in template.user_template:
        raise MissingPlaceholder(f"template {template.name!r} lacks {{class_list}}")
    classes = sorted(manifest.classes, key=lambda c: c.id)
    class_list = "\n".join(f"- {c.id}: {c.display_name}" for c in classes)
    definitions = "\n\n".join(f"{c.id} ({c.display_name}): {manifest.definitions[c.id]}" for c in classes)
    user = template.user_template.replace("{class_list}", class_list)
    user = user.replace("{class_definitions}", definitions)
    return template.system_text, user


_PUNCT = str.maketrans({ch: " " for ch in string.punctuation})


def _norm(text: str) -> str:
    return " ".join(text.lower().translate(_PUNCT).split())


def _occurrences(haystack: str, needle: str):
    if not needle:
        return
    for m in re.finditer(r"(?<!\S)" + re.escape(needle) + r"(?!\S)", haystack):
        yield m.start(), m.end()


def _last_mention(text: str, classes: Sequence[ClassLabel]) -> str | None:
    hay = _norm(text)
    best = None  # (start, length, is_id) -> label
    for c in classes:
        for needle, is_id in ((_norm(c.id), 1), (_norm(c.display_name), 0)):
            for start, end in _occurrences(hay, needle):
                rank = (start, end - start, is_id)
                if best is None or rank > best[0]:
                    best = (rank, c.id)
    return None if best is None else best[1]


def parse_vlm_output(raw: str, classes: Sequence[ClassLabel], marker: str = "Final answer:") -> str:
    """Extract a class id from generated text.

    With the marker present only the text after its last occurrence is
    considered; otherwise the whole text is. Matching ignores case and
    punctuation; the last mentioned class wins, a longer match beats a shorter
    one at the same position, and an id beats a display name.
    """
    if not classes:
        raise EmptyClassSet("no classes to match against")
    text = raw or ""
    if marker:
        idx = text.lower().rfind(marker.lower())
        if idx >= 0:
            tail = text[idx + len(marker):]
            label = _answer_in(tail, classes)
            if label is None:
                raise Unparseable(f"no class named after {marker!r}")
            return label
    label = _last_mention(text, classes)
    if label is None:
        raise Unparseable("no class mentioned")
    return label


def _answer_in(segment: str, classes: Sequence[ClassLabel]) -> str | None:
    seg = _norm(segment)
    for c in classes:
        if seg == _norm(c.id):
            return c.id
    for c in classes:
        if seg == _norm(c.display_name):
            return c.id
    return _last_mention(segment, classes)


def doc_key(record: DocumentRecord) -> str:
    """Routing key handed to providers (used by mocks only)."""
    return f"{record.doc_id} {Path(record.source_path).name}"


def classify_generative(record: DocumentRecord, template: PromptTemplate, provider: Provider,
                        manifest: DatasetManifest, rendered: tuple[str, str] | None = None) -> Prediction:
    if record.page is None:
        raise ValueError(f"document {record.doc_id} has not been rasterized")
    system, user = rendered or render_prompt(template, manifest)
    try:
        raw = provider.complete_vision_prompt(system, user, record.page, key=doc_key(record))
    except ProviderError as exc:
        raise exc.with_context(f"doc {record.doc_id}") from exc
    try:
        label = parse_vlm_output(raw, manifest.classes, template.answer_marker)
        return Prediction(record.doc_id, template.method, label, raw_output=raw)
    except Unparseable:
        return Prediction(record.doc_id, template.method, UNPARSED, raw_output=raw, excluded=True)


def classify_generative_batch(records: Sequence[DocumentRecord], template: PromptTemplate, provider: Provider,
                              manifest: DatasetManifest, workers: int = 1) -> list[Prediction]:
    """Classify many documents; output follows input order regardless of ``workers``."""
    rendered = render_prompt(template, manifest)

    def work(r):
        return classify_generative(r, template, provider, manifest, rendered)

    if workers <= 1:
        return [work(r) for r in records]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(work, records))
