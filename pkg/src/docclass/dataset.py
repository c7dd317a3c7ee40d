"""Corpus manifests, first-page rasterization and the image-size cap.

A manifest is a UTF-8 JSON-lines file. The first non-blank line is a header
object carrying the class list::

    {"classes": [{"id": "geology", "display_name": "Geology", "definition": "..."}]}

Every following line is one document::

    {"doc_id": "d1", "path": "scans/d1.tif", "format": "tiff", "label": "geology"}

Relative paths are resolved against the manifest's directory.
"""

from __future__ import annotations

import io
import json
import os
import shlex
import subprocess
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import (
    CorruptDocument,
    DuplicateDocId,
    MalformedManifest,
    MissingFile,
    RasterizerUnavailable,
    UnknownLabel,
    UnsupportedFormat,
)

# Scanned engineering sheets routinely exceed Pillow's decompression-bomb guard.
Image.MAX_IMAGE_PIXELS = None

MAX_DIM = 8192
DEFAULT_DPI = 150
FORMATS = ("pdf", "tiff", "png", "jpg")
_FORMAT_ALIASES = {"tif": "tiff", "jpeg": "jpg"}


@dataclass(frozen=True)
class ClassLabel:
    id: str
    display_name: str


@dataclass(eq=False)
class PageImage:
    """An 8-bit RGB raster, stored as a ``(height, width, 3)`` uint8 array."""

    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.ndim != 3 or px.shape[2] != 3 or px.dtype != np.uint8:
            raise ValueError(f"expected (h, w, 3) uint8 pixels, got {px.shape} {px.dtype}")
        if px.shape[0] < 1 or px.shape[1] < 1:
            raise ValueError("page image must be at least 1x1")
        self.pixels = px

    @property
    def width(self) -> int:
        return int(self.pixels.shape[1])

    @property
    def height(self) -> int:
        return int(self.pixels.shape[0])

    @property
    def size(self) -> tuple[int, int]:
        return self.width, self.height

    @classmethod
    def from_pil(cls, img: Image.Image) -> PageImage:
        if img.mode != "RGB":
            img = img.convert("RGB")
        return cls(np.asarray(img, dtype=np.uint8).copy())

    def to_pil(self) -> Image.Image:
        return Image.fromarray(self.pixels, mode="RGB")

    def to_png(self) -> bytes:
        buf = io.BytesIO()
        self.to_pil().save(buf, format="PNG")
        return buf.getvalue()

    @classmethod
    def from_bytes(cls, data: bytes) -> PageImage:
        try:
            with Image.open(io.BytesIO(data)) as img:
                img.seek(0)
                return cls.from_pil(img)
        except (UnidentifiedImageError, OSError, ValueError) as exc:
            raise CorruptDocument(str(exc)) from exc


@dataclass
class DocumentRecord:
    doc_id: str
    source_path: Path
    format: str
    true_label: str
    page: PageImage | None = None


@dataclass
class DatasetManifest:
    classes: list[ClassLabel]
    documents: list[DocumentRecord]
    definitions: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        ids = [c.id for c in self.classes]
        if len(set(ids)) != len(ids):
            raise MalformedManifest("duplicate class id in header", field="classes")
        for c in self.classes:
            self.definitions.setdefault(c.id, c.display_name)
        seen = set()
        for doc in self.documents:
            if doc.doc_id in seen:
                raise DuplicateDocId(doc.doc_id)
            seen.add(doc.doc_id)
            if doc.true_label not in self.definitions or doc.true_label not in ids:
                raise UnknownLabel(doc.doc_id, doc.true_label)

    @property
    def class_ids(self) -> list[str]:
        return [c.id for c in self.classes]

    def label(self, class_id: str) -> ClassLabel:
        for c in self.classes:
            if c.id == class_id:
                return c
        raise KeyError(class_id)

    def document(self, doc_id: str) -> DocumentRecord:
        for d in self.documents:
            if d.doc_id == doc_id:
                return d
        raise KeyError(doc_id)


@dataclass
class RasterConfig:
    """How documents become page rasters.

    ``rasterizer_cmd`` is a command template for PDF input. Placeholders:
    ``{input}`` source path, ``{page}`` 1-based page number, ``{dpi}`` and,
    optionally, ``{output}``. Without ``{output}`` the command must write PNG
    bytes to stdout.
    """

    rasterizer_cmd: str | None = None
    dpi: int = DEFAULT_DPI
    max_dim: int = MAX_DIM
    timeout: float = 120.0

    @classmethod
    def from_mapping(cls, data: dict | None) -> RasterConfig:
        data = dict(data or {})
        known = {"rasterizer_cmd", "dpi", "max_dim", "timeout"}
        return cls(**{k: v for k, v in data.items() if k in known})


def normalize_format(fmt: str) -> str:
    fmt = str(fmt).strip().lower().lstrip(".")
    fmt = _FORMAT_ALIASES.get(fmt, fmt)
    if fmt not in FORMATS:
        raise UnsupportedFormat(fmt)
    return fmt


def _require(obj, key, line):
    if key not in obj:
        raise MalformedManifest("missing required field", line=line, field=key)
    value = obj[key]
    if not isinstance(value, str) or not value:
        raise MalformedManifest("expected a nonempty string", line=line, field=key)
    return value


def load_manifest(path) -> DatasetManifest:
    """Read a manifest file, validating labels and document ids."""
    path = Path(path)
    if not path.is_file():
        raise MissingFile(str(path))
    base = path.parent
    header = None
    classes: list[ClassLabel] = []
    definitions: dict[str, str] = {}
    documents: list[DocumentRecord] = []
    seen: set[str] = set()

    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            if not raw.strip():
                continue
            try:
                obj = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise MalformedManifest(f"invalid JSON: {exc.msg}", line=lineno) from exc
            if not isinstance(obj, dict):
                raise MalformedManifest("expected a JSON object", line=lineno)

            if header is None:
                if "classes" not in obj:
                    raise MalformedManifest("first record must be the class header", line=lineno, field="classes")
                header = obj
                if not isinstance(obj["classes"], list) or not obj["classes"]:
                    raise MalformedManifest("classes must be a nonempty list", line=lineno, field="classes")
                for entry in obj["classes"]:
                    if not isinstance(entry, dict):
                        raise MalformedManifest("class entries must be objects", line=lineno, field="classes")
                    cid = _require(entry, "id", lineno)
                    if cid in definitions:
                        raise MalformedManifest(f"duplicate class id {cid!r}", line=lineno, field="classes")
                    name = entry.get("display_name") or cid
                    classes.append(ClassLabel(cid, name))
                    definitions[cid] = entry.get("definition") or name
                continue

            doc_id = _require(obj, "doc_id", lineno)
            src = _require(obj, "path", lineno)
            label = _require(obj, "label", lineno)
            try:
                fmt = normalize_format(_require(obj, "format", lineno))
            except UnsupportedFormat as exc:
                raise MalformedManifest(f"unsupported format {exc}", line=lineno, field="format") from exc
            if doc_id in seen:
                raise DuplicateDocId(doc_id)
            if label not in definitions:
                raise UnknownLabel(doc_id, label)
            seen.add(doc_id)
            src_path = Path(src)
            if not src_path.is_absolute():
                src_path = base / src_path
            documents.append(DocumentRecord(doc_id, src_path, fmt, label))

    if header is None:
        raise MalformedManifest("manifest is empty")
    return DatasetManifest(classes, documents, definitions)


def save_manifest(manifest: DatasetManifest, path) -> None:
    path = Path(path)
    base = path.parent.resolve()
    header = {
        "classes": [
            {"id": c.id, "display_name": c.display_name, "definition": manifest.definitions[c.id]}
            for c in manifest.classes
        ]
    }
    lines = [json.dumps(header, ensure_ascii=False)]
    for doc in manifest.documents:
        src = Path(doc.source_path)
        try:
            src = src.resolve().relative_to(base)
        except ValueError:
            pass
        lines.append(
            json.dumps(
                {"doc_id": doc.doc_id, "path": src.as_posix(), "format": doc.format, "label": doc.true_label},
                ensure_ascii=False,
            )
        )
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def capped_size(width: int, height: int, max_dim: int = MAX_DIM) -> tuple[int, int]:
    """Target size for :func:`cap_resize`; rounds half up and never returns 0."""
    if width <= 0 or height <= 0:
        raise ValueError("dimensions must be positive")
    longest = max(width, height)
    if longest <= max_dim:
        return width, height

    def scale(side):
        # floor(side * max_dim / longest + 1/2) in exact integer arithmetic
        return max(1, (2 * side * max_dim + longest) // (2 * longest))

    if width >= height:
        return max_dim, scale(height)
    return scale(width), max_dim


def cap_resize(image: PageImage, max_dim: int = MAX_DIM) -> PageImage:
    """Downscale so the longest side is at most ``max_dim``; smaller images pass through untouched."""
    target = capped_size(image.width, image.height, max_dim)
    if target == image.size:
        return image
    resized = image.to_pil().resize(target, resample=Image.Resampling.LANCZOS)
    return PageImage.from_pil(resized)


def _decode_raster(path: Path) -> PageImage:
    try:
        with Image.open(path) as img:
            img.seek(0)
            img.load()
            return PageImage.from_pil(img)
    except FileNotFoundError as exc:
        raise MissingFile(str(path)) from exc
    except (UnidentifiedImageError, OSError, EOFError, ValueError) as exc:
        raise CorruptDocument(f"{path}: {exc}") from exc


def _rasterize_pdf(path: Path, config: RasterConfig) -> PageImage:
    if not config.rasterizer_cmd:
        raise RasterizerUnavailable("no rasterizer_cmd configured for PDF input")
    if not path.is_file():
        raise MissingFile(str(path))
    with tempfile.TemporaryDirectory(prefix="docclass-") as tmp:
        out = Path(tmp) / "page.png"
        subs = {"input": str(path), "page": "1", "dpi": str(config.dpi), "output": str(out)}
        try:
            argv = [part.format(**subs) for part in shlex.split(config.rasterizer_cmd)]
        except (KeyError, IndexError, ValueError) as exc:
            raise RasterizerUnavailable(f"bad rasterizer_cmd template: {exc}") from exc
        writes_file = "{output}" in config.rasterizer_cmd
        try:
            proc = subprocess.run(argv, capture_output=True, timeout=config.timeout, check=False)
        except FileNotFoundError as exc:
            raise RasterizerUnavailable(f"rasterizer not found: {argv[0]}") from exc
        except subprocess.TimeoutExpired as exc:
            raise CorruptDocument(f"{path}: rasterizer timed out") from exc
        if proc.returncode != 0:
            msg = proc.stderr.decode("utf-8", "replace").strip()
            raise CorruptDocument(f"{path}: rasterizer exited {proc.returncode}: {msg}")
        if writes_file:
            if not out.is_file():
                raise CorruptDocument(f"{path}: rasterizer produced no output file")
            data = out.read_bytes()
        else:
            data = proc.stdout
        if not data:
            raise CorruptDocument(f"{path}: rasterizer produced no output")
        return PageImage.from_bytes(data)


def rasterize_first_page(record: DocumentRecord, config: RasterConfig | None = None) -> PageImage:
    """Render page 0 (frame 0 for multi-frame TIFF) of a document as RGB."""
    config = config or RasterConfig()
    fmt = normalize_format(record.format)
    path = Path(record.source_path)
    if fmt == "pdf":
        return _rasterize_pdf(path, config)
    return _decode_raster(path)


def rasterize_all(manifest: DatasetManifest, config: RasterConfig | None = None, workers: int = 1) -> list[PageImage]:
    """Rasterize and cap every document, filling ``record.page`` in manifest order."""
    config = config or RasterConfig()

    def work(record):
        page = cap_resize(rasterize_first_page(record, config), config.max_dim)
        record.page = page
        return page

    if workers <= 1:
        return [work(r) for r in manifest.documents]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(work, manifest.documents))


def default_workers() -> int:
    return min(8, os.cpu_count() or 1)
