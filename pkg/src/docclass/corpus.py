"""Generator for the bundled synthetic corpus.

Eight geoscience classes, three single-page PNG "documents" each, drawn as
striped colour patterns, plus a manifest and a config wiring up mock
providers whose rules route every class's documents next to its
definition embedding. Everything is a pure function of the code, so
regenerating reproduces the bundled files byte for byte.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import yaml
from PIL import Image

from .dataset import ClassLabel, DatasetManifest, DocumentRecord, save_manifest

CLASSES = [
    ("geology", "Geology",
     "Geological reports: stratigraphic columns, lithology descriptions, core and outcrop "
     "photographs, facies maps and depositional environment interpretation."),
    ("geochemistry", "Geochemistry",
     "Geochemical analyses: source rock evaluation, Rock-Eval pyrolysis, TOC tables, "
     "vitrinite reflectance, biomarker and fluid composition data."),
    ("petrophysics", "Petrophysics",
     "Petrophysical interpretation: wireline and LWD log plots (gamma ray, resistivity, "
     "density, neutron), porosity, water saturation and net pay summaries."),
    ("geophysics", "Geophysics",
     "Geophysical surveys: seismic sections and acquisition reports, velocity models, "
     "time-depth conversion, gravity and magnetic data."),
    ("drilling", "Drilling",
     "Drilling documents: daily drilling reports, well programs, casing and cementing "
     "schematics, mud logs, bit records and BHA summaries."),
    ("reservoir_engineering", "Reservoir Engineering",
     "Reservoir engineering studies: pressure transient analysis, PVT reports, material "
     "balance, reserves estimates and simulation history matches."),
    ("production", "Production",
     "Production operations: production allocation tables, decline curves, well test "
     "separator data, artificial lift and surveillance reports."),
    ("well_completion", "Well Completion",
     "Completion documents: completion diagrams, perforation records, stimulation and "
     "fracturing treatment reports, packer and tubing tallies."),
]

DOCS_PER_CLASS = 3
PAGE_SIZE = (96, 128)  # width, height
EMBED_DIM = 64
JITTER = 0.35

_PALETTE = [
    (176, 112, 64), (64, 160, 96), (40, 90, 200), (120, 120, 120),
    (200, 60, 60), (60, 180, 180), (220, 180, 40), (140, 70, 170),
]


def page_pixels(class_index: int, copy: int) -> np.ndarray:
    """Stripe pattern: class sets colour and stripe orientation, copy shifts the phase."""
    w, h = PAGE_SIZE
    yy, xx = np.mgrid[0:h, 0:w]
    period = 6 + class_index
    coord = xx if class_index % 2 else yy
    on = ((coord + 2 * copy) // (period // 2)) % 2 == 0
    img = np.full((h, w, 3), 245, dtype=np.uint8)
    img[on] = _PALETTE[class_index]
    # header bar, so every page has a "title block"
    img[4:12, 8 : 8 + 10 * (copy + 1)] = 20
    return img


def chat_answer(display: str) -> str:
    return (
        "Step 1. The page shows a repeated banded pattern with a dark header block.\n"
        "Step 2. No legible text beyond the header.\n"
        f"Step 3. Shortlist: {display} or Geology.\n"
        f"Step 4. The banding colour is characteristic of {display} material.\n"
        f"Final answer: {display}"
    )


def mock_config() -> dict:
    embed_rules = [{"match": cid, "seed": 1000 + i} for i, (cid, _, _) in enumerate(CLASSES)]
    embed_rules.append({"default": True})
    chat_rules = [{"match": cid, "text": chat_answer(name)} for cid, name, _ in CLASSES]
    chat_rules.append({"default": True, "text": "I cannot determine the discipline."})
    return {
        "raster": {"dpi": 150, "max_dim": 8192},
        "embedding_instruction": "Generate a vector representation of this document.",
        "providers": {
            "mock-embed": {
                "kind": "mock_embedding",
                "model_name": "mock-embed",
                "dim": EMBED_DIM,
                "jitter": JITTER,
                "rules": embed_rules,
            },
            "mock-chat": {
                "kind": "mock_chat",
                "model_name": "mock-vlm",
                "rules": chat_rules,
            },
        },
        "run": {
            "manifest": "manifest.jsonl",
            "provider_id": "mock-embed",
            "chat_provider_id": "mock-chat",
            "template_name": "plus",
            "worker_count": 4,
            "output_dir": "out",
            "unparsed_policy": "count_wrong",
        },
    }


def write_synthetic_corpus(root) -> Path:
    """Write ``docs/*.png``, ``manifest.jsonl`` and ``config.yaml`` under ``root``; returns the manifest path."""
    root = Path(root)
    (root / "docs").mkdir(parents=True, exist_ok=True)
    classes = [ClassLabel(cid, name) for cid, name, _ in CLASSES]
    definitions = {cid: text for cid, _, text in CLASSES}
    docs = []
    for ci, (cid, _, _) in enumerate(CLASSES):
        for k in range(DOCS_PER_CLASS):
            name = f"{cid}_{k + 1:02d}.png"
            path = root / "docs" / name
            Image.fromarray(page_pixels(ci, k), mode="RGB").save(path, format="PNG")
            docs.append(DocumentRecord(f"{cid}-{k + 1:02d}", path, "png", cid))
    manifest_path = root / "manifest.jsonl"
    save_manifest(DatasetManifest(classes, docs, definitions), manifest_path)
    (root / "config.yaml").write_text(
        yaml.safe_dump(mock_config(), sort_keys=False, allow_unicode=True, width=100), encoding="utf-8"
    )
    return manifest_path


def bundled_corpus_dir() -> Path:
    """Location of the synthetic corpus shipped with the package."""
    return Path(__file__).resolve().parent / "data" / "synthetic"


if __name__ == "__main__":
    import sys

    target = Path(sys.argv[1]) if len(sys.argv) > 1 else bundled_corpus_dir()
    print(json.dumps({"manifest": str(write_synthetic_corpus(target))}))
