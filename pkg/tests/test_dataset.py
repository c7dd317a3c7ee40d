import json
import sys
import textwrap
from fractions import Fraction
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, strategies as st
from PIL import Image

from docclass.dataset import (
    ClassLabel,
    DatasetManifest,
    DocumentRecord,
    PageImage,
    RasterConfig,
    cap_resize,
    capped_size,
    load_manifest,
    rasterize_all,
    rasterize_first_page,
    save_manifest,
)
from docclass.errors import (
    CorruptDocument,
    DuplicateDocId,
    MalformedManifest,
    MissingFile,
    RasterizerUnavailable,
    UnknownLabel,
    UnsupportedFormat,
)

HEADER = {"classes": [{"id": "geology", "display_name": "Geology", "definition": "Rocks."},
                      {"id": "geophysics", "display_name": "Geophysics"}]}


def write_manifest(path, docs, header=HEADER):
    lines = [json.dumps(header)] + [json.dumps(d) for d in docs]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def doc(i, label="geology", fmt="png"):
    return {"doc_id": f"d{i}", "path": f"d{i}.{fmt}", "format": fmt, "label": label}


def test_load_manifest(tmp_path):
    m = load_manifest(write_manifest(tmp_path / "m.jsonl", [doc(1), doc(2, "geophysics"), doc(3)]))
    assert [d.doc_id for d in m.documents] == ["d1", "d2", "d3"]
    assert m.class_ids == ["geology", "geophysics"]
    assert m.definitions == {"geology": "Rocks.", "geophysics": "Geophysics"}
    assert m.documents[0].source_path == tmp_path / "d1.png"


def test_unknown_label(tmp_path):
    with pytest.raises(UnknownLabel) as exc:
        load_manifest(write_manifest(tmp_path / "m.jsonl", [doc(1), doc(7, "geoph")]))
    assert exc.value.doc_id == "d7"


def test_duplicate_doc_id(tmp_path):
    with pytest.raises(DuplicateDocId) as exc:
        load_manifest(write_manifest(tmp_path / "m.jsonl", [doc(1), doc(1)]))
    assert exc.value.doc_id == "d1"


def test_missing_and_malformed(tmp_path):
    with pytest.raises(MissingFile):
        load_manifest(tmp_path / "nope.jsonl")
    p = tmp_path / "bad.jsonl"
    p.write_text(json.dumps(HEADER) + "\n{not json\n")
    with pytest.raises(MalformedManifest) as exc:
        load_manifest(p)
    assert exc.value.line == 2
    write_manifest(p, [{"doc_id": "d1", "path": "x.png", "format": "png"}])
    with pytest.raises(MalformedManifest) as exc:
        load_manifest(p)
    assert exc.value.field == "label"
    write_manifest(p, [doc(1, fmt="docx")])
    with pytest.raises(MalformedManifest):
        load_manifest(p)
    write_manifest(p, [doc(1)], header={"nope": 1})
    with pytest.raises(MalformedManifest):
        load_manifest(p)


def test_format_aliases(tmp_path):
    m = load_manifest(write_manifest(tmp_path / "m.jsonl", [doc(1, fmt="tif"), doc(2, fmt="JPEG")]))
    assert [d.format for d in m.documents] == ["tiff", "jpg"]


def test_manifest_roundtrip(tmp_path):
    src = write_manifest(tmp_path / "m.jsonl", [doc(1), doc(2, "geophysics")])
    m = load_manifest(src)
    out = tmp_path / "copy.jsonl"
    save_manifest(m, out)
    again = load_manifest(out)
    assert again.classes == m.classes
    assert again.definitions == m.definitions
    assert [(d.doc_id, d.source_path, d.format, d.true_label) for d in again.documents] == \
        [(d.doc_id, d.source_path, d.format, d.true_label) for d in m.documents]


def test_manifest_invariants_in_constructor():
    with pytest.raises(UnknownLabel):
        DatasetManifest([ClassLabel("a", "A")], [DocumentRecord("x", Path("x"), "png", "b")])


# -- rasterization -------------------------------------------------------------

def test_png_decoded_directly(tmp_path):
    Image.new("RGB", (800, 600), (10, 20, 30)).save(tmp_path / "p.png")
    page = rasterize_first_page(DocumentRecord("p", tmp_path / "p.png", "png", "x"))
    assert page.size == (800, 600)
    assert tuple(page.pixels[0, 0]) == (10, 20, 30)


def test_grayscale_and_palette_become_rgb(tmp_path):
    Image.new("L", (5, 4), 77).save(tmp_path / "g.png")
    Image.new("P", (3, 3), 2).save(tmp_path / "p.png")
    for name in ("g.png", "p.png"):
        page = rasterize_first_page(DocumentRecord("x", tmp_path / name, "png", "x"))
        assert page.pixels.shape[2] == 3


def test_jpg(tmp_path):
    Image.new("RGB", (40, 30), (200, 0, 0)).save(tmp_path / "j.jpg")
    assert rasterize_first_page(DocumentRecord("j", tmp_path / "j.jpg", "jpg", "x")).size == (40, 30)


def test_multiframe_tiff_uses_first_frame(tmp_path):
    frames = [Image.new("RGB", (20 + i, 10), (i * 40, 0, 0)) for i in range(3)]
    frames[0].save(tmp_path / "m.tiff", save_all=True, append_images=frames[1:])
    page = rasterize_first_page(DocumentRecord("m", tmp_path / "m.tiff", "tiff", "x"))
    assert page.size == (20, 10)
    assert tuple(page.pixels[0, 0]) == (0, 0, 0)


def test_corrupt_and_unsupported(tmp_path):
    (tmp_path / "c.png").write_bytes(b"not an image")
    with pytest.raises(CorruptDocument):
        rasterize_first_page(DocumentRecord("c", tmp_path / "c.png", "png", "x"))
    with pytest.raises(UnsupportedFormat):
        rasterize_first_page(DocumentRecord("c", tmp_path / "c.png", "docx", "x"))


FAKE_RASTERIZER = textwrap.dedent(
    """
    import io, sys
    from PIL import Image
    args = dict(a.split("=", 1) for a in sys.argv[1:])
    # width encodes the requested page, height the dpi
    img = Image.new("RGB", (int(args["page"]) * 10, int(args["dpi"])), (1, 2, 3))
    if "out" in args:
        img.save(args["out"], format="PNG")
    else:
        buf = io.BytesIO()
        img.save(buf, format="PNG")
        sys.stdout.buffer.write(buf.getvalue())
    """
)


@pytest.fixture
def pdf_record(tmp_path):
    pages = [Image.new("RGB", (50, 70), (i * 50, 0, 0)) for i in range(5)]
    pdf = tmp_path / "five.pdf"
    pages[0].save(pdf, save_all=True, append_images=pages[1:])
    script = tmp_path / "raster.py"
    script.write_text(FAKE_RASTERIZER)
    return DocumentRecord("five", pdf, "pdf", "x"), script


def test_pdf_via_stdout(pdf_record):
    record, script = pdf_record
    cfg = RasterConfig(rasterizer_cmd=f"{sys.executable} {script} input={{input}} page={{page}} dpi={{dpi}}")
    page = rasterize_first_page(record, cfg)
    assert page.size == (10, 150)  # page 1 at the default 150 dpi


def test_pdf_via_output_file(pdf_record):
    record, script = pdf_record
    cfg = RasterConfig(
        rasterizer_cmd=f"{sys.executable} {script} input={{input}} page={{page}} dpi={{dpi}} out={{output}}", dpi=72
    )
    assert rasterize_first_page(record, cfg).size == (10, 72)


def test_pdf_without_rasterizer(pdf_record):
    record, _ = pdf_record
    with pytest.raises(RasterizerUnavailable):
        rasterize_first_page(record, RasterConfig())
    with pytest.raises(RasterizerUnavailable):
        rasterize_first_page(record, RasterConfig(rasterizer_cmd="/nonexistent/rasterizer {input}"))
    with pytest.raises(RasterizerUnavailable, match="template"):
        rasterize_first_page(record, RasterConfig(rasterizer_cmd="raster {input} {nope}"))


def test_pdf_rasterizer_failure(pdf_record):
    record, _ = pdf_record
    cfg = RasterConfig(rasterizer_cmd=f"{sys.executable} -c 'import sys; sys.exit(3)' {{input}}")
    with pytest.raises(CorruptDocument):
        rasterize_first_page(record, cfg)


def test_rasterize_all_preserves_order(tmp_path):
    docs = []
    for i in range(6):
        Image.new("RGB", (10 + i, 8), (0, 0, 0)).save(tmp_path / f"{i}.png")
        docs.append(DocumentRecord(f"d{i}", tmp_path / f"{i}.png", "png", "a"))
    m = DatasetManifest([ClassLabel("a", "A")], docs)
    pages = rasterize_all(m, RasterConfig(max_dim=12), workers=4)
    assert [p.width for p in pages] == [10, 11, 12, 12, 12, 12]
    assert all(d.page is p for d, p in zip(m.documents, pages))


# -- cap_resize ----------------------------------------------------------------

def oracle_size(w, h, cap):
    longest = max(w, h)
    if longest <= cap:
        return w, h
    half = Fraction(1, 2)

    def side(s):
        return max(1, int(Fraction(s * cap, longest) + half))  # floor(x + 1/2) for x > 0

    return (cap, side(h)) if w >= h else (side(w), cap)


@pytest.mark.parametrize(
    "size, expected",
    [((16384, 8192), (8192, 4096)), ((4000, 3000), (4000, 3000)), ((10000, 4000), (8192, 3277)),
     ((4000, 10000), (3277, 8192)), ((20000, 1), (8192, 1)), ((8192, 8192), (8192, 8192))],
)
def test_capped_size_examples(size, expected):
    assert capped_size(*size) == expected


@given(st.integers(1, 20000), st.integers(1, 20000))
def test_capped_size_law(w, h):
    out = capped_size(w, h)
    assert out == oracle_size(w, h, 8192)
    assert max(out) <= 8192
    assert out[0] <= w and out[1] <= h
    assert capped_size(*out) == out


def test_cap_resize_small_is_identity():
    img = PageImage(np.zeros((30, 40, 3), dtype=np.uint8))
    assert cap_resize(img, 100) is img


def test_cap_resize_real_image():
    img = PageImage(np.random.default_rng(0).integers(0, 255, (400, 1000, 3), dtype=np.uint8))
    out = cap_resize(img, 819)
    assert out.size == (819, 328)  # 400 * 819 / 1000 = 327.6
    assert cap_resize(out, 819) is out


def test_page_image_validates():
    with pytest.raises(ValueError):
        PageImage(np.zeros((3, 3), dtype=np.uint8))
    with pytest.raises(ValueError):
        PageImage(np.zeros((0, 3, 3), dtype=np.uint8))
