"""Acceptance criteria, one test per criterion.

Each test is named ``test_criterion_<n>_...``; conftest prints a PASS/FAIL line for
each at the end of the session.  Run alone with ``pytest tests/test_acceptance.py``.
"""

import math
import time
from fractions import Fraction
from pathlib import Path

import numpy as np
import pytest
import yaml

import oracles
from docclass import cli
from docclass.classify import UNPARSED, ClassDefinition, Prediction, parse_vlm_output, similarity_vote
from docclass.clustermetrics import (
    LabeledEmbeddingSet,
    calinski_harabasz,
    cluster_report,
    davies_bouldin,
    inter_distance,
    intra_distance,
    silhouette,
)
from docclass.dataset import ClassLabel, DatasetManifest, DocumentRecord, PageImage, cap_resize, capped_size
from docclass.errors import Unparseable
from docclass.evalreport import evaluate, load_results, render_table
from docclass.pipeline import RunConfig, stage_classify_embed, stage_cluster_metrics, stage_ingest
from parser_cases import CASES, CLASSES as PARSER_CLASSES
from test_evalreport import EMBED_ROWS, VLM_ROWS, embedding_reports, vlm_reports

SEED = 20250101


def close(a, b, tol):
    """Equal sentinels (inf) match exactly; finite values within ``tol``."""
    return a == b or abs(a - b) <= tol


def labeled(labels, vectors):
    return LabeledEmbeddingSet([f"d{i}" for i in range(len(labels))], list(labels), vectors)


# 1 ---------------------------------------------------------------------------

def random_labeled(rng):
    c = int(rng.integers(2, 6))
    n = int(rng.integers(c, 41))
    dim = int(rng.integers(2, 9))
    labels = [f"k{i}" for i in range(c)] + [f"k{int(j)}" for j in rng.integers(0, c, n - c)]
    rng.shuffle(labels)
    return labels, rng.standard_normal((n, dim)) * rng.uniform(0.1, 10, (n, 1))


def test_criterion_1_cluster_metric_oracle():
    rng = np.random.default_rng(SEED)
    cases = [random_labeled(rng) for _ in range(50)]
    start = time.perf_counter()
    got = []
    for labels, vectors in cases:
        s = labeled(labels, vectors)
        got.append((intra_distance(s)[0], inter_distance(s), silhouette(s), davies_bouldin(s), calinski_harabasz(s)))
    elapsed = time.perf_counter() - start
    for (labels, vectors), values in zip(cases, got):
        assert len(set(labels)) <= 5 and len(labels) <= 40 and vectors.shape[1] <= 8
        expected = (oracles.intra(labels, vectors)[0], oracles.inter(labels, vectors),
                    oracles.silhouette(labels, vectors), oracles.davies_bouldin(labels, vectors),
                    oracles.calinski_harabasz(labels, vectors))
        for g, e in zip(values, expected):
            assert close(g, e, 1e-9)
    assert elapsed < 5.0


# 2 ---------------------------------------------------------------------------

def test_criterion_2_geometric_fixture():
    rep = cluster_report(labeled("AABB", [(1, 0), (0, 1), (-1, 0), (0, -1)]))
    expected = {"intra": 0.292893, "inter": 2.0, "ratio": 6.828427, "silhouette": 0.333333,
                "davies_bouldin": 0.292893, "calinski_harabasz": 2.0}
    for key, value in expected.items():
        assert abs(getattr(rep, key) - value) <= 1e-6, key


# 3 ---------------------------------------------------------------------------

def test_criterion_3_classification_metric_oracle():
    rng = np.random.default_rng(SEED)
    for _ in range(100):
        k = int(rng.integers(1, 7))
        n = int(rng.integers(1, 51))
        classes = [f"c{i}" for i in range(k)]
        truth = [classes[int(i)] for i in rng.integers(0, k, n)]
        choices = classes + [UNPARSED]
        predicted = [choices[int(i)] for i in rng.integers(0, k + 1, n)]
        m = DatasetManifest([ClassLabel(c, c) for c in classes],
                            [DocumentRecord(f"d{i}", Path("x"), "png", t) for i, t in enumerate(truth)])
        r = evaluate([Prediction(f"d{i}", "m", p) for i, p in enumerate(predicted)], m)
        tallies, acc, macro = oracles.tally(truth, predicted, classes)
        assert r.accuracy == acc and r.macro_f1 == macro
        for c, (tp, fp, fn, f1) in tallies.items():
            assert r.per_class[c].f1 == f1 and r.per_class[c].support == tp + fn
    classes = [ClassLabel(c, c) for c in "ABC"]
    m = DatasetManifest(classes, [DocumentRecord(f"d{i}", Path("x"), "png", t) for i, t in enumerate("AABBCC")])
    r = evaluate([Prediction(f"d{i}", "m", p) for i, p in enumerate("ABBBCA")], m)
    assert abs(r.accuracy - 2 / 3) <= 1e-6
    assert abs(r.macro_f1 - 0.655556) <= 1e-6


# 4 ---------------------------------------------------------------------------

def _full_run(corpus: Path, out: str) -> dict:
    cfg = str(corpus / "config.yaml")
    for sub in ("ingest", "classify-embed", "cluster-metrics", "classify-vlm", "evaluate", "report"):
        assert cli.main([sub, "--config", cfg, "--out", str(corpus / out)]) == 0
    root = corpus / out
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def test_criterion_4_end_to_end_determinism(corpus, monkeypatch, capsys):
    monkeypatch.setenv("SOURCE_DATE_EPOCH", "1700000000")
    manifest_lines = (corpus / "manifest.jsonl").read_text().splitlines()
    assert len(manifest_lines) - 1 == 24
    start = time.perf_counter()
    first = _full_run(corpus, "run1")
    second = _full_run(corpus, "run2")
    elapsed = time.perf_counter() - start
    capsys.readouterr()
    assert first == second
    for run in sorted((corpus / "run1" / "runs").iterdir()):
        _, reports, _ = load_results(run)
        assert [r.accuracy for r in reports] == [1.0]
    assert elapsed < 30.0


# 5 ---------------------------------------------------------------------------

def _embed_outcome(corpus: Path, scale: float, out: str):
    cfg = yaml.safe_load((corpus / "config.yaml").read_text())
    cfg["providers"]["mock-embed"]["scale"] = scale
    rc = RunConfig.from_mapping(cfg, base=corpus, output_dir=str(corpus / out))
    stage_ingest(rc)
    preds = stage_classify_embed(rc)
    report = stage_cluster_metrics(rc)
    return preds, report


def test_criterion_5_scale_invariance(corpus):
    base_preds, base = _embed_outcome(corpus, 1.0, "s1")
    scaled_preds, scaled = _embed_outcome(corpus, 7.3, "s73")
    assert [(p.doc_id, p.predicted, p.tie_broken) for p in base_preds] == \
        [(p.doc_id, p.predicted, p.tie_broken) for p in scaled_preds]
    for key in ("intra", "inter", "ratio", "silhouette", "davies_bouldin", "calinski_harabasz"):
        assert close(getattr(base, key), getattr(scaled, key), 1e-9), key
    # the same on random raw vectors, including exact ties
    rng = np.random.default_rng(SEED)
    for _ in range(50):
        labels, vectors = random_labeled(rng)
        a, b = cluster_report(labeled(labels, vectors)), cluster_report(labeled(labels, 7.3 * vectors))
        for key in ("intra", "inter", "ratio", "silhouette", "davies_bouldin", "calinski_harabasz"):
            assert close(getattr(a, key), getattr(b, key), 1e-9)
        defs = [ClassDefinition(f"c{i}", "d", rng.standard_normal(vectors.shape[1])) for i in range(4)]
        defs.append(ClassDefinition("c9", "d", defs[0].embedding.copy()))
        for v in vectors:
            p, q = similarity_vote(v, defs), similarity_vote(7.3 * v, defs)
            assert (p.predicted, p.tie_broken) == (q.predicted, q.tie_broken)


# 6 ---------------------------------------------------------------------------

def rounding_oracle(w, h, cap=8192):
    longest = max(w, h)
    if longest <= cap:
        return w, h

    def side(s):
        return max(1, math.floor(Fraction(s * cap, longest) + Fraction(1, 2)))

    return (cap, side(h)) if w >= h else (side(w), cap)


def test_criterion_6_resize_law():
    rng = np.random.default_rng(SEED)
    pairs = [(int(w), int(h)) for w, h in rng.integers(1, 20001, (1000, 2))]
    for w, h in pairs:
        out = capped_size(w, h)
        assert max(out) <= 8192
        assert out[0] <= w and out[1] <= h
        assert capped_size(*out) == out
        assert out == rounding_oracle(w, h)
    # real pixels: thin oversized pages plus pages under the cap
    thin = [(int(w), int(h)) for w, h in zip(rng.integers(8193, 20001, 12), rng.integers(1, 40, 12))]
    thin += [(h, w) for w, h in thin[:6]] + [(int(w), int(h)) for w, h in rng.integers(1, 600, (6, 2))]
    for w, h in thin:
        page = PageImage(np.full((h, w, 3), 200, dtype=np.uint8))
        out = cap_resize(page)
        assert out.size == rounding_oracle(w, h)
        assert cap_resize(out) is out
        if max(w, h) <= 8192:
            assert out is page
    big = cap_resize(PageImage(np.zeros((4000, 10000, 3), dtype=np.uint8)))
    assert big.size == (8192, 3277)
    assert capped_size(10000, 4000) == (8192, 3277)


# 7 ---------------------------------------------------------------------------

def test_criterion_7_table_fidelity():
    t1 = render_table(embedding_reports()).splitlines()
    for line, (name, *values) in zip(t1[1:], EMBED_ROWS):
        printed = [f"{v:.3f}" for v in values[:6]] + [f"{v:.2f}" for v in values[6:]]
        assert line.split() == [name, *printed]
    assert "1.822" in t1[1].split()
    t2 = render_table(vlm_reports()).splitlines()
    for line, (name, *values) in zip(t2[1:], VLM_ROWS):
        assert line.split() == [name, *(f"{v:.2f}" for v in values)]
    assert t2[1].split()[-2:] == ["0.82", "0.82"]


# 8 ---------------------------------------------------------------------------

def test_criterion_8_parser_contract():
    assert len(CASES) == 20
    ids = {c.id for c in PARSER_CLASSES}
    for raw, expected in CASES:
        if expected is None:
            with pytest.raises(Unparseable):
                parse_vlm_output(raw, PARSER_CLASSES)
        else:
            got = parse_vlm_output(raw, PARSER_CLASSES)
            assert got in ids
            assert got == expected, raw
    rng = np.random.default_rng(SEED)
    vocab = [w for c in PARSER_CLASSES for w in (c.id, c.display_name, c.display_name.upper())]
    vocab += ["Final answer:", "maybe", "not", "geo", "physics", "logs", "?", "**", "\n", "-", "_"]
    for _ in range(2000):
        raw = " ".join(vocab[int(i)] for i in rng.integers(0, len(vocab), int(rng.integers(0, 12))))
        try:
            assert parse_vlm_output(raw, PARSER_CLASSES) in ids
        except Unparseable:
            pass


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q"]))
