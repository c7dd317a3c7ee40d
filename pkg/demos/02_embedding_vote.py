# %% [markdown]
# # Zero-shot classification by similarity voting
#
# Each class gets one embedding, made from its written definition.  A document is
# assigned to the class whose definition embedding is closest in cosine terms.
# There is no training and no labeled example per class.
#
# A real run points a provider at an OpenAI-style `/v1/embeddings` endpoint.  Here
# we use the deterministic mock provider and the synthetic corpus that ships with
# the package, so the script runs offline.

# %%
import yaml

from docclass import (
    LabeledEmbeddingSet,
    Provider,
    ProviderConfig,
    cluster_report,
    embed_class_definitions,
    evaluate,
    load_manifest,
    rasterize_first_page,
    similarity_vote,
)
from docclass.classify import definitions_from_manifest, doc_key
from docclass.corpus import bundled_corpus_dir

corpus = bundled_corpus_dir()
manifest = load_manifest(corpus / "manifest.jsonl")
settings = yaml.safe_load((corpus / "config.yaml").read_text())
print(len(manifest.documents), "documents,", len(manifest.classes), "classes")

# %% [markdown]
# The mock embedder draws a vector from a seed chosen by a routing rule.  For
# this corpus each class has its own seed and every document adds some jitter.

# %%
cfg = ProviderConfig.from_mapping({"provider_id": "mock-embed", **settings["providers"]["mock-embed"]})
provider = Provider(cfg)
definitions = embed_class_definitions(definitions_from_manifest(manifest, use_definitions=True), provider)
for d in definitions[:3]:
    print(d.label, "|", d.definition_text[:60], "...")

# %%
instruction = settings["embedding_instruction"]
doc_vectors = {}
for rec in manifest.documents:
    page = rasterize_first_page(rec)
    doc_vectors[rec.doc_id] = provider.embed_image(page, instruction, key=doc_key(rec))

predictions = [similarity_vote(doc_vectors[r.doc_id], definitions, doc_id=r.doc_id) for r in manifest.documents]
first = predictions[0]
print(first.doc_id, "->", first.predicted)
print({k: round(v, 3) for k, v in sorted(first.scores.items(), key=lambda kv: -kv[1])[:3]})

# %%
report = evaluate(predictions, manifest, model="mock-embed", config="definitions")
print(f"accuracy {report.accuracy:.2f}  macro F1 {report.macro_f1:.2f}")

# %% [markdown]
# The same document vectors, grouped by their true labels, give the cluster
# indices that go alongside the accuracy numbers.

# %%
labeled = LabeledEmbeddingSet.from_items((r.doc_id, r.true_label, doc_vectors[r.doc_id]) for r in manifest.documents)
quality = cluster_report(labeled)
print({k: round(v, 3) for k, v in quality.to_dict().items()})
provider.close()
