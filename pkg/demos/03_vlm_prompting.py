# %% [markdown]
# # Asking a vision-language model for the label
#
# The generative route shows the page image to a chat model along with a prompt
# that lists the classes.  The `base` template gives only names.  The `plus`
# template adds each class definition and a short reasoning procedure that ends
# in a fixed answer line.  Whatever the model writes is then mapped back onto a
# class id, or marked unparsed.

# %%
from docclass import MockRule, Provider, ProviderConfig, classify_generative, load_manifest, load_template
from docclass import parse_vlm_output, rasterize_first_page, render_prompt
from docclass.corpus import bundled_corpus_dir
from docclass.errors import Unparseable

manifest = load_manifest(bundled_corpus_dir() / "manifest.jsonl")
for name in ("base", "plus"):
    system, user = render_prompt(load_template(name), manifest)
    print(f"== {name}: {len(system)} chars of system text, {len(user)} chars of user text")
print(user[:600], "...")

# %% [markdown]
# Free-form answers have to be mapped to a label. Text after the last
# `Final answer:` marker wins.  Without a marker, the last class mentioned wins.
# Case and punctuation are ignored.

# %%
answers = [
    "Step 1. wireline curves...\nFinal answer: Petrophysics",
    "final answer: **WELL-COMPLETION**!",
    "Could be geology, could be geophysics. I'd go with Geophysics.",
    "Final answer: none of these",
    "I cannot tell.",
]
for raw in answers:
    try:
        label = parse_vlm_output(raw, manifest.classes)
    except Unparseable:
        label = "(unparsed)"
    print(f"{raw[:45]!r:50} -> {label}")

# %% [markdown]
# End to end with a scripted chat model.  The mock replies according to rules
# matched against the document id and file name, which makes error handling easy
# to show: one document gets an answer that cannot be parsed.

# %%
chat = Provider(ProviderConfig("scripted", "mock_chat", rules=[
    MockRule("geology-02", text="Hard to say."),
    MockRule("geology", text="Strata and lithology columns.\nFinal answer: Geology"),
    MockRule(None, text="Final answer: Drilling"),
]))
template = load_template("plus")
for rec in manifest.documents[:4]:
    rec.page = rasterize_first_page(rec)
    p = classify_generative(rec, template, chat, manifest)
    print(rec.doc_id, "->", p.predicted, "(excluded)" if p.excluded else "")
