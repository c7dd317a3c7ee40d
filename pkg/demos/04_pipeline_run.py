# %% [markdown]
# # A full benchmark run from the command line
#
# The `docclass` command splits a run into resumable stages.  Each stage writes
# its artifacts under the output directory, and a later stage reads them back.
# If a stage is interrupted, the next invocation picks up where it stopped.
# Setting `SOURCE_DATE_EPOCH` pins the timestamps, so two runs give byte-identical files.
#
# Here we copy the bundled synthetic corpus to a scratch directory and run every
# stage with the mock providers configured in its `config.yaml`.

# %%
import os
import shutil
import tempfile
from pathlib import Path

from docclass.cli import main
from docclass.corpus import bundled_corpus_dir

os.environ.setdefault("SOURCE_DATE_EPOCH", "1700000000")
work = Path(tempfile.mkdtemp(prefix="docclass-demo-"))
shutil.copytree(bundled_corpus_dir(), work / "corpus")
config = str(work / "corpus" / "config.yaml")

# %%
for stage in ("ingest", "classify-embed", "cluster-metrics", "classify-vlm"):
    print(f"$ docclass {stage} --config config.yaml")
    assert main([stage, "--config", config]) == 0

# %% [markdown]
# The base prompt is a second run of the same stage with a different template.

# %%
assert main(["classify-vlm", "--config", config, "--template", "base"]) == 0
assert main(["evaluate", "--config", config]) == 0

# %%
assert main(["report", "--config", config]) == 0

# %%
out = work / "corpus" / "out"
for path in sorted(out.rglob("*")):
    if path.is_file() and "pages" not in path.parts:
        print(path.relative_to(out))
shutil.rmtree(work)
