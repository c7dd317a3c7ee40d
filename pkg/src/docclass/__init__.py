"""Embedding-vote and VLM-prompting document classification benchmarks."""

from .classify import (
    UNPARSED,
    ClassDefinition,
    Prediction,
    PromptTemplate,
    classify_generative,
    embed_class_definitions,
    load_template,
    parse_vlm_output,
    render_prompt,
    similarity_vote,
)
from .clustermetrics import (
    ClusterQualityReport,
    LabeledEmbeddingSet,
    calinski_harabasz,
    cluster_report,
    davies_bouldin,
    inter_distance,
    intra_distance,
    silhouette,
)
from .dataset import (
    ClassLabel,
    DatasetManifest,
    DocumentRecord,
    PageImage,
    RasterConfig,
    cap_resize,
    load_manifest,
    rasterize_first_page,
    save_manifest,
)
from .evalreport import (
    ConfusionMatrix,
    EvaluationReport,
    confusion,
    emit_plot_data,
    evaluate,
    load_results,
    persist_results,
    render_table,
)
from .providers import MockRule, Provider, ProviderConfig
from .vectorspace import centroid, cosine_distance, cosine_similarity, l2_normalize

__version__ = "0.1.0"

__all__ = [
    "ClassDefinition",
    "ClassLabel",
    "ClusterQualityReport",
    "ConfusionMatrix",
    "DatasetManifest",
    "DocumentRecord",
    "EvaluationReport",
    "LabeledEmbeddingSet",
    "MockRule",
    "PageImage",
    "Prediction",
    "PromptTemplate",
    "Provider",
    "ProviderConfig",
    "RasterConfig",
    "UNPARSED",
    "calinski_harabasz",
    "cap_resize",
    "centroid",
    "classify_generative",
    "cluster_report",
    "confusion",
    "cosine_distance",
    "cosine_similarity",
    "davies_bouldin",
    "embed_class_definitions",
    "emit_plot_data",
    "evaluate",
    "inter_distance",
    "intra_distance",
    "l2_normalize",
    "load_manifest",
    "load_results",
    "load_template",
    "parse_vlm_output",
    "persist_results",
    "rasterize_first_page",
    "render_prompt",
    "render_table",
    "save_manifest",
    "silhouette",
    "similarity_vote",
]
