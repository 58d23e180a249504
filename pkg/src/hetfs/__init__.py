"""Meta-path similarity search over heterogeneous information networks."""

__version__ = "0.1.0"

from .baselines import (
    SimRankConfig,
    pathsim,
    pathsim_free,
    pathsim_single_source,
    simrank_montecarlo,
    simrank_power,
)
from .content import (
    ContentScoreTable,
    Tokenizer,
    build_tfidf,
    content_scores,
    pairwise_relatedness,
    tokenize,
)
from .engine import (
    ScoreVector,
    TopKResult,
    WeightModel,
    build_weight_model,
    canonical_step_factor,
    hetfs_bruteforce,
    hetfs_montecarlo,
    hetfs_single_source,
    metapath_free_query,
    topk,
    unit_weight_model,
)
from .errors import HetfsError
from .evaluation import (
    LabeledNodes,
    SplitSpec,
    classification_metrics,
    clustering_metrics,
    link_prediction_eval,
    similarity_label_transfer,
    split_edges,
)
from .graph import (
    Hin,
    MetaPath,
    MetaPathSet,
    RelationType,
    Schema,
    enumerate_symmetric_metapaths,
    freeze_graph,
    neighbors,
    parse_metapath,
    parse_metapaths,
    structure_weight,
)
from .ingest import DatasetBundle, SynthSpec, generate_synthetic_hin, load_dataset
from .weights import (
    compute_centrality,
    compute_edge_contribution,
    export_contribution_graph,
    override_contribution,
)
