"""Brain-graph attention pipeline for EEG connectivity.

From per-band coherence matrices to an explainable severity regressor:
graph sparsification, multi-layer assembly, positional encodings, a
multi-head attention network trained with cross-validation, and
attention-based explanation next to classical small-world metrics.
"""

from .graphs import (
    BandLayer,
    BrodmannArea,
    ConnectivityMatrix,
    FrequencyBand,
    MultiLayerGraph,
    build_multilayer,
    default_areas,
    global_id,
)
from .dataset import (
    Cohort,
    PatientRecord,
    SeverityClass,
    StrokeSide,
    SynthConfig,
    class_of,
    load_cohort,
    save_cohort,
    synth_cohort,
)
from .rewiring import RewireConfig, functional_edges, rewire_layer, rewire_patient, structural_edges
from .encoding import EncodingConfig, assemble_features, laplacian_pe, rw_pe
from .model import GatModel, ModelConfig, compile_graph
from .training import TrainConfig, kfold_split, mae, prepare_inputs, run_cv
from .explain import (
    combine_bands,
    edge_betweenness,
    extract_attention,
    weighted_clustering,
    weighted_in_degree,
)
from .export import export_graph

__version__ = "0.1.0"
