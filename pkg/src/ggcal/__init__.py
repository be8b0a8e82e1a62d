"""Geometry-guided distribution calibration for embedding classification.

Extracts per-class covariance eigenstructure ("geometric shapes") from
embedding sets, aggregates it across federated clients from statistics
alone, and uses it to synthesize calibration samples for heterogeneous
federated learning and long-tailed recognition.
"""

__version__ = "0.1.0"

from .container import EmbeddingSet, PartitionSpec, load_container, partition, save_container
from .geometry import (
    ClassStats,
    GeometricShape,
    Prototype,
    class_prototypes,
    class_shapes,
    class_similarity,
    class_stats,
    consistency_curve,
    matching_stability,
    rank_by_cosine,
    shape_of,
    shape_similarity,
    size_of,
    stats_of_rows,
)
from .aggregate import (
    ClientUpload,
    ShapeBank,
    aggregate_global,
    build_shape_bank,
    load_shape_bank,
    save_shape_bank,
    upload_from_set,
)
from .augment import (
    AugmentPlan,
    augment_class,
    augment_multi_domain,
    augment_single_domain,
    sample_perturbation,
)
from .longtail import (
    KnowledgeBase,
    TailPolicy,
    build_knowledge_base,
    calibrate_tail,
    ggeur_layer,
    inverse_sampling_probs,
    match_class,
)
from .training import (
    ClassifierParams,
    EvalReport,
    TrainConfig,
    evaluate,
    fedavg,
    init_params,
    train,
)
from .synth import SynthSpec, synth_dataset, synth_train_test
from .simulate import SimConfig, load_config, run_analysis, run_fed, run_longtail
