"""Merge-tree region proposals, click simulation, loss kernels, and NoC evaluation."""

from .errors import DescriptorError, FormatError, TruncatedFileError, ValidationError
from .feature_io import (
    FeatureGrid,
    RegionSpec,
    SceneSpec,
    read_features,
    synth_features,
    two_region_scene,
    write_features,
)
from .interaction_sim import (
    Click,
    ClickMap,
    clicks_from_csv,
    clicks_to_csv,
    encode_click_map,
    iou,
    next_click_center,
    sample_random_clicks,
)
from .losses import (
    AffinityField,
    PixelFeatures,
    bce_loss,
    bilateral_affinity,
    pair_affinity,
    pixel_features_from_rgb,
    smoothness_loss,
    total_loss,
)
from .merge_tree import (
    MergeTree,
    RegionAdjacency,
    bottom_up_merge,
    brute_force_merge,
    build_adjacency,
    deserialize_tree,
    merge_centroid,
    recompute_centroids,
    serialize_tree,
    validate_tree,
    ward_cost,
)
from .noc_eval import (
    EvalResult,
    empty_segmenter,
    export_eval_result,
    hierarchy_segmenter,
    oracle_segmenter,
    run_noc_eval,
    synthetic_two_region_dataset,
    tree_segmenter,
)
from .proposal_sampler import (
    Proposal,
    SamplerConfig,
    rasterize_node,
    sample_proposal,
    top_down_sample,
    upsample_mask,
)

__version__ = "0.1.0"
