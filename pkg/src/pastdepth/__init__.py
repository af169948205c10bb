"""Asynchronous depth maps and pooled depth features from past LiDAR traversals.

The pipeline: ingest past traversals into a geo-indexed store, query
frames near the current ego pose at along-road offsets, densify them
into per-traversal clouds, rasterize per-camera depth maps with a
strict z-buffer max rule, then downsample and pool into a feature
tensor ready to concatenate with image features.
"""

from .errors import ContractViolation, FormatError
from .geometry import (
    CameraModel,
    Frame,
    PointCloud,
    Projection,
    RigidPose,
    compose,
    project_points,
    quat_about_z,
    quat_multiply,
    quat_rotation_matrix,
    read_camera_file,
    read_pose_file,
    transform_to_camera,
    write_camera_file,
    write_pose_file,
)
from .store import (
    FrameRecord,
    QueryConfig,
    TraversalMatch,
    TraversalStore,
    read_cloud_file,
    read_frame_pose_file,
)
from .render import (
    DensifiedCloud,
    DepthMap,
    SENTINEL,
    densify,
    read_depthmap,
    render_all,
    render_depth,
    write_depth_pgm,
    write_depth_png,
    write_depthmap,
)
from .featurize import (
    FeatureTensor,
    concat_features,
    downavg_featurize,
    pool_traversals,
    read_tensor,
    write_tensor,
)
from .perturb import NoiseSpec, make_rng, perturb_frames, perturb_pose, sample_unit_vector
from .synth import (
    Box,
    SceneSpec,
    generate_traversals,
    gt_depth,
    raycast_sweep,
    read_scene_file,
    route_poses,
    sweep_directions,
    write_scene_file,
)
from .metrics import TPMetrics, depth_l1, detection_score
from .bench import render_scaling_probe, run_pipeline_bench

__version__ = "0.1.0"

__all__ = [
    "Box",
    "CameraModel",
    "ContractViolation",
    "DensifiedCloud",
    "DepthMap",
    "FeatureTensor",
    "FormatError",
    "Frame",
    "FrameRecord",
    "NoiseSpec",
    "PointCloud",
    "Projection",
    "QueryConfig",
    "RigidPose",
    "SENTINEL",
    "SceneSpec",
    "TPMetrics",
    "TraversalMatch",
    "TraversalStore",
    "compose",
    "concat_features",
    "densify",
    "depth_l1",
    "detection_score",
    "downavg_featurize",
    "generate_traversals",
    "gt_depth",
    "make_rng",
    "perturb_frames",
    "perturb_pose",
    "pool_traversals",
    "project_points",
    "quat_about_z",
    "quat_multiply",
    "quat_rotation_matrix",
    "raycast_sweep",
    "read_camera_file",
    "read_cloud_file",
    "read_depthmap",
    "read_frame_pose_file",
    "read_pose_file",
    "read_scene_file",
    "read_tensor",
    "render_all",
    "render_depth",
    "render_scaling_probe",
    "route_poses",
    "run_pipeline_bench",
    "sample_unit_vector",
    "sweep_directions",
    "transform_to_camera",
    "write_camera_file",
    "write_depth_pgm",
    "write_depth_png",
    "write_depthmap",
    "write_pose_file",
    "write_scene_file",
    "write_tensor",
]
