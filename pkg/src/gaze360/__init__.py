"""Calibrated 360-degree driver attention maps, attended-object masks and metrics."""

from .attended import ClassTable, InstanceMask, SemanticMask, attended_instance_ids, extract_attended
from .attention import AttentionMap, ThresholdPolicy, WindowConfig, binarize, build_attention_map
from .dataset import (
    SessionManifest,
    SplitSpec,
    ViewConcatSpec,
    assign_split,
    concat_view_transform,
    gaze_statistics,
    window_sampler,
)
from .geometry import (
    FixationRecord,
    Homography,
    ScreenLayout,
    ScreenSpec,
    TagDetection,
    calibrate_fixation,
    homography_from_correspondences,
    project_fixation,
    screen_for_gaze,
)
from .metrics import cc, dice, iou, kld, loss_sal, loss_seg, loss_total, nss, sim

__version__ = "0.1.0"
