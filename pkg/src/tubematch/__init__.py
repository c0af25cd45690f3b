"""Query matching, temporal feature shift, tube linking and STAD evaluation."""

from .core import ActionTube, BoundingBox, FeatureClip, FrameDetection, box_iou, box_iou_matrix
from .eval import THRESHOLDS, EvalReport, MapSection, average_precision, frame_map, video_map
from .matching import (compose_to_reference, cosine_similarity, hungarian, match_clip, match_pair,
                       similarity_matrix)
from .shift import ShiftSpec, TrackAlignment, apply_shift, channel_split, matched_shift, temporal_shift
from .simulator import SceneConfig, SyntheticScene, generate_scene, run_ablation
from .tubes import LinkParams, link_tubes, link_video, tube_3d_iou

__version__ = "0.1.0"
