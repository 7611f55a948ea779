"""Channel-feature pedestrian detection toolkit.

Handcrafted feature channels (HOG+LUV and filtered banks), RoI
max-pooling fused with ingested CNN feature maps, a bootstrapped
RealBoost forest classifier, and miss-rate/FPPI evaluation.
"""

__version__ = "0.1.0"

from ._kernels import BACKEND
from .boxes import Box, Proposal, iou, nms, select_topk
from .channels import (ChannelConfig, ChannelStack, compute_hogluv,
                       gradient_magnitude, orientation_channels, rgb_to_luv)
from .config import RunConfig, load_config, preset_config
from .errors import HcdError
from .evaluation import (STANDARD_SUBSETS, SubsetFilter, compute_mr,
                         evaluate_detections, match_detections)
from .filters import apply_bank, build_cb11, build_rotated_filters, get_bank
from .forest import Forest, Tree, load_forest, save_forest
from .io import (DatasetManifest, GtBox, load_image, load_manifest,
                 load_proposals, load_stack, rescale_for_pipeline,
                 save_manifest, save_proposals, save_stack)
from .roi import FeatureVector, concat_features, roi_pool
from .training import (LabeledSample, TrainConfig, bootstrap_train,
                       label_proposals, train_realboost)
