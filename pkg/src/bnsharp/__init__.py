"""Sharpness measurement and sharpness-regularized training for
batch-normalized networks.

The package measures the curvature of a loss surface along the steepest
admissible direction of a product-of-spheres constraint set that makes
the measure invariant under the rescaling symmetry of batch
normalization, and trains networks with that measure as a penalty.
"""

from .data import Dataset, DatasetError, batches, gen_blobs, gen_spirals, load_csv
from .estimator import BnSharpClassifier
from .manifold import (SingularRetractionError, check_membership, direction_step,
                       make_direction, project_tangent, retract)
from .network import (AnalyticLinear, AnalyticQuadratic, Batch, BnMlp,
                      CheckpointError, DegenerateStatisticsError, NetworkSpec,
                      grad_loss, hvp, load_checkpoint, save_checkpoint)
from .optimizer import (NonFiniteLossError, RunMetrics, TrainConfig, TrainState,
                        metrics_to_csv, sgd_step, sgds_step, train)
from .params import ParamVector, StructureError, scale_transform, zeros_like
from .regularizer import (RegularizerConfig, clip_to_norm, h1, h2,
                          quadrature_grad_theta, quadrature_grad_v)
from .sharpness import (SharpnessConfig, bn_sharpness, directional_integral,
                        init_direction, lp_ball_sharpness_mc, measurement_report,
                        search_direction, small_delta_limit, trace_sharpness)

__version__ = "0.1.0"

__all__ = [
    "AnalyticLinear", "AnalyticQuadratic", "Batch", "BnMlp", "BnSharpClassifier",
    "CheckpointError", "Dataset", "DatasetError", "DegenerateStatisticsError",
    "NetworkSpec", "NonFiniteLossError", "ParamVector", "RegularizerConfig",
    "RunMetrics", "SharpnessConfig", "SingularRetractionError", "StructureError",
    "TrainConfig", "TrainState", "batches", "bn_sharpness", "check_membership",
    "clip_to_norm", "direction_step", "directional_integral", "gen_blobs",
    "gen_spirals", "grad_loss", "h1", "h2", "hvp", "init_direction",
    "load_checkpoint", "load_csv", "lp_ball_sharpness_mc", "make_direction",
    "measurement_report", "metrics_to_csv", "project_tangent",
    "quadrature_grad_theta", "quadrature_grad_v", "retract", "save_checkpoint",
    "scale_transform", "search_direction", "sgd_step", "sgds_step",
    "small_delta_limit", "train", "trace_sharpness", "zeros_like",
]
