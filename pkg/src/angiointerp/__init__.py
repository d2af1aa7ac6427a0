"""Depth-aware video frame interpolation for low-frame-rate angiography-like clips."""
from ._backend import NAME as BACKEND
from .core import Triplet, load_frame, read_depth, read_flow, save_frame, write_depth, write_flow
from .dataset import DedupConfig, MaskRegion, apply_mask, augment_flips, deduplicate, extract_triplets
from .errors import (
    AngioInterpError,
    ConfigError,
    DataError,
    DegenerateInputError,
    DomainError,
    FormatError,
    NumericError,
    ShapeError,
)
from .estimators import DepthProvider, FlowEstimatorConfig, estimate_flow, provide_depth
from .evaluation import MetricSeries, PeriodReport, detect_period, emit_report, interpolation_protocol, psnr, ssim
from .loss import FeatureExtractor, LossWeights, total_loss_and_grad
from .pipeline import BlendParams, PipelineConfig, fit_blend_params, interpolate
from .projection import ProjectionResult, fill_holes, project_flow, project_flow_oracle
from .synthetic import PhantomConfig, SyntheticClip, generate_clip
from .warping import adaptive_warp, blend

__version__ = "0.1.0"
