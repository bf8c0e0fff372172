"""Inference-time inspection and intervention for latent video diffusion."""

from ._accel import backend_name
from .costmodel import PRESETS, BranchStats, PrimitiveTimes, derive_branch_stats, overhead_report
from .detector import Decision, DecisionKind, DetectorConfig, DetectorState, classify, observe, run_detector
from .intervene import (
    BranchLabel,
    ExecutionTrace,
    PipelineConfig,
    SchedulerBinding,
    add_noise,
    run_pipeline,
    single_frame_injection,
    soft_mask,
)
from .l2r import L2RWeights, init_weights, l2r_forward, param_count

__version__ = "0.1.0"
