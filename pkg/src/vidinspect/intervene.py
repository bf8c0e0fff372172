"""Hierarchical intervention: Trial 0 -> 1 -> 2 -> 2->1, and single-frame semantic injection.

Steps are 1-indexed. Step ``k`` denoises from noise level ``sigma[k]`` to
``sigma[k + 1]``; ``sigma[1] == 1`` is pure noise and ``sigma[T + 1] == 0``.
A decision at step ``d`` therefore means ``d`` denoising steps and ``d``
preview inspections have run.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable, Protocol

import numpy as np

from .detector import Decision, DetectorConfig, DetectorState, classify, finalize, observe, Verdict
from .errors import ConfigurationError
from .scorer import Scorer
from .vlm import Refinement, StubTransport, VLMClient

TAU = 0.22
DELTA = 0.05
INJECTION_STEPS = 2
TOTAL_STEPS = 50


# ---------------------------------------------------------------------------
# noise schedule

def add_noise(z0, eps, sigma: float, kind: str = "rectified_flow"):
    """Noise a clean latent to level ``sigma`` in [0, 1].

    ``rectified_flow``: ``(1 - sigma) z0 + sigma eps``.
    ``vp``: ``sqrt(1 - sigma**2) z0 + sigma eps``, i.e. ``alpha_bar = 1 - sigma**2``.
    """
    z0 = np.asarray(z0)
    eps = np.asarray(eps)
    if z0.shape != eps.shape:
        raise ConfigurationError(f"latent {z0.shape} and noise {eps.shape} differ in shape")
    if sigma == 0.0:
        return z0.copy()
    if sigma == 1.0:
        return eps.copy()
    if kind == "rectified_flow":
        return ((1.0 - sigma) * z0 + sigma * eps).astype(z0.dtype)
    if kind == "vp":
        return (math.sqrt(1.0 - sigma * sigma) * z0 + sigma * eps).astype(z0.dtype)
    raise ConfigurationError(f"unknown scheduler kind {kind!r}")


@dataclass(frozen=True)
class SchedulerBinding:
    kind: str = "rectified_flow"
    steps: int = TOTAL_STEPS

    def __post_init__(self):
        if self.kind not in ("rectified_flow", "vp"):
            raise ConfigurationError(f"unknown scheduler kind {self.kind!r}")
        if self.steps < 2:
            raise ConfigurationError("need at least two denoising steps")

    def sigma(self, k: int) -> float:
        """Noise level at timestep ``t_k``; linear from 1 at k=1 to 0 at k=steps+1."""
        if not 1 <= k <= self.steps + 1:
            raise ConfigurationError(f"timestep index {k} outside 1..{self.steps + 1}")
        return (self.steps + 1 - k) / self.steps

    def add_noise(self, z0, eps, k: int):
        return add_noise(z0, eps, self.sigma(k), self.kind)

    def clean_estimate(self, z, eps, k: int):
        """Invert :meth:`add_noise` for a known noise; undefined at pure noise."""
        s = self.sigma(k)
        if s >= 1.0:
            return None
        if self.kind == "rectified_flow":
            return (z - s * eps) / (1.0 - s)
        return (z - s * eps) / math.sqrt(1.0 - s * s)


def soft_mask(frames: int) -> np.ndarray:
    """Per-frame weights: 1 on the first frame decaying linearly to 0 on the last."""
    if frames < 1:
        raise ConfigurationError("soft mask needs at least one frame")
    if frames == 1:
        return np.ones(1)
    return 1.0 - np.arange(frames) / (frames - 1)


def blend(z, z_hat, w):
    """``w * z_hat + (1 - w) * z`` with ``w`` broadcast over H, W, C."""
    w = np.asarray(w, dtype=np.float64).reshape(-1, 1, 1, 1)
    return (w * z_hat + (1.0 - w) * z).astype(z.dtype)


# ---------------------------------------------------------------------------
# model interface

@dataclass(frozen=True)
class Condition:
    prompt_key: str
    prompt: str
    modality: str = "video"  # "video" | "image"
    refined: bool = False
    negative_prompt: str = ""

    @property
    def score_key(self) -> str:
        key = self.prompt_key
        if self.refined:
            key += "#refined"
        if self.modality == "image":
            key += "#image"
        return key


@dataclass
class StepResult:
    z_next: np.ndarray
    z0_hat: np.ndarray


class Denoiser(Protocol):
    schedule: SchedulerBinding

    def initial_noise(self, cond: Condition) -> np.ndarray: ...

    def step(self, z, k: int, cond: Condition) -> StepResult: ...


def single_frame_injection(z_img, z_T, model: Denoiser, cond: Condition, K: int = INJECTION_STEPS,
                           on_event: Callable[[str, int], None] | None = None):
    """Re-run video denoising from a single-frame anchor.

    ``z_img`` is a one-frame clean-latent prediction, ``(1, H, W, C)`` or
    ``(H, W, C)``; it is repeated across all frames of ``z_T``. The initial
    latent ``z_T`` doubles as the reference noise for every re-noising.
    Runs ``T - 1`` model steps (k = 2..T) and returns the final latent.
    """
    sched = model.schedule
    N = sched.steps
    if not 0 <= K < N:
        raise ConfigurationError(f"injection length {K} must lie in [0, {N})")
    z_T = np.asarray(z_T)
    z_img = np.asarray(z_img)
    if z_img.ndim == 3:
        z_img = z_img[None]
    if z_img.shape[1:] != z_T.shape[1:]:
        raise ConfigurationError(f"anchor {z_img.shape} does not match latent {z_T.shape}")
    anchor = np.repeat(z_img[:1], z_T.shape[0], axis=0).astype(z_T.dtype)
    eps = z_T
    w = soft_mask(z_T.shape[0])
    z = sched.add_noise(anchor, eps, 2)
    for k in range(2, N + 1):
        if k <= K + 1:
            z = blend(z, sched.add_noise(anchor, eps, k), w)
        z = model.step(z, k, cond).z_next
        if on_event is not None:
            on_event("video_step", k)
    return z


# ---------------------------------------------------------------------------
# trace

class BranchLabel(str, enum.Enum):
    TRIAL0 = "Trial0"
    TRIAL1 = "Trial1"
    TRIAL2 = "Trial2"
    TRIAL2TO1 = "Trial2to1"


EVENT_KINDS = ("video_step", "video_inspect", "image_step", "image_inspect", "vlm_call")


@dataclass
class ExecutionTrace:
    events: list[tuple[str, str, int]] = field(default_factory=list)  # (kind, phase, step)

    def add(self, kind: str, phase: str, step: int) -> None:
        if kind not in EVENT_KINDS:
            raise ConfigurationError(f"unknown event kind {kind!r}")
        self.events.append((kind, phase, step))

    def count(self, kind: str) -> int:
        return sum(1 for e in self.events if e[0] == kind)

    @property
    def video_steps(self) -> int:
        return self.count("video_step")

    @property
    def video_inspections(self) -> int:
        return self.count("video_inspect")

    @property
    def image_steps(self) -> int:
        return self.count("image_step")

    @property
    def image_inspections(self) -> int:
        return self.count("image_inspect")

    @property
    def vlm_calls(self) -> int:
        return self.count("vlm_call")

    def counts(self) -> dict[str, int]:
        return {
            "video_steps": self.video_steps,
            "video_inspections": self.video_inspections,
            "image_steps": self.image_steps,
            "image_inspections": self.image_inspections,
            "vlm_calls": self.vlm_calls,
        }

    def to_dict(self, with_events: bool = True) -> dict:
        out = {"counts": self.counts()}
        if with_events:
            out["events"] = [list(e) for e in self.events]
        return out


# ---------------------------------------------------------------------------
# pipeline

@dataclass
class PipelineConfig:
    model: Denoiser
    scorer: Scorer
    vlm: VLMClient = field(default_factory=lambda: VLMClient(StubTransport()))
    tau: float = TAU
    delta: float = DELTA
    K: int = INJECTION_STEPS
    video_detector: DetectorConfig = field(default_factory=DetectorConfig.video)
    image_detector: DetectorConfig = field(default_factory=DetectorConfig.image)
    decoder: Callable[[np.ndarray], object] | None = None  # latent -> preview; None passes the latent through

    @property
    def T(self) -> int:
        return self.model.schedule.steps

    def __post_init__(self):
        if not 0 < self.K < self.T:
            raise ConfigurationError(f"injection length {self.K} must lie in (0, {self.T})")
        if self.tau <= 0 or self.delta <= 0:
            raise ConfigurationError("tau and delta must be positive")
        if self.video_detector.window_end >= self.T or self.image_detector.window_end >= self.T:
            raise ConfigurationError("detector window must end before the last denoising step")


@dataclass
class InspectedRun:
    decision: Decision
    z_at_decision: np.ndarray
    z_final: np.ndarray | None
    preview: object
    scores: list[tuple[int, float]] = field(default_factory=list)


@dataclass
class PipelineResult:
    prompt_key: str
    branch: BranchLabel
    final_latent: np.ndarray
    trace: ExecutionTrace
    predictions: dict[str, float]
    decisions: dict[str, Decision]
    refinement: Refinement | None = None
    scores: dict[str, list[tuple[int, float]]] = field(default_factory=dict)  # phase -> inspected (step, score)

    def video_decision_steps(self) -> list[int]:
        return [self.decisions[k].at_step for k in ("video", "video_refined") if k in self.decisions]

    def to_dict(self, with_events: bool = True) -> dict:
        return {
            "sample_id": self.prompt_key,
            "branch": self.branch.value,
            "predictions": self.predictions,
            "decisions": {
                k: {"kind": d.kind.value, "at_step": d.at_step, "predicted_score": d.predicted_score}
                for k, d in self.decisions.items()
            },
            "refined_prompt": self.refinement.refined_prompt if self.refinement else None,
            "trace": self.trace.to_dict(with_events),
        }


def _preview(cfg: PipelineConfig, z0_hat):
    return z0_hat if cfg.decoder is None else cfg.decoder(z0_hat)


def _inspected_run(cfg, cond, z_T, det_cfg, trace, phase, finish_on_pass) -> InspectedRun:
    """Denoise with per-step inspection until the detector decides.

    With ``finish_on_pass`` a passing sample keeps denoising (uninspected)
    to the last step and ``z_final`` is returned.
    """
    model = cfg.model
    prefix = "video" if cond.modality == "video" else "image"
    state = DetectorState()
    z = z_T
    decision = None
    z_at = preview = None
    scores = []
    for k in range(1, cfg.T + 1):
        res = model.step(z, k, cond)
        z = res.z_next
        trace.add(f"{prefix}_step", phase, k)
        if decision is None:
            pv = _preview(cfg, res.z0_hat)
            s = cfg.scorer.score(pv, cond.score_key, k)
            trace.add(f"{prefix}_inspect", phase, k)
            scores.append((k, s))
            decision = observe(state, k, s, det_cfg)
            if decision is not None:
                z_at, preview = res.z0_hat, pv
                if not (finish_on_pass and classify(decision.predicted_score, cfg.tau) is Verdict.PASS):
                    return InspectedRun(decision, z_at, None, preview, scores)
    if decision is None:  # pragma: no cover - window_end < T is enforced
        decision = finalize(state, det_cfg)
        z_at = preview = None
    return InspectedRun(decision, z_at, z, preview, scores)


def run_pipeline(prompt_key: str, cfg: PipelineConfig, prompt: str | None = None) -> PipelineResult:
    """Run one sample through inspection and, on predicted failure, escalating fixes.

    A VLM failure propagates; the caller records it (nothing falls back silently).
    """
    prompt = prompt_key if prompt is None else prompt
    trace = ExecutionTrace()
    preds: dict[str, float] = {}
    decisions: dict[str, Decision] = {}
    scores: dict[str, list[tuple[int, float]]] = {}
    model = cfg.model

    # Trial 0: inspected base generation
    vcond = Condition(prompt_key, prompt, "video")
    z_T = model.initial_noise(vcond)
    base = _inspected_run(cfg, vcond, z_T, cfg.video_detector, trace, "base", True)
    decisions["video"] = base.decision
    scores["base"] = base.scores
    s0 = preds["video"] = base.decision.predicted_score
    if classify(s0, cfg.tau) is Verdict.PASS:
        return PipelineResult(prompt_key, BranchLabel.TRIAL0, base.z_final, trace, preds, decisions, scores=scores)

    def inject(cond: Condition, z_img, phase: str):
        return single_frame_injection(z_img, z_T, model, cond, cfg.K,
                                      on_event=lambda kind, k: trace.add(kind, phase, k))

    # Trial 1 gate: single-frame probe
    icond = Condition(prompt_key, prompt, "image")
    probe = _inspected_run(cfg, icond, model.initial_noise(icond), cfg.image_detector, trace, "probe", False)
    decisions["image"] = probe.decision
    scores["probe"] = probe.scores
    s_img = preds["image"] = probe.decision.predicted_score
    if s_img >= s0 + cfg.delta:
        z = inject(vcond, probe.z_at_decision, "inject")
        return PipelineResult(prompt_key, BranchLabel.TRIAL1, z, trace, preds, decisions, scores=scores)

    # Trial 2: prompt refinement and an inspected restart from the same noise
    trace.add("vlm_call", "refine", 0)
    preview_ref = f"{prompt_key}@step{base.decision.at_step}"
    refinement = cfg.vlm.refine_prompt(preview_ref, prompt, min(max(s0, 0.0), 1.0))
    rcond = Condition(prompt_key, refinement.refined_prompt, "video", refined=True,
                      negative_prompt=refinement.negative_prompt)
    again = _inspected_run(cfg, rcond, z_T, cfg.video_detector, trace, "refined", True)
    decisions["video_refined"] = again.decision
    scores["refined"] = again.scores
    preds["video_refined"] = again.decision.predicted_score
    if classify(again.decision.predicted_score, cfg.tau) is Verdict.PASS:
        return PipelineResult(prompt_key, BranchLabel.TRIAL2, again.z_final, trace, preds, decisions, refinement, scores)

    # Trial 2 -> 1: refined single-frame probe, injection, then stop regardless
    ricond = Condition(prompt_key, refinement.refined_prompt, "image", refined=True,
                       negative_prompt=refinement.negative_prompt)
    rprobe = _inspected_run(cfg, ricond, model.initial_noise(ricond), cfg.image_detector, trace, "refined_probe", False)
    decisions["image_refined"] = rprobe.decision
    scores["refined_probe"] = rprobe.scores
    preds["image_refined"] = rprobe.decision.predicted_score
    z = inject(rcond, rprobe.z_at_decision, "refined_inject")
    return PipelineResult(prompt_key, BranchLabel.TRIAL2TO1, z, trace, preds, decisions, refinement, scores)


def expected_video_steps(branch: BranchLabel, video_decision_steps: list[int], T: int = TOTAL_STEPS) -> int:
    """Video denoising steps a branch must have executed, given its video decision steps."""
    d = video_decision_steps
    if branch is BranchLabel.TRIAL0:
        return T
    if branch is BranchLabel.TRIAL1:
        return d[0] + T - 1
    if branch is BranchLabel.TRIAL2:
        return d[0] + T
    if branch is BranchLabel.TRIAL2TO1:
        return d[0] + d[1] + T - 1
    raise ConfigurationError(f"unknown branch {branch!r}")
