"""Toy denoiser and scenario worlds for desk-scale end-to-end runs.

The toy model has a fixed clean target ``z*`` per (prompt, modality,
refined) and a fixed per-run noise pattern ``eta``. Along its own
trajectory its clean prediction is ``z* + sigma * eta``. When the input
latent strays from that trajectory (as after an injection), a fraction
``memory`` of the deviation carries into the prediction, so injected
content fades out over the remaining steps instead of vanishing at once.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .detector import DetectorConfig
from .intervene import (
    DELTA,
    TAU,
    BranchLabel,
    Condition,
    PipelineConfig,
    PipelineResult,
    SchedulerBinding,
    StepResult,
    run_pipeline,
)
from .scorer import CurveParams, StubScorer, stable_seed
from .vlm import StubTransport, VLMClient

DEFAULT_SHAPE = (5, 6, 9, 16)
MEMORY = 0.98


class Scenario(str, enum.Enum):
    PASS = "Pass"
    TRIAL1ABLE = "Trial1able"
    TRIAL2ABLE = "Trial2able"
    UNFIXABLE = "Unfixable"


EXPECTED_BRANCH = {
    Scenario.PASS: BranchLabel.TRIAL0,
    Scenario.TRIAL1ABLE: BranchLabel.TRIAL1,
    Scenario.TRIAL2ABLE: BranchLabel.TRIAL2,
    Scenario.UNFIXABLE: BranchLabel.TRIAL2TO1,
}


@dataclass(frozen=True)
class Target:
    z_star: np.ndarray
    eta: np.ndarray
    eps: np.ndarray


@dataclass
class ToyWorld:
    seed: int
    prompt_key: str
    scenario: Scenario
    shape: tuple[int, int, int, int] = DEFAULT_SHAPE
    curves: dict[str, CurveParams] = field(default_factory=dict)
    memory: float = MEMORY
    _targets: dict = field(default_factory=dict, repr=False)

    def _draw(self, *tag, shape):
        rng = np.random.default_rng(stable_seed("toy", self.seed, self.prompt_key, *tag))
        return rng.standard_normal(shape).astype(np.float32)

    def target(self, cond: Condition) -> Target:
        key = (cond.modality, cond.refined)
        if key not in self._targets:
            F, H, W, C = self.shape
            shape = (F if cond.modality == "video" else 1, H, W, C)
            # refined runs restart from the original noise
            self._targets[key] = Target(
                z_star=self._draw("z*", *key, shape=shape),
                eta=0.5 * self._draw("eta", *key, shape=shape),
                eps=self._draw("eps", cond.modality, shape=shape),
            )
        return self._targets[key]

    def scorer(self) -> StubScorer:
        return StubScorer(seed=self.seed, curves=dict(self.curves))


def toy_denoise_step(z, k: int, cond: Condition, world: ToyWorld, schedule: SchedulerBinding) -> StepResult:
    """One toy model step from level ``k`` to ``k + 1``.

    At a zero noise level the prediction is exactly ``z*``.
    """
    tgt = world.target(cond)
    sigma = schedule.sigma(k)
    z0_hat = tgt.z_star + np.float32(sigma) * tgt.eta
    if sigma > 0.0:
        x_hat = schedule.clean_estimate(z, tgt.eps, k)
        if x_hat is not None:
            sigma_prev = schedule.sigma(k - 1) if k > 1 else 1.0
            drift = x_hat - (tgt.z_star + np.float32(sigma_prev) * tgt.eta)
            z0_hat = z0_hat + np.float32(world.memory) * drift
    z0_hat = z0_hat.astype(np.float32)
    if k > schedule.steps:
        return StepResult(z0_hat, z0_hat)
    return StepResult(schedule.add_noise(z0_hat, tgt.eps, k + 1), z0_hat)


@dataclass
class ToyDenoiser:
    world: ToyWorld
    schedule: SchedulerBinding = field(default_factory=SchedulerBinding)

    def initial_noise(self, cond: Condition) -> np.ndarray:
        return self.world.target(cond).eps.copy()

    def step(self, z, k: int, cond: Condition) -> StepResult:
        return toy_denoise_step(z, k, cond, self.world, self.schedule)


# ---------------------------------------------------------------------------
# scenario construction

def _curve(rng, s_inf) -> CurveParams:
    return CurveParams(
        s_inf=float(s_inf),
        a=float(rng.uniform(0.05, 0.20)),
        r=float(rng.uniform(0.45, 0.75)),
        j=float(rng.uniform(0.0005, 0.002)),
    )


def make_world(scenario, seed: int, prompt_key: str | None = None, shape=DEFAULT_SHAPE,
               tau: float = TAU, delta: float = DELTA) -> ToyWorld:
    """Build a world whose score curves force the scenario's branch.

    Curves are pinned per score key: ``key`` (video), ``key#image``,
    ``key#refined`` and ``key#refined#image``.
    """
    scenario = Scenario(scenario)
    key = prompt_key if prompt_key is not None else f"{scenario.value}-{seed}"
    rng = np.random.default_rng(stable_seed("world", seed, key, scenario.value))

    def high():
        return _curve(rng, rng.uniform(tau + 0.06, tau + 0.12))

    def low():
        return _curve(rng, rng.uniform(tau - 0.12, tau - 0.06))

    video = high() if scenario is Scenario.PASS else low()
    if scenario is Scenario.TRIAL1ABLE:
        image = _curve(rng, video.s_inf + delta + rng.uniform(0.02, 0.06))
    else:
        image = _curve(rng, video.s_inf + rng.uniform(-0.04, delta - 0.03))
    refined_video = high() if scenario is Scenario.TRIAL2ABLE else low()
    refined_image = _curve(rng, rng.uniform(0.10, 0.34))
    curves = {
        key: video,
        f"{key}#image": image,
        f"{key}#refined": refined_video,
        f"{key}#refined#image": refined_image,
    }
    return ToyWorld(seed=seed, prompt_key=key, scenario=scenario, shape=tuple(shape), curves=curves)


def pipeline_config(world: ToyWorld, decoder=None, vlm: VLMClient | None = None,
                    video_detector: DetectorConfig | None = None,
                    image_detector: DetectorConfig | None = None) -> PipelineConfig:
    return PipelineConfig(
        model=ToyDenoiser(world),
        scorer=world.scorer(),
        vlm=vlm or VLMClient(StubTransport(seed=world.seed)),
        video_detector=video_detector or DetectorConfig.video(),
        image_detector=image_detector or DetectorConfig.image(),
        decoder=decoder,
    )


def simulate_sample(sample_id: str, scenario, seed: int, decoder=None, vlm: VLMClient | None = None,
                    shape=DEFAULT_SHAPE) -> PipelineResult:
    world = make_world(scenario, seed, prompt_key=str(sample_id), shape=shape)
    return run_pipeline(str(sample_id), pipeline_config(world, decoder=decoder, vlm=vlm))
