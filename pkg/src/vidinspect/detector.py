"""Rule-based dynamic failure detector over per-step alignment scores."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace

from .errors import ConfigurationError, SequencingError

TAU = 0.22


class DecisionKind(str, enum.Enum):
    EARLY_ACCEPT = "EarlyAccept"
    EARLY_REJECT = "EarlyReject"
    GIVE_UP = "GiveUp"
    STABLE_STOP = "StableStop"
    BUDGET_EXHAUSTED = "BudgetExhausted"


class Verdict(str, enum.Enum):
    PASS = "Pass"
    FAIL = "Fail"


@dataclass(frozen=True)
class DetectorConfig:
    window_start: int = 8
    window_end: int = 14
    tau: float = TAU
    flat_eps: float = 0.005
    flat_len: int = 3
    low_margin: float = 0.04
    high_margin: float = 0.04
    trend_len: int = 3
    stable_eps: float = 0.003
    stable_len: int = 3

    def __post_init__(self):
        if not self.window_start < self.window_end:
            raise ConfigurationError("window_start must precede window_end")
        if min(self.flat_eps, self.stable_eps) <= 0 or min(self.low_margin, self.high_margin) < 0:
            raise ConfigurationError("epsilons must be positive and margins non-negative")
        if min(self.flat_len, self.trend_len, self.stable_len) < 2:
            raise ConfigurationError("run lengths must be at least 2")

    @classmethod
    def video(cls, **overrides) -> "DetectorConfig":
        return cls(**overrides)

    @classmethod
    def image(cls, **overrides) -> "DetectorConfig":
        # later window for single-frame previews and a doubled stability run
        base = cls()
        params = dict(window_start=20, window_end=30, stable_len=2 * base.stable_len)
        params.update(overrides)
        return cls(**params)

    def with_tau(self, tau: float) -> "DetectorConfig":
        return replace(self, tau=tau)


@dataclass(frozen=True)
class Decision:
    kind: DecisionKind
    at_step: int
    predicted_score: float


@dataclass
class DetectorState:
    history: list[tuple[int, float]] = field(default_factory=list)
    best_score: float = float("-inf")
    decided: Decision | None = None
    flat_run: int = 0
    stable_run: int = 0
    down_run: int = 0

    @property
    def last_step(self) -> int | None:
        return self.history[-1][0] if self.history else None


def _update_runs(state: DetectorState, score: float, cfg: DetectorConfig) -> None:
    if not state.history:
        state.flat_run = state.stable_run = state.down_run = 0
        return
    delta = score - state.history[-1][1]
    state.flat_run = state.flat_run + 1 if abs(delta) <= cfg.flat_eps else 0
    state.stable_run = state.stable_run + 1 if abs(delta) <= cfg.stable_eps else 0
    state.down_run = state.down_run + 1 if delta < 0 else 0


def _decide(state, kind, step):
    state.decided = Decision(kind, step, state.best_score)
    return state.decided


def observe(state: DetectorState, step: int, score: float, cfg: DetectorConfig) -> Decision | None:
    """Feed one (step, score) pair; returns a decision the first time a rule fires.

    Steps before ``window_start`` are only recorded. A step past
    ``window_end`` closes the budget at ``window_end`` without being recorded.
    """
    if state.decided is not None:
        return None
    if state.last_step is not None and step <= state.last_step:
        raise SequencingError(f"step {step} does not follow step {state.last_step}")

    if step > cfg.window_end:
        if not state.history:
            raise SequencingError(f"first observation at step {step} is already past the window")
        return _decide(state, DecisionKind.BUDGET_EXHAUSTED, cfg.window_end)

    in_window = step >= cfg.window_start
    if in_window:
        _update_runs(state, score, cfg)
    state.history.append((step, float(score)))
    state.best_score = max(state.best_score, float(score))
    if not in_window:
        return None

    low = state.best_score < cfg.tau - cfg.low_margin
    if score >= cfg.tau + cfg.high_margin and state.stable_run >= cfg.stable_len:
        return _decide(state, DecisionKind.EARLY_ACCEPT, step)
    if low and state.flat_run >= cfg.flat_len:
        return _decide(state, DecisionKind.EARLY_REJECT, step)
    if low and state.down_run >= cfg.trend_len:
        return _decide(state, DecisionKind.GIVE_UP, step)
    if state.stable_run >= cfg.stable_len:
        return _decide(state, DecisionKind.STABLE_STOP, step)
    if step == cfg.window_end:
        return _decide(state, DecisionKind.BUDGET_EXHAUSTED, step)
    return None


def finalize(state: DetectorState, cfg: DetectorConfig) -> Decision:
    """Close a trajectory that ended without a decision (e.g. a truncated log)."""
    if state.decided is not None:
        return state.decided
    if not state.history:
        raise SequencingError("cannot finalize an empty trajectory")
    at = min(max(state.last_step, cfg.window_start), cfg.window_end)
    return _decide(state, DecisionKind.BUDGET_EXHAUSTED, at)


def run_detector(trajectory, cfg: DetectorConfig) -> Decision:
    """Run a full ``[(step, score), ...]`` trajectory and return the decision."""
    state = DetectorState()
    for step, s in trajectory:
        d = observe(state, step, s, cfg)
        if d is not None:
            return d
    return finalize(state, cfg)


def classify(predicted_score: float, tau: float = TAU) -> Verdict:
    return Verdict.PASS if predicted_score >= tau else Verdict.FAIL
