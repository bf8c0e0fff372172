"""Alignment scorers: a seeded geometric stub, CSV replay, and the protocol a real scorer implements."""

from __future__ import annotations

import csv
import hashlib
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol

import numpy as np

from .errors import ConfigurationError, MissingScoreError

LOG_HEADER = ("sample_id", "step", "score")


class Scorer(Protocol):
    def score(self, preview, prompt_key: str, step: int) -> float: ...


def stable_seed(*parts) -> int:
    """64-bit seed from arbitrary printable parts, stable across processes."""
    digest = hashlib.sha256("\x1f".join(str(p) for p in parts).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


@dataclass(frozen=True)
class CurveParams:
    """Geometric convergence ``s_k = s_inf - a * r**k`` plus jitter of amplitude ``j``."""

    s_inf: float
    a: float
    r: float
    j: float = 0.0

    def clean(self, k: int) -> float:
        return self.s_inf - self.a * self.r ** k


# ranges for curves drawn per prompt key; tuned so the default video detector
# decides near step 11 on average
STUB_FAMILY = {
    "s_inf": (0.15, 0.35),
    "a": (0.05, 0.20),
    "r": (0.45, 0.80),
    "j": (0.0005, 0.003),
}


def draw_curve(seed: int, prompt_key: str, family: dict = STUB_FAMILY) -> CurveParams:
    rng = np.random.default_rng(stable_seed("curve", seed, prompt_key))
    vals = {k: float(rng.uniform(*family[k])) for k in ("s_inf", "a", "r", "j")}
    return CurveParams(**vals)


def jitter(seed: int, prompt_key: str, step: int) -> float:
    """Deterministic uniform draw in [-1, 1) for one (seed, key, step)."""
    rng = np.random.default_rng(stable_seed("jitter", seed, prompt_key, step))
    return float(rng.uniform(-1.0, 1.0))


@dataclass
class StubScorer:
    """Deterministic scorer ignoring preview content.

    Curves come from ``curves`` when the key is pinned there, otherwise they
    are drawn from ``family`` using ``seed`` and the key.
    """

    seed: int = 0
    curves: dict[str, CurveParams] = field(default_factory=dict)
    family: dict = field(default_factory=lambda: dict(STUB_FAMILY))

    def curve(self, prompt_key: str) -> CurveParams:
        if prompt_key in self.curves:
            return self.curves[prompt_key]
        return draw_curve(self.seed, prompt_key, self.family)

    def score(self, preview, prompt_key: str, step: int) -> float:
        c = self.curve(prompt_key)
        value = c.clean(step)
        if c.j:
            value += c.j * jitter(self.seed, prompt_key, step)
        return float(value)

    def trajectory(self, prompt_key: str, steps) -> list[tuple[int, float]]:
        return [(k, self.score(None, prompt_key, k)) for k in steps]


class ReplayScorer:
    """Returns logged scores verbatim; a miss is an error, never interpolated."""

    def __init__(self, log: dict[str, dict[int, float]]):
        self.log = log

    @classmethod
    def from_csv(cls, path) -> "ReplayScorer":
        return cls(read_score_log(path))

    def score(self, preview, prompt_key: str, step: int) -> float:
        try:
            return self.log[str(prompt_key)][int(step)]
        except KeyError:
            raise MissingScoreError(f"no logged score for sample {prompt_key!r} at step {step}") from None


@dataclass
class ScorerBinding:
    kind: str = "stub"
    seed: int = 0
    log_path: str | None = None
    external: Scorer | None = None

    def build(self) -> Scorer:
        if self.kind == "stub":
            return StubScorer(seed=self.seed)
        if self.kind == "replay":
            if not self.log_path:
                raise ConfigurationError("replay scorer needs a log path")
            return ReplayScorer.from_csv(self.log_path)
        if self.kind == "external":
            if self.external is None:
                raise ConfigurationError("external scorer binding has no scorer object")
            return self.external
        raise ConfigurationError(f"unknown scorer kind {self.kind!r}")


def score(preview, prompt_key: str, step: int, binding: ScorerBinding) -> float:
    return binding.build().score(preview, prompt_key, step)


# ---------------------------------------------------------------------------
# score-log CSV

class ScoreLogError(ConfigurationError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


def read_score_log(path) -> dict[str, dict[int, float]]:
    """Parse ``sample_id,step,score`` rows. Sample order follows first appearance."""
    out: dict[str, dict[int, float]] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ScoreLogError("empty file") from None
        if tuple(h.strip() for h in header) != LOG_HEADER:
            raise ScoreLogError(f"header must be {','.join(LOG_HEADER)}, got {','.join(header)}", 1)
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 3:
                raise ScoreLogError(f"expected 3 fields, got {len(row)}", line)
            sid = row[0].strip()
            try:
                step = int(row[1])
                value = float(row[2])
            except ValueError:
                raise ScoreLogError(f"cannot parse step/score from {row!r}", line) from None
            if not sid:
                raise ScoreLogError("empty sample_id", line)
            if not math.isfinite(value):
                raise ScoreLogError(f"non-finite score {row[2]!r}", line)
            steps = out.setdefault(sid, {})
            if step in steps:
                raise ScoreLogError(f"duplicate row for sample {sid!r} step {step}", line)
            steps[step] = value
    return out


def write_score_log(log: dict[str, dict[int, float]], path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(LOG_HEADER)
        for sid, steps in log.items():
            for step in sorted(steps):
                w.writerow([sid, step, repr(float(steps[step]))])
