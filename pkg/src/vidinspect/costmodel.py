"""Time-overhead accounting for inspected generation with selective intervention."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields

from .errors import ConfigurationError
from .intervene import BranchLabel, ExecutionTrace

BRANCHES = (BranchLabel.TRIAL0, BranchLabel.TRIAL1, BranchLabel.TRIAL2, BranchLabel.TRIAL2TO1)


@dataclass(frozen=True)
class PrimitiveTimes:
    """Seconds per occurrence of each primitive operation."""

    video_step_s: float
    video_inspect_s: float
    image_step_s: float
    image_inspect_s: float
    vlm_call_s: float

    def __post_init__(self):
        for f in fields(self):
            if not getattr(self, f.name) > 0:
                raise ConfigurationError(f"{f.name} must be positive")


@dataclass(frozen=True)
class BranchStats:
    video_steps: float = 0.0
    video_inspections: float = 0.0
    image_steps: float = 0.0
    image_inspections: float = 0.0
    vlm_calls: float = 0.0

    def __post_init__(self):
        for f in fields(self):
            if getattr(self, f.name) < 0:
                raise ConfigurationError(f"{f.name} must be non-negative")

    @classmethod
    def from_trace(cls, trace: ExecutionTrace) -> "BranchStats":
        return cls(**trace.counts())


def derive_branch_stats(branch, d_v: float, d_img: float, T: int = 50) -> BranchStats:
    """Expected primitive counts for a branch from mean detection steps.

    Injection re-runs T - 1 video steps; Trial 2 -> 1 repeats both the video
    inspection and the single-frame probe.
    """
    try:
        branch = BranchLabel(branch)
    except ValueError:
        raise ConfigurationError(f"unknown branch {branch!r}") from None
    if not 0 < d_v < T:
        raise ConfigurationError(f"video decision step {d_v} outside (0, {T})")
    if not d_img > 0:
        raise ConfigurationError(f"image decision step {d_img} must be positive")
    if branch is BranchLabel.TRIAL0:
        return BranchStats(T, d_v, 0, 0, 0)
    if branch is BranchLabel.TRIAL1:
        return BranchStats(d_v + T - 1, d_v, d_img, d_img, 0)
    if branch is BranchLabel.TRIAL2:
        return BranchStats(d_v + T, d_v, d_img, d_img, 1)
    return BranchStats(2 * d_v + T - 1, 2 * d_v, 2 * d_img, 2 * d_img, 1)


def branch_time(stats: BranchStats, times: PrimitiveTimes) -> float:
    return (
        stats.video_steps * times.video_step_s
        + stats.video_inspections * times.video_inspect_s
        + stats.image_steps * times.image_step_s
        + stats.image_inspections * times.image_inspect_s
        + stats.vlm_calls * times.vlm_call_s
    )


def price_trace(trace: ExecutionTrace, times: PrimitiveTimes) -> float:
    return branch_time(BranchStats.from_trace(trace), times)


def base_time(times: PrimitiveTimes, T: int = 50) -> float:
    """Uninspected T-step generation."""
    return T * times.video_step_s


def per_sample_overhead(branch_seconds: float, base_seconds: float) -> float:
    if base_seconds <= 0:
        raise ConfigurationError("base time must be positive")
    return 100.0 * (branch_seconds - base_seconds) / base_seconds


def overall_overhead(branches, total_population: int, base_seconds: float) -> float:
    """Population-weighted extra time as a percent of the total base time.

    ``branches`` is an iterable of ``(population, branch_seconds)``.
    """
    branches = list(branches)
    if sum(p for p, _ in branches) != total_population:
        raise ConfigurationError(
            f"branch populations sum to {sum(p for p, _ in branches)}, expected {total_population}")
    if total_population <= 0:
        raise ConfigurationError("total population must be positive")
    if base_seconds <= 0:
        raise ConfigurationError("base time must be positive")
    extra = sum(p * (t - base_seconds) for p, t in branches)
    return 100.0 * extra / (total_population * base_seconds)


def regeneration_per_sample(times: PrimitiveTimes, base_seconds: float,
                            extra_inspections: float = 0.0) -> float:
    """Per-sample overhead of regenerating a failed sample: one VLM call plus a full rerun."""
    extra = base_seconds + times.vlm_call_s + extra_inspections * times.video_inspect_s
    return per_sample_overhead(base_seconds + extra, base_seconds)


def regeneration_overhead(times: PrimitiveTimes, base_seconds: float, failure_fraction: float,
                          extra_inspections: float = 0.0) -> float:
    if not 0.0 <= failure_fraction <= 1.0:
        raise ConfigurationError(f"failure fraction {failure_fraction} outside [0, 1]")
    return failure_fraction * regeneration_per_sample(times, base_seconds, extra_inspections)


# ---------------------------------------------------------------------------
# presets and reports

@dataclass
class CostConfig:
    name: str
    times: PrimitiveTimes
    populations: dict[str, int]
    d_v: float
    d_img: float
    T: int = 50
    # explicit per-branch counts override the derivation
    stats: dict[str, BranchStats] = field(default_factory=dict)
    regenerated: int | None = None
    regeneration_extra_inspections: float = 0.0

    @property
    def total(self) -> int:
        return sum(self.populations.values())

    def branch_stats(self, branch: BranchLabel) -> BranchStats:
        if branch.value in self.stats:
            return self.stats[branch.value]
        return derive_branch_stats(branch, self.d_v, self.d_img, self.T)

    @classmethod
    def from_dict(cls, data: dict) -> "CostConfig":
        try:
            times = PrimitiveTimes(**data["times"])
            det = data.get("detection_steps", {})
            pops = {BranchLabel(k).value: int(v) for k, v in data["populations"].items()}
            stats = {BranchLabel(k).value: BranchStats(**v) for k, v in data.get("stats", {}).items()}
            cfg = cls(
                name=data.get("name", "custom"),
                times=times,
                populations=pops,
                d_v=float(det.get("video", data.get("d_v", 0))),
                d_img=float(det.get("image", data.get("d_img", 0))),
                T=int(data.get("base", {}).get("steps", data.get("T", 50))),
                stats=stats,
                regenerated=data.get("regenerated"),
                regeneration_extra_inspections=float(data.get("regeneration_extra_inspections", 0.0)),
            )
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, ConfigurationError):
                raise
            raise ConfigurationError(f"bad cost config: {exc}") from None
        if "base" in data and "total_population" in data["base"]:
            if int(data["base"]["total_population"]) != cfg.total:
                raise ConfigurationError(
                    f"populations sum to {cfg.total}, config says {data['base']['total_population']}")
        return cfg

    def to_dict(self) -> dict:
        out = {
            "name": self.name,
            "times": asdict(self.times),
            "populations": dict(self.populations),
            "detection_steps": {"video": self.d_v, "image": self.d_img},
            "base": {"steps": self.T, "total_population": self.total},
        }
        if self.stats:
            out["stats"] = {k: asdict(v) for k, v in self.stats.items()}
        if self.regenerated is not None:
            out["regenerated"] = self.regenerated
        return out


_SHARED = dict(video_inspect_s=0.0392, image_inspect_s=0.0218, vlm_call_s=8.541)

PRESETS = {
    "cogvideox-5b": CostConfig(
        name="cogvideox-5b",
        times=PrimitiveTimes(video_step_s=4.343, image_step_s=0.405, **_SHARED),
        populations={"Trial0": 562, "Trial1": 91, "Trial2": 125, "Trial2to1": 168},
        d_v=11.05,
        d_img=24.0,
        regenerated=398,
    ),
    "wan2.1-1.3b": CostConfig(
        name="wan2.1-1.3b",
        times=PrimitiveTimes(video_step_s=1.460, image_step_s=0.103, **_SHARED),
        populations={"Trial0": 509, "Trial1": 106, "Trial2": 151, "Trial2to1": 180},
        d_v=10.33,
        d_img=24.0,
        regenerated=434,
    ),
}

# video-step column as printed for the Wan block; it repeats the CogVideoX
# values and does not match the Wan detection step
WAN_PRINTED_VIDEO_STEPS = {"Trial0": 50.0, "Trial1": 60.05, "Trial2": 61.05, "Trial2to1": 71.10}


@dataclass
class BranchRow:
    branch: str
    population: int
    stats: BranchStats
    average_time_s: float
    additional_time_s: float
    per_sample_overhead_pct: float
    overall_contribution_pct: float


@dataclass
class OverheadReport:
    name: str
    base_time_s: float
    total_population: int
    rows: list[BranchRow]
    overall_overhead_pct: float
    regeneration_per_sample_pct: float | None = None
    regeneration_overall_pct: float | None = None

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "base_time_s": self.base_time_s,
            "total_population": self.total_population,
            "overall_overhead_pct": self.overall_overhead_pct,
            "regeneration_per_sample_pct": self.regeneration_per_sample_pct,
            "regeneration_overall_pct": self.regeneration_overall_pct,
            "branches": [
                {**{k: v for k, v in asdict(r).items() if k != "stats"}, "stats": asdict(r.stats)}
                for r in self.rows
            ],
        }


def overhead_report(cfg: CostConfig) -> OverheadReport:
    base = base_time(cfg.times, cfg.T)
    total = cfg.total
    if total <= 0:
        raise ConfigurationError("no samples in populations")
    unknown = set(cfg.populations) - {b.value for b in BRANCHES}
    if unknown:
        raise ConfigurationError(f"unknown branches {sorted(unknown)}")
    rows = []
    for b in BRANCHES:
        pop = cfg.populations.get(b.value, 0)
        stats = cfg.branch_stats(b)
        t = branch_time(stats, cfg.times)
        rows.append(BranchRow(
            branch=b.value,
            population=pop,
            stats=stats,
            average_time_s=t,
            additional_time_s=t - base,
            per_sample_overhead_pct=per_sample_overhead(t, base),
            overall_contribution_pct=100.0 * pop * (t - base) / (total * base),
        ))
    overall = overall_overhead([(r.population, r.average_time_s) for r in rows], total, base)
    regen_ps = regen_all = None
    if cfg.regenerated is not None:
        regen_ps = regeneration_per_sample(cfg.times, base, cfg.regeneration_extra_inspections)
        regen_all = regeneration_overhead(cfg.times, base, cfg.regenerated / total,
                                          cfg.regeneration_extra_inspections)
    return OverheadReport(cfg.name, base, total, rows, overall, regen_ps, regen_all)


_COLUMNS = ("branch", "samples", "video_steps", "video_inspections", "image_steps", "image_inspections",
            "vlm_calls", "average_time_s", "additional_time_s", "per_sample_overhead_pct",
            "overall_overhead_pct")


def _row_cells(r: BranchRow, total: int) -> list[str]:
    s = r.stats
    return [
        r.branch, f"{r.population}/{total}",
        f"{s.video_steps:.2f}", f"{s.video_inspections:.2f}", f"{s.image_steps:.2f}",
        f"{s.image_inspections:.2f}", f"{s.vlm_calls:g}",
        f"{r.average_time_s:.2f}", f"{r.additional_time_s:.2f}",
        f"{r.per_sample_overhead_pct:.2f}", f"{r.overall_contribution_pct:.2f}",
    ]


def render_markdown(rep: OverheadReport) -> str:
    lines = [f"## {rep.name}: original generation time {rep.base_time_s:.2f} s", ""]
    lines.append("| " + " | ".join(_COLUMNS) + " |")
    lines.append("|" + "---|" * len(_COLUMNS))
    for r in rep.rows:
        lines.append("| " + " | ".join(_row_cells(r, rep.total_population)) + " |")
    lines.append("")
    lines.append(f"Total overall time overhead: {rep.overall_overhead_pct:.2f}%")
    if rep.regeneration_overall_pct is not None:
        lines.append(f"Regeneration: per-sample {rep.regeneration_per_sample_pct:.2f}%, "
                     f"overall {rep.regeneration_overall_pct:.2f}%")
    return "\n".join(lines) + "\n"


def render_csv(rep: OverheadReport) -> str:
    import csv
    import io

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(_COLUMNS)
    for r in rep.rows:
        w.writerow(_row_cells(r, rep.total_population))
    w.writerow(["overall", rep.total_population, "", "", "", "", "", "", "", "", f"{rep.overall_overhead_pct:.2f}"])
    return buf.getvalue()
