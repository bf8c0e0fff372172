"""Command-line front end: ``vidinspect {simulate,detect,overhead,l2r-check}``.

Config files are JSON; explicit flags override values from ``--config``.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from collections import Counter, defaultdict
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import costmodel, l2r
from .detector import DetectorConfig, classify, run_detector
from .errors import ConfigurationError, VidInspectError
from .intervene import BranchLabel, expected_video_steps
from .scorer import read_score_log, write_score_log
from .sim import EXPECTED_BRANCH, Scenario, simulate_sample
from .vlm import HttpTransport, StubTransport, VLMClient

log = logging.getLogger("vidinspect")

FORMATS = ("json", "markdown", "csv")


class CLIError(Exception):
    pass


def _load_json(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise CLIError(f"cannot read {path}: {exc.strerror or exc}") from None
    except json.JSONDecodeError as exc:
        raise CLIError(f"{path}: invalid JSON ({exc})") from None


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


# ---------------------------------------------------------------------------
# overhead

def resolve_cost_config(preset: str | None, config_path: str | None) -> costmodel.CostConfig:
    if config_path:
        data = _load_json(config_path)
        if preset and preset != "custom":
            base = costmodel.PRESETS[preset].to_dict()
            base.update(data)
            data = base
        return costmodel.CostConfig.from_dict(data)
    name = preset or "cogvideox-5b"
    if name not in costmodel.PRESETS:
        raise CLIError(f"unknown preset {name!r}; choose from {', '.join(costmodel.PRESETS)}")
    return costmodel.PRESETS[name]


def cmd_overhead(args) -> int:
    cfg = resolve_cost_config(args.preset, args.config)
    rep = costmodel.overhead_report(cfg)
    fmt = args.format or "markdown"
    if fmt == "markdown":
        text = costmodel.render_markdown(rep)
    elif fmt == "csv":
        text = costmodel.render_csv(rep)
    else:
        text = _dump(rep.to_dict())
    _emit(text, args.out)
    return 0


# ---------------------------------------------------------------------------
# detect

def detector_config(args) -> DetectorConfig:
    overrides = _load_json(args.config) if args.config else {}
    if not isinstance(overrides, dict):
        raise CLIError("detector config must be a JSON object")
    if args.tau is not None:
        overrides["tau"] = args.tau
    try:
        if args.modality == "image":
            return DetectorConfig.image(**overrides)
        return DetectorConfig.video(**overrides)
    except TypeError as exc:
        raise CLIError(f"bad detector config: {exc}") from None


def detect_records(scores: dict[str, dict[int, float]], cfg: DetectorConfig) -> list[dict]:
    records = []
    for sid, steps in scores.items():
        d = run_detector(sorted(steps.items()), cfg)
        records.append({
            "sample_id": sid,
            "decision": d.kind.value,
            "at_step": d.at_step,
            "predicted_score": d.predicted_score,
            "classification": classify(d.predicted_score, cfg.tau).value,
        })
    return records


def cmd_detect(args) -> int:
    cfg = detector_config(args)
    scores = read_score_log(args.scorelog)
    _emit(_dump(detect_records(scores, cfg)), args.out)
    return 0


# ---------------------------------------------------------------------------
# simulate

def read_manifest(path, default_seed: int = 0) -> list[dict]:
    data = _load_json(path)
    if not isinstance(data, list):
        raise CLIError(f"{path}: manifest must be a JSON list")
    entries = []
    seen = set()
    for i, item in enumerate(data):
        if not isinstance(item, dict) or "sample_id" not in item or "scenario" not in item:
            raise CLIError(f"{path}: entry {i} needs sample_id and scenario")
        sid = str(item["sample_id"])
        if sid in seen:
            raise CLIError(f"{path}: duplicate sample_id {sid!r}")
        seen.add(sid)
        try:
            scenario = Scenario(item["scenario"])
        except ValueError:
            raise CLIError(f"{path}: entry {i} has unknown scenario {item['scenario']!r}") from None
        entries.append({"sample_id": sid, "scenario": scenario, "seed": int(item.get("seed", default_seed))})
    return entries


def run_simulation(entries, times: costmodel.PrimitiveTimes, decoder=None, vlm_factory=None, T: int = 50):
    """Run every manifest entry; returns (records, summary, score log)."""
    base = costmodel.base_time(times, T)
    records = []
    scores: dict[str, dict[int, float]] = {}
    branch_times: dict[str, list[float]] = defaultdict(list)
    counts = Counter({b.value: 0 for b in costmodel.BRANCHES})
    errors = 0
    misrouted = 0
    conservation_failures = 0
    for e in entries:
        vlm = vlm_factory(e) if vlm_factory else None
        try:
            res = simulate_sample(e["sample_id"], e["scenario"], e["seed"], decoder=decoder, vlm=vlm)
        except VidInspectError as exc:
            errors += 1
            records.append({"sample_id": e["sample_id"], "scenario": e["scenario"].value,
                            "error": f"{type(exc).__name__}: {exc}"})
            continue
        seconds = costmodel.price_trace(res.trace, times)
        counts[res.branch.value] += 1
        branch_times[res.branch.value].append(seconds)
        expected = EXPECTED_BRANCH[e["scenario"]]
        misrouted += res.branch is not expected
        conserved = res.trace.video_steps == expected_video_steps(res.branch, res.video_decision_steps(), T)
        conservation_failures += not conserved
        rec = res.to_dict()
        rec.update({
            "scenario": e["scenario"].value,
            "seed": e["seed"],
            "expected_branch": expected.value,
            "time_s": seconds,
            "per_sample_overhead_pct": costmodel.per_sample_overhead(seconds, base),
            "trace_conserved": conserved,
        })
        records.append(rec)
        # inspected scores of the base video run, replayable through `detect`
        scores[e["sample_id"]] = dict(res.scores["base"])
    n = sum(counts.values())
    priced = [r["time_s"] for r in records if "time_s" in r]
    if n:
        trace_path = 100.0 * sum(t - base for t in priced) / (n * base)
        pops = [(len(v), sum(v) / len(v)) for v in branch_times.values() if v]
        formula_path = costmodel.overall_overhead(pops, n, base)
    else:
        trace_path = formula_path = 0.0
    summary = {
        "samples": len(entries),
        "completed": n,
        "errors": errors,
        "branches": dict(counts),
        "misrouted": misrouted,
        "trace_conservation_failures": conservation_failures,
        "base_time_s": base,
        "overall_overhead_pct": trace_path,
        "overall_overhead_pct_formula": formula_path,
        "mean_branch_time_s": {k: sum(v) / len(v) for k, v in branch_times.items() if v},
    }
    return records, summary, scores


def cmd_simulate(args) -> int:
    cfg_data = _load_json(args.config) if args.config else {}
    seed = args.seed if args.seed is not None else int(cfg_data.get("seed", 0))
    preset = args.preset or cfg_data.get("preset", "cogvideox-5b")
    cost_cfg = resolve_cost_config(preset, None)
    entries = read_manifest(args.manifest, seed)
    decoder = None
    if args.l2r or cfg_data.get("l2r"):
        weights = l2r.init_weights(seed)
        decoder = lambda z: l2r.l2r_forward(z, weights)  # noqa: E731
    vlm_url = args.vlm_url or cfg_data.get("vlm_url")
    if vlm_url:
        vlm_factory = lambda e: VLMClient(HttpTransport(vlm_url))  # noqa: E731
    else:
        vlm_factory = lambda e: VLMClient(StubTransport(seed=e["seed"]))  # noqa: E731
    records, summary, scores = run_simulation(entries, cost_cfg.times, decoder, vlm_factory, cost_cfg.T)
    summary["preset"] = cost_cfg.name
    out = Path(args.out or "sim_out")
    out.mkdir(parents=True, exist_ok=True)
    (out / "traces.json").write_text(_dump(records), encoding="utf-8")
    (out / "summary.json").write_text(_dump(summary), encoding="utf-8")
    write_score_log(scores, out / "scores.csv")
    sys.stdout.write(_dump(summary))
    return 0


# ---------------------------------------------------------------------------
# l2r-check

def _parse_shape(text: str) -> tuple[int, ...]:
    try:
        dims = tuple(int(p) for p in text.lower().replace("×", "x").split("x"))
    except ValueError:
        raise CLIError(f"bad shape {text!r}; expected FxHxW") from None
    if len(dims) != 3:
        raise CLIError(f"bad shape {text!r}; expected FxHxW")
    return dims


def l2r_audit(weights: l2r.L2RWeights, probe=(13, 60, 90), seed: int = 0, trials: int = 3) -> dict:
    """Param, shape and causality audits; ``ok`` is False if any fails."""
    checks = []

    def add(name, ok, detail):
        checks.append({"check": name, "ok": bool(ok), "detail": detail})

    n = l2r.param_count(weights)
    lo, hi = l2r.PARAM_BUDGET
    add("param_count", lo <= n <= hi, f"{n} parameters (budget {lo}..{hi})")
    problems = weights.shape_problems()
    add("layer_shapes", not problems, "; ".join(problems) or "all layers consistent")
    if problems:
        return {"ok": False, "param_count": n, "checks": checks}

    C = weights.channels
    shape = l2r.output_shape((*probe, C), weights)
    add("probe_shape", shape == (probe[0], 8 * probe[1], 8 * probe[2], 3),
        f"latent {probe[0]}x{probe[1]}x{probe[2]}x{C} -> {'x'.join(map(str, shape))}")

    rng = np.random.default_rng(seed)
    shape_ok, causal_ok = True, True
    details = []
    for _ in range(trials):
        F, H, W = int(rng.integers(2, 5)), int(rng.integers(3, 6)), int(rng.integers(3, 6))
        z = rng.standard_normal((F, H, W, C)).astype(np.float32)
        y = l2r.l2r_forward(z, weights)
        shape_ok &= y.shape == (F, 8 * H, 8 * W, 3)
        f = int(rng.integers(1, F))
        z2 = z.copy()
        z2[f:] += rng.standard_normal(z2[f:].shape).astype(np.float32)
        y2 = l2r.l2r_forward(z2, weights)
        causal_ok &= np.array_equal(y[:f], y2[:f])
        details.append(f"{F}x{H}x{W} perturb>={f}")
    add("shape_law", shape_ok, ", ".join(details))
    add("causality", causal_ok, "prefix frames bit-identical" if causal_ok else "prefix changed")
    return {"ok": all(c["ok"] for c in checks), "param_count": n, "output_shape": list(shape), "checks": checks}


def cmd_l2r_check(args) -> int:
    if args.weights:
        try:
            weights = l2r.load_weights(args.weights)
        except OSError as exc:
            raise CLIError(f"cannot read {args.weights}: {exc.strerror or exc}") from None
    else:
        weights = l2r.init_weights(args.seed or 0)
    if args.save_weights:
        l2r.save_weights(weights, args.save_weights)
    report = l2r_audit(weights, _parse_shape(args.probe), seed=args.seed or 0)
    if (args.format or "markdown") == "json":
        text = _dump(report)
    else:
        lines = [f"{'PASS' if c['ok'] else 'FAIL'}  {c['check']}: {c['detail']}" for c in report["checks"]]
        lines.append("OK" if report["ok"] else "AUDIT FAILED")
        text = "\n".join(lines) + "\n"
    _emit(text, args.out)
    return 0 if report["ok"] else 1


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="vidinspect", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, formats=FORMATS):
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--out", help="output file (directory for simulate)")
        p.add_argument("--format", choices=formats)
        p.add_argument("--seed", type=int)
        p.add_argument("--preset", choices=(*costmodel.PRESETS, "custom"))

    p = sub.add_parser("simulate", help="run scenario manifest through the toy pipeline")
    p.add_argument("manifest")
    p.add_argument("--l2r", action="store_true", help="decode previews with seeded L2R weights")
    p.add_argument("--vlm-url", help="POST refinement requests to this endpoint instead of the stub")
    common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("detect", help="run the failure detector over a score-log CSV")
    p.add_argument("scorelog")
    p.add_argument("--modality", choices=("video", "image"), default="video")
    p.add_argument("--tau", type=float)
    common(p)
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("overhead", help="time-overhead report")
    common(p)
    p.set_defaults(func=cmd_overhead)

    p = sub.add_parser("l2r-check", help="audit latent-to-RGB converter weights")
    src = p.add_mutually_exclusive_group()
    src.add_argument("--weights", help="weight container file")
    src.add_argument("--seeded", action="store_true", help="use seeded random weights (default)")
    p.add_argument("--probe", default="13x60x90", help="latent FxHxW for the shape probe")
    p.add_argument("--save-weights", help="write the audited weights to this file")
    common(p)
    p.set_defaults(func=cmd_l2r_check)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (CLIError, VidInspectError) as exc:
        print(f"vidinspect {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
