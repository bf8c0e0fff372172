import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from vidinspect.detector import (
    DecisionKind, DetectorConfig, DetectorState, Verdict, classify, finalize, observe, run_detector,
)
from vidinspect.errors import ConfigurationError, SequencingError

VIDEO = DetectorConfig.video()


def const(v, start=0, stop=51):
    return [(k, v) for k in range(start, stop)]


def test_constant_high_accepts():
    d = run_detector(const(0.30), VIDEO)
    assert d.kind is DecisionKind.EARLY_ACCEPT
    assert d.at_step == 8 + VIDEO.stable_len - 1
    assert d.predicted_score == 0.30


def test_constant_low_rejects():
    d = run_detector(const(0.10), VIDEO)
    assert d.kind is DecisionKind.EARLY_REJECT
    assert d.at_step == 8 + VIDEO.flat_len - 1
    assert d.predicted_score == 0.10


def test_oscillation_exhausts_budget():
    # 0.16 / 0.26 alternating: best 0.26 is not low, |delta| = 0.1 never stable,
    # no run of decreases, 0.26 < tau + high_margin only at equality without stability
    traj = [(k, 0.21 + (0.05 if k % 2 else -0.05)) for k in range(0, 51)]
    d = run_detector(traj, VIDEO)
    assert d.kind is DecisionKind.BUDGET_EXHAUSTED
    assert d.at_step == 14
    assert d.predicted_score == pytest.approx(0.26)
    assert d.predicted_score == max(s for k, s in traj if k <= 14)


def test_give_up_on_low_decreasing():
    traj = [(k, 0.15 - 0.01 * k) for k in range(1, 20)]
    d = run_detector(traj, VIDEO)
    # decreases within the window: steps 8,9,10 each drop
    assert d.kind is DecisionKind.GIVE_UP
    assert d.at_step == 10
    assert d.predicted_score == pytest.approx(0.14)


def test_stable_stop_near_threshold():
    d = run_detector(const(0.23), VIDEO)
    assert d.kind is DecisionKind.STABLE_STOP
    assert d.at_step == 10


def test_accept_outranks_stable_stop():
    d = run_detector(const(0.26), VIDEO)
    assert d.kind is DecisionKind.EARLY_ACCEPT


def test_image_window():
    img = DetectorConfig.image()
    assert (img.window_start, img.window_end, img.stable_len) == (20, 30, 6)
    d = run_detector(const(0.30), img)
    assert d.kind is DecisionKind.EARLY_ACCEPT and d.at_step == 25


def test_step_past_window_closes_budget_without_recording():
    st_ = DetectorState()
    for k, s in [(8, 0.2), (11, 0.1)]:
        assert observe(st_, k, s, VIDEO) is None
    d = observe(st_, 20, 0.9, VIDEO)
    assert d.kind is DecisionKind.BUDGET_EXHAUSTED and d.at_step == 14
    assert d.predicted_score == 0.2
    assert st_.last_step == 11
    assert observe(st_, 21, 0.5, VIDEO) is None  # no-op once decided


def test_finalize_truncated_log():
    st_ = DetectorState()
    observe(st_, 3, 0.2, VIDEO)
    d = finalize(st_, VIDEO)
    assert d.kind is DecisionKind.BUDGET_EXHAUSTED and d.at_step == 8
    with pytest.raises(SequencingError):
        finalize(DetectorState(), VIDEO)


def test_out_of_order_step():
    st_ = DetectorState()
    observe(st_, 5, 0.2, VIDEO)
    with pytest.raises(SequencingError):
        observe(st_, 5, 0.2, VIDEO)
    with pytest.raises(SequencingError):
        observe(DetectorState(), 15, 0.2, VIDEO)


@pytest.mark.parametrize("kw", [
    dict(window_start=14, window_end=14), dict(flat_eps=0.0), dict(stable_len=1), dict(low_margin=-0.1),
])
def test_config_validation(kw):
    with pytest.raises(ConfigurationError):
        DetectorConfig(**kw)


def test_classify_boundaries():
    assert classify(0.22, 0.22) is Verdict.PASS
    assert classify(0.219, 0.22) is Verdict.FAIL
    for tau in (0.22, 0.26, 0.30):
        assert classify(0.30, tau) is Verdict.PASS


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(0.0, 1.0, allow_nan=False), min_size=1, max_size=50))
def test_invariants_on_arbitrary_trajectories(scores):
    traj = list(enumerate(scores, start=1))
    d = run_detector(traj, VIDEO)
    assert VIDEO.window_start <= d.at_step <= VIDEO.window_end
    seen = [s for k, s in traj if k <= d.at_step]
    assert d.predicted_score == max(seen)
    assert run_detector(traj, VIDEO) == d


@settings(max_examples=100, deadline=None)
@given(st.floats(0.0, 1.0), st.floats(0.0, 1.0), st.floats(0.0, 1.0))
def test_threshold_monotone(s, t1, t2):
    lo, hi = sorted((t1, t2))
    if classify(s, lo) is Verdict.FAIL:
        assert classify(s, hi) is Verdict.FAIL
