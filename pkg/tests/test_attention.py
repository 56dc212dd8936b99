"""Fixation detector against a declarative maximal-window oracle.

The oracle scans every right end j and finds the smallest left end l at or
after the restart point such that the window [l..j] stays under the
dispersion threshold. A fixation is reported when the window breaks (or the
stream ends) with enough duration; reported windows never share samples.
"""

import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_recording
from fieldlens.attention import (
    DEFAULT_MAX_DISPERSION_DEG,
    DEFAULT_MIN_CONFIDENCE,
    DEFAULT_MIN_DURATION_MS,
    EmptyWindow,
    FixationDetector,
    GazeOverlay,
    OutOfOrderSample,
    detect_fixations,
    dispersion_deg,
    overlay_for_frames,
)
from fieldlens.session import CameraGeometry, Frame, GazeSample
from oracles import naive_fixation_oracle, random_gaze_stream, rmq_fixation_oracle

GEOM = CameraGeometry()


def assert_same_events(got, want):
    assert len(got) == len(want), (got, want)
    for g, w in zip(got, want):
        assert (g.start_ms, g.end_ms) == (w.start_ms, w.end_ms)
        assert g.centroid == pytest.approx(w.centroid)
        assert g.dispersion_deg == pytest.approx(w.dispersion_deg)


# -- dispersion ----------------------------------------------------------


def test_dispersion_of_identical_points_is_zero():
    samples = [GazeSample(t, 0.5, 0.5, 1.0) for t in range(0, 500, 100)]
    assert dispersion_deg(samples, GEOM) == 0.0


def test_dispersion_frozen_value_small_spread():
    samples = [GazeSample(0, 0.50, 0.50, 1.0), GazeSample(33, 0.52, 0.51, 1.0)]
    # 0.02 * 139 + 0.01 * 83
    assert dispersion_deg(samples, GEOM) == pytest.approx(3.61)


def test_dispersion_frozen_value_horizontal_only():
    samples = [GazeSample(0, 0.50, 0.50, 1.0), GazeSample(33, 0.55, 0.50, 1.0)]
    # 0.05 * 139
    assert dispersion_deg(samples, GEOM) == pytest.approx(6.95)


def test_dispersion_empty_window_raises():
    with pytest.raises(EmptyWindow):
        dispersion_deg([], GEOM)


def test_dispersion_uses_extremes_not_endpoints():
    samples = [
        GazeSample(0, 0.5, 0.5, 1.0),
        GazeSample(10, 0.9, 0.5, 1.0),
        GazeSample(20, 0.5, 0.5, 1.0),
    ]
    assert dispersion_deg(samples, GEOM) == pytest.approx(0.4 * 139.0)


# -- detector examples ---------------------------------------------------


def test_stationary_stream_emits_single_full_length_fixation():
    samples = [GazeSample(round(i * 1200 / 149), 0.5, 0.5, 1.0) for i in range(150)]
    events = detect_fixations(samples, GEOM)
    assert len(events) == 1
    assert events[0].start_ms == 0
    assert events[0].end_ms == 1200
    assert events[0].duration_ms == 1200
    assert events[0].centroid == pytest.approx((0.5, 0.5))
    assert events[0].dispersion_deg == 0.0


def test_alternating_corners_never_fixate():
    samples = [
        GazeSample(50 * i, 0.1 if i % 2 == 0 else 0.9, 0.1 if i % 2 == 0 else 0.9, 1.0)
        for i in range(80)
    ]
    assert detect_fixations(samples, GEOM) == []


def test_low_confidence_samples_do_not_break_a_window():
    samples = []
    for i in range(40):
        samples.append(GazeSample(40 * i, 0.5, 0.5, 1.0))
        if i % 7 == 3:
            samples.append(GazeSample(40 * i + 10, 0.95, 0.05, 0.2))
    events = detect_fixations(samples, GEOM)
    assert len(events) == 1
    assert events[0].dispersion_deg == 0.0


def test_dispersion_exactly_at_threshold_stays_in_window():
    # Exact float arithmetic: spread 0.25 * hfov 100 = 25.0.
    geom = CameraGeometry(100.0, 100.0)
    samples = [
        GazeSample(0, 0.25, 0.5, 1.0),
        GazeSample(600, 0.5, 0.5, 1.0),
        GazeSample(1200, 0.25, 0.5, 1.0),
    ]
    events = detect_fixations(samples, geom, max_dispersion_deg=25.0, min_duration_ms=1000)
    assert len(events) == 1
    assert events[0].duration_ms == 1200


def test_duration_exactly_at_minimum_qualifies():
    samples = [
        GazeSample(0, 0.5, 0.5, 1.0),
        GazeSample(1000, 0.5, 0.5, 1.0),
        GazeSample(1001, 0.05, 0.95, 1.0),  # break
    ]
    events = detect_fixations(samples, GEOM)
    assert len(events) == 1
    assert (events[0].start_ms, events[0].end_ms) == (0, 1000)


def test_duration_below_minimum_is_dropped():
    samples = [
        GazeSample(0, 0.5, 0.5, 1.0),
        GazeSample(999, 0.5, 0.5, 1.0),
        GazeSample(1100, 0.05, 0.95, 1.0),
    ]
    assert detect_fixations(samples, GEOM) == []


def test_two_dwells_with_saccade_between():
    samples = (
        [GazeSample(40 * i, 0.3, 0.3, 1.0) for i in range(30)]  # 0..1160
        + [GazeSample(1200, 0.9, 0.9, 1.0)]
        + [GazeSample(1240 + 40 * i, 0.7, 0.2, 1.0) for i in range(30)]  # 1240..2400
    )
    events = detect_fixations(samples, GEOM)
    assert [(e.start_ms, e.end_ms) for e in events] == [(0, 1160), (1240, 2400)]
    assert events[0].centroid == pytest.approx((0.3, 0.3))
    assert events[1].centroid == pytest.approx((0.7, 0.2))


def test_break_resets_window_to_breaking_sample():
    # Long dwell at A, then a dwell at B. The first B sample both breaks the
    # A window and starts the B window.
    samples = [GazeSample(40 * i, 0.2, 0.2, 1.0) for i in range(30)] + [
        GazeSample(1200 + 40 * i, 0.8, 0.8, 1.0) for i in range(30)
    ]
    events = detect_fixations(samples, GEOM)
    assert [(e.start_ms, e.end_ms) for e in events] == [(0, 1160), (1200, 2360)]


def test_short_window_slides_instead_of_emitting():
    # Drift: each step fits with its neighbor but not with samples further
    # back, so the window keeps sliding and nothing ever lasts long enough.
    samples = [GazeSample(100 * i, 0.02 * i, 0.5, 1.0) for i in range(50)]
    assert detect_fixations(samples, GEOM) == []


def test_finish_emits_open_qualifying_window():
    det = FixationDetector(GEOM)
    for i in range(40):
        assert det.push_gaze(GazeSample(40 * i, 0.5, 0.5, 1.0)) is None
    event = det.finish()
    assert event is not None
    assert (event.start_ms, event.end_ms) == (0, 1560)
    # finish() resets: the detector is reusable afterwards.
    assert det.finish() is None
    assert det.push_gaze(GazeSample(0, 0.5, 0.5, 1.0)) is None


def test_finish_discards_short_window():
    det = FixationDetector(GEOM)
    for i in range(5):
        det.push_gaze(GazeSample(40 * i, 0.5, 0.5, 1.0))
    assert det.finish() is None


def test_out_of_order_sample_raises():
    det = FixationDetector(GEOM)
    det.push_gaze(GazeSample(100, 0.5, 0.5, 1.0))
    with pytest.raises(OutOfOrderSample):
        det.push_gaze(GazeSample(50, 0.5, 0.5, 1.0))


def test_equal_timestamps_are_allowed():
    det = FixationDetector(GEOM)
    det.push_gaze(GazeSample(100, 0.5, 0.5, 1.0))
    assert det.push_gaze(GazeSample(100, 0.5, 0.5, 1.0)) is None


def test_low_confidence_out_of_order_sample_is_ignored_before_order_check():
    det = FixationDetector(GEOM)
    det.push_gaze(GazeSample(100, 0.5, 0.5, 1.0))
    assert det.push_gaze(GazeSample(10, 0.9, 0.9, 0.1)) is None
    det.push_gaze(GazeSample(140, 0.5, 0.5, 1.0))


# -- oracle comparison ---------------------------------------------------


def test_detector_matches_oracle_on_random_streams():
    rng = random.Random(20240518)
    for _ in range(20):
        samples = random_gaze_stream(rng, 250)
        got = detect_fixations(samples, GEOM)
        want = naive_fixation_oracle(
            samples,
            GEOM,
            DEFAULT_MAX_DISPERSION_DEG,
            DEFAULT_MIN_DURATION_MS,
            DEFAULT_MIN_CONFIDENCE,
        )
        assert_same_events(got, want)


def test_detector_matches_fast_oracle_on_long_streams():
    rng = random.Random(5150)
    for _ in range(5):
        samples = random_gaze_stream(rng, 1500)
        got = detect_fixations(samples, GEOM)
        want = rmq_fixation_oracle(
            samples,
            GEOM,
            DEFAULT_MAX_DISPERSION_DEG,
            DEFAULT_MIN_DURATION_MS,
            DEFAULT_MIN_CONFIDENCE,
        )
        assert_same_events(got, want)


def test_detector_matches_oracle_with_tight_parameters():
    rng = random.Random(7)
    for _ in range(20):
        samples = random_gaze_stream(rng, 200)
        got = detect_fixations(
            samples, GEOM, max_dispersion_deg=2.0, min_duration_ms=200, min_confidence=0.9
        )
        want = naive_fixation_oracle(samples, GEOM, 2.0, 200, 0.9)
        assert_same_events(got, want)


sample_lists = st.lists(
    st.builds(
        GazeSample,
        t_ms=st.integers(min_value=0, max_value=40),
        x=st.sampled_from([0.1, 0.48, 0.5, 0.52, 0.9]),
        y=st.sampled_from([0.1, 0.49, 0.5, 0.51, 0.9]),
        confidence=st.sampled_from([1.0, 0.9, 0.3]),
    ),
    max_size=60,
)


def cumulative(samples):
    out, t = [], 0
    for s in samples:
        t += s.t_ms
        out.append(GazeSample(t, s.x, s.y, s.confidence))
    return out


@settings(max_examples=100, deadline=None)
@given(sample_lists)
def test_property_matches_oracle(raw):
    samples = cumulative(raw)
    got = detect_fixations(samples, GEOM, min_duration_ms=300)
    want = naive_fixation_oracle(samples, GEOM, DEFAULT_MAX_DISPERSION_DEG, 300, DEFAULT_MIN_CONFIDENCE)
    assert_same_events(got, want)


@settings(max_examples=100, deadline=None)
@given(sample_lists)
def test_property_fast_oracle_matches_naive_oracle(raw):
    samples = cumulative(raw)
    args = (GEOM, DEFAULT_MAX_DISPERSION_DEG, 300, DEFAULT_MIN_CONFIDENCE)
    assert rmq_fixation_oracle(samples, *args) == naive_fixation_oracle(samples, *args)


@settings(max_examples=75, deadline=None)
@given(sample_lists)
def test_property_prefiltering_commutes(raw):
    samples = cumulative(raw)
    kept = [s for s in samples if s.confidence >= DEFAULT_MIN_CONFIDENCE]
    assert detect_fixations(samples, GEOM, min_duration_ms=300) == detect_fixations(
        kept, GEOM, min_duration_ms=300
    )


@settings(max_examples=75, deadline=None)
@given(sample_lists)
def test_property_emitted_windows_are_valid_and_ordered(raw):
    samples = cumulative(raw)
    events = detect_fixations(samples, GEOM, min_duration_ms=300)
    prev_end = None
    for e in events:
        assert e.duration_ms >= 300
        assert e.dispersion_deg <= DEFAULT_MAX_DISPERSION_DEG
        if prev_end is not None:
            assert e.start_ms >= prev_end
        prev_end = e.end_ms


def test_chunked_feeding_equals_batch():
    rng = random.Random(99)
    samples = random_gaze_stream(rng, 250)
    batch = detect_fixations(samples, GEOM)

    det = FixationDetector(GEOM)
    streamed = []
    i = 0
    while i < len(samples):
        step = rng.randint(1, 7)
        for s in samples[i : i + step]:
            ev = det.push_gaze(s)
            if ev is not None:
                streamed.append(ev)
        i += step
    tail = det.finish()
    if tail is not None:
        streamed.append(tail)
    assert streamed == batch


# -- overlays ------------------------------------------------------------


def frame_at(t_ms):
    return Frame(t_ms=t_ms, image_ref="mem://overlay", width_px=64, height_px=48)


def test_overlay_picks_sample_within_tolerance():
    overlays = overlay_for_frames(
        [frame_at(500)], [GazeSample(495, 0.4, 0.6, 1.0)], tolerance_ms=50
    )
    assert overlays == [GazeOverlay(t_ms=500, circle_centers=((0.4, 0.6),))]


def test_overlay_empty_when_nearest_sample_is_out_of_tolerance():
    overlays = overlay_for_frames(
        [frame_at(500)], [GazeSample(600, 0.4, 0.6, 1.0)], tolerance_ms=50
    )
    assert overlays == [GazeOverlay(t_ms=500, circle_centers=())]


def test_overlay_caps_at_max_points_keeping_nearest():
    gaze = [
        GazeSample(455, 0.1, 0.1, 1.0),
        GazeSample(480, 0.2, 0.2, 1.0),
        GazeSample(500, 0.3, 0.3, 1.0),
        GazeSample(510, 0.4, 0.4, 1.0),
        GazeSample(545, 0.5, 0.5, 1.0),
    ]
    overlays = overlay_for_frames([frame_at(500)], gaze, tolerance_ms=50, max_points=3)
    assert overlays[0].circle_centers == ((0.3, 0.3), (0.4, 0.4), (0.2, 0.2))


def test_overlay_distance_ties_keep_stream_order():
    gaze = [GazeSample(495, 0.1, 0.1, 1.0), GazeSample(505, 0.2, 0.2, 1.0)]
    overlays = overlay_for_frames([frame_at(500)], gaze, max_points=1)
    assert overlays[0].circle_centers == ((0.1, 0.1),)


def test_overlay_one_entry_per_frame():
    rec = make_recording(n_frames=4, fps=2.0, gaze=[GazeSample(520, 0.5, 0.5, 1.0)])
    overlays = overlay_for_frames(rec.frames, rec.gaze)
    assert [o.t_ms for o in overlays] == [0, 500, 1000, 1500]
    assert [len(o.circle_centers) for o in overlays] == [0, 1, 0, 0]
