import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gazeassist.features import (
    FeatureConfig,
    FeatureWindow,
    WindowBatch,
    cut_windows,
    gaze_ratio,
    half_diagonal,
    label_window,
    to_batch,
    window_from_json,
    window_starts,
    window_to_json,
)
from gazeassist.perception import AlignedGaze, Box, ObjectTrack, SceneGeometry


class TestHalfDiagonal:
    def test_paper_shaped_box(self):
        assert half_diagonal(Box(100, 100, 300, 200)) == pytest.approx(111.8034, abs=1e-4)

    def test_square_box(self):
        assert half_diagonal(Box(0, 0, 10, 10)) == pytest.approx(7.0711, abs=1e-4)

    def test_small_box(self):
        assert half_diagonal(Box(0, 0, 2, 2)) == pytest.approx(1.41421, abs=1e-5)


class TestGazeRatio:
    def test_direct_geometric_case(self):
        assert gaze_ratio(Box(100, 100, 300, 200), (260, 230)) == pytest.approx(
            1.11803, abs=1e-5)

    def test_center_clamps_to_cap(self):
        assert gaze_ratio(Box(100, 100, 300, 200), (200, 150)) == 10.0

    def test_far_gaze(self):
        assert gaze_ratio(Box(0, 0, 10, 10), (1005, 5)) == pytest.approx(
            0.0070711, abs=1e-7)

    def test_brute_force_oracle(self):
        rng = np.random.default_rng(7)
        for _ in range(1000):
            x0, y0 = rng.uniform(0, 900, 2)
            w, h = rng.uniform(1, 180, 2)
            box = Box(x0, y0, x0 + w, y0 + h)
            gaze = (float(rng.uniform(0, 1088)), float(rng.uniform(0, 1080)))
            d1 = math.sqrt((w / 2) ** 2 + (h / 2) ** 2)
            d2 = math.sqrt((gaze[0] - (x0 + w / 2)) ** 2 + (gaze[1] - (y0 + h / 2)) ** 2)
            expected = min(d1 / max(d2, 1e-6), 10.0)
            assert gaze_ratio(box, gaze) == pytest.approx(expected, abs=1e-9)

    @settings(max_examples=200, deadline=None)
    @given(
        x0=st.floats(0, 500), y0=st.floats(0, 500),
        w=st.floats(2, 300), h=st.floats(2, 300),
        gx=st.floats(-200, 1200), gy=st.floats(-200, 1200),
        dx=st.floats(-400, 400), dy=st.floats(-400, 400),
    )
    def test_translation_invariance(self, x0, y0, w, h, gx, gy, dx, dy):
        box = Box(x0, y0, x0 + w, y0 + h)
        shifted = Box(x0 + dx, y0 + dy, x0 + w + dx, y0 + h + dy)
        r1 = gaze_ratio(box, (gx, gy))
        r2 = gaze_ratio(shifted, (gx + dx, gy + dy))
        assert r1 == pytest.approx(r2, abs=1e-9)

    @settings(max_examples=200, deadline=None)
    @given(
        x0=st.floats(0, 500), y0=st.floats(0, 500),
        w=st.floats(2, 300), h=st.floats(2, 300),
        off_x=st.floats(-300, 300), off_y=st.floats(-300, 300),
        s=st.floats(0.1, 8.0),
    )
    def test_scale_invariance_about_center(self, x0, y0, w, h, off_x, off_y, s):
        box = Box(x0, y0, x0 + w, y0 + h)
        cx, cy = box.center
        r1 = gaze_ratio(box, (cx + off_x, cy + off_y))
        scaled = Box(cx - s * w / 2, cy - s * h / 2, cx + s * w / 2, cy + s * h / 2)
        r2 = gaze_ratio(scaled, (cx + s * off_x, cy + s * off_y))
        if r1 < 10.0 and r2 < 10.0:  # unclamped cases only
            assert r1 == pytest.approx(r2, abs=1e-9)

    def test_radial_monotonicity(self):
        box = Box(100, 100, 300, 200)
        cx, cy = box.center
        radii = np.linspace(1.0, 500.0, 60)
        ratios = [gaze_ratio(box, (cx + r, cy)) for r in radii]
        unclamped = [r for r in ratios if r < 10.0]
        assert all(a > b for a, b in zip(unclamped, unclamped[1:]))


class TestWindowStarts:
    def test_spec_count_example(self):
        starts = window_starts(100, 30, 10)
        assert len(starts) == 8
        assert starts == list(range(0, 71, 10))

    def test_exact_fit(self):
        assert window_starts(30, 30, 10) == [0]

    def test_too_short(self):
        assert window_starts(29, 30, 10) == []

    def test_brute_force_oracle_200_triples(self):
        rng = np.random.default_rng(3)
        for _ in range(200):
            T = int(rng.integers(0, 400))
            sw = int(rng.integers(1, 60))
            stride = int(rng.integers(1, 25))
            starts = window_starts(T, sw, stride)
            brute = [s for s in range(0, max(T, 1), stride) if s + sw <= T]
            assert starts == brute
            if T >= sw:
                assert len(starts) == (T - sw) // stride + 1


class TestLabelWindow:
    def test_majority(self):
        assert label_window([True] * 20 + [False] * 10) == 1

    def test_none_marked(self):
        assert label_window([False] * 30) == 0

    def test_exact_half_is_intent(self):
        assert label_window([True] * 15 + [False] * 15) == 1

    def test_missing_marks_error(self):
        with pytest.raises(ValueError):
            label_window([True, None, False])


def _track_and_gaze(T, box=Box(100, 100, 300, 200), absent_frames=()):
    track = ObjectTrack(object_id="o", label="cup", first_frame=0, boxes=[box] * T)
    gaze = [None if i in absent_frames else AlignedGaze(200.0 + i, 150.0) for i in range(T)]
    return track, gaze


class TestCutWindows:
    def test_counts_and_starts(self):
        track, gaze = _track_and_gaze(100)
        wins = cut_windows(track, gaze, FeatureConfig(sw=30, stride=10))
        assert [w.start_frame for w in wins] == list(range(0, 71, 10))
        assert all(w.values.shape == (30, 3) for w in wins)

    def test_absent_gaze_drops_window(self):
        track, gaze = _track_and_gaze(50, absent_frames={35})
        wins = cut_windows(track, gaze, FeatureConfig(sw=30, stride=10))
        # windows starting at 10 and 20 cover frame 35 and are dropped
        assert [w.start_frame for w in wins] == [0]

    def test_normalization_toggle(self):
        track, gaze = _track_and_gaze(30)
        geo = SceneGeometry()
        w_norm = cut_windows(track, gaze, FeatureConfig(sw=30, stride=10), geo)[0]
        w_raw = cut_windows(track, gaze,
                            FeatureConfig(sw=30, stride=10, normalize_gaze=False), geo)[0]
        assert w_norm.values[0, 0] == pytest.approx(200.0 / 1088)
        assert w_raw.values[0, 0] == pytest.approx(200.0)
        # the ratio feature is identical in both modes
        assert np.allclose(w_norm.values[:, 2], w_raw.values[:, 2])

    def test_labels_from_marks(self):
        track, gaze = _track_and_gaze(40)
        marks = [True] * 25 + [False] * 15
        wins = cut_windows(track, gaze, FeatureConfig(sw=30, stride=10), marks=marks)
        assert wins[0].label == 1   # frames 0..29: 25 marked
        assert wins[1].label == 1   # frames 10..39: 15 marked -> tie -> 1

    def test_unfilled_track_gap_drops_window(self):
        boxes = [Box(0, 0, 10, 10)] * 50
        for i in range(20, 27):
            boxes[i] = None
        track = ObjectTrack(object_id="o", label="cup", first_frame=0, boxes=boxes)
        gaze = [AlignedGaze(5.0, 5.0) for _ in range(50)]
        wins = cut_windows(track, gaze, FeatureConfig(sw=30, stride=10))
        assert [w.start_frame for w in wins] == []


class TestBatching:
    def test_to_batch_shapes(self):
        wins = [FeatureWindow("o", 0, np.zeros((30, 3)), label=1),
                FeatureWindow("o", 10, np.ones((30, 3)), label=0)]
        batch = to_batch(wins)
        assert batch.tensor.shape == (2, 30, 3)
        assert batch.labels.tolist() == [1.0, 0.0]

    def test_mixed_sw_rejected(self):
        wins = [FeatureWindow("o", 0, np.zeros((30, 3))),
                FeatureWindow("o", 0, np.zeros((20, 3)))]
        with pytest.raises(ValueError):
            to_batch(wins)

    def test_json_roundtrip(self):
        w = FeatureWindow("cup", 40, np.linspace(0, 1, 90).reshape(30, 3), label=1)
        rec = window_to_json(w)
        back = window_from_json(rec)
        assert back.object_id == "cup" and back.start_frame == 40 and back.label == 1
        assert np.allclose(back.values, w.values)
