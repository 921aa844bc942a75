import json
import math

import numpy as np
import pytest

from gazeassist.perception import align_gaze_to_frames, track_objects
from gazeassist.synth import (
    SCENARIOS,
    SyntheticProfile,
    build_intent_trial,
    build_unconscious_trial,
    generate_dataset,
    load_dataset,
    save_dataset,
    scenario_world,
    subject_traits,
)
from gazeassist.world import cell_box


def small_dataset(seed=7):
    return generate_dataset(SyntheticProfile(seed=seed), n_subjects=2,
                            trials_per_subject=10)


def serialize(dataset):
    return json.dumps([
        [t.subject_id, t.trial_id, t.kind,
         [(s.t_us, s.gx, s.gy, s.on_screen) for s in t.gaze],
         [(m.frame_idx, m.intent, m.target) for m in t.marks]]
        for t in dataset.trials])


class TestDeterminism:
    def test_same_seed_identical(self):
        assert serialize(small_dataset(42)) == serialize(small_dataset(42))

    def test_different_seed_differs(self):
        assert serialize(small_dataset(1)) != serialize(small_dataset(2))


class TestStructure:
    def test_counts_and_repetitions(self):
        ds = small_dataset()
        assert len(ds.trials) == 20
        assert ds.subjects == ["s00", "s01"]
        assert ds.repetitions == [0, 1, 2, 3, 4]
        kinds = {t.kind for t in ds.trials}
        assert kinds == {"intent", "unconscious"}

    def test_marks_cover_every_frame(self):
        ds = small_dataset()
        for t in ds.trials:
            assert len(t.marks) == len(t.frames)
            assert [m.frame_idx for m in t.marks] == list(range(len(t.frames)))

    def test_odd_trial_count_rejected(self):
        with pytest.raises(ValueError):
            generate_dataset(SyntheticProfile(), n_subjects=1, trials_per_subject=3)


class TestIntentTrials:
    def test_marked_frames_near_target_center(self):
        ds = small_dataset()
        profile = ds.profile
        for trial in ds.trials:
            if trial.kind != "intent":
                continue
            frame_times = [f.t_us for f in trial.frames]
            gaze = align_gaze_to_frames(trial.gaze, frame_times)
            # worst-case subject sigma multiplier bounds the jitter
            sigma_max = profile.fixation_jitter_px * profile.subject_sigma_range[1]
            for m in trial.marks:
                if not m.intent:
                    continue
                g = gaze[m.frame_idx]
                assert g is not None
                obj = trial.world.objects[m.target]
                cx, cy = cell_box(obj.cell, obj.kind).center
                dist = math.hypot(g.gx - cx, g.gy - cy)
                assert dist <= 3.0 * sigma_max + 1e-9

    def test_intent_trial_has_positive_marks_on_targets(self):
        ds = small_dataset()
        for trial in ds.trials:
            if trial.kind != "intent":
                continue
            marked_targets = {m.target for m in trial.marks if m.intent}
            assert marked_targets == set(trial.targets)

    def test_unconscious_trials_all_unmarked(self):
        ds = small_dataset()
        for trial in ds.trials:
            if trial.kind == "unconscious":
                assert all(not m.intent for m in trial.marks)

    def test_blinks_present_in_gaze(self):
        ds = generate_dataset(SyntheticProfile(seed=3, blink_rate_hz=2.0),
                              n_subjects=1, trials_per_subject=10)
        off = sum(1 for t in ds.trials for s in t.gaze if not s.on_screen)
        assert off > 0

    def test_tracks_match_world(self):
        ds = small_dataset()
        trial = ds.trials[0]
        tracks = track_objects(trial.frames)
        assert set(tracks) == set(trial.world.objects)


class TestScenarios:
    def test_world_contains_targets(self):
        rng = np.random.default_rng(0)
        for name, targets, _ in SCENARIOS:
            world, got_targets = scenario_world(name, rng)
            assert got_targets == targets
            for t in targets:
                assert t in world.objects

    def test_unknown_scenario(self):
        with pytest.raises(ValueError):
            scenario_world("nope", np.random.default_rng(0))


class TestDiskRoundtrip:
    def test_save_load(self, tmp_path):
        ds = generate_dataset(SyntheticProfile(seed=5), n_subjects=1,
                              trials_per_subject=4)
        root = str(tmp_path / "data")
        save_dataset(root, ds)
        loaded = load_dataset(root)
        assert serialize(loaded) == serialize(ds)
        assert loaded.profile == ds.profile
        layout = tmp_path / "data" / "subjects" / "s00" / "trials" / "t00"
        for name in ("gaze.jsonl", "frames.jsonl", "marks.jsonl", "meta.json"):
            assert (layout / name).exists()
