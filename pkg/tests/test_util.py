"""Thread knob behavior and feature nonnegativity with a ReLU head."""

import numpy as np

from saltrack.evalkit import SynthConfig, synth_sequence
from saltrack.nets import demo_network, extract_patch, forward
from saltrack.tracker import TrackerConfig, track_sequence
from saltrack.util import thread_count, thread_map


class TestThreadKnob:
    def test_unset_means_serial(self, monkeypatch):
        monkeypatch.delenv("SALTRK_THREADS", raising=False)
        assert thread_count() == 1

    def test_zero_means_auto(self, monkeypatch):
        monkeypatch.setenv("SALTRK_THREADS", "0")
        assert thread_count() >= 1

    def test_explicit_count(self, monkeypatch):
        monkeypatch.setenv("SALTRK_THREADS", "3")
        assert thread_count() == 3

    def test_map_preserves_order(self, monkeypatch):
        monkeypatch.setenv("SALTRK_THREADS", "4")
        assert thread_map(lambda v: v * v, range(20)) == [v * v for v in range(20)]

    def test_tracking_result_independent_of_threads(self, monkeypatch):
        cfg = SynthConfig(frame_hw=(48, 48), target_size=12, start=(8, 8),
                          legs=((5, 2, 1),), clutter=8, seed=2)
        frames, ds = synth_sequence(cfg)
        spec, weights = demo_network()

        monkeypatch.setenv("SALTRK_THREADS", "1")
        serial = track_sequence(frames, ds.gt_boxes[0], spec, weights,
                                TrackerConfig(rng_seed=5))
        monkeypatch.setenv("SALTRK_THREADS", "4")
        threaded = track_sequence(frames, ds.gt_boxes[0], spec, weights,
                                  TrackerConfig(rng_seed=5))
        assert serial.boxes() == threaded.boxes()


class TestFeatureRange:
    def test_relu_head_gives_nonnegative_features(self):
        spec, weights = demo_network()
        rng = np.random.default_rng(0)
        for _ in range(5):
            frame = rng.random((40, 40, 3))
            patch = extract_patch(frame, (5, 5, 12, 12), spec.input_shape)
            feat, _ = forward(spec, weights, patch)
            assert np.all(feat >= 0.0)
