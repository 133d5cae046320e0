"""Per-frame tracking loop: sample, classify, build saliency, localize, update.

A session is created on the first frame with a ground-truth box.  Every
following frame draws Gaussian candidate boxes around the previous state,
scores their features with the online SVM, fuses positive samples into the
frame's saliency map, and runs one predict/update cycle of the grid filter.
Model updates (SVM and generative filter) are gated on having at least one
positive sample; frames with none fall back to the motion prior with an
inflated variance.
"""

from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from saltrack import localization as loc
from saltrack import nets, saliency
from saltrack.errors import ConfigurationError
from saltrack.evalkit import overlap
from saltrack.svm import OnlineSvm
from saltrack.util import thread_map


@dataclass
class TrackerConfig:
    n_samples: int = 120
    label_threshold: float = 0.3
    filter_memory: int = 30
    svm_c: float = 1.0
    sv_budget: int = 500
    sigma_min: float = 1.0
    likelihood_floor: float = 1e-12
    rng_seed: int = 0

    def __post_init__(self):
        if self.n_samples < 1:
            raise ConfigurationError("n_samples must be >= 1")
        if not 0.0 < self.label_threshold < 1.0:
            raise ConfigurationError("label_threshold must be in (0, 1)")
        if self.filter_memory < 1:
            raise ConfigurationError("filter_memory must be >= 1")

    @classmethod
    def from_file(cls, path, **overrides) -> "TrackerConfig":
        """Plain key=value file; '#' starts a comment.  Overrides win."""
        values = {}
        known = {f.name: f.type for f in fields(cls)}
        with open(path) as fh:
            for lineno, raw in enumerate(fh, 1):
                line = raw.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ConfigurationError(f"{path}:{lineno}: expected key=value")
                key, _, val = (t.strip() for t in line.partition("="))
                if key not in known:
                    raise ConfigurationError(f"{path}:{lineno}: unknown key {key!r}")
                caster = int if known[key] == "int" else float
                try:
                    values[key] = caster(val)
                except ValueError as exc:
                    raise ConfigurationError(f"{path}:{lineno}: bad value {val!r}") from exc
        values.update(overrides)
        return cls(**values)


@dataclass
class FrameEntry:
    """Per-frame tracking output."""

    index: int
    state: loc.TargetState
    n_positive: int
    map_probability: float
    saliency: np.ndarray
    trained: bool


@dataclass
class TrackResult:
    entries: list = field(default_factory=list)

    def boxes(self):
        return [e.state.footprint() for e in self.entries]

    def __len__(self):
        return len(self.entries)


def draw_samples(prev: loc.TargetState, cfg: TrackerConfig, rng,
                 frame_hw, std_override=None):
    """n_samples candidate states, centers i.i.d. Gaussian around the
    previous center with per-axis std sqrt(w*h)/2, clamped to the frame."""
    std = np.sqrt(prev.w * prev.h) / 2 if std_override is None else std_override
    h, w = frame_hw
    offsets = rng.normal(0.0, 1.0, size=(cfg.n_samples, 2)) * std
    cx = np.clip(prev.cx + offsets[:, 0], 0, w - 1)
    cy = np.clip(prev.cy + offsets[:, 1], 0, h - 1)
    return [loc.TargetState(cx=float(x), cy=float(y), w=prev.w, h=prev.h)
            for x, y in zip(cx, cy)]


def label_samples(optimal: loc.TargetState, samples, threshold: float):
    """Training pairs: the optimal state is the single positive; samples
    overlapping it below the threshold are negatives; the rest are excluded
    (samples equal to the optimal collapse into the one positive)."""
    opt_box = optimal.footprint()
    labeled = [(optimal, 1)]
    for s in samples:
        box = s.footprint()
        if box == opt_box:
            continue
        if overlap(opt_box, box) < threshold:
            labeled.append((s, -1))
    return labeled


class TrackerSession:
    """Single-target tracking state over one image sequence."""

    def __init__(self, spec, weights, config: TrackerConfig | None = None):
        self.spec = spec
        self.weights = weights
        self.cfg = config or TrackerConfig()
        self.rng = np.random.default_rng(self.cfg.rng_seed)
        self.svm = OnlineSvm(spec.feature_dim, c=self.cfg.svm_c)
        self.frame_hw = None
        self.state = None
        self.posterior = None
        self.likelihood = None
        self.filter = None
        self.last_transition = None
        self.miss_streak = 0
        self.result = TrackResult()

    # -- helpers -------------------------------------------------------------

    def _feature(self, frame, state: loc.TargetState):
        patch = nets.extract_patch(frame, state.footprint(), self.spec.input_shape)
        feat, _ = nets.forward(self.spec, self.weights, patch)
        return patch, feat

    def _features(self, frame, states):
        return thread_map(lambda s: self._feature(frame, s), states)

    def _classify(self, feats):
        return self.svm.predict(np.stack(feats))

    def _saliency_from(self, frame, positives):
        """Fuse back-propagated gradients of positively scored samples."""
        w = self.svm.weight_vector()
        bias = self.svm.bias

        def one(sample):
            state, patch = sample
            sg = saliency.sample_gradient(self.spec, self.weights, patch, w, bias)
            sg.box = state.footprint()
            return saliency.project_and_pad(sg, self.frame_hw)

        grids = thread_map(one, positives)
        return saliency.aggregate(grids, self.frame_hw)

    def _train(self, frame, optimal, samples, sample_feats):
        labeled = label_samples(optimal, samples, self.cfg.label_threshold)
        feat_by_state = {s.footprint(): f for s, f in zip(samples, sample_feats)}
        batch = []
        for state, label in labeled:
            feat = feat_by_state.get(state.footprint())
            if feat is None:
                _, feat = self._feature(frame, state)
            batch.append((feat, label))
        self.svm.partial_fit(batch)
        self.svm.prune_to_budget(self.cfg.sv_budget)
        return labeled

    # -- lifecycle -----------------------------------------------------------

    def start(self, frame, init_state: loc.TargetState) -> FrameEntry:
        """Bootstrap on frame 1: train on the ground-truth box plus sampled
        negatives, seed the generative filter from the first saliency map,
        and place the posterior as a delta at the ground-truth center."""
        frame = np.asarray(frame, dtype=float)
        self.frame_hw = frame.shape[:2]
        self.state = init_state
        self.filter = loc.GenerativeFilter((init_state.w, init_state.h),
                                           memory=self.cfg.filter_memory)

        samples = draw_samples(init_state, self.cfg, self.rng, self.frame_hw)
        pairs = self._features(frame, samples)
        feats = [f for _, f in pairs]
        self._train(frame, init_state, samples, feats)

        scores = self._classify(feats)
        positives = [(s, patch) for s, (patch, _), sc in
                     zip(samples, pairs, scores) if sc > 0]
        gt_patch, gt_feat = self._feature(frame, init_state)
        if float(self.svm.predict(gt_feat)) > 0:
            positives.append((init_state, gt_patch))
        sal = self._saliency_from(frame, positives) if positives \
            else np.zeros(self.frame_hw)

        loc.update_filter(self.filter, sal, init_state)
        x0, y0 = int(round(init_state.cx)), int(round(init_state.cy))
        self.posterior = loc.delta_grid(*self.frame_hw, cx=x0, cy=y0)
        self.last_transition = loc.TransitionEstimate(
            0.0, 0.0, self.cfg.sigma_min ** 2, self.cfg.sigma_min ** 2,
            (init_state.cx, init_state.cy))
        entry = FrameEntry(index=0, state=init_state,
                           n_positive=int(np.sum(scores > 0)),
                           map_probability=1.0, saliency=sal, trained=True)
        self.result.entries.append(entry)
        return entry

    def step(self, frame) -> FrameEntry:
        """Track one new frame; the session must have been started."""
        if self.state is None:
            raise ConfigurationError("session not started; call start() first")
        frame = np.asarray(frame, dtype=float)
        if frame.shape[:2] != self.frame_hw:
            raise ConfigurationError(
                f"frame size {frame.shape[:2]} != session size {self.frame_hw}")

        samples = draw_samples(self.state, self.cfg, self.rng, self.frame_hw)
        pairs = self._features(frame, samples)
        feats = [f for _, f in pairs]
        scores = self._classify(feats)
        pos_mask = scores > 0
        positives = [(s, patch) for s, (patch, _), keep in
                     zip(samples, pairs, pos_mask) if keep]
        n_pos = len(positives)

        if n_pos:
            sal = self._saliency_from(frame, positives)
            centers = [(s.cx, s.cy) for s, _ in positives]
            transition = loc.estimate_transition(centers, self.state,
                                                 sigma_min=self.cfg.sigma_min)
            self.last_transition = transition
            self.miss_streak = 0
            prior = loc.predict_prior(self.posterior, transition)
            like = loc.likelihood_map(self.filter, sal,
                                      floor=self.cfg.likelihood_floor)
            posterior, state, prob = loc.posterior_and_map(
                prior, like, (self.state.w, self.state.h))
            self.posterior = posterior
            self.likelihood = like
            self.state = state
            self._train(frame, state, samples, feats)
            loc.update_filter(self.filter, sal, state)
            trained = True
        else:
            # detection gap: reuse the last displacement with the variance
            # inflated 2x per consecutive miss, capped at 4x
            sal = np.zeros(self.frame_hw)
            self.miss_streak += 1
            inflate = min(2.0 ** self.miss_streak, 4.0)
            transition = self.last_transition.inflated(inflate)
            prior = loc.predict_prior(self.posterior, transition)
            self.posterior = prior
            flat = int(np.argmax(prior))
            cy, cx = divmod(flat, prior.shape[1])
            self.state = loc.TargetState(cx=float(cx), cy=float(cy),
                                         w=self.state.w, h=self.state.h)
            prob = float(prior[cy, cx])
            trained = False

        entry = FrameEntry(index=len(self.result.entries), state=self.state,
                           n_positive=n_pos, map_probability=prob,
                           saliency=sal, trained=trained)
        self.result.entries.append(entry)
        return entry


def track_sequence(frames, init_box, spec, weights,
                   config: TrackerConfig | None = None,
                   on_frame=None) -> TrackResult:
    """Run a session over an iterable of frames.

    `init_box` is the (x, y, w, h) ground-truth box on the first frame.
    `on_frame(entry)` is called after each frame when given.
    """
    session = TrackerSession(spec, weights, config)
    state = loc.TargetState.from_box(init_box)
    result = session.result
    for i, frame in enumerate(frames):
        entry = session.start(frame, state) if i == 0 else session.step(frame)
        if on_frame is not None:
            on_frame(entry)
    if not result.entries:
        raise ConfigurationError("no frames to track")
    return result
