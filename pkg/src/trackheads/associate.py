"""Multi-object association: two-stage Hungarian matching and tracklet lifecycle."""
from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np

from . import assign
from .core import Box, FeatureMap, Mask, Observation, Pose, iou_matrix, mask_to_box, pose_to_mask
from .kalman import CHI2_95_4DOF, KalmanFilter, KalmanState
from .similarity import (SIMILARITY_MODES, ObjectFeature, crop_box_features, crop_mask_features,
                         similarity_matrix)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class AssocConfig:
    cost_weight: float = 0.99
    gate_threshold: float = CHI2_95_4DOF
    iou_threshold: float = 0.5
    inactive_patience: float = 1.0
    fps: float = 25.0
    similarity: str = "rsm"
    use_motion: bool = True
    history_size: int = 1
    gf_size: tuple[int, int] = (8, 4)
    std_weight_position: float = 1.0 / 20
    std_weight_velocity: float = 1.0 / 160

    def __post_init__(self):
        if not 0.0 <= self.cost_weight <= 1.0:
            raise ValueError("cost_weight must lie in [0, 1]")
        if self.gate_threshold <= 0:
            raise ValueError("gate_threshold must be positive")
        if self.similarity not in SIMILARITY_MODES:
            raise ValueError(f"similarity must be one of {SIMILARITY_MODES}")
        if self.history_size < 1:
            raise ValueError("history_size must be >= 1")

    @property
    def max_missed_frames(self) -> float:
        return self.fps * self.inactive_patience

    def kalman(self) -> KalmanFilter:
        return KalmanFilter(self.std_weight_position, self.std_weight_velocity)


class Status(Enum):
    TENTATIVE = "tentative"
    ACTIVE = "active"
    INACTIVE = "inactive"


@dataclass
class Detection:
    observation: Observation
    box: Box
    feature: ObjectFeature

    @property
    def class_id(self) -> int:
        return self.observation.class_id


@dataclass
class Tracklet:
    state: KalmanState
    class_id: int
    last_observation: Observation
    last_box: Box
    last_frame: int
    history: deque
    status: Status = Status.TENTATIVE
    id: int | None = None
    inactive_since: int | None = None

    def predicted_box(self) -> Box:
        return Box.from_xyah(self.state.mean[:4])


@dataclass
class AssocResult:
    matches: list[tuple[int, int]]
    unmatched_tracklets: list[int]
    unmatched_detections: list[int]
    stage1: list[tuple[int, int]] = field(default_factory=list)


@dataclass(frozen=True)
class TrackOutput:
    frame: int
    track_id: int
    observation: Observation
    box: Box


def _class_forbidden(tracklets: Sequence[Tracklet], detections: Sequence[Detection]) -> np.ndarray:
    tc = np.array([t.class_id for t in tracklets])[:, None]
    dc = np.array([d.class_id for d in detections])[None, :]
    return tc != dc


def motion_costs(tracklets: Sequence[Tracklet], detections: Sequence[Detection],
                 kf: KalmanFilter) -> np.ndarray:
    if not tracklets or not detections:
        return np.zeros((len(tracklets), len(detections)))
    obs = np.stack([d.box.to_xyah() for d in detections])
    return np.stack([np.atleast_1d(kf.mahalanobis(t.state, obs)) for t in tracklets])


def associate_frame(tracklets: Sequence[Tracklet], detections: Sequence[Detection],
                    cfg: AssocConfig, kf: KalmanFilter | None = None) -> AssocResult:
    """Match already-predicted tracklets to detections.

    Stage one prices each pair with ``w * (1 - similarity) + (1 - w) * motion``
    and forbids pairs outside the chi-square gate; stage two matches the
    leftovers on ``1 - IoU`` of predicted and detected boxes.
    """
    kf = kf or cfg.kalman()
    n, m = len(tracklets), len(detections)
    if n == 0 or m == 0:
        return AssocResult([], list(range(n)), list(range(m)))

    sim = similarity_matrix(cfg.similarity, [list(t.history) for t in tracklets],
                            [d.feature for d in detections])
    app_cost = 1.0 - sim
    forbidden = _class_forbidden(tracklets, detections)
    if cfg.use_motion:
        mot_cost = motion_costs(tracklets, detections, kf)
        cost = cfg.cost_weight * app_cost + (1.0 - cfg.cost_weight) * mot_cost
        forbidden = forbidden | (mot_cost > cfg.gate_threshold)
    else:
        cost = app_cost
    stage1 = assign.solve(assign.CostMatrix(cost, forbidden))
    rem_t, rem_d = assign.unmatched(n, m, stage1)

    stage2 = []
    if rem_t and rem_d:
        iou = iou_matrix([tracklets[i].predicted_box() for i in rem_t],
                         [detections[j].box for j in rem_d])
        forb2 = (iou < cfg.iou_threshold) | _class_forbidden([tracklets[i] for i in rem_t],
                                                             [detections[j] for j in rem_d])
        sub = assign.solve(assign.CostMatrix(1.0 - iou, forb2))
        stage2 = [(rem_t[a], rem_d[b]) for a, b in sub]

    matches = sorted(stage1 + stage2)
    un_t, un_d = assign.unmatched(n, m, matches)
    return AssocResult(matches, un_t, un_d, stage1)


def observation_box(obs: Observation, frame_size: tuple[int, int]) -> Box:
    shape = obs.shape
    if isinstance(shape, Box):
        return shape
    if isinstance(shape, Mask):
        return mask_to_box(shape)
    return mask_to_box(pose_to_mask(shape, frame_size))


def object_feature(fm: FeatureMap, obs: Observation, cfg: AssocConfig,
                   frame_size: tuple[int, int] | None = None) -> ObjectFeature:
    """Crop the object-level feature of an observation from the frame feature map."""
    shape = obs.shape
    if frame_size is None:
        frame_size = (fm.height * fm.stride, fm.width * fm.stride)
    if isinstance(shape, Box):
        fixed = cfg.gf_size if cfg.similarity == "gf" else None
        return crop_box_features(fm, shape, fixed)
    if isinstance(shape, Pose):
        shape = pose_to_mask(shape, frame_size)
    return crop_mask_features(fm, shape)


def make_detections(fm: FeatureMap, observations: Sequence[Observation], cfg: AssocConfig,
                    frame_size: tuple[int, int] | None = None) -> list[Detection]:
    if frame_size is None:
        frame_size = (fm.height * fm.stride, fm.width * fm.stride)
    return [Detection(o, observation_box(o, frame_size), object_feature(fm, o, cfg, frame_size))
            for o in observations]


class MultiTracker:
    """Tracklet pool for one video; feed frames strictly in order with :meth:`step`."""

    def __init__(self, cfg: AssocConfig | None = None):
        self.cfg = cfg or AssocConfig()
        self.kf = self.cfg.kalman()
        self.pool: list[Tracklet] = []
        self._next_id = 1

    def _new_tracklet(self, det: Detection, frame: int) -> Tracklet:
        return Tracklet(state=self.kf.initiate(det.box.to_xyah()), class_id=det.class_id,
                        last_observation=det.observation, last_box=det.box, last_frame=frame,
                        history=deque([det.feature], maxlen=self.cfg.history_size))

    def predict(self) -> None:
        for t in self.pool:
            t.state = self.kf.predict(t.state)

    def step(self, frame: int, detections: Sequence[Detection]) -> list[TrackOutput]:
        """Advance one frame; returns confirmed outputs, possibly including the
        first sighting (previous frame) of tracklets confirmed now."""
        self.predict()
        result = associate_frame(self.pool, detections, self.cfg, self.kf)
        return self.lifecycle_step(result, detections, frame)

    def lifecycle_step(self, result: AssocResult, detections: Sequence[Detection],
                       frame: int) -> list[TrackOutput]:
        out: list[TrackOutput] = []
        for ti, dj in result.matches:
            t, d = self.pool[ti], detections[dj]
            t.state = self.kf.update(t.state, d.box.to_xyah())
            t.history.append(d.feature)
            if t.status is Status.TENTATIVE:
                t.id = self._next_id
                self._next_id += 1
                out.append(TrackOutput(t.last_frame, t.id, t.last_observation, t.last_box))
            t.status = Status.ACTIVE
            t.inactive_since = None
            t.last_observation = d.observation
            t.last_box = d.box
            t.last_frame = frame
            out.append(TrackOutput(frame, t.id, d.observation, d.box))

        survivors = []
        matched = {ti for ti, _ in result.matches}
        for ti, t in enumerate(self.pool):
            if ti in matched:
                survivors.append(t)
                continue
            if t.status is Status.TENTATIVE:
                continue
            if t.status is Status.ACTIVE:
                t.status = Status.INACTIVE
                t.inactive_since = frame
            if frame - t.last_frame > self.cfg.max_missed_frames:
                log.debug("removing tracklet %s after %d missed frames", t.id, frame - t.last_frame)
                continue
            survivors.append(t)

        for dj in result.unmatched_detections:
            survivors.append(self._new_tracklet(detections[dj], frame))
        self.pool = survivors
        return out

    @property
    def confirmed(self) -> list[Tracklet]:
        return [t for t in self.pool if t.id is not None]


def run_sequence(frames: Sequence[tuple[int, FeatureMap, Sequence[Observation]]],
                 cfg: AssocConfig | None = None) -> list[TrackOutput]:
    """Track a whole sequence of ``(frame_index, feature_map, observations)``."""
    tracker = MultiTracker(cfg)
    out: list[TrackOutput] = []
    for frame, fm, observations in frames:
        out.extend(tracker.step(frame, make_detections(fm, observations, tracker.cfg)))
    return sorted(out, key=lambda o: (o.frame, o.track_id))
