"""CLEAR-MOT, identity F1, region IoU and PCK on small track sets."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from . import assign
from .core import Box, Mask, Pose, body_size, box_iou


def mask_iou(a: Mask, b: Mask) -> float:
    inter = np.logical_and(a.bits, b.bits).sum()
    union = np.logical_or(a.bits, b.bits).sum()
    return float(inter / union) if union else 1.0


def shape_iou(a, b) -> float:
    if isinstance(a, Mask) and isinstance(b, Mask):
        return mask_iou(a, b)
    if isinstance(a, Box) and isinstance(b, Box):
        return box_iou(a, b)
    raise TypeError("IoU needs two boxes or two masks")


def pck(gt: Pose, pred: Pose, delta: float = 0.1) -> float:
    """Fraction of ground-truth visible keypoints within ``delta * body_size`` (inclusive)."""
    thr = delta * body_size(gt)
    vis = gt.visible
    if not vis.any():
        return 0.0
    d = np.linalg.norm(gt.keypoints[vis] - pred.keypoints[vis], axis=1)
    ok = (d <= thr + 1e-9) & pred.visible[vis]
    return float(ok.mean())


@dataclass
class TrackSet:
    """``frames[frame][track_id] -> Box or Mask``."""

    frames: dict[int, dict[int, object]] = field(default_factory=dict)

    def add(self, frame: int, track_id: int, shape) -> None:
        if track_id <= 0:
            raise ValueError("track ids must be positive")
        per = self.frames.setdefault(frame, {})
        if track_id in per:
            raise ValueError(f"duplicate entry for id {track_id} at frame {frame}")
        per[track_id] = shape

    def __len__(self) -> int:
        return sum(len(v) for v in self.frames.values())

    def ids(self) -> list[int]:
        return sorted({i for per in self.frames.values() for i in per})

    def relabeled(self, mapping: Mapping[int, int]) -> "TrackSet":
        out = TrackSet()
        for f, per in self.frames.items():
            for i, s in per.items():
                out.add(f, mapping[i], s)
        return out


def _frame_matches(g: dict, p: dict, prev: dict, thr: float) -> dict[int, int]:
    matches = {}
    for gid, pid in prev.items():
        if gid in g and pid in p and shape_iou(g[gid], p[pid]) >= thr:
            matches[gid] = pid
    gids = [i for i in sorted(g) if i not in matches]
    used = set(matches.values())
    pids = [i for i in sorted(p) if i not in used]
    if gids and pids:
        iou = np.array([[shape_iou(g[a], p[b]) for b in pids] for a in gids])
        for r, c in assign.solve(assign.CostMatrix(1.0 - iou, iou < thr)):
            matches[gids[r]] = pids[c]
    return matches


def clear_metrics(gt: TrackSet, pred: TrackSet, iou_thresh: float = 0.5) -> dict[str, float]:
    """MOTA with previous-frame match carry-over and identity-switch counting."""
    fp = fn = ids = 0
    n_gt = len(gt)
    prev: dict[int, int] = {}
    last_pid: dict[int, int] = {}
    for f in sorted(set(gt.frames) | set(pred.frames)):
        g = gt.frames.get(f, {})
        p = pred.frames.get(f, {})
        matches = _frame_matches(g, p, prev, iou_thresh)
        for gid, pid in matches.items():
            if gid in last_pid and last_pid[gid] != pid:
                ids += 1
            last_pid[gid] = pid
        fp += len(p) - len(matches)
        fn += len(g) - len(matches)
        prev = matches
    mota = 1.0 - (fp + fn + ids) / n_gt if n_gt else float(fp == 0)
    return {"MOTA": mota, "IDs": ids, "FP": fp, "FN": fn, "GT": n_gt}


def idf1(gt: TrackSet, pred: TrackSet, iou_thresh: float = 0.5) -> float:
    return identity_scores(gt, pred, iou_thresh)["IDF1"]


def identity_scores(gt: TrackSet, pred: TrackSet, iou_thresh: float = 0.5) -> dict[str, float]:
    gids, pids = gt.ids(), pred.ids()
    n_gt, n_pred = len(gt), len(pred)
    if not gids or not pids:
        return {"IDF1": 0.0, "IDTP": 0, "IDFP": n_pred, "IDFN": n_gt}
    gi = {g: k for k, g in enumerate(gids)}
    pi = {p: k for k, p in enumerate(pids)}
    overlap = np.zeros((len(gids), len(pids)))
    for f, g in gt.frames.items():
        p = pred.frames.get(f, {})
        for a, sa in g.items():
            for b, sb in p.items():
                if shape_iou(sa, sb) >= iou_thresh:
                    overlap[gi[a], pi[b]] += 1
    pairs = assign.solve(assign.CostMatrix(-overlap))
    idtp = int(sum(overlap[r, c] for r, c in pairs))
    score = 2 * idtp / (n_gt + n_pred) if (n_gt + n_pred) else 1.0
    return {"IDF1": score, "IDTP": idtp, "IDFP": n_pred - idtp, "IDFN": n_gt - idtp}


def evaluate(gt: TrackSet, pred: TrackSet, iou_thresh: float = 0.5) -> dict[str, float]:
    out = clear_metrics(gt, pred, iou_thresh)
    out.update(identity_scores(gt, pred, iou_thresh))
    return out


def format_report(summary: Mapping[str, float]) -> str:
    """Human-readable table followed by ``key=value`` lines."""
    keys = ["IDF1", "MOTA", "IDs", "FP", "FN", "GT", "IDTP", "IDFP", "IDFN"]
    keys = [k for k in keys if k in summary] + [k for k in summary if k not in keys]
    lines = ["metric      value", "----------  ----------"]
    for k in keys:
        v = summary[k]
        lines.append(f"{k:<10}  {v:.4f}" if isinstance(v, float) else f"{k:<10}  {v}")
    lines.append("")
    for k in keys:
        v = summary[k]
        lines.append(f"{k}={v:.6f}" if isinstance(v, float) else f"{k}={v}")
    return "\n".join(lines) + "\n"
