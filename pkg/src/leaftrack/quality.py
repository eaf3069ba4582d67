"""Learned quality estimation: per-leaf alignment quality regression and
per-frame tracking-failure classification with temporal filtering."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .imaging import gaussian_smooth_1d

ALIGN_FEATURE_DIM = 6
TRACK_FEATURE_DIM = 15
REFERENCE_LAG = 20


@dataclass(frozen=True)
class AlignFeatures:
    """Six per-leaf alignment descriptors."""

    cm_distance: float
    mask_overlap: float
    outside_overlap: float
    area_ratio: float
    angle_diff: float
    center_dist: float

    def vector(self):
        return np.array(
            [
                self.cm_distance,
                self.mask_overlap,
                self.outside_overlap,
                self.area_ratio,
                self.angle_diff,
                self.center_dist,
            ]
        )


@dataclass(frozen=True)
class LeafSnapshot:
    """One leaf's state on one frame, as needed by the tracking features."""

    features: AlignFeatures
    pose: object
    warped_mask: np.ndarray
    center: np.ndarray


@dataclass(frozen=True)
class TrackFeatures:
    """Current alignment features, their drift against a reference frame,
    and pose/mask consistency with that reference."""

    current: AlignFeatures
    deltas: np.ndarray
    angle_change: float
    center_shift: float
    self_overlap: float

    def vector(self):
        return np.concatenate(
            [
                self.current.vector(),
                self.deltas,
                [self.angle_change, self.center_shift, self.self_overlap],
            ]
        )


def extract_align_features(cand, mask, plant_center):
    """Alignment descriptors of one candidate against the frame mask."""
    area = cand.area
    mask_area = mask.area
    if area == 0 or mask_area == 0:
        raise ValueError("empty mask")
    inter = float((cand.warped_mask & mask.bits).sum())
    outside = float((cand.warped_mask & (1 - mask.bits)).sum())
    center = cand.center
    sx = center[0] - plant_center[0]
    sy = center[1] - plant_center[1]
    s_n = math.hypot(sx, sy)
    if s_n == 0.0:
        angle_diff = 0.0
    else:
        angle_diff = abs(cand.pose.theta - math.asin(max(-1.0, min(1.0, sx / s_n))))
    return AlignFeatures(
        cm_distance=float(cand.d),
        mask_overlap=inter / mask_area,
        outside_overlap=outside / area,
        area_ratio=area / mask_area,
        angle_diff=angle_diff,
        center_dist=s_n,
    )


def extract_track_features(current, reference):
    """Tracking descriptors comparing a leaf with its reference snapshot."""
    cur_area = float(current.warped_mask.sum())
    if cur_area == 0:
        raise ValueError("empty current mask")
    both = float((current.warped_mask & reference.warped_mask).sum())
    dtheta = current.pose.theta - reference.pose.theta
    dtheta = (dtheta + math.pi) % (2.0 * math.pi) - math.pi
    return TrackFeatures(
        current=current.features,
        deltas=current.features.vector() - reference.features.vector(),
        angle_change=dtheta,
        center_shift=float(np.linalg.norm(current.center - reference.center)),
        self_overlap=both / cur_area,
    )


def reference_index(frame_pos, first_pos):
    """Position of the reference frame: REFERENCE_LAG processed frames
    earlier, clamped to the first frame the leaf was tracked."""
    return max(frame_pos - REFERENCE_LAG, first_pos)


@dataclass(frozen=True)
class RegressionModel:
    weights: np.ndarray
    bias: float

    def to_json(self):
        return {"kind": "align-quality", "weights": [float(w) for w in self.weights], "bias": float(self.bias)}

    @staticmethod
    def from_json(payload):
        if payload.get("kind") != "align-quality":
            raise ValueError("not an alignment-quality model")
        return RegressionModel(weights=np.asarray(payload["weights"], dtype=np.float64), bias=float(payload["bias"]))


@dataclass(frozen=True)
class SvmModel:
    weights: np.ndarray
    bias: float
    mean: np.ndarray
    scale: np.ndarray

    def to_json(self):
        return {
            "kind": "track-quality",
            "weights": [float(w) for w in self.weights],
            "bias": float(self.bias),
            "mean": [float(v) for v in self.mean],
            "scale": [float(v) for v in self.scale],
        }

    @staticmethod
    def from_json(payload):
        if payload.get("kind") != "track-quality":
            raise ValueError("not a tracking-quality model")
        return SvmModel(
            weights=np.asarray(payload["weights"], dtype=np.float64),
            bias=float(payload["bias"]),
            mean=np.asarray(payload["mean"], dtype=np.float64),
            scale=np.asarray(payload["scale"], dtype=np.float64),
        )


def alignment_quality_target(e_la):
    """Training target: twice the tip error, saturated at 1."""
    return min(2.0 * float(e_la), 1.0)


def _as_matrix(features):
    rows = []
    for f in features:
        rows.append(f.vector() if hasattr(f, "vector") else np.asarray(f, dtype=np.float64))
    return np.vstack(rows)


def train_regression(samples):
    """Least squares with intercept via the normal equations; a tiny ridge
    keeps the Gram matrix well conditioned."""
    if len(samples) < ALIGN_FEATURE_DIM + 1:
        raise ValueError("underdetermined")
    x = _as_matrix([s[0] for s in samples])
    y = np.asarray([float(s[1]) for s in samples])
    design = np.hstack([x, np.ones((x.shape[0], 1))])
    gram = design.T @ design + 1e-8 * np.eye(design.shape[1])
    sol = np.linalg.solve(gram, design.T @ y)
    return RegressionModel(weights=sol[:-1], bias=float(sol[-1]))


def predict_alignment_quality(model, features):
    """Predicted quality in [0, 1]; accepts one feature vector or many."""
    x = features.vector() if hasattr(features, "vector") else np.asarray(features, dtype=np.float64)
    raw = x @ model.weights + model.bias
    return float(np.clip(raw, 0.0, 1.0)) if np.ndim(raw) == 0 else np.clip(raw, 0.0, 1.0)


def r_squared(predicted, actual):
    predicted = np.asarray(predicted, dtype=np.float64)
    actual = np.asarray(actual, dtype=np.float64)
    ss_tot = float(((actual - actual.mean()) ** 2).sum())
    if ss_tot == 0.0:
        raise ValueError("zero variance")
    ss_res = float(((actual - predicted) ** 2).sum())
    return 1.0 - ss_res / ss_tot


def train_svm(samples, reg_c=1.0, epochs=200):
    """Linear SVM by deterministic subgradient descent on the hinge loss.

    Features are standardized per dimension; samples are visited in a
    fixed cyclic order so training is reproducible without a seed.
    """
    labels = np.asarray([int(s[1]) for s in samples])
    if not (np.any(labels == 1) and np.any(labels == -1)):
        raise ValueError("both classes required")
    if set(np.unique(labels)) - {-1, 1}:
        raise ValueError("labels must be -1 or +1")
    x = _as_matrix([s[0] for s in samples])
    mean = x.mean(axis=0)
    scale = x.std(axis=0)
    scale = np.where(scale > 0, scale, 1.0)
    z = (x - mean) / scale

    # bias rides along as a constant feature so it shares the decaying
    # step schedule; a separately stepped bias never settles
    z = np.hstack([z, np.ones((z.shape[0], 1))])
    n, dim = z.shape
    lam = 1.0 / (reg_c * n)
    w = np.zeros(dim)
    t = 0
    for _ in range(epochs):
        for i in range(n):
            t += 1
            eta = 1.0 / (lam * t)
            margin = labels[i] * (z[i] @ w)
            w *= 1.0 - eta * lam
            if margin < 1.0:
                w += eta * labels[i] * z[i]
    return SvmModel(weights=w[:-1], bias=float(w[-1]), mean=mean, scale=scale)


def svm_margin(model, features):
    x = features.vector() if hasattr(features, "vector") else np.asarray(features, dtype=np.float64)
    z = (x - model.mean) / model.scale
    return float(z @ model.weights + model.bias) if z.ndim == 1 else z @ model.weights + model.bias


def detect_tracking_failure(margins, sigma=3.0, min_run=5):
    """Failure intervals from per-frame margins: smooth, threshold at 0,
    and keep maximal negative runs of at least min_run frames.

    Returns (start, end) index pairs, ends inclusive.
    """
    margins = np.asarray(margins, dtype=np.float64)
    if margins.size == 0:
        return []
    smoothed = gaussian_smooth_1d(margins, sigma)
    failing = smoothed < 0.0
    runs = []
    start = None
    for i, bad in enumerate(failing):
        if bad and start is None:
            start = i
        elif not bad and start is not None:
            if i - start >= min_run:
                runs.append((start, i - 1))
            start = None
    if start is not None and margins.size - start >= min_run:
        runs.append((start, margins.size - 1))
    return runs
