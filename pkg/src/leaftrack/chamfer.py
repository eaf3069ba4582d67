"""Chamfer matching: per-candidate distance, exhaustive translation
nomination over the template library, overlap pruning, and tip snapping."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from . import _kernels
from .imaging import mask_centroid
from .templates import Pose, forward_warp, warp_mask_grid, warp_tips


@dataclass
class TransformedCandidate:
    """A template placed in the frame: pose, rasterized mask, match scores,
    and snapped tips. leaf_id is assigned when the candidate is selected."""

    template: object
    template_ref: int
    pose: Pose
    warped_mask: np.ndarray
    d: float
    l: float
    tips: np.ndarray
    leaf_id: int | None = None

    @property
    def area(self):
        return int(self.warped_mask.sum())

    @property
    def center(self):
        """Warped centroid of the template edge points (exact: the warp
        fixes the centroid up to translation)."""
        c = self.template.centroid
        return np.array([c[0] + self.pose.tx, c[1] + self.pose.ty])

    def with_pose(self, pose, frame_dims, dt, edges, plant_center, diag):
        """Re-derive mask, scores, and tips at a new pose."""
        warped = forward_warp(self.template.edge_points, self.template.centroid, pose)
        mask = warp_mask_grid(self.template, pose, frame_dims)
        d = cm_distance(warped, dt)
        l = angle_term(pose, warped, plant_center, diag)
        tips = snap_tips(np.vstack(warp_tips(self.template, pose)), edges)
        return replace(self, pose=pose, warped_mask=mask, d=d, l=l, tips=tips)


@dataclass
class NominationSet:
    """Surviving candidates plus their stacked masks and score vectors."""

    candidates: list
    A: np.ndarray
    d: np.ndarray
    l: np.ndarray

    def __len__(self):
        return len(self.candidates)


def cm_distance(warped_points, dt):
    """Average distance-field value over the warped template points.

    The field is sampled bilinearly; points outside the frame clamp to the
    border and add their out-of-bounds distance as a penalty.
    """
    pts = np.asarray(warped_points, dtype=np.float64).reshape(-1, 2)
    if pts.shape[0] == 0:
        raise ValueError("empty point list")
    costs = _kernels.point_costs(np.ascontiguousarray(dt.dist), pts[:, 0].copy(), pts[:, 1].copy())
    return float(costs.sum() / pts.shape[0])


def angle_term(pose, warped_points, plant_center, diag):
    """Squared mismatch between the leaf direction implied by theta and the
    leaf center's eastward offset from the plant center, weighted by the
    center distance and normalized by the frame diagonal."""
    if diag <= 0:
        raise ValueError("diagonal must be positive")
    pts = np.asarray(warped_points, dtype=np.float64).reshape(-1, 2)
    c = pts.mean(axis=0)
    sx = c[0] - plant_center[0]
    sy = c[1] - plant_center[1]
    s_n = math.hypot(sx, sy)
    if s_n == 0.0:
        return 0.0
    e = sx - s_n * math.sin(pose.theta)
    return (e * e) / (diag * diag)


def snap_tips(warped_tips, edges):
    """Replace each tip estimate by its nearest edge point; ties go to the
    lowest point index."""
    tips = np.asarray(warped_tips, dtype=np.float64).reshape(-1, 2)
    pts = edges.points
    out = np.empty_like(tips)
    for i, tip in enumerate(tips):
        d2 = (pts[:, 0] - tip[0]) ** 2 + (pts[:, 1] - tip[1]) ** 2
        out[i] = pts[int(np.argmin(d2))]
    return out


def _scan_entry(library, index, dt, bbox, frame_dims, plant_center, diag):
    """Best integer translation for one library entry, by total cost."""
    template = library.entry_template(index)
    base_pose = library.entry_pose(index)
    base = forward_warp(template.edge_points, template.centroid, base_pose)
    c = template.centroid
    leaf_size = base_pose.r * template.length
    pad = 0.25 * leaf_size
    x_min, x_max, y_min, y_max = bbox
    tx0 = math.ceil(x_min - pad - c[0])
    tx1 = math.floor(x_max + pad - c[0])
    ty0 = math.ceil(y_min - pad - c[1])
    ty1 = math.floor(y_max + pad - c[1])
    nx = max(tx1 - tx0 + 1, 1)
    ny = max(ty1 - ty0 + 1, 1)
    grid = _kernels.translation_scan(
        np.ascontiguousarray(dt.dist),
        base[:, 0].copy(),
        base[:, 1].copy(),
        float(tx0),
        float(ty0),
        nx,
        ny,
    )
    flat = int(np.argmin(grid))
    ti, tj = divmod(flat, nx)
    pose = library.entry_pose(index, tx=float(tx0 + tj), ty=float(ty0 + ti))
    d = float(grid[ti, tj] / base.shape[0])
    warped = base + np.array([pose.tx, pose.ty])
    l = angle_term(pose, warped, plant_center, diag)
    return template, pose, d, l


def nominate(library, edges, dt, mask, overlap_min=0.85, plant_center=None, jobs=1):
    """Place every library entry at its cost-minimizing integer translation
    within the mask bounding box (inflated by 25% of leaf size), then prune
    placements whose overlap with the mask is below overlap_min."""
    if len(library) == 0:
        raise ValueError("template library is empty")
    if mask.area == 0:
        raise ValueError("empty frame mask")
    ys, xs = np.nonzero(mask.bits)
    bbox = (float(xs.min()), float(xs.max()), float(ys.min()), float(ys.max()))
    frame_dims = (mask.width, mask.height)
    diag = math.hypot(mask.width, mask.height)
    if plant_center is None:
        plant_center = mask_centroid(mask)

    def scan(i):
        return _scan_entry(library, i, dt, bbox, frame_dims, plant_center, diag)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            scans = list(pool.map(scan, range(len(library))))
    else:
        scans = [scan(i) for i in range(len(library))]

    mask_bits = mask.bits
    candidates = []
    for index, (template, pose, d, l) in enumerate(scans):
        grid = warp_mask_grid(template, pose, frame_dims)
        area = int(grid.sum())
        if area == 0:
            continue
        overlap = float((grid & mask_bits).sum()) / area
        if overlap < overlap_min:
            continue
        tips = snap_tips(np.vstack(warp_tips(template, pose)), edges)
        candidates.append(
            TransformedCandidate(
                template=template,
                template_ref=index,
                pose=pose,
                warped_mask=grid,
                d=d,
                l=l,
                tips=tips,
            )
        )
    if not candidates:
        raise ValueError("no viable candidates")
    A = np.stack([c.warped_mask.ravel() for c in candidates]).astype(np.float64)
    d = np.array([c.d for c in candidates])
    l = np.array([c.l for c in candidates])
    return NominationSet(candidates=candidates, A=A, d=d, l=l)
