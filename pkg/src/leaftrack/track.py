"""Frame-to-frame multi-leaf tracking.

Poses of all selected candidates are refined jointly by gradient descent
on a three-term objective: mean template-to-edge distance, coverage
mismatch between the synthesized and observed masks, and the angle
penalty. The coverage term couples all leaves through the shared
synthesized mask. After convergence, undersized candidates are deleted
and uncovered mask regions spawn new ones.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .chamfer import nominate
from .imaging import (
    BinaryMask,
    GrayImage,
    connected_components,
    distance_transform,
    edge_raster,
    foreground_mask,
    mask_centroid,
    sobel_edges,
)
from .smooth import distance_spline, soft_mask_spline, soften_mask
from .templates import Pose, TemplateLibrary, forward_warp, warp_tips

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrackConfig:
    mask_weight: float = 1.0
    angle_weight: float = 10.0
    step_size: float = 0.001
    max_iters: int = 80
    conv_eps: float = 1e-4
    min_leaf_area: int = 64
    mask_sigma: float = 1.0
    overlap_min: float = 0.85
    edge_threshold: float = 0.10

    def __post_init__(self):
        for name in ("step_size", "max_iters", "conv_eps", "min_leaf_area", "mask_sigma"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        # weights may be zeroed to study one term in isolation
        for name in ("mask_weight", "angle_weight"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")


@dataclass
class LeafRecord:
    leaf_id: int
    pose: Pose
    tips: np.ndarray
    d: float
    area: int
    q_align: float | None = None
    q_track: float | None = None


@dataclass
class FrameResult:
    frame_index: int
    leaves: list = field(default_factory=list)


class FrameFields:
    """Per-frame rasters and smooth interpolants shared by the objective,
    its gradient, and the candidate lifecycle."""

    def __init__(self, mask, edges, dt, mask_sigma=1.0, plant_center=None):
        self.mask = mask
        self.edges = edges
        self.dt = dt
        self.mask_sigma = float(mask_sigma)
        self.frame_dims = (mask.width, mask.height)
        self.k = mask.width * mask.height
        self.diag = math.hypot(mask.width, mask.height)
        self.plant_center = mask_centroid(mask) if plant_center is None else np.asarray(plant_center, dtype=np.float64)
        self.dt_spline = distance_spline(edge_raster(edges))
        self.soft_mask = soften_mask(mask.bits, self.mask_sigma)


def prepare_frame(frame, cfg):
    """Segment, detect edges, and build the smooth fields for one frame."""
    mask = foreground_mask(frame)
    if mask.area == 0:
        raise ValueError("plant lost")
    edges = sobel_edges(frame, mask, cfg.edge_threshold)
    dt = distance_transform(edges)
    return FrameFields(mask, edges, dt, mask_sigma=cfg.mask_sigma)


_MASK_SPLINES = {}


def _template_spline(template, sigma):
    key = (id(template), float(sigma))
    hit = _MASK_SPLINES.get(key)
    if hit is None:
        spline = soft_mask_spline(template.mask.bits, sigma)
        _MASK_SPLINES[key] = (template, spline)  # keep template alive so its id stays unique
        return spline
    return hit[1]


def _angle_value_grad(pose, centroid, plant_center, diag):
    """Angle penalty of one leaf and its derivative in (theta, r, tx, ty).

    Uses the warped-centroid identity (centroid moves only with t), which
    makes the term independent of r.
    """
    cx = centroid[0] + pose.tx
    cy = centroid[1] + pose.ty
    sx = cx - plant_center[0]
    sy = cy - plant_center[1]
    s = math.hypot(sx, sy)
    if s == 0.0:
        return 0.0, np.zeros(4)
    st = math.sin(pose.theta)
    ct = math.cos(pose.theta)
    e = sx - s * st
    scale = 2.0 * e / (diag * diag)
    grad = np.array(
        [
            scale * (-s * ct),
            0.0,
            scale * (1.0 - (sx / s) * st),
            scale * (-(sy / s) * st),
        ]
    )
    return (e * e) / (diag * diag), grad


def _support_pixels(spline, pose, centroid, frame_dims):
    """Frame pixels whose pull-back can land inside the template spline
    domain; everything outside contributes exactly zero."""
    w, h = frame_dims
    corners = np.array(
        [
            [spline.x0, spline.y0],
            [spline.x1, spline.y0],
            [spline.x0, spline.y1],
            [spline.x1, spline.y1],
        ]
    )
    warped = forward_warp(corners, centroid, pose)
    xlo = max(int(math.floor(warped[:, 0].min())), 0)
    xhi = min(int(math.ceil(warped[:, 0].max())), w - 1)
    ylo = max(int(math.floor(warped[:, 1].min())), 0)
    yhi = min(int(math.ceil(warped[:, 1].max())), h - 1)
    if xhi < xlo or yhi < ylo:
        return None
    ys, xs = np.mgrid[ylo : yhi + 1, xlo : xhi + 1]
    return xs.ravel().astype(np.float64), ys.ravel().astype(np.float64)


def _coverage_parts(poses, cands, fields, cfg):
    """Synthesized soft mask and the per-leaf pieces its gradient needs."""
    w, h = fields.frame_dims
    synth = np.zeros((h, w))
    parts = []
    for pose, cand in zip(poses, cands):
        spline = _template_spline(cand.template, cfg.mask_sigma)
        centroid = cand.template.centroid
        pix = _support_pixels(spline, pose, centroid, fields.frame_dims)
        if pix is None:
            parts.append(None)
            continue
        xs, ys = pix
        ct = math.cos(pose.theta)
        st = math.sin(pose.theta)
        dx = xs - pose.tx - centroid[0]
        dy = ys - pose.ty - centroid[1]
        px = (ct * dx + st * dy) / pose.r + centroid[0]
        py = (ct * dy - st * dx) / pose.r + centroid[1]
        vals = spline.value(px, py)
        synth[ys.astype(np.intp), xs.astype(np.intp)] += vals
        parts.append((spline, xs, ys, dx, dy, px, py))
    return synth, parts


def tracking_objective(poses, cands, fields, cfg):
    """G = mean edge distance + coverage mismatch + mean angle penalty."""
    n = len(cands)
    if n == 0:
        raise ValueError("empty candidate set")
    dist_total = 0.0
    angle_total = 0.0
    for pose, cand in zip(poses, cands):
        warped = forward_warp(cand.template.edge_points, cand.template.centroid, pose)
        dist_total += fields.dt_spline.value(warped[:, 0], warped[:, 1]).mean()
        angle_total += _angle_value_grad(pose, cand.template.centroid, fields.plant_center, fields.diag)[0]
    synth, _ = _coverage_parts(poses, cands, fields, cfg)
    coverage = float(((synth - fields.soft_mask) ** 2).sum()) / fields.k
    return dist_total / n + cfg.mask_weight * coverage + cfg.angle_weight * angle_total / n


def tracking_gradient(poses, cands, fields, cfg):
    """Per-leaf gradient of tracking_objective, rows (theta, r, tx, ty)."""
    n = len(cands)
    if n == 0:
        raise ValueError("empty candidate set")
    grads = np.zeros((n, 4))

    synth, parts = _coverage_parts(poses, cands, fields, cfg)
    resid = synth - fields.soft_mask

    for i, (pose, cand) in enumerate(zip(poses, cands)):
        template = cand.template
        centroid = template.centroid
        ct = math.cos(pose.theta)
        st = math.sin(pose.theta)

        # edge-distance term: chain rule through the forward warp
        q = template.edge_points - centroid
        warped = forward_warp(template.edge_points, centroid, pose)
        gx, gy = fields.dt_spline.gradient(warped[:, 0], warped[:, 1])
        rot_x = ct * q[:, 0] - st * q[:, 1]
        rot_y = st * q[:, 0] + ct * q[:, 1]
        dtheta = (gx * (-pose.r * rot_y) + gy * (pose.r * rot_x)).mean()
        dr = (gx * rot_x + gy * rot_y).mean()
        dtx = gx.mean()
        dty = gy.mean()
        grads[i] += np.array([dtheta, dr, dtx, dty]) / n

        # coverage term: chain rule through the inverse warp
        if parts[i] is not None:
            spline, xs, ys, dx, dy, px, py = parts[i]
            res = resid[ys.astype(np.intp), xs.astype(np.intp)]
            mgx, mgy = spline.gradient(px, py)
            inv_r = 1.0 / pose.r
            # d(pull-back)/d(theta, r, tx, ty)
            px_t = inv_r * (-st * dx + ct * dy)
            py_t = inv_r * (-ct * dx - st * dy)
            px_r = -(px - centroid[0]) * inv_r
            py_r = -(py - centroid[1]) * inv_r
            w = 2.0 * cfg.mask_weight / fields.k
            grads[i, 0] += w * float(res @ (mgx * px_t + mgy * py_t))
            grads[i, 1] += w * float(res @ (mgx * px_r + mgy * py_r))
            grads[i, 2] += w * float(res @ (mgx * (-inv_r * ct) + mgy * (inv_r * st)))
            grads[i, 3] += w * float(res @ (mgx * (-inv_r * st) + mgy * (-inv_r * ct)))

        # angle term
        _, agrad = _angle_value_grad(pose, centroid, fields.plant_center, fields.diag)
        grads[i] += cfg.angle_weight * agrad / n

    return grads


def delete_small(cands, cfg):
    """Drop members whose rasterized area is strictly below the minimum."""
    from .align import CandidateSet

    kept = [m for m in cands.members if m.area >= cfg.min_leaf_area]
    return CandidateSet(members=kept, next_id=cands.next_id)


def _component_major_length(comp):
    ys, xs = np.nonzero(comp.bits)
    mx, my = xs.mean(), ys.mean()
    cxx = ((xs - mx) ** 2).mean()
    cyy = ((ys - my) ** 2).mean()
    cxy = ((xs - mx) * (ys - my)).mean()
    half_trace = 0.5 * (cxx + cyy)
    det = cxx * cyy - cxy * cxy
    lam = half_trace + math.sqrt(max(half_trace * half_trace - det, 0.0))
    # solid ellipse with semi-major a has variance a^2/4 along its axis
    return 4.0 * math.sqrt(max(lam, 0.0))


def _nearest_scales(library, target_length, count=3):
    mean_len = float(np.mean([t.length for t in library.basic]))
    ranked = sorted(library.scales, key=lambda s: (abs(s * mean_len - target_length), s))
    return sorted(ranked[:count])


def spawn_new(cands, mask, library, cfg, plant_center=None):
    """Nominate new candidates on large uncovered mask components.

    The residue is the mask minus the clamped union of current warped
    masks; each big enough component is matched against all shapes at the
    3 scales nearest its equivalent-ellipse length, over all rotations.
    """
    from .align import CandidateSet

    w, h = mask.width, mask.height
    synth = np.zeros((h, w), dtype=np.int64)
    for m in cands.members:
        synth += m.warped_mask
    residue = np.clip(mask.bits.astype(np.int64) - np.minimum(synth, 1), 0, 1).astype(np.uint8)
    members = list(cands.members)
    next_id = cands.next_id
    if plant_center is None and mask.area > 0:
        plant_center = mask_centroid(mask)
    for comp, area in connected_components(BinaryMask(bits=residue)):
        if area < cfg.min_leaf_area:
            break
        try:
            comp_img = GrayImage(data=comp.bits.astype(np.float64))
            comp_edges = sobel_edges(comp_img, comp, cfg.edge_threshold)
            comp_dt = distance_transform(comp_edges)
            scales = _nearest_scales(library, _component_major_length(comp))
            reduced = TemplateLibrary(basic=library.basic, scales=scales, rotations=library.rotations)
            nom = nominate(
                reduced,
                comp_edges,
                comp_dt,
                comp,
                overlap_min=cfg.overlap_min,
                plant_center=plant_center,
            )
        except ValueError as err:
            log.warning("spawn skipped a %d px component: %s", area, err)
            continue
        best = min(nom.candidates, key=lambda c: c.d)
        members.append(replace(best, template_ref=-1, leaf_id=next_id))
        next_id += 1
    return CandidateSet(members=members, next_id=next_id)


def make_frame_result(frame_index, cands):
    leaves = [
        LeafRecord(leaf_id=m.leaf_id, pose=m.pose, tips=m.tips, d=m.d, area=m.area)
        for m in cands.members
    ]
    return FrameResult(frame_index=frame_index, leaves=leaves)


def track_frame(prev, frame, library, cfg, frame_index=0):
    """Advance the candidate set to one new frame.

    Returns the updated set and its result record. Raises "plant lost"
    when the frame mask is empty or every candidate dies.
    """
    if len(prev) == 0:
        raise ValueError("empty candidate set")
    fields = prepare_frame(frame, cfg)
    poses = [m.pose for m in prev.members]
    for _ in range(cfg.max_iters):
        grads = tracking_gradient(poses, prev.members, fields, cfg)
        step = cfg.step_size * grads
        new_poses = []
        for pose, delta in zip(poses, step):
            new_poses.append(
                Pose(
                    theta=pose.theta - delta[0],
                    r=max(pose.r - delta[1], 1e-3),
                    tx=pose.tx - delta[2],
                    ty=pose.ty - delta[3],
                )
            )
        poses = new_poses
        if float(np.abs(step).max()) < cfg.conv_eps:
            break

    from .align import CandidateSet

    moved = [
        m.with_pose(pose, fields.frame_dims, fields.dt, fields.edges, fields.plant_center, fields.diag)
        for m, pose in zip(prev.members, poses)
    ]
    current = CandidateSet(members=moved, next_id=prev.next_id)
    current = delete_small(current, cfg)
    current = spawn_new(current, fields.mask, library, cfg, plant_center=fields.plant_center)
    if len(current) == 0:
        raise ValueError("plant lost")
    return current, make_frame_result(frame_index, current)


def track_video(frames, library, align_cfg, track_cfg, jobs=1):
    """Align on the last frame, then track backward to the first; results
    come back in original temporal order with consistent leaf IDs."""
    from .align import select_candidates

    if not frames:
        raise ValueError("empty video")
    last = len(frames) - 1
    fields = prepare_frame(frames[last], track_cfg)
    nom = nominate(
        library,
        fields.edges,
        fields.dt,
        fields.mask,
        overlap_min=track_cfg.overlap_min,
        plant_center=fields.plant_center,
        jobs=jobs,
    )
    current = select_candidates(nom, fields.mask.vector().astype(np.float64), align_cfg)
    results = [make_frame_result(last, current)]
    for idx in range(last - 1, -1, -1):
        current, res = track_frame(current, frames[idx], library, track_cfg, frame_index=idx)
        results.append(res)
    results.sort(key=lambda r: r.frame_index)
    return results
