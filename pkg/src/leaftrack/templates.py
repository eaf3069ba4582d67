"""Leaf templates, similarity-warp poses, and the template library.

A pose p = (theta, r, tx, ty) acts on template coordinates about the
template centroid: warped = r * R(theta) (u - c) + (tx, ty) + c. At
theta = 0 a template's outer tip points up (-y); theta = pi/2 turns it
east (+x) under the image convention of y growing downward.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .imaging import BinaryMask

TEMPLATE_FORMAT = 1


@dataclass(frozen=True)
class Pose:
    theta: float
    r: float
    tx: float
    ty: float

    def __post_init__(self):
        if not self.r > 0:
            raise ValueError("scale must be positive")
        t = float(self.theta) % (2.0 * math.pi)
        if t > math.pi:
            t -= 2.0 * math.pi
        object.__setattr__(self, "theta", t)
        object.__setattr__(self, "r", float(self.r))
        object.__setattr__(self, "tx", float(self.tx))
        object.__setattr__(self, "ty", float(self.ty))

    def as_array(self):
        return np.array([self.theta, self.r, self.tx, self.ty])

    @staticmethod
    def from_array(arr):
        return Pose(theta=arr[0], r=arr[1], tx=arr[2], ty=arr[3])


IDENTITY_POSE = Pose(theta=0.0, r=1.0, tx=0.0, ty=0.0)


def rotation_matrix(theta):
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


@dataclass(frozen=True)
class LeafTemplate:
    """Basic leaf shape: edge points, filled mask, and two labeled tips,
    all in template-space (x, y) coordinates."""

    shape_id: str
    edge_points: np.ndarray
    mask: BinaryMask
    tip_outer: np.ndarray
    tip_inner: np.ndarray

    def __post_init__(self):
        pts = np.ascontiguousarray(np.asarray(self.edge_points, dtype=np.float64).reshape(-1, 2))
        pts.setflags(write=False)
        object.__setattr__(self, "edge_points", pts)
        object.__setattr__(self, "tip_outer", np.asarray(self.tip_outer, dtype=np.float64))
        object.__setattr__(self, "tip_inner", np.asarray(self.tip_inner, dtype=np.float64))

    @property
    def centroid(self):
        return self.edge_points.mean(axis=0)

    @property
    def length(self):
        return float(np.linalg.norm(self.tip_outer - self.tip_inner))


@dataclass(frozen=True)
class LibraryEntry:
    shape_index: int
    scale: float
    rotation: float


class TemplateLibrary:
    """All (shape, scale, rotation) combinations, enumerated shape-major."""

    def __init__(self, basic, scales, rotations):
        if not basic:
            raise ValueError("template library needs at least one shape")
        scales = [float(s) for s in scales]
        if any(s <= 0 for s in scales):
            raise ValueError("scales must be positive")
        if any(b >= a for a, b in zip(scales[1:], scales)):
            raise ValueError("scales must be strictly increasing")
        self.basic = list(basic)
        self.scales = tuple(scales)
        self.rotations = tuple(float(r) for r in rotations)
        self.entries = [
            LibraryEntry(shape_index=i, scale=s, rotation=rot)
            for i in range(len(self.basic))
            for s in self.scales
            for rot in self.rotations
        ]

    def __len__(self):
        return len(self.entries)

    def entry_pose(self, index, tx=0.0, ty=0.0):
        e = self.entries[index]
        return Pose(theta=e.rotation, r=e.scale, tx=tx, ty=ty)

    def entry_template(self, index):
        return self.basic[self.entries[index].shape_index]


def build_library(basic, scales, rotation_step_deg):
    """Library over all combinations; rotations every ``rotation_step_deg``
    covering the full circle."""
    step = int(rotation_step_deg)
    if step <= 0 or 360 % step != 0:
        raise ValueError("rotation step must divide 360")
    rotations = [math.radians(k * step) for k in range(360 // step)]
    return TemplateLibrary(basic=basic, scales=scales, rotations=rotations)


def forward_warp(points, template_centroid, pose):
    """Similarity warp of template points into frame coordinates."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    c = np.asarray(template_centroid, dtype=np.float64)
    q = pts - c
    ct, st = math.cos(pose.theta), math.sin(pose.theta)
    out = np.empty_like(q)
    out[:, 0] = pose.r * (ct * q[:, 0] - st * q[:, 1]) + pose.tx + c[0]
    out[:, 1] = pose.r * (st * q[:, 0] + ct * q[:, 1]) + pose.ty + c[1]
    return out


def inverse_warp(points, template_centroid, pose):
    """Analytic inverse of forward_warp (frame to template coordinates)."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    c = np.asarray(template_centroid, dtype=np.float64)
    dx = pts[:, 0] - pose.tx - c[0]
    dy = pts[:, 1] - pose.ty - c[1]
    ct, st = math.cos(pose.theta), math.sin(pose.theta)
    out = np.empty_like(pts)
    out[:, 0] = (ct * dx + st * dy) / pose.r + c[0]
    out[:, 1] = (ct * dy - st * dx) / pose.r + c[1]
    return out


def warp_tips(template, pose):
    """Warped (tip_outer, tip_inner), order preserved."""
    tips = np.vstack([template.tip_outer, template.tip_inner])
    warped = forward_warp(tips, template.centroid, pose)
    return warped[0], warped[1]


def warp_mask_grid(template, pose, frame_dims):
    """Warped template mask rasterized on the frame grid (2-D uint8).

    Each frame pixel center is pulled back through the inverse warp and
    sampled from the template mask with nearest-neighbor rounding.
    """
    w, h = int(frame_dims[0]), int(frame_dims[1])
    if w <= 0 or h <= 0:
        raise ValueError("frame dimensions must be positive")
    mh, mw = template.mask.bits.shape
    corners = np.array(
        [[-0.5, -0.5], [mw - 0.5, -0.5], [-0.5, mh - 0.5], [mw - 0.5, mh - 0.5]]
    )
    warped = forward_warp(corners, template.centroid, pose)
    x_lo = max(int(math.floor(warped[:, 0].min())) - 1, 0)
    x_hi = min(int(math.ceil(warped[:, 0].max())) + 2, w)
    y_lo = max(int(math.floor(warped[:, 1].min())) - 1, 0)
    y_hi = min(int(math.ceil(warped[:, 1].max())) + 2, h)
    c = template.centroid
    return _kernels.warp_mask_nn(
        template.mask.bits,
        math.cos(pose.theta),
        math.sin(pose.theta),
        1.0 / pose.r,
        pose.tx,
        pose.ty,
        c[0],
        c[1],
        w,
        h,
        x_lo,
        max(x_hi, x_lo),
        y_lo,
        max(y_hi, y_lo),
    )


def backward_warp_mask(template, pose, frame_dims):
    """Warped template mask flattened row-major to a K-dim 0/1 vector."""
    return warp_mask_grid(template, pose, frame_dims).ravel()


def _ovate_halfwidth(dy, half_length, aspect, taper):
    rel = np.clip(dy / half_length, -1.0, 1.0)
    return half_length * aspect * np.sqrt(1.0 - rel * rel) * (1.0 + taper * rel)


def make_ovate_template(shape_id, half_length=10.0, aspect=0.4, taper=0.0, n_edge=64):
    """Analytic leaf shape: an ellipse whose width tapers toward the outer
    tip; taper = 0 gives a plain ellipse."""
    if not 0 < aspect:
        raise ValueError("aspect must be positive")
    if not -0.9 < taper < 0.9:
        raise ValueError("taper must stay in (-0.9, 0.9)")
    half_w = half_length * aspect * (1.0 + abs(taper))
    mw = 2 * int(math.ceil(half_w)) + 5
    mh = 2 * int(math.ceil(half_length)) + 5
    cx = (mw - 1) / 2.0
    cy = (mh - 1) / 2.0

    phi = np.linspace(0.0, 2.0 * math.pi, n_edge, endpoint=False)
    ey = -half_length * np.cos(phi)
    ex = half_length * aspect * np.sin(phi) * (1.0 - taper * np.cos(phi))
    pts = np.column_stack([ex + cx, ey + cy])

    iy, ix = np.mgrid[0:mh, 0:mw]
    dy = iy - cy
    dx = ix - cx
    inside = (np.abs(dy) <= half_length) & (np.abs(dx) <= _ovate_halfwidth(dy, half_length, aspect, taper))
    mask = BinaryMask(bits=inside.astype(np.uint8))

    return LeafTemplate(
        shape_id=shape_id,
        edge_points=pts,
        mask=mask,
        tip_outer=np.array([cx, cy - half_length]),
        tip_inner=np.array([cx, cy + half_length]),
    )


DEFAULT_SHAPE_PARAMS = [
    (0.32, 0.00),
    (0.45, 0.00),
    (0.38, 0.25),
    (0.50, 0.30),
    (0.28, 0.45),
    (0.42, 0.45),
    (0.60, 0.15),
    (0.35, 0.15),
    (0.55, 0.45),
    (0.48, 0.08),
]


def default_templates(count=4, half_length=10.0):
    """Bundled generator: ``count`` elliptical/ovate shapes."""
    if not 1 <= count <= len(DEFAULT_SHAPE_PARAMS):
        raise ValueError(f"count must be in 1..{len(DEFAULT_SHAPE_PARAMS)}")
    out = []
    for i in range(count):
        aspect, taper = DEFAULT_SHAPE_PARAMS[i]
        sid = f"ovate-{int(round(aspect * 100)):03d}-{int(round(taper * 100)):03d}"
        out.append(make_ovate_template(sid, half_length=half_length, aspect=aspect, taper=taper))
    return out


def _rle_encode(bits):
    rows = []
    for row in bits:
        runs = []
        x = 0
        w = row.shape[0]
        while x < w:
            if row[x]:
                start = x
                while x < w and row[x]:
                    x += 1
                runs.extend([start, x - start])
            else:
                x += 1
        rows.append(runs)
    return rows


def _rle_decode(rows, width):
    bits = np.zeros((len(rows), width), dtype=np.uint8)
    for y, runs in enumerate(rows):
        if len(runs) % 2 != 0:
            raise ValueError("malformed mask run-length row")
        for k in range(0, len(runs), 2):
            start, length = runs[k], runs[k + 1]
            bits[y, start : start + length] = 1
    return bits


def validate_template(tpl):
    """Checks the geometric contract: tips near the edge contour and the
    mask boundary near the edge points."""
    pts = tpl.edge_points
    if pts.shape[0] < 3:
        raise ValueError("template needs at least 3 edge points")
    for name, tip in (("tip_outer", tpl.tip_outer), ("tip_inner", tpl.tip_inner)):
        d = np.min(np.hypot(pts[:, 0] - tip[0], pts[:, 1] - tip[1]))
        if d > 1.0 + 1e-6:
            raise ValueError(f"{name} lies {d:.2f} px from the edge contour (limit 1)")
    bits = tpl.mask.bits.astype(bool)
    if not bits.any():
        raise ValueError("template mask is empty")
    interior = np.zeros_like(bits)
    interior[1:-1, 1:-1] = (
        bits[1:-1, 1:-1]
        & bits[:-2, 1:-1]
        & bits[2:, 1:-1]
        & bits[1:-1, :-2]
        & bits[1:-1, 2:]
    )
    by, bx = np.nonzero(bits & ~interior)
    dists = np.hypot(bx[:, None] - pts[None, :, 0], by[:, None] - pts[None, :, 1]).min(axis=1)
    worst = float(dists.max())
    if worst > 1.5 + 1e-6:
        raise ValueError(f"mask boundary strays {worst:.2f} px from the edge points (limit 1.5)")


def save_templates(path, tpls):
    payload = {
        "format": TEMPLATE_FORMAT,
        "templates": [
            {
                "shape_id": t.shape_id,
                "edge_points": [[float(x), float(y)] for x, y in t.edge_points],
                "mask": {
                    "width": t.mask.width,
                    "height": t.mask.height,
                    "rows": _rle_encode(t.mask.bits),
                },
                "tip_outer": [float(t.tip_outer[0]), float(t.tip_outer[1])],
                "tip_inner": [float(t.tip_inner[0]), float(t.tip_inner[1])],
            }
            for t in tpls
        ],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh)


def load_templates(path):
    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    if payload.get("format") != TEMPLATE_FORMAT:
        raise ValueError(f"unsupported template format: {payload.get('format')!r}")
    out = []
    for item in payload["templates"]:
        bits = _rle_decode(item["mask"]["rows"], item["mask"]["width"])
        if bits.shape[0] != item["mask"]["height"]:
            raise ValueError("mask row count does not match height")
        tpl = LeafTemplate(
            shape_id=item["shape_id"],
            edge_points=np.asarray(item["edge_points"], dtype=np.float64),
            mask=BinaryMask(bits=bits),
            tip_outer=np.asarray(item["tip_outer"], dtype=np.float64),
            tip_inner=np.asarray(item["tip_inner"], dtype=np.float64),
        )
        validate_template(tpl)
        out.append(tpl)
    if not out:
        raise ValueError("template file contains no templates")
    return out
