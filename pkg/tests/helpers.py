"""Scene constructors shared by the test modules."""

import math

import numpy as np

from leaftrack import (
    LeafSpec,
    Pose,
    SynthSpec,
    TransformedCandidate,
    default_templates,
    render_video,
    warp_mask_grid,
    warp_tips,
)
from leaftrack.chamfer import NominationSet
from leaftrack.templates import IDENTITY_POSE

SCALES = [0.8, 1.0, 1.25, 1.6]
ROT_STEP = 15.0
HALF_LEN = 10.0


def centered_pose(tpl, scale, width, height):
    """Pose placing the template centroid at the frame center (rounded)."""
    c = tpl.centroid
    return Pose(0.0, scale,
                round((width - 1) / 2.0 - c[0]),
                round((height - 1) / 2.0 - c[1]))


def exact_candidate(tpl, pose, dims, leaf_id=None, d=0.0, l=0.0):
    """Candidate whose mask/tips are freshly derived from (template, pose)."""
    return TransformedCandidate(
        template=tpl,
        template_ref=-1,
        pose=pose,
        warped_mask=warp_mask_grid(tpl, pose, dims),
        d=d,
        l=l,
        tips=np.vstack(warp_tips(tpl, pose)),
        leaf_id=leaf_id,
    )


def single_leaf_scene(tpl, pose, *, dims=(64, 64), n_frames=1, noise=0.02,
                      blur=0.8, seed=23, intensity=0.85, **leaf_kwargs):
    spec = SynthSpec(dims[0], dims[1], n_frames,
                     (LeafSpec(pose0=pose, template=tpl, intensity=intensity,
                               **leaf_kwargs),),
                     noise=noise, blur_sigma=blur, seed=seed)
    frames, truth = render_video(spec)
    return spec, frames, truth


def iou(a, b):
    a = np.asarray(a).astype(bool)
    b = np.asarray(b).astype(bool)
    return (a & b).sum() / (a | b).sum()


def synthetic_nomination(rows, dvec, lvec, dims):
    """NominationSet over hand-built masks (no real chamfer scan)."""
    h, w = dims
    members = [
        TransformedCandidate(template=None, template_ref=i, pose=IDENTITY_POSE,
                             warped_mask=np.asarray(r).reshape(h, w).astype(np.uint8),
                             d=dvec[i], l=lvec[i], tips=np.zeros((2, 2)))
        for i, r in enumerate(rows)
    ]
    return NominationSet(candidates=members, A=np.vstack(rows).astype(np.float64),
                         d=np.asarray(dvec, dtype=np.float64),
                         l=np.asarray(lvec, dtype=np.float64))


def planted_instance(seed):
    """Selection instance with two known-good big leaves plus 3-8 distractor
    placements with poor match scores; returns (nomination, mask vector,
    number of planted leaves)."""
    basics = default_templates(4, HALF_LEN)
    rng = np.random.default_rng(seed)
    w = h = 44
    n_true = 2
    spots = [(12, 22), (32, 22)]
    base_theta = [0.0, math.pi]
    if rng.random() < 0.5:
        base_theta.reverse()
    rows, dvec, lvec, poses = [], [], [], []
    m = np.zeros((h, w), dtype=np.uint8)
    for i in range(n_true):
        tpl = basics[int(rng.integers(0, 4))]
        c = tpl.centroid
        theta = base_theta[i] + math.radians(float(rng.integers(-1, 2)) * 15.0)
        pose = Pose(theta, 2.0, spots[i][0] - c[0], spots[i][1] - c[1])
        grid = warp_mask_grid(tpl, pose, (w, h))
        m |= grid
        rows.append(grid.ravel().astype(np.float64))
        dvec.append(float(rng.uniform(0.04, 0.05)))
        lvec.append(float(rng.uniform(0.0, 0.0002)))
        poses.append(pose)
    n_dis = int(rng.integers(3, 9))
    tries = 0
    while len(rows) < n_true + n_dis and tries < 300:
        tries += 1
        tpl = basics[int(rng.integers(0, 4))]
        base = poses[int(rng.integers(0, n_true))]
        dx, dy = rng.integers(-16, 17, size=2)
        pose = Pose(base.theta + math.radians(float(rng.integers(0, 24)) * 15.0),
                    [1.6, 2.0][int(rng.integers(0, 2))],
                    base.tx + float(dx), base.ty + float(dy))
        grid = warp_mask_grid(tpl, pose, (w, h))
        a = int(grid.sum())
        if a == 0:
            continue
        if float((grid & m).sum()) / a > 0.6:
            continue
        rows.append(grid.ravel().astype(np.float64))
        dvec.append(float(rng.uniform(3.0, 8.0)))
        lvec.append(float(rng.uniform(0.001, 0.01)))
    nom = synthetic_nomination(rows, dvec, lvec, (h, w))
    return nom, m.ravel().astype(np.float64), n_true
