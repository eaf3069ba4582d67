"""Quantitative evaluation against tip labels: per-frame greedy leaf
matching, video-level identity correspondence, and the unmatched-rate /
landmark-error / consistency curves over the threshold grid."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

TAU_GRID = [round(i * 0.01, 2) for i in range(101)]


def tip_error(est, lab):
    """Mean tip displacement normalized by the labeled leaf length; tips
    are compared in stored order (outer to outer, inner to inner)."""
    est = np.asarray(est, dtype=np.float64).reshape(4)
    lab = np.asarray(lab, dtype=np.float64).reshape(4)
    length = math.hypot(lab[0] - lab[2], lab[1] - lab[3])
    if length == 0.0:
        raise ValueError("zero labeled leaf length")
    d1 = math.hypot(est[0] - lab[0], est[1] - lab[1])
    d2 = math.hypot(est[2] - lab[2], est[3] - lab[3])
    return (d1 + d2) / (2.0 * length)


@dataclass
class MatchResult:
    """Greedy frame-level assignment between estimated and labeled leaves."""

    f: int
    ER: np.ndarray
    ID: np.ndarray
    matched_mask: np.ndarray
    pairs: list = field(default_factory=list)


def leaf_match(est, lab):
    """Pair estimations with labels by repeatedly taking the globally
    smallest tip error and retiring its row and column; ties resolve to
    the lowest (row, column)."""
    est = np.asarray(est, dtype=np.float64).reshape(-1, 4)
    lab = np.asarray(lab, dtype=np.float64).reshape(-1, 4)
    n_est, n_lab = est.shape[0], lab.shape[0]
    er = np.zeros((n_est, n_lab))
    ident = np.zeros((n_est, n_lab), dtype=np.uint8)
    mask = np.zeros((n_est, n_lab), dtype=np.uint8)
    pairs = []
    if n_est and n_lab:
        dist = np.empty((n_est, n_lab))
        for i in range(n_est):
            for j in range(n_lab):
                dist[i, j] = tip_error(est[i], lab[j])
        work = dist.copy()
        for _ in range(min(n_est, n_lab)):
            flat = int(np.argmin(work))
            i, j = divmod(flat, n_lab)
            err = float(dist[i, j])
            er[i, j] = err
            ident[i, j] = 1
            mask[i, j] = 1
            pairs.append((i, j, err))
            work[i, :] = np.inf
            work[:, j] = np.inf
    return MatchResult(f=abs(n_lab - n_est), ER=er, ID=ident, matched_mask=mask, pairs=pairs)


@dataclass
class EvalReport:
    tau: list
    F: list
    E: list
    T: list
    n_labeled: int
    f_total: int
    e1: list
    e2: list

    def to_json(self):
        return {
            "tau": self.tau,
            "F": self.F,
            "E": self.E,
            "T": self.T,
            "n_labeled": self.n_labeled,
            "f_total": self.f_total,
            "e1": self.e1,
            "e2": self.e2,
        }

    def to_csv(self):
        lines = ["tau,F,E,T"]
        for tau, fv, ev, tv in zip(self.tau, self.F, self.E, self.T):
            mid = "" if ev is None else repr(ev)
            lines.append(f"{tau},{fv!r},{mid},{tv!r}")
        return "\n".join(lines) + "\n"


def _video_correspondence(leaf_ids, n_label_rows, counts):
    """Video-level identity pairing by repeatedly taking the (estimated
    leaf, label row) pair matched in the most frames."""
    order = {leaf: pos for pos, leaf in enumerate(leaf_ids)}
    alive_rows = set(range(n_label_rows))
    alive_ids = set(leaf_ids)
    chosen = []
    while alive_ids and alive_rows:
        best = None
        for leaf in leaf_ids:
            if leaf not in alive_ids:
                continue
            for row in sorted(alive_rows):
                c = counts.get((leaf, row), 0)
                key = (-c, order[leaf], row)
                if best is None or key < best[0]:
                    best = (key, leaf, row)
        if best is None or -best[0][0] <= 0:
            break
        _, leaf, row = best
        chosen.append((leaf, row))
        alive_ids.remove(leaf)
        alive_rows.remove(row)
    return chosen


def evaluate(predictions, labels):
    """Score predictions against labels.

    predictions: {video_id: {frame: [(leaf_id, [t1x, t1y, t2x, t2y]), ...]}}
    labels: iterable of {"video_id", "frames": [{"frame", "leaves": [...]}]}
    where a null leaf row marks a leaf absent on that frame.
    """
    f_total = 0
    n_labeled = 0
    e1 = []
    e2 = []
    for video in labels:
        vid = video["video_id"]
        vid_preds = predictions.get(vid)
        counts = {}
        errors = {}
        leaf_ids = []
        n_label_rows = 0
        for frame_entry in sorted(video["frames"], key=lambda fr: fr["frame"]):
            frame = frame_entry["frame"]
            if vid_preds is None or frame not in vid_preds:
                raise ValueError(f"missing prediction for video {vid!r} frame {frame}")
            rows = [
                (idx, leaf)
                for idx, leaf in enumerate(frame_entry["leaves"])
                if leaf is not None
            ]
            n_label_rows = max(n_label_rows, len(frame_entry["leaves"]))
            n_labeled += len(rows)
            ests = sorted(vid_preds[frame], key=lambda item: item[0])
            for leaf_id, _ in ests:
                if leaf_id not in leaf_ids:
                    leaf_ids.append(leaf_id)
            est_mat = np.array([tips for _, tips in ests], dtype=np.float64).reshape(-1, 4)
            lab_mat = np.array([lab for _, lab in rows], dtype=np.float64).reshape(-1, 4)
            match = leaf_match(est_mat, lab_mat)
            f_total += match.f
            for i, j, err in match.pairs:
                e1.append(err)
                leaf_id = ests[i][0]
                row = rows[j][0]
                counts[(leaf_id, row)] = counts.get((leaf_id, row), 0) + 1
                errors.setdefault((leaf_id, row), []).append(err)
        leaf_ids.sort()
        for leaf_id, row in _video_correspondence(leaf_ids, max(n_label_rows, 1), counts):
            e2.extend(errors.get((leaf_id, row), []))
    if n_labeled == 0:
        raise ValueError("labels contain no leaves")
    e1_arr = np.asarray(e1, dtype=np.float64)
    e2_arr = np.asarray(e2, dtype=np.float64)
    curve_f = []
    curve_e = []
    curve_t = []
    for tau in TAU_GRID:
        curve_f.append((f_total + int((e1_arr > tau).sum())) / n_labeled)
        kept = e1_arr[e1_arr <= tau]
        curve_e.append(float(kept.mean()) if kept.size else None)
        curve_t.append(int((e2_arr <= tau).sum()) / n_labeled)
    return EvalReport(
        tau=list(TAU_GRID),
        F=curve_f,
        E=curve_e,
        T=curve_t,
        n_labeled=n_labeled,
        f_total=f_total,
        e1=[float(v) for v in e1],
        e2=[float(v) for v in e2],
    )
