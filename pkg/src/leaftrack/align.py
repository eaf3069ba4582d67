"""Joint segmentation and alignment on one frame: score a relaxed 0-1
selection over nominated candidates and greedily round it, fixing one
entry per iteration."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

FREE = 0
FIXED0 = -1
FIXED1 = 1


@dataclass(frozen=True)
class AlignConfig:
    cm_weight: float = 5.0
    mask_weight: float = 10.0
    angle_weight: float = 125.0
    sharpness: float = 3.0
    step_size: float = 0.001

    def __post_init__(self):
        for name in ("sharpness", "step_size"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        # weights may be zeroed to study one term in isolation
        for name in ("cm_weight", "mask_weight", "angle_weight"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")


@dataclass
class IndicatorVector:
    """Relaxed selection state: values in [0,1] plus per-entry fix flags."""

    values: np.ndarray
    state: np.ndarray = field(default=None)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64).copy()
        if self.state is None:
            self.state = np.zeros(self.values.shape[0], dtype=np.int8)
        else:
            self.state = np.asarray(self.state, dtype=np.int8).copy()


@dataclass
class CandidateSet:
    """Selected candidates carried through tracking; next_id is the next
    fresh leaf identity (retired IDs are never reused)."""

    members: list
    next_id: int = 1

    def __len__(self):
        return len(self.members)

    def __iter__(self):
        return iter(self.members)


def _soft_coverage(x, nom, sharpness):
    arg = x @ nom.A - 0.5
    return np.arctan(sharpness * arg) / np.pi + 0.5, arg


def objective_value(x, nom, m, cfg):
    """Selection cost: size + mean match distance + coverage mismatch +
    mean angle penalty."""
    x = np.asarray(x, dtype=np.float64)
    norm1 = float(np.abs(x).sum())
    if norm1 == 0.0:
        raise ValueError("empty selection")
    f, _ = _soft_coverage(x, nom, cfg.sharpness)
    k = float(m.shape[0])
    j = norm1
    j += cfg.cm_weight * float(nom.d @ x) / norm1
    j += cfg.mask_weight * float(((f - m) ** 2).sum()) / k
    j += cfg.angle_weight * float(nom.l @ x) / norm1
    return j


def objective_gradient(x, nom, m, cfg):
    """Analytic gradient of objective_value."""
    x = np.asarray(x, dtype=np.float64)
    norm1 = float(np.abs(x).sum())
    if norm1 == 0.0:
        raise ValueError("empty selection")
    sgn = np.sign(x)
    f, arg = _soft_coverage(x, nom, cfg.sharpness)
    k = float(m.shape[0])
    damp = 1.0 + (cfg.sharpness * arg) ** 2
    g = sgn.copy()
    g += cfg.cm_weight * (nom.d * norm1 - float(nom.d @ x) * sgn) / (norm1 * norm1)
    g += cfg.mask_weight * (2.0 / k) * (nom.A @ ((f - m) * (cfg.sharpness / np.pi) / damp))
    g += cfg.angle_weight * (nom.l * norm1 - float(nom.l @ x) * sgn) / (norm1 * norm1)
    return g


def _endpoint_cost(x, index, value, nom, m, cfg):
    trial = x.copy()
    trial[index] = value
    try:
        return objective_value(trial, nom, m, cfg)
    except ValueError:
        return np.inf


def select_candidates(nom, m, cfg):
    """Greedy rounding: start with everything selected, then per iteration
    take one damped gradient step on the free entries and permanently fix
    the entry with the largest gradient magnitude to whichever endpoint
    (0 or 1) scores lower; ties prefer 0."""
    n = len(nom)
    if n == 0:
        raise ValueError("no candidates to select from")
    m = np.asarray(m, dtype=np.float64)
    ind = IndicatorVector(values=np.ones(n))
    for _ in range(n):
        free = np.nonzero(ind.state == FREE)[0]
        if free.size == 0:
            break
        g = objective_gradient(ind.values, nom, m, cfg)
        ind.values[free] = np.clip(ind.values[free] - cfg.step_size * g[free], 0.0, 1.0)
        pick = int(free[np.argmax(np.abs(g[free]))])
        cost0 = _endpoint_cost(ind.values, pick, 0.0, nom, m, cfg)
        cost1 = _endpoint_cost(ind.values, pick, 1.0, nom, m, cfg)
        if cost1 < cost0:
            ind.values[pick] = 1.0
            ind.state[pick] = FIXED1
        else:
            ind.values[pick] = 0.0
            ind.state[pick] = FIXED0
    chosen = [i for i in range(n) if ind.state[i] == FIXED1]
    if not chosen:
        chosen = [int(np.argmin(nom.d))]
    members = [
        replace(nom.candidates[i], leaf_id=leaf_id)
        for leaf_id, i in enumerate(chosen, start=1)
    ]
    return CandidateSet(members=members, next_id=len(members) + 1)
