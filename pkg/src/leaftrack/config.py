"""Run configuration: defaults, key=value config files, and flag overrides.

Precedence is defaults < config file < command-line flags.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

from .align import AlignConfig
from .io_utils import SchemaError
from .track import TrackConfig


@dataclass(frozen=True)
class RunConfig:
    templates: str = ""
    shapes: int = 4
    template_half_length: float = 10.0
    scales: str = "0.8,1.0,1.25"
    rotation_step: int = 15
    edge_threshold: float = 0.10
    overlap_min: float = 0.85
    cm_weight: float = 5.0
    mask_weight: float = 10.0
    angle_weight: float = 125.0
    sharpness: float = 3.0
    align_step: float = 0.001
    track_mask_weight: float = 1.0
    track_angle_weight: float = 10.0
    track_step: float = 0.001
    max_iters: int = 80
    conv_eps: float = 1e-4
    min_leaf_area: int = 64
    mask_sigma: float = 1.0
    margin_sigma: float = 3.0
    min_run: int = 5
    seed: int = 0
    jobs: int = 1

    def scale_list(self):
        return [float(s) for s in self.scales.split(",") if s.strip()]

    def align_config(self):
        return AlignConfig(
            cm_weight=self.cm_weight,
            mask_weight=self.mask_weight,
            angle_weight=self.angle_weight,
            sharpness=self.sharpness,
            step_size=self.align_step,
        )

    def track_config(self):
        return TrackConfig(
            mask_weight=self.track_mask_weight,
            angle_weight=self.track_angle_weight,
            step_size=self.track_step,
            max_iters=self.max_iters,
            conv_eps=self.conv_eps,
            min_leaf_area=self.min_leaf_area,
            mask_sigma=self.mask_sigma,
            overlap_min=self.overlap_min,
            edge_threshold=self.edge_threshold,
        )


_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _coerce(name, raw):
    kind = _FIELD_TYPES[name]
    if kind in ("int", int):
        return int(raw)
    if kind in ("float", float):
        return float(raw)
    return str(raw)


def parse_config_file(path):
    """Read a key=value config file; # starts a comment."""
    values = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            if "=" not in text:
                raise SchemaError(f"{path}:{lineno}: expected key=value")
            key, raw = (part.strip() for part in text.split("=", 1))
            if key not in _FIELD_TYPES:
                raise SchemaError(f"{path}:{lineno}: unknown config key {key!r}")
            try:
                values[key] = _coerce(key, raw)
            except ValueError as err:
                raise SchemaError(f"{path}:{lineno}: bad value for {key!r}: {raw!r}") from err
    return values


def build_run_config(file_values=None, overrides=None):
    """Merge defaults, config-file values, and explicit overrides."""
    merged = {}
    for source in (file_values or {}), (overrides or {}):
        for key, value in source.items():
            if value is None:
                continue
            if key not in _FIELD_TYPES:
                raise SchemaError(f"unknown config key {key!r}")
            try:
                merged[key] = _coerce(key, value)
            except ValueError as err:
                raise SchemaError(f"bad value for config key {key!r}: {value!r}") from err
    return RunConfig(**merged)
