"""Serialization helpers: deterministic JSON output, results JSONL, and
label-file parsing with schema checks."""

from __future__ import annotations

import json
import math

import numpy as np


class SchemaError(ValueError):
    """Malformed input file (maps to the I/O exit code, not the
    algorithmic-failure one)."""


def round_floats(obj, sig=9):
    """Round every float to ``sig`` significant digits so serialized output
    is byte-stable across platforms."""
    if isinstance(obj, bool):
        return obj
    if isinstance(obj, (float, np.floating)):
        value = float(obj)
        if math.isnan(value) or math.isinf(value):
            return value
        return float(f"{value:.{sig}g}")
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, np.ndarray):
        return round_floats(obj.tolist(), sig)
    if isinstance(obj, dict):
        return {key: round_floats(value, sig) for key, value in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [round_floats(value, sig) for value in obj]
    return obj


def dumps_json(obj):
    return json.dumps(round_floats(obj), separators=(",", ": "))


def dump_json(obj, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps_json(obj))
        fh.write("\n")


def load_json(path):
    with open(path, encoding="utf-8") as fh:
        try:
            return json.load(fh)
        except json.JSONDecodeError as err:
            raise SchemaError(f"{path}: invalid JSON: {err}") from err


def leaf_record_to_json(rec):
    return {
        "id": rec.leaf_id,
        "pose": {
            "theta": rec.pose.theta,
            "r": rec.pose.r,
            "tx": rec.pose.tx,
            "ty": rec.pose.ty,
        },
        "tips": [
            [float(rec.tips[0, 0]), float(rec.tips[0, 1])],
            [float(rec.tips[1, 0]), float(rec.tips[1, 1])],
        ],
        "d": rec.d,
        "area": rec.area,
        "q_align": rec.q_align,
        "q_track": rec.q_track,
    }


def frame_result_to_json(res):
    return {
        "frame": res.frame_index,
        "leaves": [leaf_record_to_json(rec) for rec in res.leaves],
    }


def write_results_jsonl(path, results):
    with open(path, "w", encoding="utf-8") as fh:
        for res in results:
            fh.write(dumps_json(frame_result_to_json(res)))
            fh.write("\n")


def read_results_jsonl(path):
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as err:
                raise SchemaError(f"{path}:{lineno}: invalid JSON: {err}") from err
            if "frame" not in rec or "leaves" not in rec:
                raise SchemaError(f"{path}:{lineno}: record needs 'frame' and 'leaves'")
            records.append(rec)
    return records


def predictions_from_records(records):
    """Results records -> {frame: [(leaf_id, [t1x, t1y, t2x, t2y]), ...]}."""
    out = {}
    for rec in records:
        leaves = []
        for leaf in rec["leaves"]:
            tips = leaf["tips"]
            leaves.append(
                (leaf["id"], [tips[0][0], tips[0][1], tips[1][0], tips[1][1]])
            )
        out[int(rec["frame"])] = leaves
    return out


def validate_labels(payload, path="labels"):
    """Schema check for one video's label file."""
    if not isinstance(payload, dict):
        raise SchemaError(f"{path}: label file must be a JSON object")
    if not isinstance(payload.get("video_id"), str):
        raise SchemaError(f"{path}: missing string 'video_id'")
    frames = payload.get("frames")
    if not isinstance(frames, list):
        raise SchemaError(f"{path}: missing 'frames' list")
    for entry in frames:
        if not isinstance(entry, dict) or not isinstance(entry.get("frame"), int):
            raise SchemaError(f"{path}: every frame entry needs an integer 'frame'")
        leaves = entry.get("leaves")
        if not isinstance(leaves, list):
            raise SchemaError(f"{path}: frame {entry['frame']} needs a 'leaves' list")
        for row in leaves:
            if row is None:
                continue
            ok = isinstance(row, list) and len(row) == 4 and all(
                isinstance(v, (int, float)) and not isinstance(v, bool) for v in row
            )
            if not ok:
                raise SchemaError(
                    f"{path}: frame {entry['frame']}: leaf rows are 4 numbers or null"
                )
    return payload


def load_labels(path):
    return validate_labels(load_json(path), path=str(path))
