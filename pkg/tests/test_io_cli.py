"""Serialization helpers, run-config parsing, and the command-line pipeline."""

import json
import math
import re
import subprocess
import sys

import numpy as np
import pytest

import oracles
from leaftrack.cli import _balance_classes, _balance_regression
from leaftrack.cli import main as cli_main
from leaftrack.config import RunConfig, build_run_config, parse_config_file
from leaftrack.imaging import read_gray
from leaftrack.io_utils import (
    SchemaError,
    dump_json,
    dumps_json,
    frame_result_to_json,
    leaf_record_to_json,
    load_json,
    load_labels,
    predictions_from_records,
    read_results_jsonl,
    round_floats,
    validate_labels,
    write_results_jsonl,
)
from leaftrack.quality import (
    RegressionModel,
    alignment_quality_target,
    predict_alignment_quality,
    svm_margin,
    train_regression,
    train_svm,
)
from leaftrack.quality import SvmModel
from leaftrack.templates import Pose
from leaftrack.track import FrameResult, LeafRecord


# ---------------------------------------------------------------- round_floats


def test_round_floats_nine_significant_digits():
    assert round_floats(0.12345678912345) == 0.123456789
    assert round_floats(math.pi) == 3.14159265
    assert round_floats(-math.pi) == -3.14159265
    assert round_floats(1234567891.23) == 1234567890.0
    assert round_floats(1e-12) == 1e-12
    assert round_floats(0.5) == 0.5


def test_round_floats_bool_passthrough():
    # bool is an int subclass; it must survive untouched.
    assert round_floats(True) is True
    assert round_floats({"flag": False})["flag"] is False


def test_round_floats_int_passthrough():
    out = round_floats(7)
    assert out == 7 and isinstance(out, int) and not isinstance(out, bool)
    assert round_floats(np.int32(-3)) == -3
    assert isinstance(round_floats(np.int64(9)), int)


def test_round_floats_nan_inf_preserved():
    assert math.isnan(round_floats(float("nan")))
    assert round_floats(float("inf")) == float("inf")
    assert round_floats(float("-inf")) == float("-inf")


def test_round_floats_numpy_values():
    assert round_floats(np.float64(math.pi)) == 3.14159265
    out = round_floats(np.array([[math.pi, 1.0], [0.25, 2.0]]))
    assert out == [[3.14159265, 1.0], [0.25, 2.0]]
    assert isinstance(out, list) and isinstance(out[0], list)


def test_round_floats_container_recursion():
    obj = {"a": (math.pi, None), "b": [{"c": math.e}], "d": "text"}
    out = round_floats(obj)
    assert out == {"a": [3.14159265, None], "b": [{"c": 2.71828183}], "d": "text"}


def test_dumps_json_compact_separators():
    text = dumps_json({"frame": 0, "xs": [1.5, 2.0], "name": "a"})
    assert text == '{"frame": 0,"xs": [1.5,2.0],"name": "a"}'


def test_dump_json_roundtrip_with_trailing_newline(tmp_path):
    payload = {"a": [1, 2.5], "b": {"c": None, "d": True}}
    path = tmp_path / "out.json"
    dump_json(payload, path)
    text = path.read_text(encoding="utf-8")
    assert text.endswith("\n") and text.count("\n") == 1
    assert load_json(path) == payload


def test_load_json_invalid_raises_schema_error(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{oops", encoding="utf-8")
    with pytest.raises(SchemaError, match="invalid JSON"):
        load_json(path)


# ---------------------------------------------------------------- results JSONL


def _record(leaf_id, tx, q_align=None, q_track=None):
    return LeafRecord(
        leaf_id=leaf_id,
        pose=Pose(theta=0.25, r=1.5, tx=tx, ty=5.0),
        tips=np.array([[1.5, 2.5], [3.5, 4.5]]) + tx,
        d=0.123456789123,
        area=42,
        q_align=q_align,
        q_track=q_track,
    )


def test_leaf_record_to_json_layout():
    rec = _record(3, 4.0, q_align=0.75)
    assert leaf_record_to_json(rec) == {
        "id": 3,
        "pose": {"theta": 0.25, "r": 1.5, "tx": 4.0, "ty": 5.0},
        "tips": [[5.5, 6.5], [7.5, 8.5]],
        "d": 0.123456789123,
        "area": 42,
        "q_align": 0.75,
        "q_track": None,
    }


def test_results_jsonl_roundtrip(tmp_path):
    results = [
        FrameResult(frame_index=0, leaves=[_record(1, 0.0)]),
        FrameResult(frame_index=1, leaves=[_record(1, 1.0, q_align=0.9), _record(2, 8.0)]),
    ]
    path = tmp_path / "results.jsonl"
    write_results_jsonl(path, results)
    lines = path.read_text(encoding="utf-8").splitlines()
    assert len(lines) == 2
    records = read_results_jsonl(path)
    assert records == [round_floats(frame_result_to_json(r)) for r in results]
    assert records[0]["leaves"][0]["d"] == 0.123456789


def test_read_results_jsonl_skips_blank_lines(tmp_path):
    path = tmp_path / "results.jsonl"
    body = dumps_json({"frame": 0, "leaves": []})
    path.write_text(f"\n{body}\n\n{body}\n", encoding="utf-8")
    records = read_results_jsonl(path)
    assert [r["frame"] for r in records] == [0, 0]


def test_read_results_jsonl_invalid_line(tmp_path):
    path = tmp_path / "results.jsonl"
    path.write_text('{"frame": 0, "leaves": []}\n{bad\n', encoding="utf-8")
    with pytest.raises(SchemaError, match="2: invalid JSON"):
        read_results_jsonl(path)


def test_read_results_jsonl_missing_keys(tmp_path):
    path = tmp_path / "results.jsonl"
    path.write_text('{"frame": 0}\n', encoding="utf-8")
    with pytest.raises(SchemaError, match="record needs 'frame' and 'leaves'"):
        read_results_jsonl(path)


def test_predictions_from_records():
    records = [
        {"frame": 0, "leaves": [{"id": 1, "tips": [[1.0, 2.0], [3.0, 4.0]]}]},
        {
            "frame": 2,
            "leaves": [
                {"id": 4, "tips": [[0.0, 1.0], [2.0, 3.0]]},
                {"id": 7, "tips": [[5.0, 5.0], [6.0, 6.0]]},
            ],
        },
    ]
    assert predictions_from_records(records) == {
        0: [(1, [1.0, 2.0, 3.0, 4.0])],
        2: [(4, [0.0, 1.0, 2.0, 3.0]), (7, [5.0, 5.0, 6.0, 6.0])],
    }


# ---------------------------------------------------------------- label schema


def test_validate_labels_accepts_valid_payload():
    payload = {
        "video_id": "v",
        "frames": [
            {"frame": 0, "leaves": [[1, 2.0, 3, 4.5], None]},
            {"frame": 1, "leaves": []},
        ],
    }
    assert validate_labels(payload) is payload


@pytest.mark.parametrize(
    "payload, message",
    [
        ([], "label file must be a JSON object"),
        ({"frames": []}, "missing string 'video_id'"),
        ({"video_id": 7, "frames": []}, "missing string 'video_id'"),
        ({"video_id": "v"}, "missing 'frames' list"),
        ({"video_id": "v", "frames": [{"leaves": []}]},
         "every frame entry needs an integer 'frame'"),
        ({"video_id": "v", "frames": [{"frame": 0}]},
         "frame 0 needs a 'leaves' list"),
        ({"video_id": "v", "frames": [{"frame": 3, "leaves": [[1, 2, 3]]}]},
         "frame 3: leaf rows are 4 numbers or null"),
        ({"video_id": "v", "frames": [{"frame": 3, "leaves": [[1, 2, 3, True]]}]},
         "frame 3: leaf rows are 4 numbers or null"),
    ],
)
def test_validate_labels_schema_errors(payload, message):
    with pytest.raises(SchemaError, match=re.escape(message)):
        validate_labels(payload)


def test_load_labels_reads_and_validates(tmp_path):
    path = tmp_path / "labels.json"
    dump_json({"video_id": "v", "frames": [{"frame": 0, "leaves": [None]}]}, path)
    assert load_labels(path)["video_id"] == "v"
    dump_json({"video_id": "v"}, path)
    with pytest.raises(SchemaError, match="labels.json"):
        load_labels(path)


# ---------------------------------------------------------------- run config


def test_run_config_defaults():
    cfg = RunConfig()
    assert cfg.scales == "0.8,1.0,1.25"
    assert cfg.scale_list() == [0.8, 1.0, 1.25]
    assert cfg.rotation_step == 15
    assert cfg.overlap_min == 0.85
    assert cfg.edge_threshold == 0.10
    assert cfg.min_run == 5 and cfg.margin_sigma == 3.0
    assert cfg.jobs == 1


def test_scale_list_tolerates_spacing():
    assert RunConfig(scales="1.0, 1.25,").scale_list() == [1.0, 1.25]


def test_run_config_maps_to_stage_configs():
    cfg = RunConfig(
        cm_weight=3.0,
        mask_weight=7.0,
        angle_weight=11.0,
        sharpness=2.0,
        align_step=0.01,
        track_mask_weight=2.0,
        track_angle_weight=4.0,
        track_step=0.005,
        max_iters=30,
        conv_eps=1e-5,
        min_leaf_area=32,
        mask_sigma=0.5,
        overlap_min=0.7,
        edge_threshold=0.2,
    )
    ac = cfg.align_config()
    assert (ac.cm_weight, ac.mask_weight, ac.angle_weight) == (3.0, 7.0, 11.0)
    assert (ac.sharpness, ac.step_size) == (2.0, 0.01)
    tc = cfg.track_config()
    assert (tc.mask_weight, tc.angle_weight, tc.step_size) == (2.0, 4.0, 0.005)
    assert (tc.max_iters, tc.conv_eps, tc.min_leaf_area) == (30, 1e-5, 32)
    assert (tc.mask_sigma, tc.overlap_min, tc.edge_threshold) == (0.5, 0.7, 0.2)


def test_parse_config_file(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text(
        "# full-line comment\n"
        "overlap_min = 0.9  # inline comment\n"
        "max_iters=25\n"
        "\n"
        "scales = 1.0,1.6\n"
        "templates = custom.json\n",
        encoding="utf-8",
    )
    values = parse_config_file(path)
    assert values == {
        "overlap_min": 0.9,
        "max_iters": 25,
        "scales": "1.0,1.6",
        "templates": "custom.json",
    }
    assert isinstance(values["max_iters"], int)
    assert isinstance(values["overlap_min"], float)


@pytest.mark.parametrize(
    "line, message",
    [
        ("overlap_min 0.9", "expected key=value"),
        ("overlap_minimum = 1", "unknown config key 'overlap_minimum'"),
        ("max_iters = eighty", "bad value for 'max_iters'"),
    ],
)
def test_parse_config_file_errors(tmp_path, line, message):
    path = tmp_path / "run.cfg"
    path.write_text(line + "\n", encoding="utf-8")
    with pytest.raises(SchemaError, match=re.escape(message)):
        parse_config_file(path)


def test_build_run_config_precedence():
    cfg = build_run_config(
        {"overlap_min": 0.7, "max_iters": 10},
        {"max_iters": "50", "jobs": None},
    )
    assert cfg.overlap_min == 0.7
    assert cfg.max_iters == 50
    assert cfg.jobs == 1
    with pytest.raises(SchemaError, match="unknown config key"):
        build_run_config({"not_a_key": 1}, {})
    with pytest.raises(SchemaError, match="bad value for config key"):
        build_run_config({}, {"max_iters": "abc"})


# ---------------------------------------------------------------- CLI pipeline

SPEC = {
    "width": 48,
    "height": 48,
    "n_frames": 3,
    "seed": 11,
    "noise": 0.02,
    "blur_sigma": 0.8,
    "min_label_area": 0,
    "video_id": "det",
    "leaves": [
        {
            "theta": 0.0,
            "r": 1.6,
            "tx": 24.0,
            "ty": 24.0,
            "aspect": 0.45,
            "taper": 0.25,
            "vy": 0.1,
            "intensity": 0.85,
        }
    ],
}


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    """One synthetic video pushed through synth -> align -> track."""
    root = tmp_path_factory.mktemp("cli_pipeline")
    spec_path = root / "spec.json"
    spec_path.write_text(json.dumps(SPEC), encoding="utf-8")
    video = root / "video"
    assert cli_main(["synth", "--spec", str(spec_path), "--out", str(video)]) == 0
    frame2 = video / "frames" / "frame_0002.png"
    assert cli_main([
        "align",
        "--frame", str(frame2),
        "--out", str(root / "align.json"),
        "--overlay", str(root / "overlay.png"),
        "--scales", "1.25,1.6",
    ]) == 0
    assert cli_main([
        "track",
        "--video", str(video / "frames"),
        "--out", str(root / "track.jsonl"),
        "--overlay-dir", str(root / "overlays"),
        "--scales", "1.25,1.6",
    ]) == 0
    return root


def test_synth_outputs(pipeline):
    video = pipeline / "video"
    frames = sorted(p.name for p in (video / "frames").iterdir())
    assert frames == ["frame_0000.png", "frame_0001.png", "frame_0002.png"]
    assert read_gray(video / "frames" / "frame_0000.png").data.shape == (48, 48)

    labels = load_labels(video / "labels.json")
    assert labels["video_id"] == "det"
    assert [f["frame"] for f in labels["frames"]] == [0, 1, 2]
    for entry in labels["frames"]:
        (row,) = entry["leaves"]
        assert len(row) == 4

    poses = load_json(video / "poses.json")
    assert len(poses["frames"]) == 3
    for (pose,) in poses["frames"]:
        assert set(pose) == {"theta", "r", "tx", "ty"}
    # one leaf drifting at vy=0.1 per frame
    assert math.isclose(poses["frames"][2][0]["ty"] - poses["frames"][0][0]["ty"], 0.2)


def test_align_output(pipeline):
    result = load_json(pipeline / "align.json")
    assert result["frame"] == 0
    (leaf,) = result["leaves"]
    assert set(leaf) == {"id", "pose", "tips", "d", "area", "q_align", "q_track"}
    assert leaf["id"] == 1
    assert leaf["q_align"] is None and leaf["q_track"] is None
    assert leaf["pose"]["r"] == 1.6
    assert 0.0 <= leaf["d"] < 0.01
    assert leaf["area"] > 200
    # truth tips at frame 2: centered on (24, 24.2), half-length 16
    tips = np.asarray(leaf["tips"], dtype=np.float64)
    assert np.all(np.abs(tips - [[24.0, 8.2], [24.0, 40.2]]) <= 1.5)


def test_align_overlay_png(pipeline):
    from PIL import Image

    with Image.open(pipeline / "overlay.png") as img:
        assert img.size == (48, 48)
        assert img.mode == "RGB"


def test_track_results(pipeline):
    records = read_results_jsonl(pipeline / "track.jsonl")
    assert [r["frame"] for r in records] == [0, 1, 2]
    for rec in records:
        (leaf,) = rec["leaves"]
        assert leaf["id"] == 1
        assert abs(leaf["pose"]["r"] - 1.6) < 0.1
        assert leaf["area"] > 200
    overlays = sorted(p.name for p in (pipeline / "overlays").iterdir())
    assert overlays == ["overlay_0000.png", "overlay_0001.png", "overlay_0002.png"]


def test_track_tips_close_to_truth(pipeline):
    labels = load_labels(pipeline / "video" / "labels.json")
    preds = predictions_from_records(read_results_jsonl(pipeline / "track.jsonl"))
    for entry in labels["frames"]:
        (row,) = entry["leaves"]
        ((_, est),) = preds[entry["frame"]]
        assert oracles.tip_err(est, row) < 0.1


def test_eval_matches_oracle_curves(pipeline):
    out_json = pipeline / "eval.json"
    out_csv = pipeline / "eval.csv"
    assert cli_main([
        "eval",
        "--labels", str(pipeline / "video" / "labels.json"),
        "--pred", str(pipeline / "track.jsonl"),
        "--out-json", str(out_json),
        "--out-csv", str(out_csv),
    ]) == 0

    labels = load_labels(pipeline / "video" / "labels.json")
    preds = {labels["video_id"]: predictions_from_records(
        read_results_jsonl(pipeline / "track.jsonl"))}
    oracle = oracles.eval_curves(preds, [labels])

    text = out_csv.read_text(encoding="utf-8")
    lines = text.splitlines()
    assert lines[0] == "tau,F,E,T"
    assert len(lines) == 102 and text.endswith("\n")
    for line, tau, f_o, e_o, t_o in zip(
        lines[1:], oracle["tau"], oracle["F"], oracle["E"], oracle["T"]
    ):
        cells = line.split(",")
        assert float(cells[0]) == tau
        assert math.isclose(float(cells[1]), f_o, rel_tol=0.0, abs_tol=1e-10)
        if e_o is None:
            assert cells[2] == ""
        else:
            assert math.isclose(float(cells[2]), e_o, rel_tol=0.0, abs_tol=1e-10)
        assert math.isclose(float(cells[3]), t_o, rel_tol=0.0, abs_tol=1e-10)

    # JSON report carries the same curves, rounded to 9 significant digits.
    report = load_json(out_json)
    assert report["tau"] == oracle["tau"]
    assert report["n_labeled"] == oracle["n_labeled"] == 3
    assert report["f_total"] == oracle["f_total"] == 0
    assert len(report["e1"]) == 3
    for got, want in zip(report["F"], oracle["F"]):
        assert math.isclose(got, want, rel_tol=1e-8, abs_tol=1e-8)
    for got, want in zip(report["E"], oracle["E"]):
        assert (got is None) == (want is None)
        if want is not None:
            assert math.isclose(got, want, rel_tol=1e-8, abs_tol=1e-8)

    # clean single-leaf scene: tracked everywhere, no misses past tau=0.3
    i = report["tau"].index(0.3)
    assert report["F"][i] == 0.0
    assert report["T"][i] == 1.0


def test_eval_prediction_directory(pipeline, tmp_path):
    pred_dir = tmp_path / "preds"
    pred_dir.mkdir()
    (pred_dir / "det.jsonl").write_bytes((pipeline / "track.jsonl").read_bytes())
    assert cli_main([
        "eval",
        "--labels", str(pipeline / "video" / "labels.json"),
        "--pred", str(pred_dir),
        "--out-json", str(tmp_path / "report.json"),
    ]) == 0
    assert load_json(tmp_path / "report.json")["n_labeled"] == 3


def test_eval_prediction_directory_missing_video(pipeline, tmp_path, capsys):
    pred_dir = tmp_path / "preds"
    pred_dir.mkdir()
    rc = cli_main([
        "eval",
        "--labels", str(pipeline / "video" / "labels.json"),
        "--pred", str(pred_dir),
    ])
    assert rc == 2
    assert "no prediction file for video 'det'" in capsys.readouterr().err


def test_eval_single_pred_for_multiple_videos(pipeline, tmp_path, capsys):
    labels = load_labels(pipeline / "video" / "labels.json")
    label_dir = tmp_path / "labels"
    label_dir.mkdir()
    dump_json(labels, label_dir / "a.json")
    dump_json({**labels, "video_id": "other"}, label_dir / "b.json")
    rc = cli_main([
        "eval",
        "--labels", str(label_dir),
        "--pred", str(pipeline / "track.jsonl"),
    ])
    assert rc == 2
    assert "one prediction file given for multiple label videos" in capsys.readouterr().err


def test_eval_missing_prediction_file(pipeline, capsys):
    rc = cli_main([
        "eval",
        "--labels", str(pipeline / "video" / "labels.json"),
        "--pred", str(pipeline / "nope.jsonl"),
    ])
    assert rc == 2
    assert "error:" in capsys.readouterr().err


# ---------------------------------------------------------------- CLI errors


def test_align_missing_frame_exits_2(tmp_path, capsys):
    rc = cli_main(["align", "--frame", str(tmp_path / "nope.png"),
                   "--out", str(tmp_path / "x.json")])
    assert rc == 2
    assert "cannot read frame" in capsys.readouterr().err


def test_track_empty_directory_exits_2(tmp_path, capsys):
    rc = cli_main(["track", "--video", str(tmp_path),
                   "--out", str(tmp_path / "x.jsonl")])
    assert rc == 2
    assert "no frames found" in capsys.readouterr().err


def test_synth_missing_key_exits_2(tmp_path, capsys):
    spec = tmp_path / "spec.json"
    spec.write_text('{"width": 32, "height": 32, "leaves": []}', encoding="utf-8")
    rc = cli_main(["synth", "--spec", str(spec), "--out", str(tmp_path / "v")])
    assert rc == 2
    assert "synth spec is missing key 'n_frames'" in capsys.readouterr().err


def test_synth_invalid_json_exits_2(tmp_path, capsys):
    spec = tmp_path / "spec.json"
    spec.write_text("{nope", encoding="utf-8")
    rc = cli_main(["synth", "--spec", str(spec), "--out", str(tmp_path / "v")])
    assert rc == 2
    assert "invalid JSON" in capsys.readouterr().err


def test_synth_zero_leaves_exits_3(tmp_path, capsys):
    spec = tmp_path / "spec.json"
    spec.write_text(
        '{"width": 32, "height": 32, "n_frames": 2, "leaves": []}', encoding="utf-8"
    )
    rc = cli_main(["synth", "--spec", str(spec), "--out", str(tmp_path / "v")])
    assert rc == 3
    assert "at least one leaf" in capsys.readouterr().err


def test_missing_config_file_exits_2(pipeline, tmp_path, capsys):
    rc = cli_main([
        "align",
        "--frame", str(pipeline / "video" / "frames" / "frame_0002.png"),
        "--out", str(tmp_path / "x.json"),
        "--config", str(tmp_path / "nope.cfg"),
    ])
    assert rc == 2


def test_unknown_config_key_exits_2(pipeline, tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("overlap_minimum = 0.9\n", encoding="utf-8")
    rc = cli_main([
        "align",
        "--frame", str(pipeline / "video" / "frames" / "frame_0002.png"),
        "--out", str(tmp_path / "x.json"),
        "--config", str(cfg),
    ])
    assert rc == 2
    assert "unknown config key 'overlap_minimum'" in capsys.readouterr().err


def test_bad_flag_value_exits_2(pipeline, tmp_path, capsys):
    rc = cli_main([
        "align",
        "--frame", str(pipeline / "video" / "frames" / "frame_0002.png"),
        "--out", str(tmp_path / "x.json"),
        "--max-iters", "abc",
    ])
    assert rc == 2
    assert "bad value for config key 'max_iters'" in capsys.readouterr().err


def test_config_file_flag_precedence(pipeline, tmp_path, capsys):
    # oversized templates cover far more than the foreground: all pruned
    cfg = tmp_path / "huge.cfg"
    cfg.write_text("scales = 4.0\n", encoding="utf-8")
    frame = str(pipeline / "video" / "frames" / "frame_0002.png")
    out = str(tmp_path / "x.json")
    rc = cli_main(["align", "--frame", frame, "--out", out, "--config", str(cfg)])
    assert rc == 3
    assert "no viable candidates" in capsys.readouterr().err
    # a command-line flag overrides the config file
    rc = cli_main(["align", "--frame", frame, "--out", out,
                   "--config", str(cfg), "--scales", "1.25,1.6"])
    assert rc == 0


def test_overlap_above_one_prunes_everything(pipeline, tmp_path, capsys):
    rc = cli_main([
        "align",
        "--frame", str(pipeline / "video" / "frames" / "frame_0002.png"),
        "--out", str(tmp_path / "x.json"),
        "--scales", "1.25",
        "--overlap-min", "1.5",
    ])
    assert rc == 3
    assert "no viable candidates" in capsys.readouterr().err


# ---------------------------------------------------------------- quality CLI


def _align_rows(n=20, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, 6))
    w = np.array([0.3, -0.2, 0.15, 0.05, -0.4, 0.25])
    return [
        {"features": [float(v) for v in x],
         "target": float(np.clip(x @ w + 0.3, 0.0, 1.0))}
        for x in X
    ]


def _margin_data(seed=5):
    """Separable 15-dim samples plus a scoring run with a planted failure:
    10 good frames, 12 bad, 8 good."""
    rng = np.random.default_rng(seed)
    w = rng.normal(size=15)
    w /= np.linalg.norm(w)

    def sample(y):
        z = rng.normal(size=15)
        z -= (z @ w) * w
        return z + y * (1.0 + rng.random()) * w

    train_y = [1] * 40 + [-1] * 40
    train = [{"features": [float(v) for v in sample(y)], "label": y} for y in train_y]
    seq_y = [1] * 10 + [-1] * 12 + [1] * 8
    seq = [{"features": [float(v) for v in sample(y)]} for y in seq_y]
    return train, seq


@pytest.fixture(scope="module")
def quality_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("quality_cli")
    dump_json(_align_rows(), root / "align_data.json")
    assert cli_main(["quality-train", "--kind", "align",
                     "--data", str(root / "align_data.json"),
                     "--out", str(root / "align_model.json")]) == 0
    train, seq = _margin_data()
    dump_json(train, root / "track_data.json")
    dump_json(seq, root / "track_seq.json")
    assert cli_main(["quality-train", "--kind", "track",
                     "--data", str(root / "track_data.json"),
                     "--out", str(root / "track_model.json")]) == 0
    return root


def test_quality_models_serialized_shape(quality_dir):
    align_model = load_json(quality_dir / "align_model.json")
    assert align_model["kind"] == "align-quality"
    assert set(align_model) == {"kind", "weights", "bias"}
    assert len(align_model["weights"]) == 6
    track_model = load_json(quality_dir / "track_model.json")
    assert track_model["kind"] == "track-quality"
    assert set(track_model) == {"kind", "weights", "bias", "mean", "scale"}
    assert len(track_model["weights"]) == 15


def test_quality_predict_align_scores(quality_dir, tmp_path):
    out = tmp_path / "scores.json"
    assert cli_main(["quality-predict", "--kind", "align",
                     "--model", str(quality_dir / "align_model.json"),
                     "--data", str(quality_dir / "align_data.json"),
                     "--out", str(out)]) == 0
    scores = load_json(out)["scores"]
    rows = load_json(quality_dir / "align_data.json")
    assert len(scores) == len(rows)
    assert all(0.0 <= s <= 1.0 for s in scores)
    model = RegressionModel.from_json(load_json(quality_dir / "align_model.json"))
    for score, row in zip(scores, rows):
        want = predict_alignment_quality(
            model, np.asarray(row["features"], dtype=np.float64))
        assert math.isclose(score, want, rel_tol=0.0, abs_tol=1e-6)


def test_quality_predict_track_detects_planted_failure(quality_dir, tmp_path):
    out = tmp_path / "margins.json"
    assert cli_main(["quality-predict", "--kind", "track",
                     "--model", str(quality_dir / "track_model.json"),
                     "--data", str(quality_dir / "track_seq.json"),
                     "--out", str(out),
                     "--detect-failures"]) == 0
    payload = load_json(out)
    assert set(payload) == {"margins", "labels", "failures"}
    assert payload["failures"] == [[10, 21]]
    assert payload["labels"] == [1 if m >= 0 else -1 for m in payload["margins"]]
    model = SvmModel.from_json(load_json(quality_dir / "track_model.json"))
    rows = load_json(quality_dir / "track_seq.json")
    for margin, row in zip(payload["margins"], rows):
        want = svm_margin(model, np.asarray(row["features"], dtype=np.float64))
        assert math.isclose(margin, want, rel_tol=0.0, abs_tol=1e-6)


def test_quality_predict_without_failure_flag(quality_dir, tmp_path):
    out = tmp_path / "margins.json"
    assert cli_main(["quality-predict", "--kind", "track",
                     "--model", str(quality_dir / "track_model.json"),
                     "--data", str(quality_dir / "track_seq.json"),
                     "--out", str(out)]) == 0
    assert set(load_json(out)) == {"margins", "labels"}


def test_quality_model_kind_mismatch_exits_3(quality_dir, tmp_path, capsys):
    rc = cli_main(["quality-predict", "--kind", "track",
                   "--model", str(quality_dir / "align_model.json"),
                   "--data", str(quality_dir / "track_seq.json"),
                   "--out", str(tmp_path / "x.json")])
    assert rc == 3
    assert "not a tracking-quality model" in capsys.readouterr().err
    rc = cli_main(["quality-predict", "--kind", "align",
                   "--model", str(quality_dir / "track_model.json"),
                   "--data", str(quality_dir / "align_data.json"),
                   "--out", str(tmp_path / "x.json")])
    assert rc == 3
    assert "not an alignment-quality model" in capsys.readouterr().err


def test_quality_train_e_la_target_mapping(tmp_path):
    rows = _align_rows()
    ela_rows = [{"features": r["features"], "e_la": 0.2 * abs(r["features"][0])}
                for r in rows]
    dump_json(ela_rows, tmp_path / "ela.json")
    assert cli_main(["quality-train", "--kind", "align",
                     "--data", str(tmp_path / "ela.json"),
                     "--out", str(tmp_path / "model.json")]) == 0
    samples = [
        (np.asarray(r["features"], dtype=np.float64),
         alignment_quality_target(r["e_la"]))
        for r in ela_rows
    ]
    ref = train_regression(samples)
    model = load_json(tmp_path / "model.json")
    assert np.allclose(model["weights"], ref.weights, atol=1e-6)
    assert math.isclose(model["bias"], ref.bias, rel_tol=0.0, abs_tol=1e-6)


def test_quality_train_balance_align(tmp_path):
    rows = _align_rows()
    dump_json(rows, tmp_path / "data.json")
    assert cli_main(["quality-train", "--kind", "align",
                     "--data", str(tmp_path / "data.json"),
                     "--out", str(tmp_path / "model.json"),
                     "--balance"]) == 0
    samples = [(np.asarray(r["features"], dtype=np.float64), r["target"])
               for r in rows]
    ref = train_regression(_balance_regression(samples))
    model = load_json(tmp_path / "model.json")
    assert np.allclose(model["weights"], ref.weights, atol=1e-6)


def test_quality_train_balance_track(tmp_path):
    train, _ = _margin_data(seed=9)
    skewed = [r for r in train if r["label"] == 1] + \
             [r for r in train if r["label"] == -1][:10]
    dump_json(skewed, tmp_path / "data.json")
    assert cli_main(["quality-train", "--kind", "track",
                     "--data", str(tmp_path / "data.json"),
                     "--out", str(tmp_path / "model.json"),
                     "--balance"]) == 0
    samples = [(np.asarray(r["features"], dtype=np.float64), r["label"])
               for r in skewed]
    ref = train_svm(_balance_classes(samples), reg_c=1.0)
    model = load_json(tmp_path / "model.json")
    assert np.allclose(model["weights"], ref.weights, atol=1e-6)


@pytest.mark.parametrize(
    "kind, payload, message",
    [
        ("align", {"a": 1}, "expected a JSON list of samples"),
        ("align", [{"features": [1.0, 2.0, 3.0], "target": 0.5}],
         "sample 0 needs a 6-value 'features' list"),
        ("align", [{"features": [0.1] * 6}] * 8,
         "alignment samples need 'target' or 'e_la'"),
        ("track", [{"features": [0.1] * 15, "label": 2}] * 8,
         "tracking samples need 'label' of -1 or 1"),
    ],
)
def test_quality_train_schema_errors(tmp_path, capsys, kind, payload, message):
    dump_json(payload, tmp_path / "data.json")
    rc = cli_main(["quality-train", "--kind", kind,
                   "--data", str(tmp_path / "data.json"),
                   "--out", str(tmp_path / "model.json")])
    assert rc == 2
    assert message in capsys.readouterr().err


def test_quality_train_underdetermined_exits_3(tmp_path, capsys):
    dump_json(_align_rows(n=6), tmp_path / "data.json")
    rc = cli_main(["quality-train", "--kind", "align",
                   "--data", str(tmp_path / "data.json"),
                   "--out", str(tmp_path / "model.json")])
    assert rc == 3
    assert "underdetermined" in capsys.readouterr().err


def test_balance_classes_equalizes_counts():
    pos = [(np.zeros(1), 1)] * 3
    neg = [(np.ones(1), -1)] * 7
    out = _balance_classes(neg[:4] + pos + neg[4:])
    labels = [y for _, y in out]
    assert len(out) == 14
    assert labels.count(1) == 7 and labels.count(-1) == 7
    # single-class input is returned unchanged
    assert _balance_classes(pos) == pos


def test_balance_regression_fills_bins():
    lo = [(np.zeros(1), 0.05)]
    hi = [(np.ones(1), 0.95)] * 5
    out = _balance_regression(lo + hi)
    qs = [q for _, q in out]
    assert len(out) == 10
    assert qs.count(0.05) == 5 and qs.count(0.95) == 5
    # target 1.0 lands in the top bin rather than out of range
    assert _balance_regression([(np.zeros(1), 1.0)]) == [(np.zeros(1), 1.0)]


# ---------------------------------------------------------------- entry point


def test_module_entry_point_help():
    proc = subprocess.run(
        [sys.executable, "-m", "leaftrack.cli", "--help"],
        capture_output=True, text=True, check=False,
    )
    assert proc.returncode == 0
    for name in ("synth", "align", "track", "eval", "quality-train", "quality-predict"):
        assert name in proc.stdout


def test_module_entry_point_runs_eval(pipeline, tmp_path):
    out = tmp_path / "report.json"
    proc = subprocess.run(
        [sys.executable, "-m", "leaftrack.cli", "eval",
         "--labels", str(pipeline / "video" / "labels.json"),
         "--pred", str(pipeline / "track.jsonl"),
         "--out-json", str(out)],
        capture_output=True, text=True, check=False,
    )
    assert proc.returncode == 0, proc.stderr
    assert load_json(out)["n_labeled"] == 3


def test_repeat_runs_byte_identical(pipeline, tmp_path):
    spec_path = pipeline / "spec.json"
    v2 = tmp_path / "video2"
    assert cli_main(["synth", "--spec", str(spec_path), "--out", str(v2)]) == 0
    assert (v2 / "labels.json").read_bytes() == \
        (pipeline / "video" / "labels.json").read_bytes()
    assert (v2 / "frames" / "frame_0002.png").read_bytes() == \
        (pipeline / "video" / "frames" / "frame_0002.png").read_bytes()

    frame = str(pipeline / "video" / "frames" / "frame_0002.png")
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    for path in (a, b):
        assert cli_main(["align", "--frame", frame, "--out", str(path),
                         "--scales", "1.25,1.6"]) == 0
    assert a.read_bytes() == b.read_bytes()
    assert a.read_bytes() == (pipeline / "align.json").read_bytes()


def test_align_jobs_flag_matches_serial(pipeline, tmp_path):
    frame = str(pipeline / "video" / "frames" / "frame_0002.png")
    out = tmp_path / "jobs2.json"
    assert cli_main(["align", "--frame", frame, "--out", str(out),
                     "--scales", "1.25,1.6", "--jobs", "2"]) == 0
    assert out.read_bytes() == (pipeline / "align.json").read_bytes()
