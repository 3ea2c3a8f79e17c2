import json
from pathlib import Path

import numpy as np
import pytest

from clothservo.cli import main
from clothservo.cli.config import config_hash, load_config
from clothservo.dictionary import FeedbackDictionary
from clothservo.errors import ParameterError

# small frames and color features keep the command round trips cheap
FAST_CONFIG = """
[camera]
image_width = 32
image_height = 32

[features]
kind = color

[record]
frames = 6

[dictionary]
n_pairs = 60
n_dic = 4
"""


@pytest.fixture()
def fast_cfg(tmp_path):
    path = tmp_path / "fast.ini"
    path.write_text(FAST_CONFIG)
    return path


def test_defaults_without_file():
    cfg = load_config(None)
    assert cfg["servo"]["gain"] == 0.5
    assert cfg["dictionary"]["n_dic"] == 64
    cfg["servo"]["gain"] = 99.0
    assert load_config(None)["servo"]["gain"] == 0.5  # no shared mutable state


def test_file_overrides_and_coercion(tmp_path):
    path = tmp_path / "o.ini"
    path.write_text(
        "[servo]\nalpha = 0.25\nstop_epsilon_absolute = yes\n"
        "[features]\ngrid_sizes = 4 8\n[record]\nframes = 12\n"
    )
    cfg = load_config(path)
    assert cfg["servo"]["alpha"] == 0.25
    assert cfg["servo"]["stop_epsilon_absolute"] is True
    assert cfg["features"]["grid_sizes"] == (4, 8)
    assert cfg["record"]["frames"] == 12
    assert isinstance(cfg["record"]["frames"], int)
    # untouched sections keep their defaults
    assert cfg["dictionary"]["n_dic"] == 64


def test_config_rejections(tmp_path):
    cases = {
        "missing": None,
        "section": "[warp]\nspeed = 1\n",
        "key": "[servo]\nbogus = 1\n",
        "value": "[record]\nframes = abc\n",
        "boolean": "[servo]\nstop_epsilon_absolute = maybe\n",
    }
    with pytest.raises(ParameterError):
        load_config(tmp_path / "never_written.ini")
    for name, text in cases.items():
        if text is None:
            continue
        path = tmp_path / f"{name}.ini"
        path.write_text(text)
        with pytest.raises(ParameterError):
            load_config(path)


def test_config_hash_tracks_content(tmp_path):
    base = load_config(None)
    assert config_hash(base) == config_hash(load_config(None))
    path = tmp_path / "o.ini"
    path.write_text("[servo]\nalpha = 0.3\n")
    assert config_hash(load_config(path)) != config_hash(base)


def test_usage_errors_exit_2(tmp_path, fast_cfg):
    out = tmp_path / "out"
    assert main(["--config", str(tmp_path / "nope.ini"), "--out", str(out), "record"]) == 2
    bad = tmp_path / "bad.ini"
    bad.write_text("[servo]\nbogus = 1\n")
    assert main(["--config", str(bad), "--out", str(out), "record"]) == 2
    # missing dictionary file is a usage problem, not a task failure
    rc = main(
        ["--config", str(fast_cfg), "--out", str(out), "servo",
         "--dictionary", str(tmp_path / "no_dict.json")]
    )
    assert rc == 2
    with pytest.raises(SystemExit) as info:
        main(["frobnicate"])
    assert info.value.code == 2


def test_record_train_servo_round_trip(tmp_path, fast_cfg):
    rec_dir = tmp_path / "rec"
    rc = main(["--seed", "5", "--config", str(fast_cfg), "--out", str(rec_dir), "record"])
    assert rc == 0
    log = rec_dir / "recording.jsonl"
    lines = log.read_text().strip().splitlines()
    assert len(lines) == 6
    pngs = sorted((rec_dir / "frames").glob("*.png"))
    assert len(pngs) == 6
    first = json.loads(lines[0])
    assert set(first) == {"step", "r", "image"}
    assert len(first["r"]) == 6
    meta = json.loads((rec_dir / "meta.json").read_text())
    assert meta["frames"] == 6 and meta["seed"] == 5

    train_dir = tmp_path / "dic"
    rc = main(
        ["--seed", "5", "--config", str(fast_cfg), "--out", str(train_dir),
         "train", "--recording", str(rec_dir)]
    )
    assert rc == 0
    d = FeedbackDictionary.load(train_dir / "dictionary.json")
    assert len(d) == 4
    assert d.feature_config["kind"] == "color"
    assert str(rec_dir) in d.sources

    servo_dir = tmp_path / "servo"
    rc = main(
        ["--seed", "0", "--config", str(fast_cfg), "--out", str(servo_dir),
         "servo", "--task", "flatten", "--dictionary",
         str(train_dir / "dictionary.json"), "--max-steps", "3"]
    )
    # a 3-step budget with a toy dictionary cannot converge; the task fails
    # cleanly rather than erroring out
    assert rc == 1
    report = json.loads((servo_dir / "report.json").read_text())
    assert report["success"] is False
    assert report["steps"] == 3
    trace_lines = (servo_dir / "trace.jsonl").read_text().strip().splitlines()
    assert len(trace_lines) == 4  # initial observation plus three steps
    for name in ("initial.png", "final.png", "error_curve.png"):
        assert (servo_dir / name).exists()


def test_record_reruns_are_byte_identical(tmp_path, fast_cfg):
    out_a = tmp_path / "a"
    out_b = tmp_path / "b"
    for out in (out_a, out_b):
        assert main(
            ["--seed", "9", "--config", str(fast_cfg), "--out", str(out), "record",
             "--frames", "4"]
        ) == 0
    assert (out_a / "recording.jsonl").read_bytes() == (out_b / "recording.jsonl").read_bytes()
    for frame in sorted((out_a / "frames").glob("*.png")):
        twin = out_b / "frames" / frame.name
        assert frame.read_bytes() == twin.read_bytes()
    assert (out_a / "meta.json").read_bytes() == (out_b / "meta.json").read_bytes()


def test_train_pools_multiple_recordings(tmp_path, fast_cfg):
    rec_a = tmp_path / "ra"
    rec_b = tmp_path / "rb"
    for seed, out in ((3, rec_a), (4, rec_b)):
        assert main(
            ["--seed", str(seed), "--config", str(fast_cfg), "--out", str(out), "record"]
        ) == 0
    out = tmp_path / "pooled"
    rc = main(
        ["--seed", "1", "--config", str(fast_cfg), "--out", str(out),
         "train", "--recording", str(rec_a), "--recording", str(rec_b)]
    )
    assert rc == 0
    d = FeedbackDictionary.load(out / "dictionary.json")
    assert set(d.sources) == {str(rec_a), str(rec_b)}
