import numpy as np
import pytest

from trackheads import io
from trackheads.cli import run
from trackheads.features import FeatureSource, save_feature_map


@pytest.fixture(scope="module")
def data(tmp_path_factory):
    d = tmp_path_factory.mktemp("synth")
    assert run(["synth", "--out", str(d), "--n-frames", "12", "--seed", "1"]) == 0
    return d


def test_synth_layout(data):
    assert len(io.list_frames(data / "frames")) == 12
    assert (data / "gt.txt").exists() and (data / "det.txt").exists()
    assert len(list((data / "masks").glob("*.png"))) == 12


def test_mot_then_eval(data, tmp_path, capsys):
    out = tmp_path / "res.txt"
    assert run(["mot", "--dets", str(data / "det.txt"), "--frames", str(data / "frames"), "--out", str(out)]) == 0
    capsys.readouterr()
    assert run(["eval", "--gt", str(data / "gt.txt"), "--pred", str(out), "--out", str(tmp_path / "m.txt")]) == 0
    report = capsys.readouterr().out
    for key in ("IDF1=", "MOTA=", "IDs="):
        assert key in report
    assert "IDF1=1.000000" in report and "IDs=0" in report


def test_mot_no_motion_from_feature_files(data, tmp_path):
    fdir = tmp_path / "feat"
    fdir.mkdir()
    src = FeatureSource(normalize=False)
    for p in io.list_frames(data / "frames"):
        save_feature_map(src.from_image(io.read_image(p)), fdir / f"{p.stem}.utfm")
    out = tmp_path / "r.txt"
    argv = ["mot", "--dets", str(data / "det.txt"), "--features", str(fdir), "--out", str(out),
            "--similarity", "rsm", "--no-motion"]
    assert run(argv) == 0
    first = out.read_bytes()
    assert run(argv) == 0 and out.read_bytes() == first      # byte-identical rerun
    ids = {int(line.split(",")[1]) for line in first.decode().splitlines()}
    assert ids == {1, 2, 3}


def test_mots_and_mask_eval(data, tmp_path, capsys):
    out = tmp_path / "mots"
    assert run(["mots", "--masks", str(data / "masks"), "--frames", str(data / "frames"), "--out", str(out),
                "--boxes", str(tmp_path / "b.txt")]) == 0
    capsys.readouterr()
    assert run(["eval", "--gt-masks", str(data / "masks"), "--pred-masks", str(out)]) == 0
    assert "IDF1=1.000000" in capsys.readouterr().out


def test_sot_writes_one_line_per_frame(tmp_path):
    frames = tmp_path / "frames"
    assert run(["synth", "--out", str(tmp_path), "--scenario", "single", "--n-frames", "3"]) == 0
    out = tmp_path / "sot.txt"
    assert run(["sot", "--frames", str(frames), "--init", "30,40,60,60", "--head", "dcf", "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert len(lines) == 3 and lines[0] == "30,40,60,60"


def test_vos_and_poseprop_native(tmp_path):
    rng = np.random.default_rng(0)
    frame = (rng.random((32, 48, 3)) * 255).astype(np.uint8)
    io.write_frames([frame] * 3, tmp_path / "f")
    ids = np.zeros((32, 48), int)
    ids[8:24, 8:24] = 1
    io.write_id_image(ids, tmp_path / "first.png")
    assert run(["vos", "--frames", str(tmp_path / "f"), "--first-mask", str(tmp_path / "first.png"),
                "--native", "--out", str(tmp_path / "vos")]) == 0
    assert np.array_equal(io.read_id_image(tmp_path / "vos" / "000003.png"), ids)
    (tmp_path / "pose.txt").write_text("1,0,11.5,11.5,1\n1,1,27.5,19.5,1\n")
    assert run(["poseprop", "--frames", str(tmp_path / "f"), "--first-pose", str(tmp_path / "pose.txt"),
                "--native", "--out", str(tmp_path / "pp.txt")]) == 0
    assert len((tmp_path / "pp.txt").read_text().splitlines()) == 6


def test_posetrack(tmp_path):
    rng = np.random.default_rng(0)
    io.write_frames([(rng.random((64, 64, 3)) * 255).astype(np.uint8) for _ in range(3)], tmp_path / "f")
    rows = []
    for f in (1, 2, 3):
        for obj, (x, y) in ((1, (10, 10)), (2, (40, 40))):
            rows += [f"{f},{obj},0,{x + f},{y},1", f"{f},{obj},1,{x + f + 10},{y + 12},1"]
    (tmp_path / "d.txt").write_text("\n".join(rows) + "\n")
    assert run(["posetrack", "--dets", str(tmp_path / "d.txt"), "--frames", str(tmp_path / "f"),
                "--out", str(tmp_path / "o.txt")]) == 0
    ids = {line.split(",")[1] for line in (tmp_path / "o.txt").read_text().splitlines()}
    assert ids == {"1", "2"}


def test_flags_override_config(tmp_path, capsys):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("assoc.fps = 30\nassoc.history_size = 4\n")
    assert run(["config", "--config", str(cfg)]) == 0
    text = capsys.readouterr().out
    assert "assoc.fps = 30.0" in text and "assoc.history_size = 4" in text
    assert "prop.temperature = 0.05" in text


@pytest.mark.parametrize("argv", [
    [],
    ["bogus"],
    ["mot", "--dets", "missing.txt", "--frames", "nowhere", "--out", "x.txt"],
    ["sot", "--frames", "nowhere", "--init", "1,2,3", "--out", "x.txt"],
    ["eval", "--gt", "a.txt"],
    ["eval", "--gt-masks", "a"],
    ["mot", "--dets", "d.txt", "--out", "x.txt", "--similarity", "reid"],
])
def test_usage_and_input_errors_exit_1(argv, tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert run(argv) == 1


def test_bad_config_exits_1(tmp_path):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("assoc.fps = quick\n")
    assert run(["config", "--config", str(cfg)]) == 1


def test_non_finite_detection_is_input_error(tmp_path):
    io.write_frames([np.full((32, 32, 3), 100, np.uint8)] * 2, tmp_path / "f")
    (tmp_path / "d.txt").write_text("1,-1,10,10,8,8,1\n2,-1,nan,10,8,8,1\n")
    assert run(["mot", "--dets", str(tmp_path / "d.txt"), "--frames", str(tmp_path / "f"),
                "--out", str(tmp_path / "o.txt")]) == 1


def test_runtime_error_exits_2(tmp_path, monkeypatch):
    from trackheads import cli
    from trackheads.core import TrackError

    def boom(*args, **kwargs):
        raise TrackError("filter diverged")

    monkeypatch.setattr(cli, "track_sequence", boom)
    io.write_frames([np.full((32, 32, 3), 100, np.uint8)] * 2, tmp_path / "f")
    assert run(["sot", "--frames", str(tmp_path / "f"), "--init", "4,4,8,8", "--out", str(tmp_path / "o.txt")]) == 2


def test_help_exits_0():
    assert run(["--help"]) == 0
