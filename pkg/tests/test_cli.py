import csv
import hashlib
import json

import numpy as np
import pytest

from beamtrack.audio import read_wav, write_wav
from beamtrack.cli import main, parse_mics
from beamtrack.geometry import body_geometry, cube_geometry
from beamtrack.pipeline import ConfigError, config_from_json, load_config
from beamtrack.scenarios import single_sound
from beamtrack.simulator import Keypoint, SceneSpec, SourceScript, scene_to_json


def write_json(path, doc):
    path.write_text(json.dumps(doc))
    return path


@pytest.fixture
def cube_file(tmp_path):
    return write_json(tmp_path / "cube.json", cube_geometry().to_json())


def digest(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


def test_parse_mics():
    assert parse_mics("1-4") == [0, 1, 2, 3]
    assert parse_mics("1,3,5-6") == [0, 2, 4, 5]
    with pytest.raises(ValueError):
        parse_mics("0-2")


def test_simulate_shape_and_determinism(tmp_path, cube_file):
    scene = SceneSpec(10.0, [SourceScript("noise", [Keypoint(0, 30, 0)], gain=0.05)], 0.01, seed=3)
    scene_file = write_json(tmp_path / "scene.json", scene_to_json(scene))
    outs = []
    for k in range(2):
        wav = tmp_path / f"out{k}.wav"
        assert main(["simulate", str(scene_file), "--geometry", str(cube_file), "--out", str(wav),
                     "--truth", str(tmp_path / f"gt{k}.csv")]) == 0
        outs.append(wav)
    samples, rate = read_wav(outs[0])
    assert samples.shape == (8, 480000) and rate == 48000
    assert digest(outs[0]) == digest(outs[1])


def test_malformed_scene_exit_code(tmp_path, cube_file, capsys):
    bad = write_json(tmp_path / "scene.json", {"duration": 1, "sources": [{"keypoints": [{"t": 0}]}]})
    assert main(["simulate", str(bad), "--geometry", str(cube_file), "--out", str(tmp_path / "x.wav")]) == 1
    assert "azimuth" in capsys.readouterr().err


def test_missing_file_exit_code(tmp_path, cube_file):
    assert main(["simulate", str(tmp_path / "nope.json"), "--geometry", str(cube_file),
                 "--out", str(tmp_path / "x.wav")]) == 2


def test_pcm16_round_trip(tmp_path):
    x = np.random.default_rng(0).uniform(-0.5, 0.5, (4, 1000))
    write_wav(tmp_path / "a.wav", x, 48000, "pcm16")
    y, _ = read_wav(tmp_path / "a.wav")
    assert np.abs(x - y).max() <= 1 / 32768


def test_track_silence(tmp_path, cube_file):
    wav = tmp_path / "silence.wav"
    write_wav(wav, np.zeros((8, 48000 * 2)), 48000)
    out = tmp_path / "traj.csv"
    assert main(["track", str(wav), "--geometry", str(cube_file), "--out", str(out)]) == 0
    rows = list(csv.reader(out.open()))
    assert rows == [["timestamp", "source_id", "azimuth", "elevation", "existence", "activity", "observed"]]


def test_track_channel_mismatch_and_rate(tmp_path, cube_file):
    wav = tmp_path / "four.wav"
    write_wav(wav, np.zeros((4, 4800)), 48000)
    assert main(["track", str(wav), "--geometry", str(cube_file), "--out", str(tmp_path / "t.csv")]) == 1
    wav = tmp_path / "slow.wav"
    write_wav(wav, np.zeros((8, 4800)), 16000)
    assert main(["track", str(wav), "--geometry", str(cube_file), "--out", str(tmp_path / "t.csv")]) == 1



def test_track_without_geometry(tmp_path, capsys):
    wav = tmp_path / "x.wav"
    write_wav(wav, np.zeros((8, 4800)), 48000)
    assert main(["track", str(wav), "--out", str(tmp_path / "t.csv")]) == 1
    assert "geometry" in capsys.readouterr().err


def test_track_and_evaluate_single_source(tmp_path, cube_file, capsys):
    scene = SceneSpec(4.0, [SourceScript("noise", [Keypoint(0, -70.0, 15.0, 2.0)], gain=0.1)], 0.005, seed=8)
    scene_file = write_json(tmp_path / "scene.json", scene_to_json(scene))
    wav, gt = tmp_path / "s.wav", tmp_path / "gt.csv"
    assert main(["simulate", str(scene_file), "--geometry", str(cube_file), "--out", str(wav), "--truth", str(gt)]) == 0
    traj, diag, report = tmp_path / "t.csv", tmp_path / "d.csv", tmp_path / "r.json"
    assert main(["track", str(wav), "--geometry", str(cube_file), "--out", str(traj), "--json",
                 str(tmp_path / "t.json"), "--diagnostics", str(diag), "--refine"]) == 0
    assert "real-time factor" in capsys.readouterr().out
    ids = {r["source_id"] for r in csv.DictReader(traj.open())}
    assert len(ids) == 1
    assert main(["evaluate", str(traj), str(gt), "--json", str(report)]) == 0
    rep = json.loads(report.read_text())
    assert rep["azimuth_rms"] <= 2.5 and rep["elevation_rms"] <= 2.5
    assert next(csv.reader(diag.open())) == ["timestamp", "rank", "azimuth", "elevation", "energy", "confidence"]
    assert len(json.loads((tmp_path / "t.json").read_text())) > 0


def test_mics_subset_flag(tmp_path):
    geo_file = write_json(tmp_path / "body.json", body_geometry().to_json())
    wav = tmp_path / "x.wav"
    write_wav(wav, np.zeros((8, 9600)), 48000)
    assert main(["track", str(wav), "--geometry", str(geo_file), "--mics", "1-4", "--out", str(tmp_path / "t.csv")]) == 0
    assert main(["track", str(wav), "--geometry", str(geo_file), "--mics", "1-9", "--out", str(tmp_path / "t.csv")]) == 1


def test_config_overrides_and_validation(tmp_path):
    cfg = config_from_json({}, {"tracker.delay_updates": "12", "beamformer.refine": "yes",
                                "tracker.class_proportions": "[0.2, 0.5, 0.3]"})
    assert cfg.tracker.delay_updates == 12 and cfg.beamformer.refine is True
    assert cfg.tracker.class_proportions == (0.2, 0.5, 0.3)
    with pytest.raises(ConfigError, match="tracker.bogus"):
        config_from_json({"tracker": {"bogus": 1}})
    with pytest.raises(ConfigError, match="frontend"):
        config_from_json({}, {"frontend.gamma": "1.5"})
    with pytest.raises(ConfigError):
        config_from_json({}, {"tracker.n_particles": "0"})
    cfg_file = write_json(tmp_path / "p.json", {"geometry": "missing.json"})
    with pytest.raises(FileNotFoundError):
        load_config(cfg_file)


def test_evaluate_empty_inputs(tmp_path, capsys):
    traj = tmp_path / "t.csv"
    traj.write_text("timestamp,source_id,azimuth,elevation,existence,activity,observed\n")
    gt = tmp_path / "gt.csv"
    gt.write_text("timestamp,source_id,azimuth,elevation,active\n")
    assert main(["evaluate", str(traj), str(gt)]) == 0
    assert "status: empty" in capsys.readouterr().out
