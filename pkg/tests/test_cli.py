"""End-to-end CLI tests (run through main() in-process)."""

import json

import numpy as np
import pytest

from flowstyle.cli import main
from flowstyle.frame_io import write_frame
from flowstyle.synth import smooth_texture, translating_sequence


def write_sequence(d, frames):
    d.mkdir(parents=True, exist_ok=True)
    width = max(4, len(str(len(frames) - 1)))
    for i, f in enumerate(frames):
        write_frame(d / f"{i:0{width}d}.png", f)


@pytest.fixture()
def small_video(tmp_path):
    frames = translating_sequence(8, 32, 32, seed=3, step=(0.2, 0.1))
    d = tmp_path / "frames"
    write_sequence(d, frames)
    style = tmp_path / "style.png"
    write_frame(style, smooth_texture(32, 32, 9))
    return d, style


class TestSpeedupCommand:
    def test_reference_pairs(self, capsys):
        rc = main(["speedup", "--pairs", "0.52/0.0006,0.73/0.002,0.99/0.006,1.51/0.02"])
        assert rc == 0
        out = capsys.readouterr().out
        values = [float(line.rsplit(" ", 1)[-1].rstrip("x")) for line in out.strip().splitlines()]
        for got, want in zip(values, [866.7, 365.0, 165.0, 75.5]):
            assert abs(got - want) / want < 0.005

    def test_curve_csv(self, tmp_path):
        rc = main([
            "speedup", "--n", "300", "--intervals", "1,5,10", "--td", "0.52",
            "--ti", "0.0006", "--out", str(tmp_path),
        ])
        assert rc == 0
        lines = (tmp_path / "speedup_curve.csv").read_text().strip().splitlines()
        assert lines[0] == "interval,key_frames,exact,approx"
        assert len(lines) == 4
        first = lines[1].split(",")
        assert float(first[2]) == 1.0

    def test_requires_some_mode(self, capsys):
        assert main(["speedup"]) == 2

    def test_bad_pair_string(self, capsys):
        assert main(["speedup", "--pairs", "abc"]) == 2


class TestRunCommand:
    def test_end_to_end(self, tmp_path, small_video):
        frames_dir, style = small_video
        out = tmp_path / "out"
        cfg = {
            "latency_table": {"32x32": {"edge": 0.003, "cloud": 0.088}},
            "latency_destination": "edge",
            "working_size": 32,
        }
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps(cfg))
        rc = main([
            "run", "--config", str(cfg_path), "--input", str(frames_dir),
            "--style", str(style), "--key-interval", "4", "--scale", "1",
            "--seed", "0", "--out", str(out),
        ])
        assert rc == 0
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["complete"] is True
        assert len(manifest["frames"]) == 8
        kinds = {e["index"]: e["kind"] for e in manifest["frames"]}
        assert kinds[0] == "stylized-key" and kinds[4] == "stylized-key"
        assert kinds[1] == "interpolated"
        report = json.loads((out / "report.json").read_text())
        assert report["n_keys"] == 2 and report["n_intermediates"] == 6
        lat = report["simulated_latency"]
        assert lat["configured"] is True
        assert lat["per_key_frame_s"] == 0.003
        assert all(e["latency_s"] == 0.003 for e in lat["key_frames"])
        assert (out / "0003.png").exists()

    def test_empty_input_fails(self, tmp_path):
        empty = tmp_path / "none"
        empty.mkdir()
        rc = main([
            "run", "--input", str(empty), "--style", "missing.png",
            "--out", str(tmp_path / "out"),
        ])
        assert rc == 2

    def test_missing_style_fails(self, tmp_path, small_video):
        frames_dir, _ = small_video
        rc = main(["run", "--input", str(frames_dir), "--out", str(tmp_path / "o")])
        assert rc == 2

    def test_aborted_run_leaves_flagged_manifest(self, tmp_path, small_video, monkeypatch):
        import flowstyle.cli as cli_mod

        frames_dir, style = small_video
        out = tmp_path / "out"
        calls = {"n": 0}
        real = cli_mod.write_frame

        def flaky(path, frame):
            calls["n"] += 1
            if calls["n"] > 3:
                raise OSError("disk full")
            real(path, frame)

        monkeypatch.setattr(cli_mod, "write_frame", flaky)
        with pytest.raises(OSError):
            cli_mod.run_pipeline(cli_mod.PipelineConfig(
                input_dir=str(frames_dir), out_dir=str(out), style_path=str(style),
                key_interval=4, scale=1.0, working_size=32, seed=0,
            ))
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["complete"] is False
        assert len(manifest["frames"]) == 3


class TestFlowInterpCommands:
    def test_flow_then_interp(self, tmp_path, small_video):
        frames_dir, style = small_video
        flows = tmp_path / "flows"
        rc = main([
            "flow", "--frames", str(frames_dir), "--key-interval", "4",
            "--out", str(flows),
        ])
        assert rc == 0
        assert (flows / "0001.flo").exists()
        assert (flows / "flow_stats.csv").exists()

        keys_dir = tmp_path / "keys"
        keys_dir.mkdir()
        # pretend-stylized keys: recolored copies of frames 0 and 4
        for name, seed in (("0000.png", 21), ("0004.png", 22)):
            write_frame(keys_dir / name, smooth_texture(32, 32, seed))
        out = tmp_path / "interp"
        rc = main([
            "interp", "--frames", str(frames_dir), "--stylized-keys", str(keys_dir),
            "--flows", str(flows), "--key-interval", "4", "--out", str(out),
        ])
        assert rc == 0
        for i in (1, 2, 3, 5, 6, 7):
            assert (out / f"{i:04d}.png").exists()
        assert not (out / "0000.png").exists()

    def test_interp_missing_flow(self, tmp_path, small_video):
        frames_dir, _ = small_video
        keys_dir = tmp_path / "keys"
        keys_dir.mkdir()
        write_frame(keys_dir / "0000.png", smooth_texture(32, 32, 1))
        write_frame(keys_dir / "0004.png", smooth_texture(32, 32, 2))
        rc = main([
            "interp", "--frames", str(frames_dir), "--stylized-keys", str(keys_dir),
            "--flows", str(tmp_path / "noflows"), "--key-interval", "4",
            "--out", str(tmp_path / "o"),
        ])
        assert rc == 2


class TestCompareCommand:
    def test_identical_dirs_score_one(self, tmp_path, capsys):
        frames = [smooth_texture(32, 32, s) for s in range(3)]
        a, b = tmp_path / "a", tmp_path / "b"
        write_sequence(a, frames)
        write_sequence(b, frames)
        rc = main(["compare", str(a), str(b)])
        assert rc == 0
        out = capsys.readouterr().out
        assert "mean MS-SSIM over 3 frames: 1.000000" in out

    def test_noise_pair_scores_low(self, tmp_path, capsys):
        rng = np.random.default_rng(0)
        a, b = tmp_path / "a", tmp_path / "b"
        write_sequence(a, [rng.random((32, 32, 3))])
        write_sequence(b, [rng.random((32, 32, 3))])
        rc = main(["compare", str(a), str(b), "--out", str(tmp_path / "rep")])
        assert rc == 0
        mean = float(capsys.readouterr().out.strip().splitlines()[-1].rsplit(" ", 1)[-1])
        assert mean < 0.2
        assert (tmp_path / "rep" / "ms_ssim.csv").exists()

    def test_mismatched_sets_fail(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        write_sequence(a, [smooth_texture(32, 32, 1)])
        write_sequence(b, [smooth_texture(32, 32, 1), smooth_texture(32, 32, 2)])
        assert main(["compare", str(a), str(b)]) == 2


class TestStylizeTrainBenchFedsim:
    def test_stylize_single_frame(self, tmp_path, capsys):
        content = tmp_path / "c.png"
        style = tmp_path / "s.png"
        write_frame(content, smooth_texture(32, 32, 1))
        write_frame(style, smooth_texture(32, 32, 2))
        out = tmp_path / "styled.png"
        rc = main([
            "stylize", "--content", str(content), "--style", str(style),
            "--scale", "2", "--working-size", "24", "--out", str(out),
        ])
        assert rc == 0
        assert out.exists()
        assert "48x48" in capsys.readouterr().out

    def test_train_writes_params_and_trace(self, tmp_path, capsys):
        out = tmp_path / "train"
        rc = main([
            "train", "--pairs", "2", "--size", "16", "--steps", "3",
            "--seed", "1", "--out", str(out),
        ])
        assert rc == 0
        assert (out / "params.fsty").exists()
        lines = (out / "loss_trace.csv").read_text().strip().splitlines()
        assert len(lines) == 4

    def test_trained_params_load_back(self, tmp_path):
        out = tmp_path / "train"
        main(["train", "--pairs", "2", "--size", "16", "--steps", "2", "--out", str(out)])
        content = tmp_path / "c.png"
        style = tmp_path / "s.png"
        write_frame(content, smooth_texture(24, 24, 5))
        write_frame(style, smooth_texture(24, 24, 6))
        rc = main([
            "stylize", "--content", str(content), "--style", str(style),
            "--params", str(out / "params.fsty"), "--working-size", "16",
            "--out", str(tmp_path / "o.png"),
        ])
        assert rc == 0

    def test_fedsim_outputs(self, tmp_path):
        out = tmp_path / "fed"
        rc = main([
            "fedsim", "--edges", "1,2", "--rounds", "1", "--images-per-round", "4",
            "--image-size", "12", "--pairs-per-edge", "2", "--out", str(out),
        ])
        assert rc == 0
        for n in (1, 2):
            lines = (out / f"loss_N{n}.csv").read_text().strip().splitlines()
            assert lines[0] == "round,holdout_loss"
            assert len(lines) == 3
            events = [json.loads(l) for l in (out / f"events_N{n}.jsonl").read_text().splitlines()]
            assert any(e["event"] == "aggregate" for e in events)

    def test_fedsim_json_config(self, tmp_path):
        cfg = {
            "edges": 2,
            "rounds": 1,
            "images_per_round": 4,
            "image_size": 12,
            "pairs_per_edge": 2,
            "seed": 3,
            "resolution": "512x256",
            "latency_table": {"512x256": {"up": 0.003, "down": 0.005}},
        }
        cfg_path = tmp_path / "sim.json"
        cfg_path.write_text(json.dumps(cfg))
        out = tmp_path / "fed"
        rc = main(["fedsim", "--config", str(cfg_path), "--out", str(out)])
        assert rc == 0
        events = [json.loads(l) for l in (out / "events_N2.jsonl").read_text().splitlines()]
        ups = [e for e in events if e["event"] == "upload"]
        downs = [e for e in events if e["event"] == "download"]
        assert ups and all(e["latency_s"] == 0.003 for e in ups)
        assert downs and all(e["latency_s"] == 0.005 for e in downs)

    def test_bench_csv(self, tmp_path, capsys):
        out = tmp_path / "bench"
        rc = main([
            "bench", "--resolutions", "48x48", "--trials", "2", "--scale", "2",
            "--out", str(out),
        ])
        assert rc == 0
        lines = (out / "bench.csv").read_text().strip().splitlines()
        assert len(lines) == 2
        cols = lines[1].split(",")
        assert cols[0] == "48x48"
        assert float(cols[4]) > 1.0  # stylize costs more than warp


class TestConfigHandling:
    def test_unknown_config_key_fails(self, tmp_path, small_video):
        frames_dir, style = small_video
        cfg_path = tmp_path / "bad.json"
        cfg_path.write_text(json.dumps({"no_such_option": 1}))
        rc = main([
            "run", "--config", str(cfg_path), "--input", str(frames_dir),
            "--style", str(style), "--out", str(tmp_path / "o"),
        ])
        assert rc == 2
