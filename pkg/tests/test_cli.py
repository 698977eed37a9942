"""End-to-end CLI behavior and the exit-code contract."""

import hashlib
import json
from pathlib import Path

import numpy as np
import pytest
from scipy.io import wavfile

from rirlab.cli import main
from rirlab.wavio import read_wav


def _digest_tree(root: Path) -> dict:
    return {
        p.name: hashlib.sha256(p.read_bytes()).hexdigest()
        for p in sorted(Path(root).iterdir())
        if p.is_file()
    }


@pytest.fixture(scope="module")
def cli_dataset(tmp_path_factory):
    out = tmp_path_factory.mktemp("cli_ds")
    assert main(["synth", "--out", str(out), "--n", "12", "--profile", "toy", "--seed", "5"]) == 0
    return out


@pytest.fixture(scope="module")
def cli_run(tmp_path_factory, cli_dataset):
    out = tmp_path_factory.mktemp("cli_run")
    code = main(
        [
            "train",
            "--manifest", str(cli_dataset / "manifest.json"),
            "--out", str(out),
            "--profile", "toy",
            "--set", "epochs=2",
        ]
    )
    assert code == 0
    return out


class TestSynth:
    def test_same_seed_identical_trees(self, tmp_path):
        for sub in ("a", "b"):
            code = main(
                ["synth", "--out", str(tmp_path / sub), "--n", "6", "--profile", "toy",
                 "--seed", "7"]
            )
            assert code == 0
        assert _digest_tree(tmp_path / "a") == _digest_tree(tmp_path / "b")

    def test_toy_profile_shapes(self, cli_dataset):
        manifest = json.loads((cli_dataset / "manifest.json").read_text())
        assert manifest["sample_rate"] == 8000
        assert manifest["example_len"] == 8000
        rir = read_wav(cli_dataset / manifest["entries"][0]["rir"])
        assert len(rir) == 256

    def test_prints_split_counts(self, tmp_path, capsys):
        main(["synth", "--out", str(tmp_path / "ds"), "--n", "10", "--profile", "toy",
              "--seed", "1"])
        out = capsys.readouterr().out
        assert "train=8 val=1 test=1" in out
        assert "manifest" in out

    def test_empty_clean_dir_exits_2(self, tmp_path, capsys):
        empty = tmp_path / "empty"
        empty.mkdir()
        code = main(
            ["synth", "--out", str(tmp_path / "ds"), "--n", "4", "--profile", "toy",
             "--clean-dir", str(empty)]
        )
        assert code == 2
        assert str(empty) in capsys.readouterr().err

    def test_clean_dir_sources_used(self, tmp_path):
        clean_dir = tmp_path / "clean"
        clean_dir.mkdir()
        rng = np.random.default_rng(0)
        wavfile.write(
            clean_dir / "voice.wav", 8000, rng.uniform(-0.5, 0.5, 30000).astype(np.float32)
        )
        code = main(
            ["synth", "--out", str(tmp_path / "ds"), "--n", "4", "--profile", "toy",
             "--seed", "2", "--clean-dir", str(clean_dir)]
        )
        assert code == 0

    def test_wrong_rate_clean_dir_exits_2(self, tmp_path):
        clean_dir = tmp_path / "clean16k"
        clean_dir.mkdir()
        wavfile.write(clean_dir / "x.wav", 16000, np.zeros(1000, dtype=np.float32))
        code = main(
            ["synth", "--out", str(tmp_path / "ds"), "--n", "4", "--profile", "toy",
             "--clean-dir", str(clean_dir)]
        )
        assert code == 2


class TestTrain:
    def test_override_reflected_in_config_echo(self, tmp_path, cli_dataset):
        out = tmp_path / "run"
        code = main(
            ["train", "--manifest", str(cli_dataset / "manifest.json"), "--out", str(out),
             "--profile", "toy", "--set", "epochs=1", "--set", "lambda_mse=0"]
        )
        assert code == 0
        echo = json.loads((out / "config.json").read_text())
        assert echo["train"]["epochs"] == 1
        assert echo["train"]["lambda_mse"] == 0.0
        assert echo["profile"] == "toy"

    def test_run_directory_layout(self, cli_run):
        for name in ("config.json", "log.csv", "best.ckpt", "last.ckpt"):
            assert (cli_run / name).exists()

    def test_rerun_reproduces_log_bytes(self, tmp_path, cli_dataset, cli_run):
        out = tmp_path / "rerun"
        code = main(
            ["train", "--manifest", str(cli_dataset / "manifest.json"), "--out", str(out),
             "--profile", "toy", "--set", "epochs=2"]
        )
        assert code == 0
        assert (out / "log.csv").read_bytes() == (cli_run / "log.csv").read_bytes()

    def test_unknown_override_exits_2(self, tmp_path, cli_dataset):
        code = main(
            ["train", "--manifest", str(cli_dataset / "manifest.json"),
             "--out", str(tmp_path / "r"), "--profile", "toy", "--set", "nonsense=1"]
        )
        assert code == 2

    def test_missing_manifest_exits_3(self, tmp_path):
        code = main(
            ["train", "--manifest", str(tmp_path / "absent.json"), "--out", str(tmp_path / "r"),
             "--profile", "toy"]
        )
        assert code == 3


class TestEstimate:
    def test_output_length_and_determinism(self, tmp_path, cli_dataset, cli_run):
        manifest = json.loads((cli_dataset / "manifest.json").read_text())
        wav_in = cli_dataset / manifest["entries"][0]["reverberant"]
        out1, out2 = tmp_path / "a.wav", tmp_path / "b.wav"
        for out in (out1, out2):
            code = main(
                ["estimate", "--ckpt", str(cli_run / "best.ckpt"), "--in", str(wav_in),
                 "--out", str(out)]
            )
            assert code == 0
        assert len(read_wav(out1)) == 256
        assert out1.read_bytes() == out2.read_bytes()

    def test_stereo_input_exits_2(self, tmp_path, cli_run):
        stereo = tmp_path / "stereo.wav"
        wavfile.write(stereo, 8000, np.zeros((8000, 2), dtype=np.float32))
        code = main(
            ["estimate", "--ckpt", str(cli_run / "best.ckpt"), "--in", str(stereo),
             "--out", str(tmp_path / "o.wav")]
        )
        assert code == 2

    def test_sample_rate_mismatch_exits_2_with_expected_rate(self, tmp_path, cli_run, capsys):
        wrong = tmp_path / "wrong.wav"
        wavfile.write(wrong, 16000, np.zeros(16000, dtype=np.float32))
        code = main(
            ["estimate", "--ckpt", str(cli_run / "best.ckpt"), "--in", str(wrong),
             "--out", str(tmp_path / "o.wav")]
        )
        assert code == 2
        assert "8000" in capsys.readouterr().err


class TestEvaluate:
    def test_identity_reports_floor(self, tmp_path, cli_dataset):
        out = tmp_path / "ident.csv"
        code = main(
            ["evaluate", "--manifest", str(cli_dataset / "manifest.json"), "--split", "test",
             "--method", "identity", "--out", str(out)]
        )
        assert code == 0
        lines = out.read_text().strip().split("\n")
        assert lines[0].startswith("# merged_bands:")
        assert lines[1] == "center_hz,log_edr_loss,ere_mae_db"
        for line in lines[2:-1]:
            _, log_loss, ere_mae = line.split(",")
            assert float(log_loss) == -12.0
            assert float(ere_mae) == 0.0
        label, drr_mae, mse = lines[-1].split(",")
        assert label == "summary"
        assert float(drr_mae) == 0.0
        assert float(mse) == 0.0

    def test_baseline_near_exact_on_synthetic_data(self, tmp_path, cli_dataset):
        out = tmp_path / "base.csv"
        code = main(
            ["evaluate", "--manifest", str(cli_dataset / "manifest.json"), "--split", "test",
             "--method", "baseline", "--out", str(out)]
        )
        assert code == 0
        summary = out.read_text().strip().split("\n")[-1].split(",")
        assert float(summary[2]) < 1e-6

    def test_model_method_and_per_example_rows(self, tmp_path, cli_dataset, cli_run):
        out = tmp_path / "model.csv"
        code = main(
            ["evaluate", "--manifest", str(cli_dataset / "manifest.json"), "--split", "test",
             "--method", f"model:{cli_run / 'best.ckpt'}", "--out", str(out)]
        )
        assert code == 0
        per_example = tmp_path / "model_examples.csv"
        lines = per_example.read_text().strip().split("\n")
        assert lines[0] == "example,reverberant,edr_loss,ere_err_db,drr_err_db,mse"
        manifest = json.loads((cli_dataset / "manifest.json").read_text())
        n_test = sum(1 for e in manifest["entries"] if e["split"] == "test")
        assert len(lines) == 1 + n_test

    def test_unknown_method_exits_2(self, tmp_path, cli_dataset):
        code = main(
            ["evaluate", "--manifest", str(cli_dataset / "manifest.json"), "--split", "test",
             "--method", "oracle", "--out", str(tmp_path / "x.csv")]
        )
        assert code == 2


class TestPlotData:
    def test_outputs_and_monotone_truth(self, tmp_path, cli_dataset, cli_run):
        out = tmp_path / "plots"
        code = main(
            ["plot-data", "--ckpt", str(cli_run / "best.ckpt"),
             "--manifest", str(cli_dataset / "manifest.json"), "--example", "0",
             "--out", str(out)]
        )
        assert code == 0
        waveform = (out / "waveform.csv").read_text().strip().split("\n")
        assert waveform[0] == "time_s,truth,estimated"
        assert len(waveform) == 1 + 256
        edr_files = sorted(out.glob("edr_*.csv"))
        assert edr_files
        for path in edr_files:
            rows = path.read_text().strip().split("\n")[1:]
            truth_col = [float(r.split(",")[1]) for r in rows]
            assert all(a >= b - 1e-9 for a, b in zip(truth_col, truth_col[1:]))
            assert all(v >= -120.0 for v in truth_col)

    def test_frame0_gap_equals_total_band_energy_difference(
        self, tmp_path, cli_dataset, cli_run
    ):
        from rirlab.dsp import StftConfig, octave_bands, stft
        from rirlab.models import estimate, load_checkpoint
        from rirlab.profiles import get_profile

        out = tmp_path / "plots"
        assert main(
            ["plot-data", "--ckpt", str(cli_run / "best.ckpt"),
             "--manifest", str(cli_dataset / "manifest.json"), "--example", "1",
             "--out", str(out)]
        ) == 0
        manifest = json.loads((cli_dataset / "manifest.json").read_text())
        entry = manifest["entries"][1]
        truth = read_wav(cli_dataset / entry["rir"])
        est = estimate(load_checkpoint(cli_run / "best.ckpt"),
                       read_wav(cli_dataset / entry["reverberant"]))
        profile = get_profile("toy")
        cfg = StftConfig(profile.stft_window, profile.stft_hop, "hann")
        partition = octave_bands(8000, profile.stft_window, list(profile.band_centers))
        # independent totals: direct bin sums of |STFT|^2 over all frames
        spec_truth = np.abs(stft(truth, cfg)) ** 2
        spec_est = np.abs(stft(est, cfg)) ** 2
        for b, center in enumerate(partition.centers):
            rows = (out / f"edr_{int(center)}.csv").read_text().strip().split("\n")[1:]
            first = rows[0].split(",")
            gap = float(first[1]) - float(first[2])
            start, stop = partition.bin_ranges[b]
            truth_total = max(np.sum(spec_truth[:, start:stop]), 1e-12)
            est_total = max(np.sum(spec_est[:, start:stop]), 1e-12)
            expected_gap = 10 * np.log10(truth_total) - 10 * np.log10(est_total)
            assert gap == pytest.approx(expected_gap, abs=1e-9)

    def test_out_of_range_example_exits_2(self, tmp_path, cli_dataset, cli_run):
        code = main(
            ["plot-data", "--ckpt", str(cli_run / "best.ckpt"),
             "--manifest", str(cli_dataset / "manifest.json"), "--example", "99",
             "--out", str(tmp_path / "p")]
        )
        assert code == 2


class TestArgumentErrors:
    def test_bad_subcommand_exits_2(self):
        with pytest.raises(SystemExit) as exc:
            main(["frobnicate"])
        assert exc.value.code == 2

    def test_bad_profile_exits_2(self, tmp_path):
        with pytest.raises(SystemExit) as exc:
            main(["synth", "--out", str(tmp_path), "--n", "4", "--profile", "huge"])
        assert exc.value.code == 2
