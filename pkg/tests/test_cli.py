import json

import numpy as np
import pytest

from ecgscalo import cli, ingest, pipeline, scalogram
from ecgscalo.classifier import NetworkConfig, TrainConfig
from ecgscalo.config import (PipelineConfig, ScalogramConfig, load_config,
                             save_config)
from ecgscalo.ingest import EcgRecord, SynthSpec, synth_ecg


def small_config(epochs=30, lr=0.08, seed=3):
    """Desk-size pipeline: 16x256 scalograms into a 16x64 tiny network."""
    return PipelineConfig(
        feature_length=256,
        scalogram=ScalogramConfig(num_scales=16, iterations=8),
        network=NetworkConfig(stage_widths=(4, 8), blocks_per_stage=(1, 1),
                              input_height=16, input_width=64),
        training=TrainConfig(learning_rate=lr, momentum=0.9, batch_size=4,
                             epochs=epochs, seed=seed),
        seed=seed)


def write_dataset(tmp_path, n_normal=4, n_noise=4):
    """Synthetic raw16 records: beating hearts labelled N, flat lines ~."""
    data = tmp_path / "data"
    data.mkdir(exist_ok=True)
    lines = []
    for i in range(n_normal):
        rec, _ = synth_ecg(SynthSpec(duration=20.0, bpm=60.0 + 5.0 * i,
                                     noise_sigma=0.02, seed=i))
        ingest.write_raw16(EcgRecord(id=f"A{i:03d}", fs=200.0,
                                     samples=rec.samples, scale=1e-4),
                           data / f"A{i:03d}.raw16")
        lines.append(f"A{i:03d},N")
    for i in range(n_noise):
        flat = EcgRecord(id=f"Z{i:03d}", fs=200.0,
                         samples=np.full(4000, 1e-4), scale=1e-4)
        ingest.write_raw16(flat, data / f"Z{i:03d}.raw16")
        lines.append(f"Z{i:03d},~")
    labels = tmp_path / "REFERENCE.csv"
    labels.write_text("".join(line + "\n" for line in lines))
    return data, labels


class TestConfig:
    def test_round_trip_exact(self, tmp_path):
        cfg = small_config()
        p = tmp_path / "cfg.json"
        save_config(cfg, p)
        assert load_config(p) == cfg

    def test_default_round_trip(self, tmp_path):
        cfg = PipelineConfig()
        p = tmp_path / "cfg.json"
        save_config(cfg, p)
        assert load_config(p) == cfg

    def test_seed_override_flows_to_training(self):
        cfg = small_config(seed=3).with_seed(99)
        assert cfg.seed == 99
        assert cfg.training.seed == 99

    def test_incompatible_dimensions_rejected(self):
        with pytest.raises(ValueError, match="multiple"):
            PipelineConfig(feature_length=100)  # not divisible by 256

    def test_bad_detector_and_gate_values_rejected(self):
        from ecgscalo.config import DetectorConfig, GateConfig
        with pytest.raises(ValueError):
            DetectorConfig(integration_window=0)
        with pytest.raises(ValueError):
            DetectorConfig(update_factor=0.0)
        with pytest.raises(ValueError):
            GateConfig(bpm_low=200.0, bpm_high=30.0)

    def test_init_config_command(self, tmp_path):
        out = tmp_path / "default.json"
        assert cli.main(["init-config", str(out)]) == 0
        assert load_config(out) == PipelineConfig()

    def test_init_config_seed_override(self, tmp_path):
        out = tmp_path / "seeded.json"
        assert cli.main(["--seed", "99", "init-config", str(out)]) == 0
        cfg = load_config(out)
        assert cfg.seed == 99 and cfg.training.seed == 99

    def test_dump_filter_coefficients(self, tmp_path):
        out = tmp_path / "filters.json"
        assert cli.main(["dump-filter", str(out)]) == 0
        dump = json.loads(out.read_text())
        assert len(dump["butterworth"]["sections"]) == 3  # order 6 -> 3 SOS
        assert dump["qrs_highpass"]["num"][16] == 32.0
        assert dump["qrs_lowpass"]["den"] == [1.0, -2.0, 1.0]


class TestStageChaining:
    def test_files_match_in_process_bytes(self, tmp_path):
        cfg = small_config()
        cfg_path = tmp_path / "cfg.json"
        save_config(cfg, cfg_path)
        rec, _ = synth_ecg(SynthSpec(duration=20.0, bpm=72.0,
                                     noise_sigma=0.02, seed=5))
        ingest.write_raw16(EcgRecord(id="R1", fs=200.0, samples=rec.samples,
                                     scale=1e-4), tmp_path / "R1.raw16")

        record = ingest.load_record(tmp_path / "R1.raw16")
        out = pipeline.run_record(record, cfg)
        scalogram.write_pgm(out.image, tmp_path / "direct.pgm")

        base = ["--config", str(cfg_path)]
        assert cli.main(base + ["preprocess", str(tmp_path / "R1.raw16"),
                                str(tmp_path / "filt.csv")]) == 0
        assert cli.main(base + ["detect", str(tmp_path / "filt.csv"),
                                str(tmp_path / "peaks.csv")]) == 0
        assert cli.main(base + ["featurize", str(tmp_path / "filt.csv"),
                                str(tmp_path / "wave.csv"),
                                "--peaks", str(tmp_path / "peaks.csv")]) == 0
        assert cli.main(base + ["scalogram", str(tmp_path / "wave.csv"),
                                str(tmp_path / "chained.pgm"),
                                "--from-wave"]) == 0

        assert ((tmp_path / "chained.pgm").read_bytes()
                == (tmp_path / "direct.pgm").read_bytes())

    def test_featurize_without_peaks_file_is_identical(self, tmp_path):
        cfg_path = tmp_path / "cfg.json"
        save_config(small_config(), cfg_path)
        rec, _ = synth_ecg(SynthSpec(duration=20.0, bpm=64.0,
                                     noise_sigma=0.01, seed=8))
        ingest.write_raw16(EcgRecord(id="R2", fs=200.0, samples=rec.samples,
                                     scale=1e-4), tmp_path / "R2.raw16")
        base = ["--config", str(cfg_path)]
        cli.main(base + ["preprocess", str(tmp_path / "R2.raw16"),
                         str(tmp_path / "f.csv")])
        cli.main(base + ["detect", str(tmp_path / "f.csv"),
                         str(tmp_path / "p.csv")])
        cli.main(base + ["featurize", str(tmp_path / "f.csv"),
                         str(tmp_path / "w1.csv"),
                         "--peaks", str(tmp_path / "p.csv")])
        cli.main(base + ["featurize", str(tmp_path / "f.csv"),
                         str(tmp_path / "w2.csv")])
        assert ((tmp_path / "w1.csv").read_bytes()
                == (tmp_path / "w2.csv").read_bytes())


class TestCommands:
    def test_scalogram_of_all_zero_record_is_black(self, tmp_path):
        cfg_path = tmp_path / "cfg.json"
        save_config(small_config(), cfg_path)
        zero = tmp_path / "zero.csv"
        zero.write_text("0.0\n" * 4000)
        out = tmp_path / "zero.pgm"
        rc = cli.main(["--config", str(cfg_path), "scalogram", str(zero),
                       str(out)])
        assert rc == 0
        data = out.read_bytes()
        header = b"P5\n256 16\n255\n"
        assert data.startswith(header)
        assert set(data[len(header):]) == {0}

    def test_detect_writes_taps(self, tmp_path):
        cfg_path = tmp_path / "cfg.json"
        save_config(small_config(), cfg_path)
        rec, _ = synth_ecg(SynthSpec(duration=10.0, bpm=70.0, seed=2))
        ingest.write_raw16(EcgRecord(id="T1", fs=200.0, samples=rec.samples,
                                     scale=1e-4), tmp_path / "T1.raw16")
        rc = cli.main(["--config", str(cfg_path), "detect",
                       str(tmp_path / "T1.raw16"),
                       str(tmp_path / "peaks.csv"),
                       "--taps", str(tmp_path / "taps")])
        assert rc == 0
        for name in ("bandpassed", "derivative", "squared", "integrated"):
            assert (tmp_path / "taps" / f"T1.{name}.csv").exists()
        indices = [int(v) for v in
                   (tmp_path / "peaks.csv").read_text().split()]
        assert len(indices) >= 9

    def test_error_line_is_machine_readable(self, tmp_path, capsys):
        rc = cli.main(["preprocess", str(tmp_path / "missing.csv"),
                       str(tmp_path / "out.csv")])
        assert rc == 1
        err = json.loads(capsys.readouterr().err.strip())
        assert err["error"]["stage"] == "ingest"
        assert "message" in err["error"]

    def test_unlabeled_record_is_reported(self, tmp_path, capsys):
        cfg_path = tmp_path / "cfg.json"
        save_config(small_config(epochs=1), cfg_path)
        data, labels = write_dataset(tmp_path, n_normal=2, n_noise=1)
        labels.write_text("A000,N\nZ000,~\n")  # A001 left unlabeled
        rc = cli.main(["--config", str(cfg_path), "train", str(data),
                       str(labels), str(tmp_path / "m.bin")])
        assert rc == 1
        err = json.loads(capsys.readouterr().err.strip())
        assert "A001" in err["error"]["message"]


class TestEndToEnd:
    def test_train_eval_predict(self, tmp_path, capsys):
        cfg_path = tmp_path / "cfg.json"
        save_config(small_config(epochs=30, lr=0.08), cfg_path)
        data, labels = write_dataset(tmp_path)
        model_path = tmp_path / "model.bin"
        base = ["--config", str(cfg_path)]

        rc = cli.main(base + ["train", str(data), str(labels),
                              str(model_path)])
        out = capsys.readouterr().out
        assert rc == 0
        assert "epoch 0: loss" in out

        rc = cli.main(base + ["eval", str(data), str(labels),
                              str(model_path), str(tmp_path / "rep.json")])
        out = capsys.readouterr().out
        assert rc == 0
        assert "F1 1.0000" in out  # perfect fit on the training directory
        report = json.loads((tmp_path / "rep.json").read_text())
        assert report["f1"][0] == 1.0 and report["f1"][3] == 1.0

        rc = cli.main(base + ["predict", str(data / "A000.raw16"),
                              str(model_path)])
        assert rc == 0
        assert capsys.readouterr().out.strip() == "N"

        rc = cli.main(base + ["predict", str(data / "Z000.raw16"),
                              str(model_path)])
        assert rc == 0
        assert capsys.readouterr().out.strip() == "~"

    def test_training_is_reproducible_across_runs(self, tmp_path):
        cfg_path = tmp_path / "cfg.json"
        save_config(small_config(epochs=3), cfg_path)
        data, labels = write_dataset(tmp_path, n_normal=2, n_noise=2)
        base = ["--config", str(cfg_path)]
        cli.main(base + ["train", str(data), str(labels),
                         str(tmp_path / "m1.bin")])
        cli.main(base + ["train", str(data), str(labels),
                         str(tmp_path / "m2.bin")])
        assert ((tmp_path / "m1.bin").read_bytes()
                == (tmp_path / "m2.bin").read_bytes())
