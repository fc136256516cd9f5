"""Linha de comando: códigos de saída e os subcomandos sobre um dataset minúsculo."""

import dataclasses
import json

import numpy as np
import pytest
from rich.console import Console

import main as cli
from data.dataset import load_dataset
from tests.support import TINY_DATA, tiny_model_config, tiny_train_config
from tools.config import PopupConfig, dump_config, load_config
from tools.errors import TrainingDivergedError

CLI_DATA = dataclasses.replace(TINY_DATA, frames=4)


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """synth-data + train via CLI, uma vez por módulo."""
    root = tmp_path_factory.mktemp("cli")
    config = PopupConfig(
        model=tiny_model_config(num_classes=len(CLI_DATA.classes)),
        train=tiny_train_config(epochs=2),
        data=CLI_DATA,
    )
    config_path = root / "popup.env"
    config_path.write_text(dump_config(config), encoding="utf-8")

    data_dir, run_dir = root / "data", root / "run"
    assert cli.main(["--config", str(config_path), "synth-data", "--out", str(data_dir)]) == 0
    assert cli.main(["--config", str(config_path), "train", "--data", str(data_dir), "--out", str(run_dir)]) == 0
    return {"root": root, "config": str(config_path), "data": str(data_dir), "run": run_dir}


class TestExitCodes:
    def test_no_command(self, tmp_path, monkeypatch):
        monkeypatch.chdir(tmp_path)
        assert cli.main([]) == 1

    def test_bad_arguments(self):
        with pytest.raises(SystemExit) as info:
            cli.main(["train"])
        assert info.value.code == 1
        with pytest.raises(SystemExit) as info:
            cli.main(["eval", "--data", "x", "--mode", "sideways"])
        assert info.value.code == 1

    def test_unknown_config_key(self, tmp_path):
        bad = tmp_path / "bad.env"
        bad.write_text("MODEL__NOT_A_KEY=3\n", encoding="utf-8")
        assert cli.main(["--config", str(bad), "--dump-config"]) == 1

    def test_missing_config_file(self, tmp_path):
        assert cli.main(["--config", str(tmp_path / "nope.env"), "--dump-config"]) == 1

    def test_missing_checkpoint_is_data_error(self, tmp_path, monkeypatch):
        monkeypatch.chdir(tmp_path)
        code = cli.main(["infer", "--checkpoint", "missing.npz", "--cloud", "frame.ply", "--class", "ball"])
        assert code == 2

    def test_missing_dataset_is_data_error(self, tmp_path, monkeypatch):
        monkeypatch.chdir(tmp_path)
        assert cli.main(["eval", "--data", str(tmp_path / "none"), "--baseline", "nn"]) == 2

    def test_numeric_failure(self, tmp_path, monkeypatch):
        class Diverging:
            def __init__(self, *args, **kwargs):
                pass

            def processar(self):
                raise TrainingDivergedError("perda NaN na época 3", str(tmp_path / "checkpoint_last.npz"))

        monkeypatch.chdir(tmp_path)
        monkeypatch.setattr(cli, "TrainProcessor", Diverging)
        assert cli.main(["train", "--data", "x"]) == 3

    def test_eval_without_checkpoint_or_baseline(self, tmp_path, monkeypatch):
        monkeypatch.chdir(tmp_path)
        assert cli.main(["eval", "--data", "x"]) == 1


class TestMenu:
    def test_lists_subcommands(self, monkeypatch):
        console = Console(record=True, width=240)
        monkeypatch.setattr(cli, "console", console)
        cli.print_menu()
        text = console.export_text()
        assert "synth-data --out datasets/synthetic" in text
        assert "--mode predicted-class" in text

    def test_exit_option(self, monkeypatch):
        console = Console(record=True, width=240)
        monkeypatch.setattr(cli, "console", console)
        monkeypatch.setattr(console, "input", lambda prompt="": "0")
        cli.menu()
        assert "Encerrado" in console.export_text()


class TestDumpConfig:
    def test_round_trip(self, tmp_path, monkeypatch, capsys):
        monkeypatch.chdir(tmp_path)
        assert cli.main(["--dump-config"]) == 0
        text = capsys.readouterr().out
        assert "MODEL__LOCAL_K=3000" in text
        assert "DATA__POINTS=9000" in text
        path = tmp_path / "dumped.env"
        path.write_text(text, encoding="utf-8")
        assert load_config(str(path), use_environ=False) == load_config(None, use_environ=False)

    def test_reads_local_env(self, tmp_path, monkeypatch, capsys):
        monkeypatch.chdir(tmp_path)
        (tmp_path / ".env").write_text("TRAIN__EPOCHS=45\n", encoding="utf-8")
        assert cli.main(["--dump-config"]) == 0
        assert "TRAIN__EPOCHS=45" in capsys.readouterr().out


class TestPipeline:
    def test_train_outputs(self, workspace):
        run = workspace["run"]
        for name in ("checkpoint.npz", "checkpoint_last.npz", "train_log.jsonl", "loss_curve.csv", "config.env"):
            assert (run / name).exists(), name
        lines = (run / "train_log.jsonl").read_text(encoding="utf-8").splitlines()
        assert len(lines) == 2

    def test_infer_single_frame(self, workspace):
        dataset = load_dataset(workspace["data"])
        sequence_id = dataset.sequence_ids("test")[0]
        frame = workspace["root"] / "frame.npy"
        np.save(frame, dataset.cloud(sequence_id, 0))
        out = workspace["root"] / "infer_single"
        code = cli.main([
            "--config", workspace["config"], "infer",
            "--checkpoint", str(workspace["run"] / "checkpoint.npz"),
            "--cloud", str(frame), "--class", "ball", "--out", str(out),
        ])
        assert code == 0
        records = json.loads((out / "poses.json").read_text(encoding="utf-8"))
        assert len(records) == 1
        assert records[0]["class_name"] == "ball"
        assert (out / "frame_0000_object.obj").exists()

    def test_infer_sequence_predicted_class(self, workspace):
        dataset = load_dataset(workspace["data"])
        sequence_id = dataset.sequence_ids("test")[0]
        stack = workspace["root"] / "sequence.npy"
        np.save(stack, np.asarray(dataset.clouds(sequence_id)))
        out = workspace["root"] / "infer_sequence"
        code = cli.main([
            "--config", workspace["config"], "infer",
            "--checkpoint", str(workspace["run"] / "checkpoint.npz"),
            "--sequence", str(stack), "--sigma", "1.5", "--out", str(out),
        ])
        assert code == 0
        records = json.loads((out / "poses.json").read_text(encoding="utf-8"))
        assert len(records) == CLI_DATA.frames
        # uma única classe votada para a sequência inteira
        assert len({r["class_id"] for r in records}) == 1

    def test_unknown_class_is_usage_error(self, workspace):
        code = cli.main([
            "--config", workspace["config"], "infer",
            "--checkpoint", str(workspace["run"] / "checkpoint.npz"),
            "--cloud", "frame.npy", "--class", "teapot",
        ])
        assert code == 1

    def test_eval_with_baseline(self, workspace):
        out = workspace["root"] / "evaluation"
        code = cli.main([
            "--config", workspace["config"], "eval",
            "--checkpoint", str(workspace["run"] / "checkpoint.npz"),
            "--data", workspace["data"], "--mode", "predicted-class",
            "--baseline", "nn", "--out", str(out),
        ])
        assert code == 0
        for name in ("popup", "nn"):
            report = json.loads((out / f"report_{name}.json").read_text(encoding="utf-8"))
            assert report["mode"] == "predicted-class"
            assert (out / f"per_sample_{name}.csv").exists()
            assert (out / f"confusion_{name}.csv").exists()
        assert (out / "significance.json").exists()

    def test_saliency(self, workspace):
        dataset = load_dataset(workspace["data"])
        sequence_id = dataset.sequence_ids("test")[0]
        class_name = dataset.classes[dataset.class_id(sequence_id)]
        frame = workspace["root"] / "saliency_frame.npy"
        np.save(frame, dataset.cloud(sequence_id, 1))
        gt = workspace["root"] / "gt.json"
        gt.write_text(json.dumps(dataset.transform(sequence_id, 1).as_record()), encoding="utf-8")
        out = workspace["root"] / "saliency"
        code = cli.main([
            "--config", workspace["config"], "saliency",
            "--checkpoint", str(workspace["run"] / "checkpoint.npz"),
            "--cloud", str(frame), "--class", class_name, "--gt", str(gt), "--out", str(out),
        ])
        assert code == 0
        summary = json.loads((out / "summary.json").read_text(encoding="utf-8"))
        assert summary["touched_per_iteration"] == 2  # ⌈0.01 · 150⌉
        assert len(summary["loss_offset"]) == 10
        assert (out / "saliency.ply").exists()

    def test_baseline_query(self, workspace):
        dataset = load_dataset(workspace["data"])
        sequence_id = dataset.sequence_ids("train")[0]
        query = workspace["root"] / "query.npy"
        np.save(query, dataset.cloud(sequence_id, 2))
        out = workspace["root"] / "baseline"
        code = cli.main([
            "--config", workspace["config"], "baseline",
            "--data", workspace["data"], "--query", str(query), "--out", str(out),
        ])
        assert code == 0
        record = json.loads((out / "retrieved_pose.json").read_text(encoding="utf-8"))
        # a consulta é um quadro do próprio banco
        assert record["class_id"] == dataset.class_id(sequence_id)
        np.testing.assert_allclose(record["t"], dataset.transform(sequence_id, 2).t)
        assert (out / "retrieved_object.obj").exists()
