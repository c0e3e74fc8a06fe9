import json

import pytest

from laygraph.cli import main


def run_cli(args, capsys):
    code = main(args)
    captured = capsys.readouterr()
    return code, captured.out, captured.err


class TestSynthCommand:
    def test_writes_splits(self, tmp_path, capsys):
        code, out, _ = run_cli(
            ["synth", "--out", str(tmp_path), "--docs", "8", "--tokens", "22",
             "--train-docs", "2", "--seed", "5"],
            capsys,
        )
        assert code == 0
        assert "2 train / 6 test" in out
        assert len(list((tmp_path / "train").glob("*.json"))) == 2
        assert len(list((tmp_path / "test").glob("*.json"))) == 6


class TestGraphCommand:
    def test_dumps_dot_and_json(self, tmp_path, capsys):
        code, _, _ = run_cli(
            ["synth", "--out", str(tmp_path / "corpus"), "--docs", "4", "--tokens", "22",
             "--train-docs", "1"],
            capsys,
        )
        assert code == 0
        doc_file = sorted((tmp_path / "corpus/test").glob("*.json"))[0]
        code, out, _ = run_cli(
            ["graph", "--input", str(doc_file), "--mode", "angles", "--k", "2",
             "--theta", "120", "--out", str(tmp_path / "graphs")],
            capsys,
        )
        assert code == 0
        dots = sorted((tmp_path / "graphs").glob("*.dot"))
        jsons = sorted((tmp_path / "graphs").glob("*.json"))
        assert len(dots) == 3 and len(jsons) == 3  # 360/120 angles
        payload = json.loads(jsons[0].read_text())
        assert payload["mode"] == "angles" and payload["k"] == 2
        assert payload["n"] == 22

    def test_nearest_mode(self, tmp_path, capsys):
        run_cli(["synth", "--out", str(tmp_path / "c"), "--docs", "3", "--tokens", "22",
                 "--train-docs", "1"], capsys)
        doc_file = sorted((tmp_path / "c/test").glob("*.json"))[0]
        code, _, _ = run_cli(
            ["graph", "--input", str(doc_file), "--mode", "nearest", "--k", "4",
             "--out", str(tmp_path / "g")],
            capsys,
        )
        assert code == 0
        assert len(list((tmp_path / "g").glob("*_nearest.dot"))) == 1


class TestEvalCommand:
    def test_eval_writes_result_and_report(self, tmp_path, capsys):
        code, out, _ = run_cli(
            ["eval", "--variant", "vanilla", "--f", "2", "--seeds", "0",
             "--synth-docs", "10", "--synth-tokens", "22", "--synth-train", "3",
             "--epochs", "40", "--out-dir", str(tmp_path)],
            capsys,
        )
        assert code == 0
        assert "vanilla f=2: F1" in out
        assert (tmp_path / "vanilla_f2.json").exists()
        assert (tmp_path / "report.csv").exists()

    def test_config_file_plus_override(self, tmp_path, capsys):
        cfg = tmp_path / "run.cfg"
        cfg.write_text(
            "variant=vanilla\nf=2\nseeds=0\nsynth_docs=10\nsynth_tokens=22\n"
            f"synth_train=3\nepochs=40\nout_dir={tmp_path}\n"
        )
        code, out, _ = run_cli(["eval", "--config", str(cfg), "--f", "3"], capsys)
        assert code == 0
        assert "f=3" in out  # CLI flag overrode the file

    def test_error_exit_is_machine_parsable(self, tmp_path, capsys):
        code, _, err = run_cli(
            ["eval", "--variant", "mystery", "--out-dir", str(tmp_path)], capsys
        )
        assert code == 1
        assert err.startswith("error: ParameterError:")
        assert "\n" not in err.strip()


class TestTrainCommand:
    def test_saves_checkpoints(self, tmp_path, capsys):
        code, out, _ = run_cli(
            ["train", "--variant", "lager_nearest", "--f", "2", "--seeds", "0,1",
             "--synth-docs", "10", "--synth-tokens", "22", "--synth-train", "3",
             "--epochs", "30", "--out-dir", str(tmp_path)],
            capsys,
        )
        assert code == 0
        assert (tmp_path / "lager_nearest_f2_seed0.ckpt").exists()
        assert (tmp_path / "lager_nearest_f2_seed1.ckpt").exists()
        from laygraph.gat import load_checkpoint

        tagger, _, extra = load_checkpoint(tmp_path / "lager_nearest_f2_seed0.ckpt")
        assert tagger.variant == "lager_nearest"
        assert extra["f"] == 2


class TestPerturbCommand:
    def test_default_sweep(self, tmp_path, capsys):
        code, out, _ = run_cli(
            ["perturb", "--variant", "vanilla", "--f", "2", "--seeds", "0",
             "--synth-docs", "10", "--synth-tokens", "22", "--synth-train", "3",
             "--epochs", "30", "--out-dir", str(tmp_path),
             "--manips", "shift:a=0", "scale:sw=1,sh=1"],
            capsys,
        )
        assert code == 0
        assert out.count("diff 0.00") == 2  # identity manipulations
        assert (tmp_path / "report.csv").exists()


class TestReportCommand:
    def test_assembles_results(self, tmp_path, capsys):
        run_cli(
            ["eval", "--variant", "vanilla", "--f", "2", "--seeds", "0",
             "--synth-docs", "10", "--synth-tokens", "22", "--synth-train", "3",
             "--epochs", "30", "--out-dir", str(tmp_path / "run")],
            capsys,
        )
        code, out, _ = run_cli(
            ["report", "--results", str(tmp_path / "run/vanilla_f2.json"),
             "--out", str(tmp_path / "final")],
            capsys,
        )
        assert code == 0
        assert (tmp_path / "final/report.md").exists()
