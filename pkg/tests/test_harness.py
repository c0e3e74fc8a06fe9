import dataclasses
import json

import numpy as np
import pytest

from laygraph.errors import ParameterError
from laygraph.features import EncoderConfig
from laygraph.gat import TrainConfig
from laygraph.harness import (
    ExperimentConfig,
    RunResult,
    SeedResult,
    build_config,
    load_experiment_corpus,
    load_result,
    read_config_file,
    report,
    robustness_eval,
    run_experiment,
    sample_fewshot,
    save_result,
)
from laygraph.manipulations import ManipSpec, parse_manip
from laygraph.synth import make_synthetic_corpus
from laygraph.tagging import PRF

FAST = TrainConfig(epochs=120)


def small_cfg(**kw):
    defaults = dict(
        f=2,
        seeds=(0, 1),
        synth_docs=14,
        synth_tokens=22,
        synth_train=4,
        train=FAST,
    )
    defaults.update(kw)
    return ExperimentConfig(**defaults)


class TestSampleFewshot:
    def _train(self, n=8):
        return list(make_synthetic_corpus(2, n + 1, 22, n_train=n).train)

    def test_full_pool_regardless_of_seed(self):
        train = self._train(5)
        for seed in (0, 7, 123):
            sample = sample_fewshot(train, 5, seed)
            assert sorted(d.id for d in sample) == sorted(d.id for d in train)

    def test_same_seed_same_sample(self):
        train = self._train()
        assert [d.id for d in sample_fewshot(train, 3, 9)] == [
            d.id for d in sample_fewshot(train, 3, 9)
        ]

    def test_seeds_produce_distinct_samples(self):
        train = self._train()
        samples = {tuple(d.id for d in sample_fewshot(train, 4, s)) for s in range(6)}
        assert len(samples) >= 2

    def test_f_too_large(self):
        with pytest.raises(ParameterError):
            sample_fewshot(self._train(3), 4, 0)


class TestRunExperiment:
    def test_vanilla_runs_and_aggregates(self):
        res = run_experiment(small_cfg(variant="vanilla"))
        assert res.variant == "vanilla"
        assert len(res.per_seed) == 2
        assert 0.0 <= res.mean("f1") <= 1.0
        assert res.std("f1") >= 0.0
        assert res.diff is None

    def test_single_seed_zero_std(self):
        res = run_experiment(small_cfg(seeds=(3,)))
        assert res.std("f1") == 0.0

    def test_robustness_requires_manip(self):
        with pytest.raises(ParameterError):
            robustness_eval(small_cfg())

    def test_identity_manipulation_zero_diff(self):
        cfg = small_cfg(manip=parse_manip("shift:a=0"))
        res = robustness_eval(cfg)
        assert res.diff == 0.0

    @pytest.mark.parametrize("variant", ["lager_nearest", "lager_angles"])
    def test_text_only_model_shift_invariant(self, variant):
        cfg = small_cfg(
            variant=variant,
            encoder=EncoderConfig(d=32, include_layout=False),
            manip=parse_manip("shift:a=20"),
        )
        res = robustness_eval(cfg)
        assert res.diff == 0.0
        for s in res.per_seed:
            assert s.prf == s.manip_prf

    def test_result_roundtrip(self, tmp_path):
        res = run_experiment(small_cfg(filewise=True))
        path = tmp_path / "r.json"
        save_result(res, path)
        loaded = load_result(path)
        assert loaded.variant == res.variant
        assert loaded.per_seed == res.per_seed
        assert loaded.filewise_rows == res.filewise_rows
        assert loaded.label_counts == res.label_counts

    def test_external_embeddings_end_to_end(self, tmp_path, rng):
        # The exporter bridge: per-document .lgem files drive the whole
        # experiment instead of the hashed encoder.
        from laygraph.features import write_embeddings

        cfg = small_cfg(
            variant="lager_nearest",
            encoder=EncoderConfig(mode="external", d=16, include_layout=False,
                                  external_dir=str(tmp_path)),
        )
        corpus = make_synthetic_corpus(cfg.synth_seed, cfg.synth_docs, cfg.synth_tokens,
                                       n_train=cfg.synth_train)
        for doc in corpus.train + corpus.test:
            write_embeddings(tmp_path / f"{doc.id}.lgem",
                             rng.standard_normal((doc.n_tokens, 16)), doc_id=doc.id)
        res = run_experiment(cfg, corpus)
        assert len(res.per_seed) == len(cfg.seeds)
        assert 0.0 <= res.mean("f1") <= 1.0


class TestDeterminism:
    def test_identical_config_identical_report_bytes(self, tmp_path):
        for sub in ("a", "b"):
            cfg = small_cfg(out_dir=str(tmp_path / sub))
            res = run_experiment(cfg)
            report([res], cfg.out_dir)
        assert (tmp_path / "a/report.csv").read_bytes() == (tmp_path / "b/report.csv").read_bytes()
        assert (tmp_path / "a/report.md").read_bytes() == (tmp_path / "b/report.md").read_bytes()


def _fake_result(variant, f, f1s, manip=None, manip_f1s=None):
    per_seed = []
    for i, f1 in enumerate(f1s):
        prf = PRF(f1, f1, f1, 1, 1, 1)
        mprf = None
        if manip_f1s is not None:
            m = manip_f1s[i]
            mprf = PRF(m, m, m, 1, 1, 1)
        per_seed.append(SeedResult(i, prf, mprf))
    return RunResult(variant, f, tuple(range(len(f1s))), per_seed, manip)


class TestReport:
    def test_single_cell(self, tmp_path):
        paths = report([_fake_result("vanilla", 4, [0.5, 0.6])], tmp_path)
        text = paths["csv"].read_text()
        lines = text.strip().split("\n")
        assert lines[0] == "variant,metric,f=4"
        assert "vanilla,f1,55.00±5.00" in lines

    def test_cell_format_two_decimals(self, tmp_path):
        res = _fake_result("vanilla", 2, [0.5836, 0.5473, 0.6199])
        paths = report([res], tmp_path)
        # mean 58.36, population std of the three values
        vals = np.array([58.36, 54.73, 61.99])
        expected = f"{vals.mean():.2f}±{vals.std():.2f}"
        assert expected in paths["csv"].read_text()

    def test_csv_parses_back(self, tmp_path):
        res = _fake_result("lager_nearest", 4, [0.7231, 0.6999])
        paths = report([res], tmp_path)
        row = [l for l in paths["csv"].read_text().splitlines() if l.startswith("lager_nearest,f1")][0]
        cell = row.split(",")[2]
        mean, std = cell.split("±")
        assert float(mean) == pytest.approx(res.mean("f1") * 100, abs=0.005)
        assert float(std) == pytest.approx(res.std("f1") * 100, abs=0.005)

    def test_diff_column(self, tmp_path):
        res = _fake_result("vanilla", 4, [0.6, 0.7], manip="shift:a=20", manip_f1s=[0.5, 0.6])
        paths = report([res], tmp_path)
        text = paths["csv"].read_text()
        assert "vanilla,diff,10.00" in text
        assert "vanilla,f1_manip,55.00±5.00" in text

    def test_markdown_mirrors_csv(self, tmp_path):
        res = _fake_result("vanilla", 4, [0.5, 0.5])
        paths = report([res], tmp_path)
        assert "| vanilla | f1 | 50.00±0.00 |" in paths["md"].read_text()

    def test_filewise_rows(self, tmp_path):
        res = _fake_result("vanilla", 4, [0.5])
        res.filewise_rows = [("doc1", 0, 0.75)]
        paths = report([res], tmp_path)
        assert paths["filewise"].read_text().splitlines()[1] == "doc1,0,0.750000"


class TestConfigPlumbing:
    def test_file_and_overrides(self, tmp_path):
        cfg_file = tmp_path / "exp.cfg"
        cfg_file.write_text(
            "# comment\nvariant=lager_angles\nf=3\nseeds=0,1,2\ntheta=120\n"
            "include_layout=false\nlr=0.001\nepochs=7\nmanip=shift:a=20\n"
        )
        kv = read_config_file(cfg_file)
        cfg = build_config(kv)
        assert cfg.variant == "lager_angles"
        assert cfg.f == 3 and cfg.seeds == (0, 1, 2)
        assert cfg.theta == 120.0
        assert cfg.encoder.include_layout is False
        assert cfg.train.lr == 0.001 and cfg.train.epochs == 7
        assert cfg.manip == ManipSpec("shift", a=20)

    def test_unknown_key_rejected(self):
        with pytest.raises(ParameterError):
            build_config({"mystery": "1"})

    def test_bad_bool(self):
        with pytest.raises(ParameterError):
            build_config({"include_layout": "perhaps"})

    def test_defaults_match_dataclass(self):
        cfg = build_config({})
        assert cfg == ExperimentConfig()

    def test_config_validation(self):
        with pytest.raises(ParameterError):
            ExperimentConfig(variant="mystery")
        with pytest.raises(ParameterError):
            ExperimentConfig(f=0)
        with pytest.raises(ParameterError):
            ExperimentConfig(seeds=())


class TestCorpusSelection:
    def test_synthetic_by_default(self):
        corpus = load_experiment_corpus(small_cfg())
        assert corpus.name == "synthetic"
        assert len(corpus.train) == 4 and len(corpus.test) == 10

    def test_directory_corpus(self, tmp_path):
        from laygraph.annotation_io import write_internal

        corpus = make_synthetic_corpus(5, 6, 22, n_train=2)
        for split, docs in (("train", corpus.train), ("test", corpus.test)):
            d = tmp_path / split
            d.mkdir()
            for doc in docs:
                (d / f"{doc.id}.json").write_text(write_internal(doc))
        cfg = small_cfg(train_dir=str(tmp_path / "train"), test_dir=str(tmp_path / "test"))
        loaded = load_experiment_corpus(cfg)
        assert len(loaded.train) == 2 and len(loaded.test) == 4
        assert loaded.label_set == ("answer", "question")
