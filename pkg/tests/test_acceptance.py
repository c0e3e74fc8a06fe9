"""Acceptance suite.

Each test prints one PASS/FAIL line (run with ``pytest -s`` to see them
inline). The synthetic experiment fixtures are module-scoped because the
few-shot and robustness criteria share the same trained models.
"""

import dataclasses
import os
import time
from pathlib import Path

import numpy as np
import pytest

from laygraph.annotation_io import load_corpus
from laygraph.features import EncoderConfig
from laygraph.gat import GatParams, TrainConfig, gat_forward
from laygraph.graphs import knn_angle_graph, knn_space_graph
from laygraph.harness import (
    ExperimentConfig,
    load_experiment_corpus,
    report,
    run_experiment,
    sample_fewshot,
    train_tagger,
    predict_tags,
    _prepared,
)
from laygraph.geometry import Point
from laygraph.manipulations import apply_manipulation, parse_manip, rotate_document, scale, shift
from laygraph.tagging import build_tag_vocab, entity_prf, spans_to_iobes

import oracles
from conftest import random_doc
from test_gat import finite_difference_check, make_instance, random_gat, fm, adj


def emit(name, ok, detail=""):
    status = "PASS" if ok else "FAIL"
    print(f"[acceptance] {status}: {name}" + (f" ({detail})" if detail else ""))
    assert ok, f"{name}: {detail}"


class TestGraphOracleEquivalence:
    def test_oracle_equivalence_200_documents(self):
        rng = np.random.default_rng(101)
        t0 = time.perf_counter()
        checked = 0
        for trial in range(200):
            n = int(rng.integers(2, 51))
            k = int(rng.integers(1, 7))
            doc = random_doc(rng, n)
            got_s = knn_space_graph(doc, k).edge_set()
            assert got_s == oracles.spatial_edges(doc, k), f"spatial mismatch trial {trial}"
            alpha = float(rng.choice([0.0, 60.0, 135.0, 211.0, 300.0]))
            got_a = knn_angle_graph(doc, k, alpha).edge_set()
            assert got_a == oracles.angular_edges(doc, k, alpha), f"angular mismatch trial {trial}"
            checked += 1
        elapsed = time.perf_counter() - t0
        emit(
            "graph oracle equivalence (200 random documents)",
            checked == 200 and elapsed < 10.0,
            f"{checked} docs in {elapsed:.1f}s",
        )


class TestAffineInvarianceSuite:
    def test_affine_invariance(self):
        rng = np.random.default_rng(202)
        t0 = time.perf_counter()
        k = 4
        exact = True
        for _ in range(12):
            n = int(rng.integers(5, 51))
            doc = random_doc(rng, n)
            base_s = knn_space_graph(doc, k)
            base_a = {a: knn_angle_graph(doc, k, a) for a in (0.0, 60.0)}
            for a_shift in (-37.5, 10, 20):
                moved = shift(doc, a_shift)
                exact &= knn_space_graph(moved, k) == base_s
                exact &= all(knn_angle_graph(moved, k, a) == base_a[a] for a in base_a)
            for s in (0.5, 2, 3):
                scaled = scale(doc, s, s)
                exact &= knn_space_graph(scaled, k) == base_s
                exact &= all(knn_angle_graph(scaled, k, a) == base_a[a] for a in base_a)
            for delta in (8, 45, 173):
                rotated = rotate_document(doc, delta, Point(0, 1000))
                exact &= knn_space_graph(rotated, k) == base_s
                # Equivariance: a rendered-counterclockwise rotation by
                # delta (API angle -delta) maps A_alpha to A_{alpha+delta}.
                ccw = rotate_document(doc, -delta, Point(0, 1000))
                for a in base_a:
                    exact &= knn_angle_graph(ccw, k, a + delta) == base_a[a]
                    exact &= knn_angle_graph(rotated, k, a) == knn_angle_graph(doc, k, a + delta)
        elapsed = time.perf_counter() - t0
        emit("affine invariance suite", exact and elapsed < 10.0, f"{elapsed:.1f}s")


class TestGradientCheck:
    def test_gradients_20_instances(self):
        t0 = time.perf_counter()
        worst = 0.0
        cases = []
        for i in range(20):
            heads = (1, 4)[i % 2]
            m = (1, 6)[(i // 2) % 2]
            variant = "lager_angles" if m > 1 else "lager_nearest"
            cases.append((variant, heads, m, 1000 + i))
        for variant, heads, m, seed in cases:
            tagger, x, adjacency, gold = make_instance(seed, variant, heads, m)
            worst = max(worst, finite_difference_check(tagger, x, adjacency, gold))
        elapsed = time.perf_counter() - t0
        emit(
            "GAT gradient check (20 instances)",
            worst <= 1e-4 and elapsed < 30.0,
            f"max rel err {worst:.2e} in {elapsed:.1f}s",
        )


class TestAttentionNormalization:
    def test_rows_sum_to_one_100_forwards(self):
        rng = np.random.default_rng(303)
        worst = 0.0
        for _ in range(100):
            n = int(rng.integers(1, 10))
            d = int(rng.integers(1, 4)) * 4
            p = random_gat(rng, 1, 4, d)
            edges = rng.random((n, n)) < 0.5
            edges |= edges.T
            np.fill_diagonal(edges, True)
            _, alpha = gat_forward(
                fm(rng.normal(size=(n, d))), adj(edges),
                GatParams(p.w[0], p.a[0], 0.2), return_attention=True,
            )
            worst = max(worst, float(np.abs(alpha.sum(axis=-1) - 1.0).max()))
        emit("attention row normalization (100 forwards)", worst <= 1e-12, f"max dev {worst:.2e}")


class TestMetricParity:
    def test_conlleval_oracle_100_sequences(self):
        rng = np.random.default_rng(404)
        labels = ("question", "answer", "header")
        vocab = ["O"] + [f"{p}-{l}" for l in labels for p in "BIES"]
        all_equal = True
        for _ in range(100):
            docs = int(rng.integers(1, 4))
            lens = [int(rng.integers(1, 20)) for _ in range(docs)]
            pred = [[vocab[int(rng.integers(len(vocab)))] for _ in range(n)] for n in lens]
            gold = [[vocab[int(rng.integers(len(vocab)))] for _ in range(n)] for n in lens]
            ours, _ = entity_prf(pred, gold)
            p, r, f = oracles.prf_counts(pred, gold)
            all_equal &= (ours.precision, ours.recall, ours.f1) == (p, r, f)
        emit("metric parity with conlleval oracle (100 sequences)", all_equal)


# The few-shot delta runs at the harness-scale epoch budget; the
# robustness comparison trains longer so both models sit near their
# ceilings, where accuracy differences reflect the manipulations rather
# than residual undertraining. Both use the paper-default optimizer
# settings (AdamW, lr 5e-5, batch 8, k=4, theta=60, H=4).
DELTA_EPOCHS = 8000
ROBUSTNESS_EPOCHS = 20000

BASE = dict(
    f=4,
    seeds=(0, 1, 2, 3, 4, 5),
    synth_docs=220,
    synth_tokens=26,
    synth_train=20,
)


def _run_variants(variants, epochs, with_manips):
    base = ExperimentConfig(train=TrainConfig(epochs=epochs), **BASE)
    corpus = load_experiment_corpus(base)
    manips = {}
    if with_manips:
        manips = {"shift": parse_manip("shift:a=20"), "scale": parse_manip("scale:sw=2,sh=2")}
    tag_vocab = build_tag_vocab(corpus.label_set)
    tag_index = {t: i for i, t in enumerate(tag_vocab)}
    gold_tags = [spans_to_iobes(d.entities, d.n_tokens) for d in corpus.test]
    out = {"train_eval_seconds": {}}
    for variant in variants:
        cfg = dataclasses.replace(base, variant=variant)
        test_items = [_prepared(d, cfg, variant, tag_index) for d in corpus.test]
        manip_items = {
            name: [
                _prepared(apply_manipulation(d, m), cfg, variant, tag_index)
                for d in corpus.test
            ]
            for name, m in manips.items()
        }
        t0 = time.perf_counter()
        f1 = {name: [] for name in ["clean", *manip_items]}
        for seed in cfg.seeds:
            sample = sample_fewshot(corpus.train, cfg.f, seed)
            tagger = train_tagger(cfg, variant, sample, corpus.label_set, seed)
            for name, items in [("clean", test_items)] + list(manip_items.items()):
                preds = predict_tags(tagger, items, tag_vocab)
                overall, _ = entity_prf(preds, gold_tags)
                f1[name].append(overall.f1)
        out["train_eval_seconds"][variant] = time.perf_counter() - t0
        out[variant] = {name: float(np.mean(vals)) for name, vals in f1.items()}
    return out


@pytest.fixture(scope="module")
def delta_runs():
    return _run_variants(("vanilla", "lager_nearest", "lager_angles"), DELTA_EPOCHS, False)


@pytest.fixture(scope="module")
def robustness_runs():
    out = _run_variants(("vanilla", "lager_nearest"), ROBUSTNESS_EPOCHS, True)
    # Text-only graph model for the exact shift-invariance check.
    cfg = ExperimentConfig(
        variant="lager_nearest",
        train=TrainConfig(epochs=2000),
        encoder=EncoderConfig(d=64, include_layout=False),
        manip=parse_manip("shift:a=20"),
        **BASE,
    )
    res = run_experiment(cfg)
    out["layoutfree_shift_diff"] = res.diff
    return out


class TestSyntheticFewShotDelta:
    def test_variant_deltas(self, delta_runs):
        v = delta_runs["vanilla"]["clean"] * 100
        n = delta_runs["lager_nearest"]["clean"] * 100
        a = delta_runs["lager_angles"]["clean"] * 100
        runtime = sum(delta_runs["train_eval_seconds"].values())
        ok = (n >= v + 10.0) and (a >= v + 5.0) and runtime < 600.0
        emit(
            "synthetic few-shot delta (f=4, 6 seeds)",
            ok,
            f"vanilla {v:.2f}, nearest {n:.2f} (+{n - v:.2f}), "
            f"angles {a:.2f} (+{a - v:.2f}), runtime {runtime:.0f}s",
        )


class TestRobustnessAnalogue:
    def test_diff_ordering_and_exact_invariance(self, robustness_runs):
        diffs = {}
        for variant in ("vanilla", "lager_nearest"):
            runs = robustness_runs[variant]
            diffs[variant] = {
                "shift": runs["clean"] - runs["shift"],
                "scale": runs["clean"] - runs["scale"],
            }
        ok_shift = diffs["lager_nearest"]["shift"] < diffs["vanilla"]["shift"]
        ok_scale = diffs["lager_nearest"]["scale"] < diffs["vanilla"]["scale"]
        ok_exact = robustness_runs["layoutfree_shift_diff"] == 0.0
        emit(
            "robustness analogue (shift a=20, scale s=2)",
            ok_shift and ok_scale and ok_exact,
            "diffs x100: shift vanilla "
            f"{diffs['vanilla']['shift'] * 100:.2f} vs nearest {diffs['lager_nearest']['shift'] * 100:.2f}; "
            f"scale vanilla {diffs['vanilla']['scale'] * 100:.2f} vs nearest "
            f"{diffs['lager_nearest']['scale'] * 100:.2f}; layout-free shift diff "
            f"{robustness_runs['layoutfree_shift_diff']}",
        )


class TestDeterminism:
    def test_byte_identical_reports(self, tmp_path):
        outputs = []
        for sub in ("first", "second"):
            cfg = ExperimentConfig(
                variant="lager_nearest",
                f=2,
                seeds=(0, 1),
                synth_docs=16,
                synth_tokens=22,
                synth_train=4,
                train=TrainConfig(epochs=150),
                out_dir=str(tmp_path / sub),
            )
            res = run_experiment(cfg)
            paths = report([res], cfg.out_dir)
            outputs.append((paths["csv"].read_bytes(), paths["md"].read_bytes()))
        ok = outputs[0] == outputs[1]
        emit("end-to-end determinism (byte-identical reports)", ok)


def _find_dataset(env, *candidates):
    root = os.environ.get(env)
    if root and Path(root).is_dir():
        return Path(root)
    for c in candidates:
        if Path(c).is_dir():
            return Path(c)
    return None


class TestOfficialDatasetSanity:
    def test_funsd_table_statistics(self):
        root = _find_dataset("FUNSD_DIR", "data/funsd", "data/FUNSD")
        if root is None:
            print("[acceptance] SKIP: FUNSD sanity (dataset not present)")
            pytest.skip("official FUNSD not available")
        corpus = load_corpus(
            root / "training_data" / "annotations", root / "testing_data" / "annotations",
            fmt="funsd",
        )
        pages = len(corpus.train), len(corpus.test)
        per_page = np.mean([len(d.entities) for d in corpus.train + corpus.test])
        ok = pages == (149, 50) and abs(per_page - 42.86) <= 0.5
        emit("FUNSD table statistics", ok, f"pages {pages}, entities/page {per_page:.2f}")

    def test_cord_table_statistics(self):
        root = _find_dataset("CORD_DIR", "data/cord", "data/CORD")
        if root is None:
            print("[acceptance] SKIP: CORD sanity (dataset not present)")
            pytest.skip("official CORD not available")
        corpus = load_corpus(root / "train" / "json", root / "test" / "json", fmt="cord")
        pages = len(corpus.train), len(corpus.test)
        per_page = np.mean([len(d.entities) for d in corpus.train + corpus.test])
        ok = pages == (800, 100) and abs(per_page - 13.82) <= 0.5
        emit("CORD table statistics", ok, f"pages {pages}, entities/page {per_page:.2f}")
