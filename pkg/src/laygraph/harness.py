"""Few-shot experiment orchestration.

A run samples f training documents per seed, trains the selected model
variant, and evaluates entity-level PRF on the full test set (plus an
optionally manipulated copy of it, reusing the same trained weights).
Per-seed numbers are aggregated as mean and population standard
deviation; reports are written deterministically so identical configs
produce identical bytes.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .annotation_io import Corpus, load_corpus
from .errors import ParameterError
from .features import EncoderConfig, encode_document
from .gat import AdamWState, SequenceTagger, TrainConfig, adamw_step
from .geometry import Document
from .graphs import GraphBundle, add_self_loops, angle_bundle, bundle_angles, nearest_bundle
from .manipulations import ManipSpec, apply_manipulation, format_manip, parse_manip
from .synth import make_synthetic_corpus
from .tagging import PRF, build_tag_vocab, entity_prf, spans_to_iobes

VARIANTS = ("vanilla", "lager_nearest", "lager_angles")


@dataclass
class ExperimentConfig:
    variant: str = "lager_nearest"
    f: int = 4
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4, 5)
    k: int = 4
    theta: float = 60.0
    angle_start_at_zero: bool = True
    use_aabb_rays: bool = False
    train_dir: str | None = None
    test_dir: str | None = None
    corpus_format: str | None = None
    max_tokens: int = 512
    synth_seed: int = 7
    synth_docs: int = 220
    synth_tokens: int = 26
    synth_train: int | None = None
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    manip: ManipSpec | None = None
    out_dir: str = "runs"
    filewise: bool = False

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ParameterError(f"unknown variant {self.variant!r}; pick from {VARIANTS}")
        if self.f < 1:
            raise ParameterError(f"f must be >= 1, got {self.f}")
        if not self.seeds:
            raise ParameterError("seeds must be nonempty")


def load_experiment_corpus(cfg: ExperimentConfig) -> Corpus:
    if cfg.train_dir is not None and cfg.test_dir is not None:
        return load_corpus(cfg.train_dir, cfg.test_dir, fmt=cfg.corpus_format,
                           max_tokens=cfg.max_tokens)
    return make_synthetic_corpus(cfg.synth_seed, cfg.synth_docs, cfg.synth_tokens,
                                 n_train=cfg.synth_train)


def sample_fewshot(train, f: int, seed: int) -> list[Document]:
    """Uniform f-document sample without replacement from the training
    pool (sorted by id), deterministic in the seed."""
    if f > len(train):
        raise ParameterError(f"f={f} exceeds training pool of {len(train)}")
    ordered = sorted(train, key=lambda d: d.id)
    rng = np.random.default_rng(seed)
    chosen = rng.choice(len(ordered), size=f, replace=False)
    return [ordered[i] for i in sorted(chosen.tolist())]


def graphs_for(doc: Document, cfg: ExperimentConfig, variant: str) -> GraphBundle | None:
    if variant == "vanilla":
        return None
    if variant == "lager_nearest":
        return nearest_bundle(doc, cfg.k)
    return angle_bundle(doc, cfg.k, cfg.theta, start_at_zero=cfg.angle_start_at_zero,
                        use_aabb=cfg.use_aabb_rays)


def graph_count(cfg: ExperimentConfig, variant: str) -> int:
    if variant == "vanilla":
        return 0
    if variant == "lager_nearest":
        return 1
    return len(bundle_angles(cfg.theta, cfg.angle_start_at_zero))


def _prepared(doc: Document, cfg: ExperimentConfig, variant: str, tag_index: dict[str, int]):
    """(x (n,d), adj (M,n,n) bool or None, gold (n,)) for one document."""
    x = encode_document(doc, cfg.encoder).values
    bundle = graphs_for(doc, cfg, variant)
    adj = None
    if bundle is not None:
        adj = np.stack([add_self_loops(m).edges for m in bundle.matrices])
    gold_tags = spans_to_iobes(doc.entities, doc.n_tokens)
    gold = np.array([tag_index[t] for t in gold_tags], dtype=np.int64)
    return x, adj, gold


def _stacked_loss_and_grads(tagger: SequenceTagger, group, dropout_rng=None):
    xs = np.stack([it[0] for it in group])
    adj = None if group[0][1] is None else np.stack([it[1] for it in group])
    gold = np.stack([it[2] for it in group])
    return tagger.loss_and_gradients(xs, adj, gold, dropout_rng=dropout_rng)


def _window_loss_and_grads(tagger: SequenceTagger, window, dropout_rng=None):
    """Document-mean loss and gradients accumulated over one optimizer
    window. Equal-length documents are stacked; mixed lengths are
    grouped by length and recombined by document count, which equals
    plain per-document accumulation."""
    groups: dict[int, list] = {}
    for item in window:
        groups.setdefault(item[0].shape[0], []).append(item)
    total_loss = 0.0
    total_grads: dict[str, np.ndarray] | None = None
    for group in groups.values():
        loss, grads = _stacked_loss_and_grads(tagger, group, dropout_rng)
        weight = len(group)
        total_loss += loss * weight
        if total_grads is None:
            total_grads = {k: g * weight for k, g in grads.items()}
        else:
            for k, g in grads.items():
                total_grads[k] += g * weight
    count = len(window)
    return total_loss / count, {k: g / count for k, g in total_grads.items()}


def train_tagger(cfg: ExperimentConfig, variant: str, train_docs, label_set, seed: int,
                 with_state: bool = False):
    """Seeded init + epochs of gradient-accumulated AdamW over the sample."""
    tag_vocab = build_tag_vocab(label_set)
    tag_index = {t: i for i, t in enumerate(tag_vocab)}
    items = [_prepared(d, cfg, variant, tag_index) for d in train_docs]
    tcfg = replace(cfg.train, seed=seed)
    # External embeddings decide their own width, so read d off the data.
    d_in = items[0][0].shape[1] if items else cfg.encoder.d
    tagger = SequenceTagger(variant, d_in, len(tag_vocab),
                            graph_count(cfg, variant), tcfg)
    state = AdamWState.for_params(tagger.params)
    shuffle_rng = np.random.default_rng([seed, 1])
    dropout_rng = np.random.default_rng([seed, 2]) if tcfg.dropout > 0 else None
    for _ in range(tcfg.epochs):
        order = shuffle_rng.permutation(len(items))
        shuffled = [items[i] for i in order]
        for start in range(0, len(shuffled), tcfg.batch_size):
            window = shuffled[start : start + tcfg.batch_size]
            _, grads = _window_loss_and_grads(tagger, window, dropout_rng)
            adamw_step(tagger.params, grads, state, tcfg)
    if with_state:
        return tagger, state
    return tagger


def predict_tags(tagger: SequenceTagger, items, tag_vocab) -> list[list[str]]:
    """Argmax tags per document; documents are batched by equal length."""
    preds: list[list[str]] = [None] * len(items)  # type: ignore[list-item]
    by_len: dict[int, list[int]] = {}
    for idx, it in enumerate(items):
        by_len.setdefault(it[0].shape[0], []).append(idx)
    for indices in by_len.values():
        for start in range(0, len(indices), 64):
            chunk = indices[start : start + 64]
            xs = np.stack([items[i][0] for i in chunk])
            adj = None if items[chunk[0]][1] is None else np.stack([items[i][1] for i in chunk])
            ids = tagger.predict(xs, adj)
            for row, i in enumerate(chunk):
                preds[i] = [tag_vocab[t] for t in ids[row]]
    return preds


@dataclass
class SeedResult:
    seed: int
    prf: PRF
    manip_prf: PRF | None = None


@dataclass
class RunResult:
    variant: str
    f: int
    seeds: tuple[int, ...]
    per_seed: list[SeedResult]
    manip: str | None = None
    filewise_rows: list[tuple[str, int, float]] = field(default_factory=list)
    # (tp, pred, gold) per label, summed over seeds, for metrics.csv.
    label_counts: dict[str, tuple[int, int, int]] = field(default_factory=dict)

    def _series(self, attr: str, manipulated: bool) -> np.ndarray:
        vals = []
        for s in self.per_seed:
            prf = s.manip_prf if manipulated else s.prf
            vals.append(getattr(prf, attr))
        return np.array(vals)

    def mean(self, attr: str = "f1", manipulated: bool = False) -> float:
        return float(self._series(attr, manipulated).mean())

    def std(self, attr: str = "f1", manipulated: bool = False) -> float:
        return float(self._series(attr, manipulated).std())

    @property
    def diff(self) -> float | None:
        if self.manip is None:
            return None
        return self.mean("f1") - self.mean("f1", manipulated=True)

    def to_dict(self) -> dict:
        return {
            "variant": self.variant,
            "f": self.f,
            "seeds": list(self.seeds),
            "manip": self.manip,
            "per_seed": [
                {
                    "seed": s.seed,
                    "prf": dataclasses.asdict(s.prf),
                    "manip_prf": None if s.manip_prf is None else dataclasses.asdict(s.manip_prf),
                }
                for s in self.per_seed
            ],
            "filewise": [list(r) for r in self.filewise_rows],
            "label_counts": {k: list(v) for k, v in self.label_counts.items()},
        }

    @classmethod
    def from_dict(cls, data: dict) -> RunResult:
        per_seed = [
            SeedResult(
                e["seed"],
                PRF(**e["prf"]),
                None if e["manip_prf"] is None else PRF(**e["manip_prf"]),
            )
            for e in data["per_seed"]
        ]
        return cls(data["variant"], data["f"], tuple(data["seeds"]), per_seed,
                   data.get("manip"), [tuple(r) for r in data.get("filewise", [])],
                   {k: tuple(v) for k, v in data.get("label_counts", {}).items()})


def run_experiment(cfg: ExperimentConfig, corpus: Corpus | None = None) -> RunResult:
    """Train and evaluate one (variant, f) cell across all seeds."""
    if corpus is None:
        corpus = load_experiment_corpus(cfg)
    tag_vocab = build_tag_vocab(corpus.label_set)
    tag_index = {t: i for i, t in enumerate(tag_vocab)}
    test_items = [_prepared(d, cfg, cfg.variant, tag_index) for d in corpus.test]
    gold_tags = [spans_to_iobes(d.entities, d.n_tokens) for d in corpus.test]
    manip_items = None
    if cfg.manip is not None:
        manip_docs = [apply_manipulation(d, cfg.manip) for d in corpus.test]
        manip_items = [_prepared(d, cfg, cfg.variant, tag_index) for d in manip_docs]
    per_seed: list[SeedResult] = []
    filewise: list[tuple[str, int, float]] = []
    label_counts: dict[str, list[int]] = {}
    for seed in cfg.seeds:
        sample = sample_fewshot(corpus.train, cfg.f, seed)
        tagger = train_tagger(cfg, cfg.variant, sample, corpus.label_set, seed)
        preds = predict_tags(tagger, test_items, tag_vocab)
        overall, table = entity_prf(preds, gold_tags)
        for label, prf in table.items():
            counts = label_counts.setdefault(label, [0, 0, 0])
            counts[0] += prf.true_positives
            counts[1] += prf.pred_count
            counts[2] += prf.gold_count
        manip_prf = None
        if manip_items is not None:
            manip_preds = predict_tags(tagger, manip_items, tag_vocab)
            manip_overall, _ = entity_prf(manip_preds, gold_tags)
            manip_prf = manip_overall
        per_seed.append(SeedResult(seed, overall, manip_prf))
        if cfg.filewise:
            for doc, pred, gold in zip(corpus.test, preds, gold_tags):
                doc_prf, _ = entity_prf([pred], [gold])
                filewise.append((doc.id, seed, doc_prf.f1))
    manip_str = None if cfg.manip is None else format_manip(cfg.manip)
    return RunResult(cfg.variant, cfg.f, tuple(cfg.seeds), per_seed, manip_str, filewise,
                     {k: tuple(v) for k, v in sorted(label_counts.items())})


def robustness_eval(cfg: ExperimentConfig, corpus: Corpus | None = None) -> RunResult:
    """Clean training, manipulated evaluation, same checkpoints."""
    if cfg.manip is None:
        raise ParameterError("robustness_eval needs a manipulation spec")
    return run_experiment(cfg, corpus)


def _cell(mean: float, std: float) -> str:
    return f"{mean * 100:.2f}±{std * 100:.2f}"


def report(results: list[RunResult], out_dir) -> dict[str, Path]:
    """Write report.csv and report.md (variant rows, f columns, mean±std
    cells; Diff columns when a manipulation was evaluated)."""
    if not results:
        raise ParameterError("no results to report")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    fs = sorted({r.f for r in results})
    variants = sorted({r.variant for r in results}, key=VARIANTS.index)
    by_key = {(r.variant, r.f): r for r in results}
    has_manip = any(r.manip is not None for r in results)

    metrics = ["precision", "recall", "f1"]
    if has_manip:
        metrics += ["f1_manip", "diff"]

    csv_lines = ["variant,metric," + ",".join(f"f={f}" for f in fs)]
    md_lines = [
        "| variant | metric | " + " | ".join(f"f={f}" for f in fs) + " |",
        "|---|---|" + "---|" * len(fs),
    ]
    for variant in variants:
        for metric in metrics:
            cells = []
            for f in fs:
                r = by_key.get((variant, f))
                if r is None:
                    cells.append("")
                elif metric == "diff":
                    cells.append("" if r.diff is None else f"{r.diff * 100:.2f}")
                elif metric == "f1_manip":
                    cells.append("" if r.manip is None else _cell(r.mean("f1", True), r.std("f1", True)))
                else:
                    cells.append(_cell(r.mean(metric), r.std(metric)))
            csv_lines.append(f"{variant},{metric}," + ",".join(cells))
            md_lines.append(f"| {variant} | {metric} | " + " | ".join(cells) + " |")

    paths = {
        "csv": out / "report.csv",
        "md": out / "report.md",
    }
    paths["csv"].write_text("\n".join(csv_lines) + "\n", encoding="utf-8")
    paths["md"].write_text("\n".join(md_lines) + "\n", encoding="utf-8")
    filewise_rows = [row for r in results for row in r.filewise_rows]
    if filewise_rows:
        lines = ["doc_id,seed,f1"] + [f"{d},{s},{f1:.6f}" for d, s, f1 in filewise_rows]
        paths["filewise"] = out / "filewise.csv"
        paths["filewise"].write_text("\n".join(lines) + "\n", encoding="utf-8")
    return paths


def save_result(result: RunResult, path) -> None:
    Path(path).write_text(json.dumps(result.to_dict(), sort_keys=True, indent=1) + "\n",
                          encoding="utf-8")


def load_result(path) -> RunResult:
    return RunResult.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


# Flat key=value config file / CLI override plumbing. Every key mirrors an
# ExperimentConfig field (nested encoder/train fields are promoted).

def _parse_bool(text: str) -> bool:
    if text.lower() in ("1", "true", "yes", "on"):
        return True
    if text.lower() in ("0", "false", "no", "off"):
        return False
    raise ParameterError(f"not a boolean: {text!r}")


def _parse_seeds(text: str) -> tuple[int, ...]:
    return tuple(int(v) for v in text.split(",") if v != "")


CONFIG_KEYS: dict[str, tuple[str, object]] = {
    # key -> (dotted target field, parser)
    "variant": ("variant", str),
    "f": ("f", int),
    "seeds": ("seeds", _parse_seeds),
    "k": ("k", int),
    "theta": ("theta", float),
    "angle_start_at_zero": ("angle_start_at_zero", _parse_bool),
    "use_aabb_rays": ("use_aabb_rays", _parse_bool),
    "train_dir": ("train_dir", str),
    "test_dir": ("test_dir", str),
    "corpus_format": ("corpus_format", str),
    "max_tokens": ("max_tokens", int),
    "synth_seed": ("synth_seed", int),
    "synth_docs": ("synth_docs", int),
    "synth_tokens": ("synth_tokens", int),
    "synth_train": ("synth_train", int),
    "out_dir": ("out_dir", str),
    "filewise": ("filewise", _parse_bool),
    "manip": ("manip", parse_manip),
    "mode": ("encoder.mode", str),
    "d": ("encoder.d", int),
    "ngram_range": ("encoder.ngram_range", lambda s: tuple(int(v) for v in s.split(","))),
    "hash_seed": ("encoder.hash_seed", int),
    "include_layout": ("encoder.include_layout", _parse_bool),
    "normalize_coords_to": ("encoder.normalize_coords_to", int),
    "external_dir": ("encoder.external_dir", str),
    "lr": ("train.lr", float),
    "batch_size": ("train.batch_size", int),
    "epochs": ("train.epochs", int),
    "heads": ("train.heads", int),
    "weight_decay": ("train.weight_decay", float),
    "leaky_slope": ("train.leaky_slope", float),
    "num_layers": ("train.num_layers", int),
    "dropout": ("train.dropout", float),
}


def read_config_file(path) -> dict[str, str]:
    """key=value lines; blank lines and '#' comments ignored."""
    values: dict[str, str] = {}
    for raw_line in Path(path).read_text(encoding="utf-8").splitlines():
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        key, eq, value = line.partition("=")
        if not eq:
            raise ParameterError(f"config line without '=': {raw_line!r}")
        values[key.strip()] = value.strip()
    return values


def build_config(kv: dict[str, str]) -> ExperimentConfig:
    """ExperimentConfig from flat string key=value pairs."""
    top: dict[str, object] = {}
    enc: dict[str, object] = {}
    trn: dict[str, object] = {}
    for key, text in kv.items():
        if key not in CONFIG_KEYS:
            raise ParameterError(f"unknown config key {key!r}")
        target, parser = CONFIG_KEYS[key]
        value = parser(text)
        if target.startswith("encoder."):
            enc[target.split(".", 1)[1]] = value
        elif target.startswith("train."):
            trn[target.split(".", 1)[1]] = value
        else:
            top[target] = value
    return ExperimentConfig(encoder=EncoderConfig(**enc), train=TrainConfig(**trn), **top)
