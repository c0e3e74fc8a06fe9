"""Run a (layout-aware) transformer over annotation records and write one
.lgem embedding file per document.

Each word is represented by the hidden state of its first subtoken; all
subtokens of a word share the word's 0..1000-normalised box when the
model accepts a ``bbox`` input. Documents whose words cannot be aligned
to at least one subtoken are skipped and listed in the manifest. Long
documents are processed in windows that respect the model's positional
limit, so every word still receives a state.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .records import Record, read_corpus_dir

LGEM_MAGIC = b"LGEM"
LGEM_VERSION = 1


class ExportError(RuntimeError):
    pass


class AlignmentFailure(RuntimeError):
    pass


@dataclass
class ExportManifest:
    corpus: str
    model: str
    out_dir: str
    hidden_size: int
    documents: dict[str, int] = field(default_factory=dict)
    errors: dict[str, str] = field(default_factory=dict)

    def to_json(self) -> str:
        payload = {
            "corpus": self.corpus,
            "model": self.model,
            "out_dir": self.out_dir,
            "hidden_size": self.hidden_size,
            "documents": dict(sorted(self.documents.items())),
            "errors": dict(sorted(self.errors.items())),
        }
        return json.dumps(payload, indent=1, sort_keys=True) + "\n"


def write_lgem(path, values: np.ndarray, doc_id: str) -> None:
    arr = np.ascontiguousarray(values, dtype="<f4")
    n, d = arr.shape
    with open(path, "wb") as fh:
        fh.write(LGEM_MAGIC)
        fh.write(struct.pack("<III", LGEM_VERSION, n, d))
        fh.write(arr.tobytes())
        fh.write(hashlib.sha256(doc_id.encode("utf-8")).digest())


def _normalized_box(box, width, height):
    x0, y0, x1, y1 = box
    def clamp(v, limit):
        return int(min(max(round(v / limit * 1000.0), 0), 1000))
    return [clamp(x0, width), clamp(y0, height), clamp(x1, width), clamp(y1, height)]


class HiddenStateExporter:
    def __init__(self, model_id: str, device: str = "cpu"):
        from transformers import AutoModel, AutoTokenizer

        self.model_id = model_id
        self.device = torch.device(device)
        self.tokenizer = AutoTokenizer.from_pretrained(model_id)
        self.model = AutoModel.from_pretrained(model_id).to(self.device)
        self.model.eval()
        self.hidden_size = int(self.model.config.hidden_size)
        self.uses_bbox = "bbox" in self.model.forward.__code__.co_varnames
        limit = int(getattr(self.model.config, "max_position_embeddings", 512))
        self.window = max(8, limit - 2)  # room for [CLS]/[SEP]

    def _subtokens(self, record: Record):
        """Per-word subtoken ids and normalised boxes; first-subtoken
        indices are implicit (each word contributes >= 1 subtoken)."""
        per_word = []
        for idx, word in enumerate(record.words):
            pieces = self.tokenizer.tokenize(word.text)
            if not pieces:
                raise AlignmentFailure(f"word {idx} ({word.text!r}) produced no subtokens")
            ids = self.tokenizer.convert_tokens_to_ids(pieces)
            box = _normalized_box(word.box, record.width, record.height)
            per_word.append((ids, box))
        return per_word

    @torch.no_grad()
    def document_states(self, record: Record) -> np.ndarray:
        """(n_words, hidden) float32 matrix of first-subtoken states."""
        per_word = self._subtokens(record)
        states = np.empty((len(per_word), self.hidden_size), dtype=np.float32)
        cls_id = self.tokenizer.cls_token_id
        sep_id = self.tokenizer.sep_token_id
        start = 0
        while start < len(per_word):
            ids: list[int] = []
            boxes: list[list[int]] = []
            firsts: list[tuple[int, int]] = []  # (word index, position in chunk)
            end = start
            while end < len(per_word):
                word_ids, box = per_word[end]
                if ids and len(ids) + len(word_ids) > self.window:
                    break
                if len(word_ids) > self.window:
                    word_ids = word_ids[: self.window]
                firsts.append((end, len(ids) + 1))  # +1 for [CLS]
                ids.extend(word_ids)
                boxes.extend([box] * len(word_ids))
                end += 1
            input_ids = torch.tensor([[cls_id] + ids + [sep_id]], device=self.device)
            kwargs = {"input_ids": input_ids}
            if self.uses_bbox:
                pad = [[0, 0, 0, 0]]
                kwargs["bbox"] = torch.tensor([pad + boxes + pad], device=self.device)
            hidden = self.model(**kwargs).last_hidden_state[0]
            for word_idx, pos in firsts:
                states[word_idx] = hidden[pos].cpu().numpy().astype(np.float32)
            start = end
        return states


def export(corpus_dir, model_id: str, out_dir, device: str = "cpu") -> ExportManifest:
    """Write one .lgem file per readable document plus manifest.json."""
    records = read_corpus_dir(corpus_dir)
    if not records:
        raise ExportError(f"no .json records found in {corpus_dir}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    runner = HiddenStateExporter(model_id, device=device)
    manifest = ExportManifest(str(corpus_dir), model_id, str(out), runner.hidden_size)
    for record in records:
        try:
            states = runner.document_states(record)
        except AlignmentFailure as exc:
            manifest.errors[record.doc_id] = str(exc)
            continue
        write_lgem(out / f"{record.doc_id}.lgem", states, record.doc_id)
        manifest.documents[record.doc_id] = states.shape[0]
    (out / "manifest.json").write_text(manifest.to_json(), encoding="utf-8")
    return manifest
