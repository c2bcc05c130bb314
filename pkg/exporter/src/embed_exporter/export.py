"""Extract contextual token embeddings and pooled vectors from a transformer
and write them in the retrieval engine's JSONL embedding-file format.

Two modes:

* item-level: one pooled vector per input record id (queries or corpus).
  Pooling uses the model's designated sequence-summary vector when the
  architecture provides one (e.g. BERT's pooler), otherwise an
  attention-masked mean over the last hidden states; the choice is recorded
  in the output header.

* token-level: one vector per engine-vocabulary term that occurs in the
  input texts, keyed by the decimal term id. A term's vector is the average
  of its contextual embeddings over (up to) the first ``max_occurrences``
  occurrences in input order; each occurrence embedding is the mean of the
  term's word-piece states.

Output is deterministic for fixed model weights, inputs, and settings:
re-running a job reproduces the file byte for byte.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

# Mirrors the engine's documented tokenization contract: lowercased runs of
# unicode word characters, underscore excluded.
_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)

QUERY_TEXT_FIELDS = ("page_title", "section_title", "context_section_description")


class ExportError(Exception):
    pass


@dataclass
class ExportJob:
    model: str  # HF model name or local path
    input_path: str
    mode: str  # "token" | "item"
    output_path: str
    seed: int = 0
    vocab_path: str | None = None  # required for token mode
    device: str = "cpu"
    batch_size: int = 16
    max_occurrences: int = 32
    dimension: int | None = None  # must match the model's hidden size if given

    def __post_init__(self):
        if self.mode not in ("token", "item"):
            raise ExportError(f"mode must be 'token' or 'item', got {self.mode!r}")
        if self.mode == "token" and not self.vocab_path:
            raise ExportError("token-level export needs --vocab (the engine vocabulary file)")
        if self.batch_size < 1 or self.max_occurrences < 1:
            raise ExportError("batch_size and max_occurrences must be >= 1")


def _load_records(path) -> list[tuple[str, str]]:
    """Parse a queries or corpus JSONL file into (record id, text) pairs.

    Corpus records contribute their caption; query records the engine's
    concatenation of page_title, section_title, context_section_description.
    """
    records = []
    seen = set()
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                rec_id = str(obj["id"])
            except (ValueError, KeyError, TypeError) as exc:
                raise ExportError(f"{path}:{lineno}: bad record: {exc}") from exc
            if rec_id in seen:
                raise ExportError(f"{path}:{lineno}: duplicate id {rec_id!r}")
            seen.add(rec_id)
            if "caption" in obj or "image_embedding_ref" in obj:
                text = obj.get("caption") or ""
            else:
                text = " ".join(p for p in (obj.get(k) for k in QUERY_TEXT_FIELDS) if p)
            records.append((rec_id, text))
    return records


def _load_vocab(path) -> dict[str, int]:
    terms = {}
    with open(path, encoding="utf-8") as f:
        for i, line in enumerate(f):
            term = line.rstrip("\n")
            if term:
                terms[term] = i
    return terms


def _load_model(job: ExportJob):
    from transformers import AutoModel, AutoTokenizer

    try:
        tokenizer = AutoTokenizer.from_pretrained(job.model)
        model = AutoModel.from_pretrained(job.model)
    except Exception as exc:
        raise ExportError(f"could not load model {job.model!r}: {exc}") from exc
    hidden = int(model.config.hidden_size)
    if job.dimension is not None and job.dimension != hidden:
        raise ExportError(
            f"declared dimension {job.dimension} != model hidden size {hidden}"
        )
    model.eval()
    model.to(job.device)
    return tokenizer, model, hidden


def _pool(outputs, attention_mask) -> tuple[torch.Tensor, str]:
    pooler = getattr(outputs, "pooler_output", None)
    if pooler is not None:
        return pooler, "model-pooler"
    states = outputs.last_hidden_state
    mask = attention_mask.unsqueeze(-1).to(states.dtype)
    summed = (states * mask).sum(dim=1)
    counts = mask.sum(dim=1).clamp(min=1.0)
    return summed / counts, "masked-mean"


def export(job: ExportJob) -> Path:
    torch.manual_seed(job.seed)
    torch.set_num_threads(1)  # keeps re-runs bit-identical

    records = _load_records(job.input_path)
    tokenizer, model, hidden = _load_model(job)

    if job.mode == "item":
        ids, vectors, pooling = _export_items(job, records, tokenizer, model)
    else:
        ids, vectors, pooling = _export_tokens(job, records, tokenizer, model)

    out = Path(job.output_path)
    # Only the model's basename goes into the header so exports from the same
    # checkpoint compare equal regardless of where it is stored.
    header = {"dim": hidden, "mode": job.mode, "pooling": pooling, "model": Path(str(job.model)).name}
    with open(out, "w", encoding="utf-8") as f:
        f.write(json.dumps(header) + "\n")
        for rec_id, vec in zip(ids, vectors):
            f.write(json.dumps({"id": rec_id, "values": [float(v) for v in vec]}) + "\n")
    return out


def _export_items(job, records, tokenizer, model):
    ids = []
    vectors = []
    pooling = None
    with torch.no_grad():
        for start in range(0, len(records), job.batch_size):
            batch = records[start : start + job.batch_size]
            encoded = tokenizer(
                [text for _, text in batch],
                padding=True,
                truncation=True,
                return_tensors="pt",
            ).to(job.device)
            outputs = model(**encoded)
            pooled, pooling = _pool(outputs, encoded["attention_mask"])
            for (rec_id, _), vec in zip(batch, pooled):
                ids.append(rec_id)
                vectors.append(vec.cpu().double().numpy())
    return ids, vectors, pooling or "masked-mean"


def _export_tokens(job, records, tokenizer, model):
    vocab = _load_vocab(job.vocab_path)
    sums: dict[int, np.ndarray] = {}
    counts: dict[int, int] = {}

    with torch.no_grad():
        for start in range(0, len(records), job.batch_size):
            batch = records[start : start + job.batch_size]
            word_lists = [_TOKEN_RE.findall(text.lower()) for _, text in batch]
            keep = [i for i, words in enumerate(word_lists) if words]
            if not keep:
                continue
            word_lists = [word_lists[i] for i in keep]
            encoded = tokenizer(
                word_lists,
                is_split_into_words=True,
                padding=True,
                truncation=True,
                return_tensors="pt",
            ).to(job.device)
            states = model(**encoded).last_hidden_state.cpu().double().numpy()
            for row, words in enumerate(word_lists):
                word_ids = encoded.word_ids(batch_index=row)
                # Mean of word-piece states per word occurrence.
                piece_sums: dict[int, np.ndarray] = {}
                piece_counts: dict[int, int] = {}
                for pos, wid in enumerate(word_ids):
                    if wid is None:
                        continue
                    if wid in piece_sums:
                        piece_sums[wid] = piece_sums[wid] + states[row, pos]
                        piece_counts[wid] += 1
                    else:
                        piece_sums[wid] = states[row, pos].copy()
                        piece_counts[wid] = 1
                for wid, vec_sum in piece_sums.items():
                    term_id = vocab.get(words[wid])
                    if term_id is None:
                        continue
                    if counts.get(term_id, 0) >= job.max_occurrences:
                        continue
                    occurrence = vec_sum / piece_counts[wid]
                    if term_id in sums:
                        sums[term_id] = sums[term_id] + occurrence
                        counts[term_id] += 1
                    else:
                        sums[term_id] = occurrence
                        counts[term_id] = 1

    ids = [str(t) for t in sorted(sums)]
    vectors = [sums[t] / counts[t] for t in sorted(sums)]
    return ids, vectors, "wordpiece-mean-of-occurrences"
