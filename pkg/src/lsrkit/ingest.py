"""Corpus / query file parsing and query-text assembly.

Queries carry four optional text fields; the retrieval text is the
space-joined concatenation of page_title, section_title and
context_section_description. context_page_description is parsed and kept
but never enters the query text.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

from .errors import DataError, ParseError

QUERY_TEXT_FIELDS = ("page_title", "section_title", "context_section_description")


@dataclass(frozen=True)
class QueryRecord:
    id: str
    page_title: str | None = None
    section_title: str | None = None
    context_page_description: str | None = None
    context_section_description: str | None = None


@dataclass(frozen=True)
class DocumentRecord:
    id: str
    caption: str | None = None
    image_embedding_ref: str | None = None


def build_query_text(q: QueryRecord) -> str:
    """Join the used fields with single spaces, skipping absent/empty ones."""
    parts = [getattr(q, name) for name in QUERY_TEXT_FIELDS]
    return " ".join(p for p in parts if p)


def _load_jsonl(path, build_record):
    records = []
    seen_ids: dict[str, int] = {}
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except ValueError as exc:
                raise ParseError(f"malformed JSON: {exc}", path=path, line=lineno) from exc
            if not isinstance(obj, dict):
                raise ParseError("record is not a JSON object", path=path, line=lineno)
            rec = build_record(obj, lineno)
            if not rec.id:
                raise ParseError("record id missing or empty", path=path, line=lineno)
            if rec.id in seen_ids:
                raise DataError(
                    f"{path}:{lineno}: duplicate id {rec.id!r} (first seen on line {seen_ids[rec.id]})"
                )
            seen_ids[rec.id] = lineno
            records.append(rec)
    return records


def load_queries(path) -> list[QueryRecord]:
    def build(obj, lineno):
        try:
            return QueryRecord(
                id=str(obj["id"]),
                page_title=obj.get("page_title"),
                section_title=obj.get("section_title"),
                context_page_description=obj.get("context_page_description"),
                context_section_description=obj.get("context_section_description"),
            )
        except KeyError as exc:
            raise ParseError(f"query record missing field {exc}", path=path, line=lineno) from exc

    return _load_jsonl(path, build)


def load_corpus(path) -> list[DocumentRecord]:
    def build(obj, lineno):
        try:
            rec = DocumentRecord(
                id=str(obj["id"]),
                caption=obj.get("caption"),
                image_embedding_ref=obj.get("image_embedding_ref"),
            )
        except KeyError as exc:
            raise ParseError(f"corpus record missing field {exc}", path=path, line=lineno) from exc
        if rec.caption is None and rec.image_embedding_ref is None:
            raise DataError(
                f"{path}:{lineno}: document {rec.id!r} has neither caption nor image_embedding_ref"
            )
        return rec

    return _load_jsonl(path, build)


def save_queries(path, queries: list[QueryRecord]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for q in queries:
            obj = {"id": q.id}
            for name in (
                "page_title",
                "section_title",
                "context_page_description",
                "context_section_description",
            ):
                value = getattr(q, name)
                if value is not None:
                    obj[name] = value
            f.write(json.dumps(obj) + "\n")


def save_corpus(path, docs: list[DocumentRecord]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for d in docs:
            obj = {"id": d.id}
            if d.caption is not None:
                obj["caption"] = d.caption
            if d.image_embedding_ref is not None:
                obj["image_embedding_ref"] = d.image_embedding_ref
            f.write(json.dumps(obj) + "\n")
