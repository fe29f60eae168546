"""Reading and writing query/document score files (TSV or JSONL)."""

from __future__ import annotations

import json
import logging
from collections import OrderedDict
from dataclasses import dataclass
from pathlib import Path

from .retrieval import DocRecord, QueryRecord, ValidationError

log = logging.getLogger(__name__)

COLUMNS = ("query_id", "doc_id", "relevance", "score_retrieval", "score_rank")
FORMATS = ("tsv", "jsonl")


class ParseError(ValueError):
    """A line that could not be parsed; carries the file and line number."""

    def __init__(self, path, lineno: int, msg: str):
        super().__init__(f"{path}:{lineno}: {msg}")
        self.path, self.lineno = path, lineno


@dataclass(frozen=True)
class LoadResult:
    queries: list[QueryRecord]
    n_rows: int
    n_queries: int
    n_relevant_docs: int


def infer_format(path) -> str:
    suffix = Path(path).suffix.lower()
    if suffix in (".jsonl", ".ndjson", ".json"):
        return "jsonl"
    if suffix in (".tsv", ".txt", ".tab"):
        return "tsv"
    raise ValueError(f"cannot infer format from {path!s}; pass format='tsv' or 'jsonl'")


def _relevance(value, path, lineno):
    try:
        f = float(value)
    except (TypeError, ValueError):
        raise ParseError(path, lineno, f"relevance {value!r} is not a number") from None
    if isinstance(value, bool) or f != int(f):
        raise ParseError(path, lineno, f"relevance {value!r} is not an integer")
    return int(f)


def _score(value, name, path, lineno):
    if isinstance(value, bool):
        raise ParseError(path, lineno, f"{name} {value!r} is not a number")
    try:
        return float(value)
    except (TypeError, ValueError):
        raise ParseError(path, lineno, f"{name} {value!r} is not a number") from None


def _rows_tsv(path):
    with open(path, encoding="utf-8", newline="\n") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n").rstrip("\r")
            if not line.strip():
                continue
            fields = line.split("\t")
            if lineno == 1 and [f.strip().lower() for f in fields] == list(COLUMNS):
                continue
            if len(fields) != len(COLUMNS):
                raise ParseError(path, lineno, f"expected {len(COLUMNS)} tab-separated fields, got {len(fields)}")
            yield lineno, dict(zip(COLUMNS, fields))


def _rows_jsonl(path):
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(path, lineno, f"invalid JSON: {exc.msg}") from None
            if not isinstance(obj, dict):
                raise ParseError(path, lineno, "expected a JSON object")
            missing = [k for k in COLUMNS if k not in obj]
            if missing:
                raise ParseError(path, lineno, f"missing keys {missing}")
            for k in ("query_id", "doc_id"):
                if isinstance(obj[k], bool) or not isinstance(obj[k], (str, int)):
                    raise ParseError(path, lineno, f"{k} must be a string or integer, got {obj[k]!r}")
            yield lineno, obj


def read_dataset(path, format: str | None = None) -> LoadResult:
    """Parse, group by query id (first-appearance order) and validate."""
    fmt = format or infer_format(path)
    if fmt not in FORMATS:
        raise ValueError(f"unknown format {fmt!r}; choose from {FORMATS}")
    rows = _rows_tsv(path) if fmt == "tsv" else _rows_jsonl(path)
    groups: OrderedDict = OrderedDict()
    n_rows = 0
    for lineno, row in rows:
        n_rows += 1
        try:
            doc = DocRecord(
                row["doc_id"],
                _relevance(row["relevance"], path, lineno),
                _score(row["score_retrieval"], "score_retrieval", path, lineno),
                _score(row["score_rank"], "score_rank", path, lineno),
            )
        except ValidationError as exc:
            raise ValidationError(f"{path}:{lineno}: {exc}") from None
        groups.setdefault(row["query_id"], []).append((lineno, doc))
    queries = []
    for qid, docs in groups.items():
        try:
            queries.append(QueryRecord(qid, tuple(d for _, d in docs)))
        except ValidationError as exc:
            raise ValidationError(f"{path}:{docs[0][0]}: {exc}") from None
    if not queries:
        raise ValidationError(f"{path}: no data rows")
    n_rel = sum(len(q.relevant()) for q in queries)
    log.info("%s: %d rows, %d queries, %d relevant docs", path, n_rows, len(queries), n_rel)
    return LoadResult(queries, n_rows, len(queries), n_rel)


def load_dataset(path, format: str | None = None) -> list[QueryRecord]:
    """Validated queries from a TSV or JSONL file; see ``read_dataset`` for counts."""
    return read_dataset(path, format).queries


def dump_dataset(queries, fh, format: str = "tsv", header: bool = True):
    """Write queries to an open text handle; scores use the shortest round-trip ``repr``."""
    if format == "tsv":
        if header:
            fh.write("\t".join(COLUMNS) + "\n")
        for q in queries:
            for d in q.docs:
                fh.write(f"{q.query_id}\t{d.doc_id}\t{int(d.relevance)}\t"
                         f"{float(d.score_retrieval)!r}\t{float(d.score_rank)!r}\n")
    elif format == "jsonl":
        for q in queries:
            for d in q.docs:
                vals = (q.query_id, d.doc_id, int(d.relevance), float(d.score_retrieval), float(d.score_rank))
                fh.write(json.dumps(dict(zip(COLUMNS, vals))) + "\n")
    else:
        raise ValueError(f"unknown format {format!r}; choose from {FORMATS}")


def write_dataset(queries, path, format: str | None = None, header: bool = True):
    """Write queries so that ``load_dataset`` returns identical records."""
    fmt = format or infer_format(path)
    if fmt not in FORMATS:
        raise ValueError(f"unknown format {fmt!r}; choose from {FORMATS}")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        dump_dataset(queries, fh, fmt, header)
