"""Concept-augmented document retrieval.

Documents carry free-text fields plus a set of concept ids attached
offline by the linker. The index keeps classic BM25 term postings next to
concept-id postings, enabling three ranking modes:

* ``sparse``         — BM25 over the text only.
* ``hybrid_boost``   — BM25 plus w_c per query concept the document carries.
* ``concept_filter`` — only documents containing ALL query concepts are
  candidates, ranked by BM25 within that set (degrades to sparse when the
  query has no concepts).

Tokenization matches annotations.default_tokenize with Latin case-folding,
all fields concatenated into a single bag.
"""

from __future__ import annotations

import json
import math
import pickle
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from . import metrics
from .annotations import default_tokenize, fold_text
from .embedding import EmbedderConfig, cosine, embed_texts
from .errors import MedctError
from .linker import MedLinkPipeline

SEARCH_MODES = ("sparse", "hybrid_boost", "concept_filter")

#: Mode labels used by evaluation reports.
MODE_LABELS = {
    "sparse": "Sparse",
    "hybrid_boost": "Hybrid",
    "concept_filter": "MedCT-aug.",
}


@dataclass(frozen=True)
class IndexedDocument:
    """One retrieval unit: a note id, named text fields, attached concepts."""

    note_id: str
    fields: dict[str, str]
    concept_ids: frozenset[str] = frozenset()


@dataclass(frozen=True)
class AnnotatedQuery:
    """A query with its tokenized terms and linker-detected concept ids."""

    text: str
    terms: tuple[str, ...]
    concept_ids: frozenset[str] = frozenset()


def tokenize_terms(text: str) -> list[str]:
    """Case-folded term list, shared by indexing and querying."""
    folded = fold_text(text)
    return [folded[s:e] for s, e in default_tokenize(folded)]


@dataclass
class SearchIndex:
    """Inverted index over terms and concept ids, with BM25 statistics."""

    k1: float
    b: float
    doc_ids: list[str] = field(default_factory=list)
    # term -> {doc -> {field -> tf}}
    postings: dict[str, dict[str, dict[str, int]]] = field(default_factory=dict)
    concept_postings: dict[str, set[str]] = field(default_factory=dict)
    field_lengths: dict[str, dict[str, int]] = field(default_factory=dict)
    doc_concepts: dict[str, frozenset[str]] = field(default_factory=dict)
    doc_fields: dict[str, dict[str, str]] = field(default_factory=dict)

    @property
    def n_docs(self) -> int:
        return len(self.doc_ids)

    def doc_length(self, note_id: str) -> int:
        return sum(self.field_lengths.get(note_id, {}).values())

    @property
    def avg_doc_length(self) -> float:
        if not self.doc_ids:
            return 0.0
        return sum(self.doc_length(d) for d in self.doc_ids) / len(self.doc_ids)


def index_documents(
    docs: Sequence[IndexedDocument], params: Mapping[str, float] | None = None
) -> SearchIndex:
    """Build a fresh index. Duplicate note ids are an error."""
    params = dict(params or {})
    index = SearchIndex(k1=float(params.get("k1", 1.2)), b=float(params.get("b", 0.75)))
    for doc in docs:
        if doc.note_id in index.field_lengths:
            raise MedctError(f"duplicate note_id: {doc.note_id}")
        index.doc_ids.append(doc.note_id)
        index.field_lengths[doc.note_id] = {}
        index.doc_fields[doc.note_id] = dict(doc.fields)
        for field_name, text in doc.fields.items():
            terms = tokenize_terms(text)
            index.field_lengths[doc.note_id][field_name] = len(terms)
            for term in terms:
                by_doc = index.postings.setdefault(term, {})
                by_field = by_doc.setdefault(doc.note_id, {})
                by_field[field_name] = by_field.get(field_name, 0) + 1
        index.doc_concepts[doc.note_id] = frozenset(doc.concept_ids)
        for concept_id in doc.concept_ids:
            index.concept_postings.setdefault(concept_id, set()).add(doc.note_id)
    index.doc_ids.sort()
    return index


def bm25_score(index: SearchIndex, query_terms: Sequence[str], note_id: str) -> float:
    """Classic BM25 with idf = ln(1 + (N - df + 0.5) / (df + 0.5)).

    Fields are scored as one concatenated bag. Terms absent from the
    document (or the corpus) contribute zero.
    """
    if note_id not in index.field_lengths:
        raise MedctError(f"note_id not indexed: {note_id}")
    n = index.n_docs
    avg_len = index.avg_doc_length
    doc_len = index.doc_length(note_id)
    score = 0.0
    for term in query_terms:
        by_doc = index.postings.get(term)
        if not by_doc:
            continue
        tf = sum(by_doc.get(note_id, {}).values())
        if tf == 0:
            continue
        df = len(by_doc)
        idf = math.log(1.0 + (n - df + 0.5) / (df + 0.5))
        length_norm = 1.0 - index.b + index.b * (doc_len / avg_len if avg_len > 0 else 0.0)
        score += idf * tf * (index.k1 + 1.0) / (tf + index.k1 * length_norm)
    return score


def annotate_query(q: str, pipeline: MedLinkPipeline) -> AnnotatedQuery:
    """Tokenize a query and attach the top-1 concept of each linked mention."""
    concept_ids = set()
    for entity in pipeline.link_text(q):
        if entity.candidates:
            concept_ids.add(entity.candidates[0][0])
    return AnnotatedQuery(text=q, terms=tuple(tokenize_terms(q)), concept_ids=frozenset(concept_ids))


@dataclass(frozen=True)
class SearchResult:
    note_id: str
    score: float
    matched_concepts: tuple[str, ...]


def search(
    index: SearchIndex,
    q: AnnotatedQuery,
    mode: str = "concept_filter",
    top_n: int = 10,
    w_c: float = 10.0,
    *,
    w_d: float = 0.0,
    embedder: EmbedderConfig | None = None,
) -> list[SearchResult]:
    """Rank documents for an annotated query in the given mode.

    ``w_c`` weighs the per-concept boost in hybrid_boost mode; with w_c=0
    hybrid_boost reduces exactly to sparse. ``w_d`` optionally adds a dense
    re-score (cosine between query text and concatenated document text
    embeddings); it is off by default and requires an embedder.

    Ties break by ascending note_id; at most ``top_n`` results return.
    """
    if mode not in SEARCH_MODES:
        raise ValueError(f"unknown search mode: {mode!r} (expected one of {SEARCH_MODES})")
    if top_n < 1:
        raise ValueError("top_n must be >= 1")
    if w_c < 0:
        raise ValueError("w_c must be >= 0")

    if mode == "concept_filter" and q.concept_ids:
        candidates: set[str] | None = None
        for concept_id in q.concept_ids:
            docs = index.concept_postings.get(concept_id, set())
            candidates = docs if candidates is None else candidates & docs
            if not candidates:
                return []
        assert candidates is not None
        scored = {doc: bm25_score(index, q.terms, doc) for doc in candidates}
    else:
        scored = {}
        for term in set(q.terms):
            for doc in index.postings.get(term, {}):
                if doc not in scored:
                    scored[doc] = bm25_score(index, q.terms, doc)
        if mode == "hybrid_boost" and w_c > 0:
            for concept_id in q.concept_ids:
                for doc in index.concept_postings.get(concept_id, set()):
                    scored.setdefault(doc, bm25_score(index, q.terms, doc))
            scored = {
                doc: base + w_c * len(q.concept_ids & index.doc_concepts.get(doc, frozenset()))
                for doc, base in scored.items()
            }

    if w_d > 0.0:
        if embedder is None:
            raise ValueError("dense re-scoring (w_d > 0) requires an embedder")
        qvec = embed_texts(embedder, [q.text])[0]
        for doc in scored:
            doc_text = "\n".join(index.doc_fields.get(doc, {}).values())
            dvec = embed_texts(embedder, [doc_text])[0]
            scored[doc] += w_d * cosine(qvec, dvec)

    ranked = sorted(scored.items(), key=lambda item: (-item[1], item[0]))[:top_n]
    return [
        SearchResult(
            note_id=doc,
            score=score,
            matched_concepts=tuple(sorted(q.concept_ids & index.doc_concepts.get(doc, frozenset()))),
        )
        for doc, score in ranked
    ]


def evaluate_retrieval(
    index: SearchIndex,
    queries: Mapping[str, AnnotatedQuery],
    judgments: metrics.RetrievalJudgments,
    modes: Sequence[str] = SEARCH_MODES,
    k: int = 10,
    w_c: float = 10.0,
) -> dict[str, metrics.PrfReport]:
    """Macro P/R/F1 at k per search mode, keyed by the mode's report label."""
    for query_id in queries:
        if query_id not in judgments:
            raise KeyError(f"query {query_id!r} has no judgments")
    reports: dict[str, metrics.PrfReport] = {}
    for mode in modes:
        ranked = {
            query_id: [r.note_id for r in search(index, q, mode=mode, top_n=k, w_c=w_c)]
            for query_id, q in queries.items()
        }
        reports[MODE_LABELS.get(mode, mode)] = metrics.prf_at_k(ranked, judgments, k)
    return reports


# --- corpus I/O ----------------------------------------------------------------

def load_corpus(path: str | Path) -> list[IndexedDocument]:
    """Corpus JSONL: {"note_id", "fields": {...}, "concept_ids": [...] (optional)}."""
    docs = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
                doc = IndexedDocument(
                    note_id=record["note_id"],
                    fields=dict(record["fields"]),
                    concept_ids=frozenset(record.get("concept_ids", [])),
                )
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise MedctError(f"{path}:{lineno}: malformed corpus record: {exc}")
            docs.append(doc)
    return docs


def save_corpus(path: str | Path, docs: Iterable[IndexedDocument]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for doc in docs:
            fh.write(
                json.dumps(
                    {
                        "note_id": doc.note_id,
                        "fields": doc.fields,
                        "concept_ids": sorted(doc.concept_ids),
                    },
                    ensure_ascii=False,
                )
                + "\n"
            )


def load_queries(path: str | Path) -> dict[str, str]:
    """Queries JSONL: {"query_id", "text"}; extra keys are ignored."""
    queries: dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            record = json.loads(line)
            queries[str(record["query_id"])] = record["text"]
    return queries


def load_judgments(path: str | Path) -> metrics.RetrievalJudgments:
    """Judgments JSONL: {"query_id", "relevant": [note_id, ...]}."""
    judgments: metrics.RetrievalJudgments = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            record = json.loads(line)
            judgments[str(record["query_id"])] = set(record["relevant"])
    return judgments


@dataclass
class TagReport:
    docs: list[IndexedDocument]
    failed: int


def tag_corpus(docs: Sequence[IndexedDocument], pipeline: MedLinkPipeline) -> TagReport:
    """Attach top-1 concept ids to each document by linking its full text.

    Fields are concatenated in name order. Per-document failures are
    counted and skipped rather than aborting the batch.
    """
    tagged = []
    failed = 0
    for doc in docs:
        text = "\n".join(doc.fields[name] for name in sorted(doc.fields))
        try:
            entities = pipeline.link_text(text, note_id=doc.note_id)
        except MedctError:
            failed += 1
            continue
        concept_ids = frozenset(
            entity.candidates[0][0] for entity in entities if entity.candidates
        )
        tagged.append(
            IndexedDocument(note_id=doc.note_id, fields=doc.fields, concept_ids=concept_ids)
        )
    return TagReport(docs=tagged, failed=failed)


_INDEX_SNAPSHOT_VERSION = 1


def save_index(index: SearchIndex, path: str | Path) -> None:
    """Binary snapshot: a version byte, then the pickled index."""
    with open(path, "wb") as fh:
        fh.write(bytes([_INDEX_SNAPSHOT_VERSION]))
        pickle.dump(index, fh, protocol=4)


def load_index(path: str | Path) -> SearchIndex:
    with open(path, "rb") as fh:
        version = fh.read(1)
        if not version or version[0] != _INDEX_SNAPSHOT_VERSION:
            raise MedctError(f"unsupported index snapshot version: {version!r}")
        return pickle.load(fh)
