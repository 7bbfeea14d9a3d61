"""Two-stage entity linking: detect mention spans, then rank concepts.

Stage 1 is pluggable. The built-in detector runs an Aho-Corasick automaton
over every synonym in the concept graph (case-folded for Latin script,
exact for CJK) and keeps a greedy left-to-right, longest-match-wins,
non-overlapping selection.

Stage 2 embeds each detected surface once and ranks concepts by cosine
similarity against a concept index whose entry per concept is the
arithmetic mean of its synonym embeddings. An optional static dictionary
(mention text -> most frequent concept in training data) short-circuits
the embedding ranking on exact hits.

Ties are broken by ascending concept id (plain string order) everywhere.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import embedding
from .annotations import AnnotatedNote, fold_text
from .errors import FingerprintMismatchError, MedctError
from .terminology import ConceptGraph, Hierarchy


@dataclass(frozen=True)
class LinkedEntity:
    """A detected span with its ranked concept candidates.

    ``candidates`` is sorted by (score descending, concept_id ascending);
    ``source`` records which stage produced them ("dictionary" for a static
    lookup hit, "embedding" for cosine ranking).
    """

    note_id: str
    start: int
    end: int
    hierarchy: Hierarchy | None
    candidates: tuple[tuple[str, float], ...]
    source: str


# --- concept index -----------------------------------------------------------

@dataclass
class ConceptIndex:
    """Per-concept embeddings: mean of synonym vectors, stored unnormalized."""

    dim: int
    concept_ids: list[str]
    hierarchies: list[Hierarchy]
    matrix: np.ndarray  # shape (len(concept_ids), dim)
    fingerprint: str

    def __len__(self) -> int:
        return len(self.concept_ids)


def build_concept_index(
    graph: ConceptGraph,
    embedder: embedding.EmbedderConfig,
    languages: Sequence[str] | None = None,
) -> ConceptIndex:
    """Embed every synonym and average per concept.

    ``languages`` filters synonyms by language tag; a concept whose
    synonyms all fail the filter falls back to its full synonym list. The
    mean is taken over raw (pre-normalization) vectors. Entries are sorted
    by concept id.
    """
    concept_ids = sorted(graph.concepts)
    lang_filter = tuple(languages) if languages else None

    terms: list[str] = []
    slices: list[tuple[int, int]] = []
    for concept_id in concept_ids:
        synonyms = graph.concepts[concept_id].synonym_terms(lang_filter)
        slices.append((len(terms), len(terms) + len(synonyms)))
        terms.extend(synonyms)

    vectors = embedding.embed_texts(embedder, terms) if terms else []
    matrix = np.zeros((len(concept_ids), embedder.dim), dtype=np.float64)
    for row, (lo, hi) in enumerate(slices):
        matrix[row] = np.mean(vectors[lo:hi], axis=0)

    return ConceptIndex(
        dim=embedder.dim,
        concept_ids=concept_ids,
        hierarchies=[graph.concepts[c].hierarchy for c in concept_ids],
        matrix=matrix,
        fingerprint=embedder.fingerprint(),
    )


def save_concept_index(index: ConceptIndex, path: str | Path) -> None:
    """Persist as JSONL: a header line, then one entry per concept."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps({"dim": index.dim, "fingerprint": index.fingerprint}) + "\n")
        for i, concept_id in enumerate(index.concept_ids):
            fh.write(
                json.dumps(
                    {
                        "concept_id": concept_id,
                        "hierarchy": index.hierarchies[i].value,
                        "vector": index.matrix[i].tolist(),
                    }
                )
                + "\n"
            )


def load_concept_index(path: str | Path) -> ConceptIndex:
    with open(path, encoding="utf-8") as fh:
        header = json.loads(fh.readline())
        dim = int(header["dim"])
        concept_ids: list[str] = []
        hierarchies: list[Hierarchy] = []
        rows: list[list[float]] = []
        for line in fh:
            if not line.strip():
                continue
            entry = json.loads(line)
            vector = entry["vector"]
            if len(vector) != dim:
                raise MedctError(
                    f"index entry {entry['concept_id']} has dimension {len(vector)}, expected {dim}"
                )
            concept_ids.append(entry["concept_id"])
            hierarchies.append(Hierarchy.parse(entry["hierarchy"]))
            rows.append(vector)
    matrix = np.asarray(rows, dtype=np.float64) if rows else np.zeros((0, dim))
    return ConceptIndex(
        dim=dim,
        concept_ids=concept_ids,
        hierarchies=hierarchies,
        matrix=matrix,
        fingerprint=header["fingerprint"],
    )


# --- stage 1: dictionary span detection --------------------------------------

class _AcNode:
    __slots__ = ("children", "fail", "outputs")

    def __init__(self) -> None:
        self.children: dict[str, _AcNode] = {}
        self.fail: _AcNode | None = None
        self.outputs: list[int] = []  # pattern lengths ending here


class SynonymMatcher:
    """Aho-Corasick automaton over the graph's synonym strings.

    Patterns are matched against a length-preserving lowercase fold of the
    input, so Latin-script matching is case-insensitive while CJK (which
    the fold leaves untouched) stays exact. Each pattern carries the
    hierarchy of its concept; when one surface belongs to several concepts
    the lowest concept id wins.
    """

    def __init__(self, graph: ConceptGraph, languages: Sequence[str] | None = None) -> None:
        lang_filter = tuple(languages) if languages else None
        pattern_owner: dict[str, tuple[str, Hierarchy]] = {}
        for concept in graph.concepts.values():
            for lang, term in concept.synonyms:
                if lang_filter and lang not in lang_filter:
                    continue
                folded = fold_text(term)
                if not folded:
                    continue
                owner = pattern_owner.get(folded)
                if owner is None or concept.id < owner[0]:
                    pattern_owner[folded] = (concept.id, concept.hierarchy)
        self._meta = pattern_owner
        self._root = _AcNode()
        for pattern in pattern_owner:
            node = self._root
            for ch in pattern:
                node = node.children.setdefault(ch, _AcNode())
            node.outputs.append(len(pattern))
        self._build_failure_links()

    def _build_failure_links(self) -> None:
        root = self._root
        root.fail = root
        queue: deque[_AcNode] = deque()
        for child in root.children.values():
            child.fail = root
            queue.append(child)
        while queue:
            current = queue.popleft()
            for ch, child in current.children.items():
                fallback = current.fail
                while fallback is not root and ch not in fallback.children:
                    fallback = fallback.fail
                child.fail = fallback.children.get(ch, root)
                if child.fail is child:
                    child.fail = root
                child.outputs = child.outputs + child.fail.outputs
                queue.append(child)

    def _all_matches(self, folded: str) -> list[tuple[int, int]]:
        """Every (start, end) where some pattern occurs."""
        matches: list[tuple[int, int]] = []
        node = self._root
        for i, ch in enumerate(folded):
            while node is not self._root and ch not in node.children:
                node = node.fail
            node = node.children.get(ch, self._root)
            for length in node.outputs:
                matches.append((i + 1 - length, i + 1))
        return matches

    def find(self, text: str) -> list[tuple[int, int, Hierarchy]]:
        """Greedy left-to-right, longest-match-wins, non-overlapping spans."""
        folded = fold_text(text)
        matches = self._all_matches(folded)
        matches.sort(key=lambda m: (m[0], -(m[1] - m[0])))
        selected: list[tuple[int, int, Hierarchy]] = []
        cursor = 0
        for start, end in matches:
            if start < cursor:
                continue
            _, hierarchy = self._meta[folded[start:end]]
            selected.append((start, end, hierarchy))
            cursor = end
        return selected

    def concept_for_surface(self, surface: str) -> tuple[str, Hierarchy] | None:
        return self._meta.get(fold_text(surface))


def detect_mentions_dictionary(
    text: str, graph: ConceptGraph, languages: Sequence[str] | None = None
) -> list[tuple[int, int, Hierarchy]]:
    """One-shot span detection; build a SynonymMatcher for repeated use."""
    return SynonymMatcher(graph, languages).find(text)


# --- static dictionary --------------------------------------------------------

@dataclass
class StaticDictionary:
    """Exact mention text -> most frequent concept, with full counts kept.

    The winning concept per mention is the one with the highest count,
    ties resolved by ascending concept id. Counts are retained so that
    correction ingestion can shift majorities incrementally.
    """

    counts: dict[str, dict[str, int]] = field(default_factory=dict)

    def add(self, mention: str, concept_id: str, count: int = 1) -> None:
        bucket = self.counts.setdefault(mention, {})
        bucket[concept_id] = bucket.get(concept_id, 0) + count

    def lookup(self, mention: str) -> tuple[str, int] | None:
        bucket = self.counts.get(mention)
        if not bucket:
            return None
        concept_id = min(bucket, key=lambda c: (-bucket[c], c))
        return concept_id, bucket[concept_id]

    def __len__(self) -> int:
        return len(self.counts)

    def __contains__(self, mention: str) -> bool:
        return mention in self.counts

    def copy(self) -> "StaticDictionary":
        return StaticDictionary(counts={m: dict(b) for m, b in self.counts.items()})

    def to_bytes(self) -> bytes:
        """Canonical serialization: one JSON record per mention, sorted."""
        lines = []
        for mention in sorted(self.counts):
            concept_id, count = self.lookup(mention)  # type: ignore[misc]
            lines.append(
                json.dumps(
                    {
                        "mention": mention,
                        "concept_id": concept_id,
                        "count": count,
                        "counts": dict(sorted(self.counts[mention].items())),
                    },
                    ensure_ascii=False,
                    sort_keys=True,
                )
            )
        return ("\n".join(lines) + "\n" if lines else "").encode("utf-8")

    def save(self, path: str | Path) -> None:
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def load(cls, path: str | Path) -> "StaticDictionary":
        counts: dict[str, dict[str, int]] = {}
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                if not line.strip():
                    continue
                record = json.loads(line)
                counts[record["mention"]] = {
                    c: int(n) for c, n in record["counts"].items()
                }
        return cls(counts=counts)


def build_static_dictionary(train: Iterable[AnnotatedNote]) -> StaticDictionary:
    """Count (mention surface, concept) pairs over gold annotations."""
    dictionary = StaticDictionary()
    for note in train:
        for ann in note.annotations:
            dictionary.add(note.text[ann.start : ann.end], ann.concept_id)
    return dictionary


@dataclass
class CorrectionResult:
    dictionary: StaticDictionary
    applied: int
    rejected: list[tuple[int, str]]  # (record index, reason)


def _validate_correction(record: Mapping) -> str | None:
    for key in ("note_id", "start", "end", "mention", "concept_id"):
        if key not in record:
            return f"missing key {key!r}"
    if not isinstance(record["start"], int) or not isinstance(record["end"], int):
        return "start/end must be integers"
    if record["start"] >= record["end"]:
        return "empty span"
    if not isinstance(record["mention"], str) or not record["mention"]:
        return "mention must be a non-empty string"
    concept_id = record["concept_id"]
    if not isinstance(concept_id, str) or not concept_id.isdigit():
        return "concept_id must be a digit string"
    return None


def ingest_corrections(
    dictionary: StaticDictionary,
    corrections: Sequence[Mapping],
    log_path: str | Path | None = None,
) -> CorrectionResult:
    """Fold reviewed corrections into a new dictionary snapshot.

    Valid records bump the (mention, concept) count by one and are appended
    to the log; malformed records are rejected with a reason and the rest
    still apply. Replaying the log over the same base dictionary is
    deterministic and reproduces the result.
    """
    updated = dictionary.copy()
    applied = 0
    rejected: list[tuple[int, str]] = []
    accepted: list[Mapping] = []
    for i, record in enumerate(corrections):
        reason = _validate_correction(record)
        if reason is not None:
            rejected.append((i, reason))
            continue
        updated.add(record["mention"], record["concept_id"])
        accepted.append(record)
        applied += 1
    if log_path is not None and accepted:
        with open(log_path, "a", encoding="utf-8") as fh:
            for record in accepted:
                fh.write(json.dumps(dict(record), ensure_ascii=False, sort_keys=True) + "\n")
    return CorrectionResult(dictionary=updated, applied=applied, rejected=rejected)


def replay_correction_log(
    log_path: str | Path, base: StaticDictionary | None = None
) -> StaticDictionary:
    records = []
    with open(log_path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                records.append(json.loads(line))
    return ingest_corrections(base or StaticDictionary(), records).dictionary


# --- stage 2: cosine ranking --------------------------------------------------

def link_spans(
    text: str,
    spans: Sequence[tuple[int, int, Hierarchy | None]],
    index: ConceptIndex,
    embedder: embedding.EmbedderConfig,
    top_k: int = 5,
    *,
    note_id: str = "",
    restrict_hierarchy: bool = True,
) -> list[LinkedEntity]:
    """Rank concepts for each span by cosine against the concept index.

    Each distinct surface text is embedded once. When a span carries a
    hierarchy and ``restrict_hierarchy`` is on, candidates are limited to
    concepts of that hierarchy.
    """
    if embedder.fingerprint() != index.fingerprint:
        raise FingerprintMismatchError(
            f"embedder fingerprint {embedder.fingerprint()!r} does not match "
            f"index provenance {index.fingerprint!r}"
        )
    surfaces = sorted({text[start:end] for start, end, _ in spans})
    vectors = dict(zip(surfaces, embedding.embed_texts(embedder, surfaces))) if surfaces else {}

    index_norms = np.linalg.norm(index.matrix, axis=1) if len(index) else np.zeros(0)
    hierarchy_rows: dict[Hierarchy, np.ndarray] = {}

    entities = []
    for start, end, hierarchy in spans:
        if hierarchy is not None and restrict_hierarchy:
            rows = hierarchy_rows.get(hierarchy)
            if rows is None:
                rows = np.array(
                    [i for i, h in enumerate(index.hierarchies) if h is hierarchy], dtype=int
                )
                hierarchy_rows[hierarchy] = rows
        else:
            rows = np.arange(len(index))
        candidates = _rank(vectors[text[start:end]], index, index_norms, rows, top_k)
        entities.append(
            LinkedEntity(
                note_id=note_id,
                start=start,
                end=end,
                hierarchy=hierarchy,
                candidates=candidates,
                source="embedding",
            )
        )
    return entities


def _rank(
    query: np.ndarray,
    index: ConceptIndex,
    index_norms: np.ndarray,
    rows: np.ndarray,
    top_k: int,
) -> tuple[tuple[str, float], ...]:
    if rows.size == 0:
        return ()
    qnorm = float(np.linalg.norm(query))
    if qnorm == 0.0:
        scores = np.zeros(rows.size)
    else:
        norms = index_norms[rows]
        dots = index.matrix[rows] @ query
        with np.errstate(invalid="ignore", divide="ignore"):
            scores = np.where(norms > 0.0, dots / (norms * qnorm), 0.0)
    # Rows are pre-sorted by concept id, so a stable sort on descending
    # score yields the ascending-id tie order.
    order = np.argsort(-scores, kind="stable")[:top_k]
    return tuple((index.concept_ids[int(rows[i])], float(scores[i])) for i in order)


# --- the assembled pipeline ---------------------------------------------------

class MedLinkPipeline:
    """Stage-1 detection plus stage-2 ranking behind one call.

    When ``use_static`` is on and the exact mention surface is present in
    the static dictionary, the dictionary's concept is emitted alone with
    score 1.0 and the embedding ranker is skipped for that span.
    """

    def __init__(
        self,
        graph: ConceptGraph,
        index: ConceptIndex,
        embedder: embedding.EmbedderConfig,
        static_dictionary: StaticDictionary | None = None,
        *,
        use_static: bool = True,
        top_k: int = 5,
        restrict_hierarchy: bool = True,
        languages: Sequence[str] | None = None,
    ) -> None:
        if embedder.fingerprint() != index.fingerprint:
            raise FingerprintMismatchError(
                f"embedder fingerprint {embedder.fingerprint()!r} does not match "
                f"index provenance {index.fingerprint!r}"
            )
        self.graph = graph
        self.index = index
        self.embedder = embedder
        self.static_dictionary = static_dictionary
        self.use_static = use_static
        self.top_k = top_k
        self.restrict_hierarchy = restrict_hierarchy
        self.matcher = SynonymMatcher(graph, languages)

    def link_text(
        self,
        text: str,
        note_id: str = "",
        spans: Sequence[tuple[int, int, Hierarchy | None]] | None = None,
    ) -> list[LinkedEntity]:
        """Link a note. ``spans`` overrides the built-in detector (external
        stage-1 output, e.g. decoded BIO labels from a trained NER model)."""
        if spans is None:
            spans = self.matcher.find(text)
        spans = sorted(spans, key=lambda s: (s[0], s[1]))

        pending: list[tuple[int, int, Hierarchy | None]] = []
        dictionary_hits: dict[int, LinkedEntity] = {}
        for pos, (start, end, hierarchy) in enumerate(spans):
            mention = text[start:end]
            if self.use_static and self.static_dictionary is not None:
                hit = self.static_dictionary.lookup(mention)
                if hit is not None:
                    dictionary_hits[pos] = LinkedEntity(
                        note_id=note_id,
                        start=start,
                        end=end,
                        hierarchy=hierarchy,
                        candidates=((hit[0], 1.0),),
                        source="dictionary",
                    )
                    continue
            pending.append((start, end, hierarchy))

        ranked = link_spans(
            text,
            pending,
            self.index,
            self.embedder,
            self.top_k,
            note_id=note_id,
            restrict_hierarchy=self.restrict_hierarchy,
        )
        ranked_iter = iter(ranked)
        return [
            dictionary_hits[pos] if pos in dictionary_hits else next(ranked_iter)
            for pos in range(len(spans))
        ]
