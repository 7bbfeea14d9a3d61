"""Evaluation suite: character-level concept-averaged IoU, P/R/F1 at k,
and pairwise cosine-similarity summaries.

The IoU metric scores a predicted character-concept assignment P against a
gold assignment G. Both map (note_id, concept_id) keys to sets of character
offsets. Per key, IoU = |P ∩ G| / |P ∪ G|, a missing side counting as the
empty set; the overall score is the unweighted mean over every key present
in P or G.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from . import embedding
from .annotations import Annotation

#: (note_id, concept_id) -> set of character offsets.
CharAssignment = dict[tuple[str, str], set[int]]


def assignment_from_entities(entities: Iterable) -> CharAssignment:
    """Build a character-concept assignment from annotations or linked entities.

    Accepts Annotation records (gold) and LinkedEntity records (predictions;
    the top-1 candidate is taken, entities without candidates are skipped).
    Overlapping contributions to the same key union.
    """
    assignment: CharAssignment = {}
    for entity in entities:
        if isinstance(entity, Annotation):
            concept_id = entity.concept_id
        else:
            if not entity.candidates:
                continue
            concept_id = entity.candidates[0][0]
        key = (entity.note_id, concept_id)
        assignment.setdefault(key, set()).update(range(entity.start, entity.end))
    return assignment


def iou_concept(P: CharAssignment, G: CharAssignment, key: tuple[str, str]) -> float:
    """Per-key intersection-over-union of character sets."""
    if key not in P and key not in G:
        raise KeyError(f"key {key} present in neither assignment")
    p = P.get(key, set())
    g = G.get(key, set())
    union = p | g
    if not union:
        return 1.0
    return len(p & g) / len(union)


@dataclass
class IoUReport:
    per_pair: dict[tuple[str, str], float]
    iou_all: float
    n: int


def iou_all(P: CharAssignment, G: CharAssignment, *, pool_notes: bool = False) -> IoUReport:
    """Average per-key IoU over every key in P ∪ G.

    With no keys at all the score is vacuously 1.0 (reported with n=0).
    ``pool_notes=True`` switches the averaging unit from (note, concept)
    pairs to corpus-global concepts: character sets are merged across notes
    per concept id (offsets remain distinguished per note).
    """
    if pool_notes:
        P = _pool_by_concept(P)
        G = _pool_by_concept(G)
    keys = sorted(set(P) | set(G))
    per_pair = {key: iou_concept(P, G, key) for key in keys}
    if not keys:
        return IoUReport(per_pair={}, iou_all=1.0, n=0)
    return IoUReport(per_pair=per_pair, iou_all=sum(per_pair.values()) / len(keys), n=len(keys))


def _pool_by_concept(assignment: CharAssignment) -> CharAssignment:
    # Characters stay distinguished per note: elements become (note_id, offset).
    pooled: CharAssignment = {}
    for (note_id, concept_id), offsets in assignment.items():
        key = ("", concept_id)
        bucket = pooled.setdefault(key, set())
        bucket.update((note_id, off) for off in offsets)  # type: ignore[arg-type]
    return pooled


#: query_id -> set of relevant note ids.
RetrievalJudgments = dict[str, set[str]]


@dataclass
class PrfReport:
    """Per-query and macro-averaged precision/recall/F1 at k.

    Per-query recall and F1 are None for queries with no relevant notes;
    such queries are excluded from the corresponding macro averages.
    """

    k: int
    per_query: dict[str, tuple[float, float | None, float | None]]
    precision: float
    recall: float
    f1: float


def prf_at_k(
    ranked: Mapping[str, Sequence[str]],
    judgments: RetrievalJudgments,
    k: int,
) -> PrfReport:
    """Precision/recall/F1 over the top-k of each ranked list.

    Precision divides by min(k, number returned) so short result lists are
    not penalized for their length (0.0 when nothing was returned). Macro
    averages are unweighted means over the queries where the metric is
    defined.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    per_query: dict[str, tuple[float, float | None, float | None]] = {}
    for query_id, results in ranked.items():
        if query_id not in judgments:
            raise KeyError(f"query {query_id!r} missing from judgments")
        relevant = judgments[query_id]
        top = list(results)[:k]
        hits = len(set(top) & relevant)
        precision = hits / min(k, len(top)) if top else 0.0
        if relevant:
            recall: float | None = hits / len(relevant)
            f1: float | None = (
                2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
            )
        else:
            recall = None
            f1 = None
        per_query[query_id] = (precision, recall, f1)

    precisions = [p for p, _, _ in per_query.values()]
    recalls = [r for _, r, _ in per_query.values() if r is not None]
    f1s = [f for _, _, f in per_query.values() if f is not None]
    return PrfReport(
        k=k,
        per_query=per_query,
        precision=sum(precisions) / len(precisions) if precisions else 0.0,
        recall=sum(recalls) / len(recalls) if recalls else 0.0,
        f1=sum(f1s) / len(f1s) if f1s else 0.0,
    )


@dataclass
class CosineReport:
    """Mean pairwise cosine between labeled text groups, aligned by index."""

    embedder_tag: str
    pairs: list[tuple[str, str]]
    means: dict[tuple[str, str], float]
    group_sizes: int


def cosine_report(
    groups: Mapping[str, Sequence[str]],
    embedder: embedding.EmbedderConfig,
    pairs: Sequence[tuple[str, str]] | None = None,
) -> CosineReport:
    """For each label pair (a, b): mean over examples of cosine(a_i, b_i).

    All groups must have equal length. ``pairs`` defaults to every
    unordered label pair in group insertion order.
    """
    labels = list(groups)
    sizes = {label: len(groups[label]) for label in labels}
    if len(set(sizes.values())) > 1:
        raise ValueError(f"groups differ in length: {sizes}")
    n = sizes[labels[0]] if labels else 0
    if pairs is None:
        pairs = [(a, b) for i, a in enumerate(labels) for b in labels[i + 1 :]]
    for a, b in pairs:
        if a not in groups or b not in groups:
            raise KeyError(f"pair ({a!r}, {b!r}) references an unknown group")

    vectors = {label: embedding.embed_texts(embedder, list(groups[label])) for label in labels}
    means: dict[tuple[str, str], float] = {}
    for a, b in pairs:
        if n == 0:
            means[(a, b)] = 0.0
            continue
        total = sum(
            embedding.cosine(va, vb) for va, vb in zip(vectors[a], vectors[b])
        )
        means[(a, b)] = total / n
    return CosineReport(
        embedder_tag=embedder.fingerprint(), pairs=list(pairs), means=means, group_sizes=n
    )


# --- report rendering -------------------------------------------------------

def render_iou_report(report: IoUReport) -> str:
    """IoU report as a tab-separated table."""
    lines = ["note_id\tconcept_id\tiou"]
    for (note_id, concept_id), value in sorted(report.per_pair.items()):
        lines.append(f"{note_id}\t{concept_id}\t{value:.6f}")
    lines.append(f"iou_all\t(n={report.n})\t{report.iou_all:.6f}")
    return "\n".join(lines) + "\n"


def render_prf_table(reports: Mapping[str, PrfReport], k: int) -> str:
    """Mode rows by precision/recall/F1 columns, measured at top k."""
    lines = [f"Retrieval method\tPrecision@{k}\tRecall@{k}\tF1@{k}"]
    for label, report in reports.items():
        lines.append(
            f"{label}\t{report.precision:.4f}\t{report.recall:.4f}\t{report.f1:.4f}"
        )
    return "\n".join(lines) + "\n"


def render_cosine_reports(
    reports: Sequence[CosineReport], lengths: Mapping[str, float] | None = None
) -> str:
    """One row per embedder, one column per label pair; optional
    mean-character-length section per group below."""
    if not reports:
        return ""
    pairs = reports[0].pairs
    header = "embedder\t" + "\t".join(f"{a}:{b}" for a, b in pairs)
    lines = [header]
    for report in reports:
        cells = "\t".join(f"{report.means[p]:.4f}" for p in pairs)
        lines.append(f"{report.embedder_tag}\t{cells}")
    if lengths is not None:
        lines.append("")
        lines.append("group\tmean_chars")
        for group, value in lengths.items():
            lines.append(f"{group}\t{value:.1f}")
    return "\n".join(lines) + "\n"


def write_records(path: str | Path, records: Iterable[Mapping]) -> None:
    """Emit structured report rows as JSONL."""
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record, ensure_ascii=False, sort_keys=True) + "\n")


def iou_report_records(report: IoUReport) -> list[dict]:
    rows = [
        {"note_id": n, "concept_id": c, "iou": v}
        for (n, c), v in sorted(report.per_pair.items())
    ]
    rows.append({"iou_all": report.iou_all, "n": report.n})
    return rows
