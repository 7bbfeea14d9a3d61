"""Clinical terminology release parsing and the in-memory concept graph.

A release is three UTF-8, tab-separated files with a header row each:

    concepts.tsv:      id  hierarchy  fsn            (hierarchy: body|procedure|finding)
    descriptions.tsv:  id  concept_id  lang  type  term   (type: FSN|SYN)
    relationships.tsv: id  source_id  dest_id  type_id

The parsed ``ConceptGraph`` is immutable: build it once, share it freely
across threads.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

from .errors import ReleaseParseError, UnknownConceptError


class Hierarchy(enum.Enum):
    """The three concept families carried by a release."""

    BODY = "body"
    PROCEDURE = "procedure"
    FINDING = "finding"

    @classmethod
    def parse(cls, value: str) -> "Hierarchy":
        try:
            return cls(value)
        except ValueError:
            raise ValueError(f"unknown hierarchy: {value!r} (expected body|procedure|finding)")


@dataclass(frozen=True)
class Concept:
    """A terminology vertex: numeric code, hierarchy, canonical name, synonyms.

    ``synonyms`` is a tuple of (language tag, term) pairs and is never empty:
    when a release carries no description rows for a concept, the fully
    specified name itself stands in as its sole synonym.
    """

    id: str
    hierarchy: Hierarchy
    fsn: str
    synonyms: tuple[tuple[str, str], ...]

    def synonym_terms(self, languages: tuple[str, ...] | None = None) -> list[str]:
        """Synonym term texts whose language tag is in ``languages``.

        Falls back to all synonyms when the filter matches none, so a
        concept always yields at least one term.
        """
        if languages:
            picked = [term for lang, term in self.synonyms if lang in languages]
            if picked:
                return picked
        return [term for _, term in self.synonyms]


@dataclass(frozen=True)
class Relationship:
    """A typed directed edge between two concepts."""

    source_id: str
    dest_id: str
    type_id: str


@dataclass(frozen=True)
class HierarchyCount:
    concepts: int
    synonyms: int


@dataclass
class ConceptGraph:
    """Immutable directed graph of concepts and typed relationships."""

    concepts: dict[str, Concept]
    counts: dict[Hierarchy, HierarchyCount]
    _out: dict[str, tuple[Relationship, ...]] = field(repr=False)
    _in: dict[str, tuple[Relationship, ...]] = field(repr=False)

    def __len__(self) -> int:
        return len(self.concepts)

    def get_concept(self, concept_id: str) -> Concept | None:
        """Look up a concept; returns None when the id was never parsed."""
        return self.concepts.get(concept_id)

    def neighbors(self, concept_id: str, direction: str = "out") -> list[tuple[Relationship, Concept]]:
        """Edges incident to ``concept_id`` paired with the opposite endpoint.

        ``direction`` is "out" (edges whose source is the id) or "in".
        Results are sorted by (type_id, other concept id) so repeated calls
        are byte-stable.
        """
        if concept_id not in self.concepts:
            raise UnknownConceptError(concept_id)
        if direction == "out":
            edges = self._out.get(concept_id, ())
            keyed = [(r.type_id, r.dest_id, r) for r in edges]
        elif direction == "in":
            edges = self._in.get(concept_id, ())
            keyed = [(r.type_id, r.source_id, r) for r in edges]
        else:
            raise ValueError(f"direction must be 'out' or 'in', got {direction!r}")
        keyed.sort(key=lambda t: (t[0], t[1]))
        return [(r, self.concepts[other]) for _, other, r in keyed]

    def relationships(self) -> Iterator[Relationship]:
        for edges in self._out.values():
            yield from edges

    def compose_description(self, concept_id: str) -> str:
        """Collective textual description of one concept.

        Line layout: fully specified name, then all synonyms joined by
        "; ", then the hierarchy name, then one line per outbound edge
        ("type_id destination-fsn", sorted). Pure function of the graph,
        so rebuilding from the same files reproduces identical bytes.
        """
        concept = self.concepts.get(concept_id)
        if concept is None:
            raise UnknownConceptError(concept_id)
        lines = [
            concept.fsn,
            "; ".join(term for _, term in concept.synonyms),
            concept.hierarchy.value,
        ]
        for rel, dest in self.neighbors(concept_id, "out"):
            lines.append(f"{rel.type_id} {dest.fsn}")
        return "\n".join(lines)


def get_concept(graph: ConceptGraph, concept_id: str) -> Concept | None:
    return graph.get_concept(concept_id)


def neighbors(graph: ConceptGraph, concept_id: str, direction: str = "out") -> list[tuple[Relationship, Concept]]:
    return graph.neighbors(concept_id, direction)


def compose_description(graph: ConceptGraph, concept_id: str) -> str:
    return graph.compose_description(concept_id)


_GRAPH_SNAPSHOT_VERSION = 1


def save_graph(graph: ConceptGraph, path: str | Path) -> None:
    """Binary snapshot cache: a version byte, then the pickled graph.

    The TSV release stays the source of truth; regenerate at will.
    """
    import pickle

    with open(path, "wb") as fh:
        fh.write(bytes([_GRAPH_SNAPSHOT_VERSION]))
        pickle.dump(graph, fh, protocol=4)


def load_graph(path: str | Path) -> ConceptGraph:
    import pickle

    with open(path, "rb") as fh:
        version = fh.read(1)
        if not version or version[0] != _GRAPH_SNAPSHOT_VERSION:
            raise ReleaseParseError(f"unsupported graph snapshot version: {version!r}")
        return pickle.load(fh)


_CONCEPT_HEADER = ["id", "hierarchy", "fsn"]
_DESCRIPTION_HEADER = ["id", "concept_id", "lang", "type", "term"]
_RELATIONSHIP_HEADER = ["id", "source_id", "dest_id", "type_id"]


def _rows(path: Path, header: list[str]) -> Iterator[tuple[int, list[str]]]:
    """Yield (line number, columns) for each data row, validating the header."""
    with open(path, encoding="utf-8", newline="") as fh:
        first = fh.readline()
        if first == "":
            raise ReleaseParseError("empty file (missing header)", path=str(path), line=1)
        got = first.rstrip("\n").rstrip("\r").split("\t")
        if got != header:
            raise ReleaseParseError(
                f"bad header: expected {header}, got {got}", path=str(path), line=1
            )
        for lineno, raw in enumerate(fh, start=2):
            line = raw.rstrip("\n").rstrip("\r")
            if not line:
                continue
            cols = line.split("\t")
            if len(cols) != len(header):
                raise ReleaseParseError(
                    f"expected {len(header)} columns, got {len(cols)}",
                    path=str(path),
                    line=lineno,
                )
            yield lineno, cols


def _check_concept_id(concept_id: str, path: Path, lineno: int) -> None:
    if not concept_id.isascii() or not concept_id.isdigit():
        raise ReleaseParseError(
            f"concept id must be decimal digits: {concept_id!r}", path=str(path), line=lineno
        )


def parse_release(
    concepts_file: str | Path,
    descriptions_file: str | Path,
    relationships_file: str | Path,
) -> ConceptGraph:
    """Parse a three-file release into a ConceptGraph.

    Raises ReleaseParseError on malformed rows (with line numbers),
    duplicated concept ids, or description/relationship rows referencing
    ids absent from the concepts file.
    """
    concepts_path = Path(concepts_file)
    descriptions_path = Path(descriptions_file)
    relationships_path = Path(relationships_file)

    fsn_by_id: dict[str, str] = {}
    hierarchy_by_id: dict[str, Hierarchy] = {}
    synonyms_by_id: dict[str, list[tuple[str, str]]] = {}

    for lineno, (concept_id, hierarchy_raw, fsn) in _rows(concepts_path, _CONCEPT_HEADER):
        _check_concept_id(concept_id, concepts_path, lineno)
        if concept_id in fsn_by_id:
            raise ReleaseParseError(
                f"duplicate concept id: {concept_id}", path=str(concepts_path), line=lineno
            )
        if not fsn:
            raise ReleaseParseError("empty fsn", path=str(concepts_path), line=lineno)
        try:
            hierarchy = Hierarchy.parse(hierarchy_raw)
        except ValueError as exc:
            raise ReleaseParseError(str(exc), path=str(concepts_path), line=lineno)
        fsn_by_id[concept_id] = fsn
        hierarchy_by_id[concept_id] = hierarchy
        synonyms_by_id[concept_id] = []

    for lineno, (_desc_id, concept_id, lang, desc_type, term) in _rows(
        descriptions_path, _DESCRIPTION_HEADER
    ):
        if concept_id not in fsn_by_id:
            raise ReleaseParseError(
                f"description references unknown concept id: {concept_id}",
                path=str(descriptions_path),
                line=lineno,
            )
        if desc_type not in ("FSN", "SYN"):
            raise ReleaseParseError(
                f"description type must be FSN or SYN, got {desc_type!r}",
                path=str(descriptions_path),
                line=lineno,
            )
        if not term:
            raise ReleaseParseError("empty term", path=str(descriptions_path), line=lineno)
        synonyms_by_id[concept_id].append((lang, term))

    concepts: dict[str, Concept] = {}
    for concept_id, fsn in fsn_by_id.items():
        synonyms = synonyms_by_id[concept_id]
        if not synonyms:
            # A bare concept row still yields one synonym: its own name.
            synonyms = [("en", fsn)]
        concepts[concept_id] = Concept(
            id=concept_id,
            hierarchy=hierarchy_by_id[concept_id],
            fsn=fsn,
            synonyms=tuple(synonyms),
        )

    out_edges: dict[str, list[Relationship]] = {}
    in_edges: dict[str, list[Relationship]] = {}
    for lineno, (_rel_id, source_id, dest_id, type_id) in _rows(
        relationships_path, _RELATIONSHIP_HEADER
    ):
        for endpoint in (source_id, dest_id):
            if endpoint not in concepts:
                raise ReleaseParseError(
                    f"relationship references unknown concept id: {endpoint}",
                    path=str(relationships_path),
                    line=lineno,
                )
        if source_id == dest_id:
            raise ReleaseParseError(
                f"self-loop on concept id: {source_id}",
                path=str(relationships_path),
                line=lineno,
            )
        rel = Relationship(source_id=source_id, dest_id=dest_id, type_id=type_id)
        out_edges.setdefault(source_id, []).append(rel)
        in_edges.setdefault(dest_id, []).append(rel)

    counts: dict[Hierarchy, HierarchyCount] = {}
    for hierarchy in Hierarchy:
        members = [c for c in concepts.values() if c.hierarchy is hierarchy]
        counts[hierarchy] = HierarchyCount(
            concepts=len(members),
            synonyms=sum(len(c.synonyms) for c in members),
        )

    return ConceptGraph(
        concepts=concepts,
        counts=counts,
        _out={k: tuple(v) for k, v in out_edges.items()},
        _in={k: tuple(v) for k, v in in_edges.items()},
    )
