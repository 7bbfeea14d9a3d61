"""Span-level gold annotations over clinical notes, and BIO conversion.

Offsets everywhere are 0-based Unicode scalar (code point) offsets, start
inclusive and end exclusive. Gold spans within one note never overlap.

Annotation JSONL, one record per line:

    {"note_id": str, "text": str (first record per note, optional after),
     "start": int, "end": int,
     "hierarchy": "finding"|"procedure"|"body", "concept_id": str}
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence

from .errors import AnnotationError
from .terminology import Hierarchy

TokenSpan = tuple[int, int]
Tokenization = list[TokenSpan]

#: The seven token labels: outside, plus begin/inside per hierarchy class.
BIO_LABELS = ("O", "B-find", "I-find", "B-proc", "I-proc", "B-body", "I-body")

_CLASS_OF_HIERARCHY = {
    Hierarchy.FINDING: "find",
    Hierarchy.PROCEDURE: "proc",
    Hierarchy.BODY: "body",
}
_HIERARCHY_OF_CLASS = {v: k for k, v in _CLASS_OF_HIERARCHY.items()}


@dataclass(frozen=True)
class Annotation:
    """One gold span linking note text to a concept."""

    note_id: str
    start: int
    end: int
    hierarchy: Hierarchy
    concept_id: str


@dataclass(frozen=True)
class AnnotatedNote:
    """A note body plus its non-overlapping annotations, sorted by start."""

    note_id: str
    text: str
    annotations: tuple[Annotation, ...]


def load_annotations(path: str | Path) -> list[AnnotatedNote]:
    """Read annotation JSONL and group records into AnnotatedNotes.

    Notes appear in first-seen order; annotations are sorted by start.
    Raises AnnotationError on malformed lines (with line number), spans
    out of bounds, or overlapping gold spans.
    """
    texts: dict[str, str] = {}
    spans: dict[str, list[Annotation]] = {}
    order: list[str] = []

    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
                note_id = record["note_id"]
                start = record["start"]
                end = record["end"]
                hierarchy = Hierarchy.parse(record["hierarchy"])
                concept_id = str(record["concept_id"])
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise AnnotationError(f"{path}:{lineno}: malformed record: {exc}")
            if not isinstance(start, int) or not isinstance(end, int):
                raise AnnotationError(f"{path}:{lineno}: start/end must be integers")
            if not concept_id or not concept_id.isdigit():
                raise AnnotationError(f"{path}:{lineno}: concept_id must be a digit string")

            if note_id not in texts:
                if "text" not in record:
                    raise AnnotationError(
                        f"{path}:{lineno}: first record for note {note_id!r} must carry text"
                    )
                texts[note_id] = record["text"]
                spans[note_id] = []
                order.append(note_id)
            elif "text" in record and record["text"] != texts[note_id]:
                raise AnnotationError(
                    f"{path}:{lineno}: conflicting text for note {note_id!r}"
                )

            text = texts[note_id]
            if not (0 <= start < end <= len(text)):
                raise AnnotationError(
                    f"{path}:{lineno}: span ({start},{end}) out of bounds for "
                    f"note {note_id!r} of length {len(text)}"
                )
            spans[note_id].append(
                Annotation(note_id=note_id, start=start, end=end,
                           hierarchy=hierarchy, concept_id=concept_id)
            )

    notes = []
    for note_id in order:
        anns = sorted(spans[note_id], key=lambda a: (a.start, a.end))
        for prev, cur in zip(anns, anns[1:]):
            if cur.start < prev.end:
                raise AnnotationError(
                    f"overlapping gold spans in note {note_id!r}: "
                    f"({prev.start},{prev.end}) and ({cur.start},{cur.end})"
                )
        notes.append(AnnotatedNote(note_id=note_id, text=texts[note_id], annotations=tuple(anns)))
    return notes


# CJK ideograph blocks; kana and hangul are intentionally excluded — the
# corpus is Chinese/English.
_CJK_RANGES = (
    (0x3400, 0x4DBF),
    (0x4E00, 0x9FFF),
    (0xF900, 0xFAFF),
    (0x20000, 0x2A6DF),
    (0x2A700, 0x2EBEF),
    (0x30000, 0x3134F),
)


def is_cjk(ch: str) -> bool:
    cp = ord(ch)
    return any(lo <= cp <= hi for lo, hi in _CJK_RANGES)


def _is_word_char(ch: str) -> bool:
    # Letters/digits that are not CJK form runs; CJK splits per character.
    return ch.isalnum() and not is_cjk(ch)


def default_tokenize(text: str) -> Tokenization:
    """Split text into token spans.

    Non-CJK alphanumeric runs become single tokens; every CJK ideograph is
    its own token; whitespace and punctuation separate tokens and are never
    part of one.
    """
    tokens: Tokenization = []
    run_start: int | None = None
    for i, ch in enumerate(text):
        if is_cjk(ch):
            if run_start is not None:
                tokens.append((run_start, i))
                run_start = None
            tokens.append((i, i + 1))
        elif _is_word_char(ch):
            if run_start is None:
                run_start = i
        else:
            if run_start is not None:
                tokens.append((run_start, i))
                run_start = None
    if run_start is not None:
        tokens.append((run_start, len(text)))
    return tokens


def fold_text(text: str) -> str:
    """Length-preserving lowercase fold, for case-insensitive matching.

    Characters whose lowercase form is longer than one code point (e.g.
    dotted capital I) are kept as-is so offsets stay aligned.
    """
    folded = []
    for ch in text:
        low = ch.lower()
        folded.append(low if len(low) == 1 else ch)
    return "".join(folded)


class BioEncoding(NamedTuple):
    labels: list[str]
    dropped: list[Annotation]


def bio_encode(note: AnnotatedNote, tok: Tokenization) -> BioEncoding:
    """Label each token with one of the seven BIO labels.

    A token fully or partially inside an annotation gets B-<class> if it is
    the first token that annotation labels, I-<class> after; everything
    else is O. Annotations covering no token cannot be encoded; they are
    dropped and reported in ``dropped``.
    """
    labels = ["O"] * len(tok)
    dropped: list[Annotation] = []
    for ann in note.annotations:
        cls = _CLASS_OF_HIERARCHY[ann.hierarchy]
        first = True
        hit = False
        for i, (ts, te) in enumerate(tok):
            if ts < ann.end and te > ann.start:
                if labels[i] != "O":
                    continue  # already claimed by an earlier annotation
                labels[i] = f"B-{cls}" if first else f"I-{cls}"
                first = False
                hit = True
        if not hit:
            dropped.append(ann)
    return BioEncoding(labels=labels, dropped=dropped)


def bio_decode(labels: Sequence[str], tok: Tokenization) -> list[tuple[int, int, Hierarchy]]:
    """Turn a BIO label sequence back into character spans.

    Maximal runs B-x (I-x)* become one span from the first token's start to
    the last token's end. A dangling I-x (no preceding B-x/I-x of the same
    class) leniently opens a new span. A class change always closes the
    current span.
    """
    if len(labels) != len(tok):
        raise ValueError(f"labels ({len(labels)}) and tokens ({len(tok)}) differ in length")
    spans: list[tuple[int, int, Hierarchy]] = []
    open_cls: str | None = None
    open_start = 0
    open_end = 0

    def close() -> None:
        nonlocal open_cls
        if open_cls is not None:
            spans.append((open_start, open_end, _HIERARCHY_OF_CLASS[open_cls]))
            open_cls = None

    for label, (ts, te) in zip(labels, tok):
        if label == "O":
            close()
            continue
        if label not in BIO_LABELS:
            raise ValueError(f"unknown BIO label: {label!r}")
        mark, cls = label.split("-", 1)
        if mark == "B" or open_cls != cls:
            close()
            open_cls = cls
            open_start = ts
        open_end = te
    close()
    return spans


def split_folds(notes: Sequence[AnnotatedNote], k: int, seed: int) -> list[list[AnnotatedNote]]:
    """Partition notes into k folds, deterministically for a given seed.

    Fold sizes differ by at most one. Requires 2 <= k <= len(notes).
    """
    if k < 2:
        raise ValueError(f"fold count must be >= 2, got {k}")
    if k > len(notes):
        raise ValueError(f"fold count {k} exceeds note count {len(notes)}")
    shuffled = list(notes)
    random.Random(seed).shuffle(shuffled)
    return [shuffled[i::k] for i in range(k)]


def write_fold_file(path: str | Path, fold: Iterable[AnnotatedNote]) -> None:
    """Persist a fold as plain text, one note_id per line."""
    with open(path, "w", encoding="utf-8") as fh:
        for note in fold:
            fh.write(note.note_id + "\n")
