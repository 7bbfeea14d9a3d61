"""Prompt construction and batch execution for the LLM-facing workflows.

Three prompt families are built here: contextualized term translation,
few-shot NER extraction, and discharge-course summarization (plain and
entity-guided). All builders are pure functions of their inputs and emit
byte-identical output for identical input.

Execution goes through a generic chat-completion contract so any provider
can be adapted with a thin shim:

    POST {base_url}/chat
    {"model": str, "messages": [{"role": str, "content": str}],
     "temperature": float, "max_tokens": int}
    -> 200 {"content": str}
"""

from __future__ import annotations

import json
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import requests

from . import metrics
from .embedding import EmbedderConfig
from .errors import LlmTransportError, MedctError, UnknownConceptError
from .terminology import ConceptGraph, Hierarchy

NER_FEWSHOT_TEMPLATE = """\
{clinical note}

From the above clinical notes, extract all medical entity
mentions as span of texts, and categorize them into
three types: body, procedure, and finding. Output as
JSON format as the following examples:
{"mention": "stomach", "type": "body"},
{"mention": "nasojejunal feedings", "type": "procedure"},
{"mention": "multisystem organ failure",
"type": "finding"}.
Please only output the JSON result."""

SUMMARY_BODY = """\
The above is a detailed hospital course and discharge
diagnosis from a medical record. Please summarize it
into an accurate and concise medical summary. The
summary should include the reason for admission,
basis for diagnosis, main treatment measures and their
effects, changes in condition, and status at discharge."""

SUMMARY_GUIDED_PARAGRAPH = """\
Also, the above medical records include the following
entities, please include these medical entities in the
medical course summary."""


def build_translation_prompt(
    graph: ConceptGraph, concept_id: str, synonym: str, target_language: str
) -> str:
    """Concept description followed by the translation instruction.

    The synonym must belong to the concept; the graph's collective
    description supplies the disambiguating context.
    """
    concept = graph.get_concept(concept_id)
    if concept is None:
        raise UnknownConceptError(concept_id)
    if synonym not in (term for _, term in concept.synonyms):
        raise MedctError(f"synonym {synonym!r} does not belong to concept {concept_id}")
    description = graph.compose_description(concept_id)
    return f"{description}\nIn the above context, translate the term {synonym} into {target_language}:"


def build_ner_fewshot_prompt(note_text: str) -> str:
    """Few-shot extraction prompt with the note substituted in."""
    return NER_FEWSHOT_TEMPLATE.replace("{clinical note}", note_text)


def build_summary_prompt(
    input_notes: str, mode: str = "zero", entities: Sequence[str] | None = None
) -> str:
    """Summarization prompt; ``guided`` adds the entity-preservation paragraph.

    Guided mode lists the given mentions deduplicated in first-occurrence
    order, one per line. An empty entity list still renders the guided
    paragraph (degenerate but valid).
    """
    if mode not in ("zero", "guided"):
        raise ValueError(f"summary mode must be 'zero' or 'guided', got {mode!r}")
    parts = [input_notes, "", SUMMARY_BODY, ""]
    if mode == "guided":
        if entities is None:
            raise ValueError("guided mode requires an entities list")
        unique = list(dict.fromkeys(entities))
        parts.append(SUMMARY_GUIDED_PARAGRAPH)
        parts.append("\n".join(unique))
        parts.append("")
    parts.append("Medical summary:")
    return "\n".join(parts)


# --- tolerant NER-response parsing --------------------------------------------

_HIERARCHY_BY_TYPE = {h.value: h for h in Hierarchy}
_OBJECT_RE = re.compile(r"\{[^{}]*\}")


@dataclass
class NerParseResult:
    mentions: list[tuple[str, Hierarchy]]
    warnings: list[str]


def parse_ner_response(raw: str) -> NerParseResult:
    """Extract (mention, type) records from model output.

    Code fences are stripped, every {...} object literal is tried
    independently, records missing keys or carrying unknown types are
    skipped with a warning. Garbage input yields an empty list plus a
    diagnostic, never an exception.
    """
    text = re.sub(r"```[a-zA-Z]*", "", raw).replace("```", "")
    mentions: list[tuple[str, Hierarchy]] = []
    warnings: list[str] = []
    for match in _OBJECT_RE.finditer(text):
        try:
            record = json.loads(match.group(0))
        except json.JSONDecodeError:
            warnings.append(f"unparseable object: {match.group(0)[:60]!r}")
            continue
        if not isinstance(record, dict) or "mention" not in record or "type" not in record:
            warnings.append(f"record missing mention/type keys: {match.group(0)[:60]!r}")
            continue
        hierarchy = _HIERARCHY_BY_TYPE.get(str(record["type"]).strip().lower())
        if hierarchy is None:
            warnings.append(f"unknown entity type {record['type']!r}; record skipped")
            continue
        mentions.append((str(record["mention"]), hierarchy))
    if not mentions and not warnings:
        warnings.append("no mention records found in model output")
    return NerParseResult(mentions=mentions, warnings=warnings)


def locate_mentions(
    note_text: str, mentions: Sequence[tuple[str, Hierarchy]]
) -> tuple[list[tuple[int, int, Hierarchy]], list[str]]:
    """Recover character offsets by exact search in the source note.

    Duplicate mention texts map to successive occurrences. Mentions not
    found verbatim are reported, never given fabricated offsets.
    """
    spans: list[tuple[int, int, Hierarchy]] = []
    unlocatable: list[str] = []
    cursor: dict[str, int] = {}
    for mention, hierarchy in mentions:
        start = note_text.find(mention, cursor.get(mention, 0))
        if start < 0:
            unlocatable.append(mention)
            continue
        spans.append((start, start + len(mention), hierarchy))
        cursor[mention] = start + 1
    return spans, unlocatable


# --- batch execution -----------------------------------------------------------

@dataclass(frozen=True)
class LlmClientConfig:
    base_url: str
    model_name: str
    max_output_tokens: int = 1024
    temperature: float = 0.0
    timeout: float = 120.0
    parallelism: int = 1

    def __post_init__(self) -> None:
        if self.parallelism < 1:
            raise ValueError("parallelism must be >= 1")


@dataclass(frozen=True)
class BatchResult:
    prompt_id: str
    output: str | None
    error: str | None

    @property
    def ok(self) -> bool:
        return self.output is not None


def chat_completion(client: LlmClientConfig, prompt: str) -> str:
    try:
        resp = requests.post(
            f"{client.base_url.rstrip('/')}/chat",
            json={
                "model": client.model_name,
                "messages": [{"role": "user", "content": prompt}],
                "temperature": client.temperature,
                "max_tokens": client.max_output_tokens,
            },
            timeout=client.timeout,
        )
        resp.raise_for_status()
        payload = resp.json()
    except requests.RequestException as exc:
        raise LlmTransportError(str(exc))
    except ValueError as exc:
        raise LlmTransportError(f"invalid JSON from chat service: {exc}")
    if not isinstance(payload, dict) or not isinstance(payload.get("content"), str):
        raise LlmTransportError("chat service response missing 'content'")
    return payload["content"]


def _load_checkpoint(path: Path) -> dict[str, str]:
    """Completed prompt_id -> output. The latest ok record per id wins."""
    completed: dict[str, str] = {}
    if not path.exists():
        return completed
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            record = json.loads(line)
            if record.get("status") == "ok":
                completed[record["prompt_id"]] = record.get("output", "")
    return completed


def run_batch(
    prompts: Sequence[tuple[str, str]],
    client: LlmClientConfig,
    checkpoint_path: str | Path | None = None,
) -> list[BatchResult]:
    """Send prompts through the chat contract with bounded parallelism.

    Results align 1:1 with the input order. Failures are recorded per item,
    never fatal. With a checkpoint file, completed ids are skipped on rerun
    and their recorded outputs returned; the completed set only grows.
    """
    completed: dict[str, str] = {}
    checkpoint = None
    if checkpoint_path is not None:
        checkpoint = Path(checkpoint_path)
        completed = _load_checkpoint(checkpoint)

    todo = [(pid, prompt) for pid, prompt in prompts if pid not in completed]

    def send(item: tuple[str, str]) -> BatchResult:
        pid, prompt = item
        try:
            return BatchResult(prompt_id=pid, output=chat_completion(client, prompt), error=None)
        except LlmTransportError as exc:
            return BatchResult(prompt_id=pid, output=None, error=str(exc))

    if client.parallelism == 1 or len(todo) <= 1:
        fresh = [send(item) for item in todo]
    else:
        with ThreadPoolExecutor(max_workers=client.parallelism) as pool:
            fresh = list(pool.map(send, todo))

    if checkpoint is not None and fresh:
        with open(checkpoint, "a", encoding="utf-8") as fh:
            for result in fresh:
                record = {"prompt_id": result.prompt_id, "status": "ok" if result.ok else "fail"}
                if result.ok:
                    record["output"] = result.output
                fh.write(json.dumps(record, ensure_ascii=False) + "\n")

    fresh_by_id = {r.prompt_id: r for r in fresh}
    results = []
    for pid, _ in prompts:
        if pid in fresh_by_id:
            results.append(fresh_by_id[pid])
        elif pid in completed:
            results.append(BatchResult(prompt_id=pid, output=completed[pid], error=None))
        else:  # duplicate id already answered this run
            results.append(fresh_by_id[pid])
    return results


# --- translation bootstrapping ---------------------------------------------------

def build_translation_batch(
    graph: ConceptGraph, target_language: str, languages: Sequence[str] | None = None
) -> list[tuple[str, str, str]]:
    """(prompt_id, prompt, concept_id) for every synonym passing the filter.

    prompt_id encodes the concept and synonym ordinal so translated rows
    can be merged back into a release.
    """
    batch = []
    for concept_id in sorted(graph.concepts):
        concept = graph.concepts[concept_id]
        for ordinal, (lang, term) in enumerate(concept.synonyms):
            if languages and lang not in languages:
                continue
            prompt = build_translation_prompt(graph, concept_id, term, target_language)
            batch.append((f"tr-{concept_id}-{ordinal}", prompt, concept_id))
    return batch


def clean_translation(output: str) -> str:
    """Trim whitespace and one layer of surrounding quotes; nothing else."""
    text = output.strip()
    for quotes in ('""', "''", "“”", "「」"):
        if len(text) >= 2 and text[0] == quotes[0] and text[-1] == quotes[1]:
            text = text[1:-1].strip()
            break
    return text


def translations_to_description_rows(
    results: Sequence[BatchResult], lang: str
) -> list[str]:
    """Successful translations as descriptions.tsv rows ready to merge."""
    rows = []
    for result in results:
        if not result.ok or not result.prompt_id.startswith("tr-"):
            continue
        _, concept_id, ordinal = result.prompt_id.split("-", 2)
        term = clean_translation(result.output or "")
        if not term:
            continue
        rows.append(f"{result.prompt_id}\t{concept_id}\t{lang}\tSYN\t{term}")
    return rows


# --- summary evaluation -----------------------------------------------------------

@dataclass
class SummaryEvalReport:
    reports: list[metrics.CosineReport]
    lengths: dict[str, float]

    def render(self) -> str:
        return metrics.render_cosine_reports(self.reports, self.lengths)


#: Column order mirrors the summary-evaluation matrix: the raw input and the
#: human summary each compared against the later groups.
SUMMARY_PAIRS = [
    ("raw", "human"),
    ("raw", "llm"),
    ("raw", "medct"),
    ("human", "llm"),
    ("human", "medct"),
]


def evaluate_summary_sets(
    raw: Sequence[str],
    human: Sequence[str],
    llm: Sequence[str],
    medct: Sequence[str],
    embedders: Sequence[EmbedderConfig],
) -> SummaryEvalReport:
    """Mean pairwise cosine per embedder plus mean character lengths."""
    groups: Mapping[str, Sequence[str]] = {
        "raw": raw, "human": human, "llm": llm, "medct": medct,
    }
    sizes = {len(g) for g in groups.values()}
    if len(sizes) > 1:
        raise ValueError(f"summary groups differ in length: { {k: len(v) for k, v in groups.items()} }")
    reports = [metrics.cosine_report(groups, emb, pairs=SUMMARY_PAIRS) for emb in embedders]
    lengths = {
        label: (sum(len(t) for t in texts) / len(texts) if texts else 0.0)
        for label, texts in groups.items()
    }
    return SummaryEvalReport(reports=reports, lengths=lengths)
