"""HTTP facade exposing linking, search, and concept lookup.

Endpoints (all JSON, UTF-8):

    GET  /healthz                         -> 200 "ok"
    POST /api/link      {"text": ...}     -> {"entities": [...]}
    GET  /api/search?q=&mode=&top_n=      -> {"results": [...], "query_concepts": [...]}
    GET  /api/concepts/{id}               -> concept record or 404
    POST /admin/reload                    -> rebuilds the snapshot from config

Handlers only read an immutable snapshot; /admin/reload builds a fresh one
and swaps it atomically, so in-flight requests keep the snapshot they
started with. Configuration is a line-oriented key=value file pointed at
by --config or the MEDCT_CONFIG environment variable.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from urllib.parse import parse_qs, urlparse

from . import linker, retrieval, terminology
from .embedding import EmbedderConfig
from .errors import EmbeddingTransportError, MedctError

SNIPPET_LENGTH = 200


@dataclass
class ServiceConfig:
    listen: str = "127.0.0.1:8642"
    concepts: str = ""
    descriptions: str = ""
    relationships: str = ""
    concept_index: str = ""
    static_dictionary: str = ""
    corpus: str = ""
    default_mode: str = "concept_filter"
    w_c: float = 10.0
    top_n: int = 10
    embedder_kind: str = "builtin"
    embedder_dim: int = 512
    embedder_url: str = ""
    languages: str = ""
    cors_origin: str = "*"

    @classmethod
    def parse(cls, path: str | Path) -> "ServiceConfig":
        config = cls()
        with open(path, encoding="utf-8") as fh:
            for lineno, raw in enumerate(fh, start=1):
                line = raw.strip()
                if not line or line.startswith("#"):
                    continue
                if "=" not in line:
                    raise MedctError(f"{path}:{lineno}: expected key=value, got {line!r}")
                key, value = line.split("=", 1)
                key = key.strip()
                value = value.strip()
                if not hasattr(config, key):
                    raise MedctError(f"{path}:{lineno}: unknown config key {key!r}")
                current = getattr(config, key)
                if isinstance(current, bool):
                    setattr(config, key, value.lower() in ("1", "true", "yes"))
                elif isinstance(current, int):
                    setattr(config, key, int(value))
                elif isinstance(current, float):
                    setattr(config, key, float(value))
                else:
                    setattr(config, key, value)
        return config

    def embedder(self) -> EmbedderConfig:
        return EmbedderConfig(
            kind=self.embedder_kind,
            dim=self.embedder_dim,
            remote_url=self.embedder_url or None,
        )

    def language_filter(self) -> list[str] | None:
        if not self.languages:
            return None
        return [lang.strip() for lang in self.languages.split(",") if lang.strip()]


@dataclass
class Snapshot:
    """Everything a request handler may read, built once and never mutated."""

    graph: terminology.ConceptGraph
    pipeline: linker.MedLinkPipeline
    search_index: retrieval.SearchIndex | None = None
    default_mode: str = "concept_filter"
    w_c: float = 10.0
    top_n: int = 10


def build_snapshot(config: ServiceConfig) -> Snapshot:
    """Load release, concept index, dictionary, and corpus per config."""
    graph = terminology.parse_release(config.concepts, config.descriptions, config.relationships)
    embedder = config.embedder()
    if config.concept_index:
        index = linker.load_concept_index(config.concept_index)
    else:
        index = linker.build_concept_index(graph, embedder, config.language_filter())
    dictionary = None
    if config.static_dictionary:
        dictionary = linker.StaticDictionary.load(config.static_dictionary)
    pipeline = linker.MedLinkPipeline(
        graph, index, embedder, dictionary, languages=config.language_filter()
    )
    search_index = None
    if config.corpus:
        docs = retrieval.load_corpus(config.corpus)
        if any(not doc.concept_ids for doc in docs):
            docs = retrieval.tag_corpus(docs, pipeline).docs
        search_index = retrieval.index_documents(docs)
    return Snapshot(
        graph=graph,
        pipeline=pipeline,
        search_index=search_index,
        default_mode=config.default_mode,
        w_c=config.w_c,
        top_n=config.top_n,
    )


@dataclass
class MedctService:
    config: ServiceConfig
    snapshot: Snapshot
    _reload_lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    @classmethod
    def from_config(cls, config: ServiceConfig) -> "MedctService":
        return cls(config=config, snapshot=build_snapshot(config))

    def reload(self) -> None:
        with self._reload_lock:
            self.snapshot = build_snapshot(self.config)

    # --- handlers, framework-free for direct testing ---

    def handle_link(self, body: dict) -> tuple[int, dict]:
        if "text" not in body:
            return 400, {"error": "missing 'text'"}
        snapshot = self.snapshot
        try:
            entities = snapshot.pipeline.link_text(str(body["text"]))
        except EmbeddingTransportError as exc:
            return 503, {"error": f"embedder unavailable: {exc}"}
        return 200, {
            "entities": [
                {
                    "start": e.start,
                    "end": e.end,
                    "hierarchy": e.hierarchy.value if e.hierarchy else None,
                    "candidates": [
                        {"concept_id": cid, "score": score} for cid, score in e.candidates
                    ],
                    "source": e.source,
                }
                for e in sorted(entities, key=lambda e: (e.start, e.end))
            ]
        }

    def handle_search(self, params: dict) -> tuple[int, dict]:
        q = params.get("q", "")
        if not q:
            return 400, {"error": "missing or empty 'q'"}
        snapshot = self.snapshot
        if snapshot.search_index is None:
            return 400, {"error": "no corpus indexed"}
        mode = params.get("mode") or snapshot.default_mode
        if mode not in retrieval.SEARCH_MODES:
            return 400, {"error": f"unknown mode {mode!r}"}
        try:
            top_n = int(params.get("top_n") or snapshot.top_n)
        except ValueError:
            return 400, {"error": "top_n must be an integer"}
        try:
            entities = snapshot.pipeline.link_text(q)
        except EmbeddingTransportError as exc:
            return 503, {"error": f"embedder unavailable: {exc}"}
        query_concepts = [
            {
                "start": e.start,
                "end": e.end,
                "mention": q[e.start : e.end],
                "concept_id": e.candidates[0][0],
                "hierarchy": e.hierarchy.value if e.hierarchy else None,
            }
            for e in entities
            if e.candidates
        ]
        annotated = retrieval.AnnotatedQuery(
            text=q,
            terms=tuple(retrieval.tokenize_terms(q)),
            concept_ids=frozenset(c["concept_id"] for c in query_concepts),
        )
        results = retrieval.search(
            snapshot.search_index, annotated, mode=mode, top_n=top_n, w_c=snapshot.w_c
        )
        return 200, {
            "results": [
                {
                    "note_id": r.note_id,
                    "score": r.score,
                    "matched_concepts": list(r.matched_concepts),
                    "snippet": _snippet(snapshot.search_index, r.note_id, annotated.terms),
                }
                for r in results
            ],
            "query_concepts": query_concepts,
        }

    def handle_concept(self, concept_id: str) -> tuple[int, dict]:
        snapshot = self.snapshot
        concept = snapshot.graph.get_concept(concept_id)
        if concept is None:
            return 404, {"error": f"unknown concept id: {concept_id}"}
        return 200, {
            "concept_id": concept.id,
            "hierarchy": concept.hierarchy.value,
            "fsn": concept.fsn,
            "synonyms": [{"lang": lang, "term": term} for lang, term in concept.synonyms],
            "neighbors": {
                direction: [
                    {
                        "type_id": rel.type_id,
                        "concept_id": other.id,
                        "fsn": other.fsn,
                        "hierarchy": other.hierarchy.value,
                    }
                    for rel, other in snapshot.graph.neighbors(concept_id, direction)
                ]
                for direction in ("out", "in")
            },
        }


def _snippet(index: retrieval.SearchIndex, note_id: str, terms: tuple[str, ...]) -> str:
    """First 200 characters of the field with the most query-term hits."""
    fields = index.doc_fields.get(note_id, {})
    if not fields:
        return ""
    best_name = None
    best_hits = -1
    for name in sorted(fields):
        hits = sum(
            index.postings.get(term, {}).get(note_id, {}).get(name, 0) for term in set(terms)
        )
        if hits > best_hits:
            best_name, best_hits = name, hits
    return fields[best_name][:SNIPPET_LENGTH]


class _Handler(BaseHTTPRequestHandler):
    service: MedctService  # set by make_server

    def _send(self, status: int, payload: dict | str) -> None:
        if isinstance(payload, str):
            body = payload.encode("utf-8")
            content_type = "text/plain; charset=utf-8"
        else:
            body = json.dumps(payload, ensure_ascii=False).encode("utf-8")
            content_type = "application/json; charset=utf-8"
        self.send_response(status)
        self.send_header("Content-Type", content_type)
        self.send_header("Content-Length", str(len(body)))
        origin = self.service.config.cors_origin
        if origin:
            self.send_header("Access-Control-Allow-Origin", origin)
            self.send_header("Access-Control-Allow-Headers", "Content-Type")
            self.send_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS")
        self.end_headers()
        self.wfile.write(body)

    def log_message(self, format: str, *args) -> None:  # noqa: A002 - stdlib signature
        pass  # tests and CLI runs stay quiet; use an HTTP-level proxy for access logs

    def do_OPTIONS(self) -> None:  # CORS preflight
        self._send(204, "")

    def do_GET(self) -> None:
        url = urlparse(self.path)
        if url.path == "/healthz":
            self._send(200, "ok")
        elif url.path == "/api/search":
            params = {k: v[0] for k, v in parse_qs(url.query).items()}
            status, payload = self.service.handle_search(params)
            self._send(status, payload)
        elif url.path.startswith("/api/concepts/"):
            concept_id = url.path[len("/api/concepts/") :]
            status, payload = self.service.handle_concept(concept_id)
            self._send(status, payload)
        else:
            self._send(404, {"error": "not found"})

    def do_POST(self) -> None:
        url = urlparse(self.path)
        if url.path == "/api/link":
            length = int(self.headers.get("Content-Length") or 0)
            raw = self.rfile.read(length) if length else b""
            try:
                body = json.loads(raw.decode("utf-8")) if raw else {}
            except (json.JSONDecodeError, UnicodeDecodeError):
                self._send(400, {"error": "body must be valid JSON"})
                return
            status, payload = self.service.handle_link(body if isinstance(body, dict) else {})
            self._send(status, payload)
        elif url.path == "/admin/reload":
            try:
                self.service.reload()
            except MedctError as exc:
                self._send(500, {"error": str(exc)})
                return
            self._send(200, {"status": "reloaded"})
        else:
            self._send(404, {"error": "not found"})


def make_server(service: MedctService, host: str | None = None, port: int | None = None) -> ThreadingHTTPServer:
    """Bind a threading HTTP server; port 0 picks an ephemeral port."""
    if host is None or port is None:
        cfg_host, _, cfg_port = service.config.listen.partition(":")
        host = host or cfg_host or "127.0.0.1"
        port = port if port is not None else int(cfg_port or 8642)
    handler = type("BoundHandler", (_Handler,), {"service": service})
    return ThreadingHTTPServer((host, port), handler)


def serve_forever(service: MedctService) -> None:
    server = make_server(service)
    host, port = server.server_address[:2]
    print(f"medct service listening on http://{host}:{port}")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
