"""Text embedding behind a uniform provider contract.

Two providers share one call surface:

* ``builtin`` — a deterministic hashed character n-gram embedder. No model,
  no network; exists so every downstream stage (concept index, linking,
  dense re-scoring) can be exercised hermetically.
* ``remote`` — an HTTP client for a real embedding service speaking
  ``POST {remote_url}/embed  {"texts": [...]} -> {"vectors": [[...], ...]}``.

Vectors are 1-D float64 numpy arrays of a fixed dimension per config.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import requests

from .errors import EmbeddingProtocolError, EmbeddingTransportError

#: Alias for readability: a 1-D float64 array of length ``dim``.
EmbeddingVector = np.ndarray

#: Environment variable overriding the remote service URL.
REMOTE_URL_ENV = "MEDCT_EMBED_URL"

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_U64 = 0xFFFFFFFFFFFFFFFF


def fnv1a_64(data: bytes) -> int:
    """64-bit FNV-1a hash."""
    h = _FNV_OFFSET
    for byte in data:
        h ^= byte
        h = (h * _FNV_PRIME) & _U64
    return h


@dataclass(frozen=True)
class EmbedderConfig:
    """Provider selection plus the knobs each provider needs.

    ``remote_url`` may be left unset when MEDCT_EMBED_URL is exported.
    """

    kind: str = "builtin"  # builtin | remote
    dim: int = 512
    remote_url: str | None = None
    ngram_sizes: tuple[int, ...] = (1, 2, 3)
    timeout: float = 30.0
    parallelism: int = 1
    batch_size: int = 64

    def __post_init__(self) -> None:
        if self.kind not in ("builtin", "remote"):
            raise ValueError(f"embedder kind must be builtin or remote, got {self.kind!r}")
        if self.dim <= 0:
            raise ValueError("dim must be positive")
        if self.parallelism < 1:
            raise ValueError("parallelism must be >= 1")

    def resolved_remote_url(self) -> str:
        url = os.environ.get(REMOTE_URL_ENV) or self.remote_url
        if not url:
            raise ValueError("remote embedder requires remote_url (or MEDCT_EMBED_URL)")
        return url.rstrip("/")

    def fingerprint(self) -> str:
        """Stable identifier of the embedding function this config denotes."""
        if self.kind == "builtin":
            ngrams = ",".join(str(n) for n in self.ngram_sizes)
            return f"builtin:dim={self.dim}:ngrams={ngrams}"
        return f"remote:dim={self.dim}:url={self.resolved_remote_url()}"


def config_from_fingerprint(fingerprint: str) -> EmbedderConfig:
    """Reconstruct the config a fingerprint denotes.

    Lets tools derive the right embedder from a persisted concept index
    instead of asking the user to repeat (and possibly mismatch) flags.
    """
    parts = fingerprint.split(":", 2)
    if len(parts) != 3 or not parts[1].startswith("dim="):
        raise ValueError(f"unrecognized embedder fingerprint: {fingerprint!r}")
    dim = int(parts[1][len("dim="):])
    if parts[0] == "builtin":
        if not parts[2].startswith("ngrams="):
            raise ValueError(f"unrecognized embedder fingerprint: {fingerprint!r}")
        sizes = tuple(int(n) for n in parts[2][len("ngrams="):].split(","))
        return EmbedderConfig(kind="builtin", dim=dim, ngram_sizes=sizes)
    if parts[0] == "remote":
        if not parts[2].startswith("url="):
            raise ValueError(f"unrecognized embedder fingerprint: {fingerprint!r}")
        return EmbedderConfig(kind="remote", dim=dim, remote_url=parts[2][len("url="):])
    raise ValueError(f"unrecognized embedder fingerprint: {fingerprint!r}")


def builtin_hash_embed(
    text: str, dim: int = 512, ngram_sizes: Sequence[int] = (1, 2, 3)
) -> EmbeddingVector:
    """Hashed character n-gram embedding.

    All n-grams over the code point sequence, for each n in ngram_sizes,
    are hashed with 64-bit FNV-1a over their UTF-8 bytes; each n-gram adds
    1 to bucket ``hash % dim``. The count vector is L2-normalized unless it
    is all zero (empty text), which embeds as the zero vector.
    """
    if dim <= 0:
        raise ValueError("dim must be positive")
    vec = np.zeros(dim, dtype=np.float64)
    for n in ngram_sizes:
        if n <= 0 or n > len(text):
            continue
        for i in range(len(text) - n + 1):
            bucket = fnv1a_64(text[i : i + n].encode("utf-8")) % dim
            vec[bucket] += 1.0
    norm = float(np.linalg.norm(vec))
    if norm > 0.0:
        vec /= norm
    return vec


def _post_embed(url: str, texts: list[str], dim: int, timeout: float) -> list[EmbeddingVector]:
    try:
        resp = requests.post(f"{url}/embed", json={"texts": texts}, timeout=timeout)
        resp.raise_for_status()
        payload = resp.json()
    except requests.RequestException as exc:
        raise EmbeddingTransportError(f"embedding service at {url} failed: {exc}")
    except ValueError as exc:
        raise EmbeddingProtocolError(f"embedding service returned invalid JSON: {exc}")
    vectors = payload.get("vectors") if isinstance(payload, dict) else None
    if not isinstance(vectors, list) or len(vectors) != len(texts):
        got = len(vectors) if isinstance(vectors, list) else "none"
        raise EmbeddingProtocolError(
            f"expected {len(texts)} vectors, got {got}"
        )
    out = []
    for row in vectors:
        arr = np.asarray(row, dtype=np.float64)
        if arr.ndim != 1 or arr.shape[0] != dim:
            raise EmbeddingProtocolError(
                f"expected vectors of dimension {dim}, got shape {arr.shape}"
            )
        if not np.all(np.isfinite(arr)):
            raise EmbeddingProtocolError("vector contains non-finite entries")
        out.append(arr)
    return out


def embed_texts(config: EmbedderConfig, texts: Sequence[str]) -> list[EmbeddingVector]:
    """Embed each text, in order. One vector of config.dim per input.

    The builtin provider is pure and deterministic. The remote provider
    chunks the inputs into batches and keeps up to config.parallelism
    requests in flight; transport and protocol failures raise.
    """
    texts = list(texts)
    if not texts:
        return []
    if config.kind == "builtin":
        return [builtin_hash_embed(t, config.dim, config.ngram_sizes) for t in texts]

    url = config.resolved_remote_url()
    batches = [texts[i : i + config.batch_size] for i in range(0, len(texts), config.batch_size)]
    if config.parallelism == 1 or len(batches) == 1:
        results = [_post_embed(url, b, config.dim, config.timeout) for b in batches]
    else:
        with ThreadPoolExecutor(max_workers=config.parallelism) as pool:
            results = list(
                pool.map(lambda b: _post_embed(url, b, config.dim, config.timeout), batches)
            )
    return [vec for batch in results for vec in batch]


def cosine(a: EmbeddingVector, b: EmbeddingVector) -> float:
    """Cosine similarity; 0.0 by convention when either vector has zero norm."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(np.dot(a, b) / (na * nb))
