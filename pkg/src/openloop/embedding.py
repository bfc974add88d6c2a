"""Embedding backends and cosine similarity.

Two backends share one contract: ``embed(text)`` returns a unit-norm
float64 vector of the configured dimension. The deterministic mock is
the default and what every offline test uses; the remote backend calls
an HTTP JSON embeddings endpoint and caches replies on disk so reruns
and resumed runs never repeat a request.
"""
from __future__ import annotations

import hashlib
import json
import threading
import time
from pathlib import Path
from typing import Callable, Optional

import numpy as np

UNIT_NORM_TOL = 1e-6


class EmbeddingError(Exception):
    pass


class RemoteEmbeddingError(EmbeddingError):
    """Transport or HTTP failure; carries how many attempts were made."""

    def __init__(self, message: str, attempts: int):
        super().__init__(f"{message} (after {attempts} attempt(s))")
        self.attempts = attempts


def as_unit_vector(values, dim: Optional[int] = None) -> np.ndarray:
    vec = np.asarray(values, dtype=np.float64)
    if vec.ndim != 1:
        raise EmbeddingError(f"expected 1-D vector, got shape {vec.shape}")
    if dim is not None and vec.shape[0] != dim:
        raise EmbeddingError(f"dimension mismatch: {vec.shape[0]} != {dim}")
    if not np.all(np.isfinite(vec)):
        raise EmbeddingError("vector has non-finite entries")
    return vec


def normalize(vec: np.ndarray) -> np.ndarray:
    norm = float(np.linalg.norm(vec))
    if norm == 0.0:
        raise EmbeddingError("cannot normalize the zero vector")
    return vec / norm


def cosine(a, b) -> float:
    """Cosine similarity, clamped to [-1, 1] against rounding."""
    a = as_unit_vector(a)
    b = as_unit_vector(b, a.shape[0])
    norm_a = float(np.linalg.norm(a))
    norm_b = float(np.linalg.norm(b))
    if norm_a == 0.0 or norm_b == 0.0:
        raise EmbeddingError("cosine is undefined for the zero vector")
    value = float(a @ b) / (norm_a * norm_b)
    return max(-1.0, min(1.0, value))


def _stable_seed(mock_seed: int, text: str) -> int:
    digest = hashlib.blake2b(
        text.encode("utf-8"), digest_size=8, key=str(mock_seed).encode("utf-8")
    ).digest()
    return int.from_bytes(digest, "big")


class MockEmbedder:
    """Deterministic offline embedder.

    The vector for a text is drawn from a Philox counter-based generator
    keyed by a 64-bit blake2b hash of (mock_seed, text), then normalized.
    Distinct texts land near-orthogonal in high dimension, which is all
    retrieval needs; identical texts are byte-identical across platforms.
    """

    kind = "mock"

    def __init__(self, dim: int = 256, mock_seed: int = 0):
        if dim < 1:
            raise EmbeddingError("dim must be positive")
        self.dim = dim
        self.mock_seed = mock_seed
        self.model_name = f"mock-{dim}"

    def embed(self, text: str) -> np.ndarray:
        if not text:
            raise EmbeddingError("cannot embed empty text")
        rng = np.random.Generator(np.random.Philox(key=_stable_seed(self.mock_seed, text)))
        return normalize(rng.standard_normal(self.dim))


class RemoteEmbedder:
    """HTTP JSON embeddings client with retries and a disk cache.

    POSTs {model, input} to ``base_url`` and expects the first embedding
    under data[0].embedding. Replies are cached by (model, sha256(text))
    under ``cache_dir``. ``transport`` is injectable for tests; the
    default uses requests.
    """

    kind = "remote"

    def __init__(
        self,
        dim: int,
        model_name: str,
        base_url: str,
        api_key: str = "",
        cache_dir: Optional[Path] = None,
        max_attempts: int = 3,
        timeout_s: float = 30.0,
        max_in_flight: int = 4,
        transport: Optional[Callable[[dict], dict]] = None,
        retry_wait_s: float = 0.5,
    ):
        self.dim = dim
        self.model_name = model_name
        self.base_url = base_url
        self.api_key = api_key
        self.cache_dir = Path(cache_dir) if cache_dir else None
        self.max_attempts = max(1, max_attempts)
        self.timeout_s = timeout_s
        self.retry_wait_s = retry_wait_s
        self._transport = transport or self._http_transport
        self._gate = threading.Semaphore(max(1, max_in_flight))

    def _http_transport(self, payload: dict) -> dict:
        import requests

        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        resp = requests.post(self.base_url, json=payload, headers=headers, timeout=self.timeout_s)
        resp.raise_for_status()
        return resp.json()

    def _cache_path(self, text: str) -> Optional[Path]:
        if self.cache_dir is None:
            return None
        digest = hashlib.sha256(text.encode("utf-8")).hexdigest()
        safe_model = self.model_name.replace("/", "_")
        return self.cache_dir / safe_model / f"{digest}.json"

    def embed(self, text: str) -> np.ndarray:
        if not text:
            raise EmbeddingError("cannot embed empty text")
        cache_path = self._cache_path(text)
        if cache_path is not None and cache_path.exists():
            values = json.loads(cache_path.read_text())
        else:
            values = self._fetch(text)
            if cache_path is not None:
                cache_path.parent.mkdir(parents=True, exist_ok=True)
                cache_path.write_text(json.dumps(values))
        vec = as_unit_vector(values, self.dim)
        return normalize(vec)

    def _fetch(self, text: str) -> list[float]:
        payload = {"model": self.model_name, "input": text}
        last_error = "unknown"
        for attempt in range(1, self.max_attempts + 1):
            with self._gate:
                try:
                    reply = self._transport(payload)
                    return [float(x) for x in reply["data"][0]["embedding"]]
                except Exception as exc:  # noqa: BLE001 - wrapped below
                    last_error = str(exc)
            if attempt < self.max_attempts:
                time.sleep(self.retry_wait_s * attempt)
        raise RemoteEmbeddingError(f"embedding request failed: {last_error}", self.max_attempts)
