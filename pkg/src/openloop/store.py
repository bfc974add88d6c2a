"""Task archive: owns every task record and answers similarity queries.

The archive is append-only. Records with status Seed, Learned, or Failed
form the retrieval pool used for in-context examples and warm starts;
Uninteresting and CodegenFailed records stay in the log (and in graph
exports) but are never retrieved. Pool sizes stay small (O(10^3)), so
similarity search is a brute-force cosine scan by contract.
"""
from __future__ import annotations

import random
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Optional

import numpy as np

from .embedding import UNIT_NORM_TOL, EmbeddingError, as_unit_vector


class Status(str, Enum):
    SEED = "Seed"
    LEARNED = "Learned"
    FAILED = "Failed"
    UNINTERESTING = "Uninteresting"
    CODEGEN_FAILED = "CodegenFailed"


# Statuses whose records join the retrieval pool.
POOL_STATUSES = frozenset({Status.SEED, Status.LEARNED, Status.FAILED})
# Statuses eligible as warm-start sources (seeds hold from-scratch policies).
WARM_STATUSES = frozenset({Status.SEED, Status.LEARNED})


class StoreError(Exception):
    """Invalid insertion or query against the task archive."""


class EmptyPoolError(StoreError):
    """Raised when an operation needs a non-empty retrieval pool."""


@dataclass(frozen=True)
class TaskRecord:
    """One archived task: description, environment code, and lineage."""

    id: int
    description: str
    env_code: str
    status: Status
    generation: int
    embedding: np.ndarray
    parent_ids: tuple[int, ...] = ()
    codegen_repairs_used: int = 0
    reflection_rounds_used: int = 0
    warm_start_from: Optional[int] = None
    moi_verdict: Optional[bool] = None
    policy_artifact: Optional[str] = None
    created_at: float = 0.0
    title: str = field(default="")

    def __post_init__(self):
        if not self.title:
            object.__setattr__(self, "title", first_line(self.description))
        object.__setattr__(self, "status", Status(self.status))
        emb = np.asarray(self.embedding, dtype=np.float64)
        emb.setflags(write=False)
        object.__setattr__(self, "embedding", emb)

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "title": self.title,
            "description": self.description,
            "env_code": self.env_code,
            "status": self.status.value,
            "generation": self.generation,
            "parent_ids": list(self.parent_ids),
            "codegen_repairs_used": self.codegen_repairs_used,
            "reflection_rounds_used": self.reflection_rounds_used,
            "warm_start_from": self.warm_start_from,
            "moi_verdict": self.moi_verdict,
            "policy_artifact": self.policy_artifact,
            "created_at": self.created_at,
            "embedding": [float(x) for x in self.embedding],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "TaskRecord":
        return cls(
            id=data["id"],
            description=data["description"],
            env_code=data["env_code"],
            status=Status(data["status"]),
            generation=data["generation"],
            embedding=np.asarray(data["embedding"], dtype=np.float64),
            parent_ids=tuple(data.get("parent_ids", ())),
            codegen_repairs_used=data.get("codegen_repairs_used", 0),
            reflection_rounds_used=data.get("reflection_rounds_used", 0),
            warm_start_from=data.get("warm_start_from"),
            moi_verdict=data.get("moi_verdict"),
            policy_artifact=data.get("policy_artifact"),
            created_at=data.get("created_at", 0.0),
            title=data.get("title", ""),
        )


def first_line(text: str) -> str:
    for line in text.splitlines():
        if line.strip():
            return line.strip()
    return ""


class TaskStore:
    """In-memory archive with brute-force cosine retrieval.

    Single-writer, multi-reader: only the loop engine inserts; queries
    never mutate, so concurrent reads are safe once insertion has
    returned.
    """

    def __init__(self, dim: int):
        if dim < 1:
            raise StoreError("embedding dim must be positive")
        self.dim = dim
        self._records: dict[int, TaskRecord] = {}
        self._order: list[int] = []
        self._pool_ids: list[int] = []

    def __len__(self) -> int:
        return len(self._order)

    def __contains__(self, task_id: int) -> bool:
        return task_id in self._records

    @property
    def pool_size(self) -> int:
        return len(self._pool_ids)

    def get(self, task_id: int) -> TaskRecord:
        try:
            return self._records[task_id]
        except KeyError:
            raise StoreError(f"unknown task id {task_id}") from None

    def records(self) -> list[TaskRecord]:
        return [self._records[i] for i in self._order]

    def pool(self) -> list[TaskRecord]:
        return [self._records[i] for i in self._pool_ids]

    def next_id(self) -> int:
        return self._order[-1] + 1 if self._order else 0

    def insert(self, record: TaskRecord) -> int:
        if record.id in self._records:
            raise StoreError(f"duplicate task id {record.id}")
        if self._order and record.id <= self._order[-1]:
            raise StoreError(
                f"task id {record.id} not increasing (last is {self._order[-1]})"
            )
        if record.id < 0:
            raise StoreError("task id must be non-negative")
        if record.generation < 0:
            raise StoreError("generation must be >= 0")
        for pid in record.parent_ids:
            if pid not in self._records:
                raise StoreError(f"parent id {pid} does not exist")
            if pid >= record.id:
                raise StoreError(f"parent id {pid} must be smaller than {record.id}")
        emb = record.embedding
        if emb.ndim != 1 or emb.shape[0] != self.dim:
            raise StoreError(
                f"embedding dim {emb.shape} does not match store dim {self.dim}"
            )
        if not np.all(np.isfinite(emb)):
            raise StoreError("embedding has non-finite entries")
        norm = float(np.linalg.norm(emb))
        if abs(norm - 1.0) > UNIT_NORM_TOL:
            raise StoreError(f"embedding norm {norm} is not 1.0")

        self._records[record.id] = record
        self._order.append(record.id)
        if record.status in POOL_STATUSES:
            self._pool_ids.append(record.id)
        return record.id

    def sample_anchor(self, rng_seed: int) -> TaskRecord:
        """Uniform draw from the retrieval pool, deterministic per seed."""
        if not self._pool_ids:
            raise EmptyPoolError("retrieval pool is empty")
        rng = random.Random(rng_seed)
        return self._records[self._pool_ids[rng.randrange(len(self._pool_ids))]]

    def retrieve_similar(
        self,
        query: np.ndarray,
        k: int,
        statuses: Iterable[Status] = POOL_STATUSES,
    ) -> list[TaskRecord]:
        """Top-k pool records by cosine similarity, ties broken by id.

        Matches a brute-force sort oracle exactly: candidates are sorted
        by (-similarity, id), so equal similarities favor older records.
        """
        if k < 1:
            raise StoreError("k must be >= 1")
        query = as_unit_vector(query, self.dim)
        wanted = {Status(s) for s in statuses}
        candidates = [
            self._records[i] for i in self._pool_ids
            if self._records[i].status in wanted
        ]
        if not candidates:
            return []
        matrix = np.stack([r.embedding for r in candidates])
        sims = matrix @ query
        order = sorted(range(len(candidates)), key=lambda j: (-sims[j], candidates[j].id))
        return [candidates[j] for j in order[:k]]

    def nearest_learned(self, query: np.ndarray) -> Optional[int]:
        """Id of the closest warm-start candidate (Learned or Seed), if any."""
        try:
            query = as_unit_vector(query, self.dim)
        except EmbeddingError as exc:
            raise StoreError(str(exc)) from exc
        best_id = None
        best_sim = -np.inf
        for i in self._pool_ids:
            record = self._records[i]
            if record.status not in WARM_STATUSES:
                continue
            sim = float(record.embedding @ query)
            if sim > best_sim:
                best_sim, best_id = sim, record.id
        return best_id

    def by_status(self, *statuses: Status) -> list[TaskRecord]:
        wanted = set(statuses)
        return [self._records[i] for i in self._order if self._records[i].status in wanted]


def embedding_text(description: str, env_code: str) -> str:
    """Text fed to the embedder: description and code, one blank line apart."""
    return f"{description.rstrip()}\n\n{env_code}" if env_code else description.rstrip()
