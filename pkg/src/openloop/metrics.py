"""Progress and diversity measures computed from run logs.

All functions are pure over immutable inputs. Progress series count
attempted tasks (those that reached the learner) that were eventually
solved; diversity projects task embeddings to 2-D with PCA fitted across
every compared archive and counts occupied bins on a uniform grid.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from . import events as ev
from .embedding import cosine
from .store import Status, TaskRecord

ATTEMPTED_STATUSES = (Status.LEARNED, Status.FAILED)

# Grid sizes reported for coverage studies.
DEFAULT_COVERAGE_LEVELS = (10, 20, 30, 40, 50)


class MetricsError(Exception):
    pass


@dataclass(frozen=True)
class TraceEntry:
    iteration: int
    task_id: int
    status: Status
    moi_verdict: Optional[bool]
    eventually_solved: bool

    @property
    def attempted(self) -> bool:
        return self.status in ATTEMPTED_STATUSES


def validate_trace(trace: Sequence[TraceEntry]) -> None:
    last = 0
    for entry in trace:
        if entry.iteration <= last:
            raise MetricsError(f"iterations must strictly increase (saw {entry.iteration})")
        last = entry.iteration
        if entry.eventually_solved and entry.status is not Status.LEARNED:
            raise MetricsError(f"task {entry.task_id}: solved flag on a non-learned task")


def trace_from_events(events: Iterable[dict]) -> list[TraceEntry]:
    trace = []
    for event in events:
        if event["kind"] != ev.TASK_ARCHIVED:
            continue
        record = event["payload"]["record"]
        if record["generation"] == 0:
            continue  # seeds are not generated tasks
        status = Status(record["status"])
        trace.append(TraceEntry(
            iteration=event["payload"]["iteration"],
            task_id=record["id"],
            status=status,
            moi_verdict=record.get("moi_verdict"),
            eventually_solved=status is Status.LEARNED,
        ))
    return trace


def records_from_events(events: Iterable[dict]) -> list[TaskRecord]:
    return [
        TaskRecord.from_dict(event["payload"]["record"])
        for event in events
        if event["kind"] == ev.TASK_ARCHIVED
    ]


def annecs(trace: Sequence[TraceEntry]) -> list[int]:
    """Cumulative count of attempted-and-eventually-solved tasks."""
    validate_trace(trace)
    series = []
    total = 0
    for entry in trace:
        if entry.attempted and entry.eventually_solved:
            total += 1
        series.append(total)
    return series


def annecs_omni(trace: Sequence[TraceEntry],
                verdicts: Optional[dict[int, bool]] = None) -> list[int]:
    """Like annecs, but a counted task must also have been judged
    interesting. Verdicts default to the ones stored at gate time; pass
    a mapping (e.g. from requery_verdicts) to override them. Attempted
    tasks without any verdict are an error."""
    validate_trace(trace)
    series = []
    total = 0
    for entry in trace:
        if entry.attempted:
            verdict = entry.moi_verdict
            if verdicts is not None and entry.task_id in verdicts:
                verdict = verdicts[entry.task_id]
            if verdict is None:
                raise MetricsError(f"task {entry.task_id}: attempted without a gate verdict")
            if verdict and entry.eventually_solved:
                total += 1
        series.append(total)
    return series


def requery_verdicts(records: Sequence[TaskRecord], gateway, *, robot_desc: str,
                     model_name: str, temperature: float = 0.0,
                     moi_similar: int = 10) -> dict[int, bool]:
    """Retrospective interestingness: re-judge every attempted task against
    the archive as it stood when the task was created.

    Slower and backend-dependent; the stored gate verdicts are the
    default for the progress series, this exists for fidelity studies.
    """
    from .gateway import MOI_QUESTION_HEADER, parse_yes_no
    from .prompts import render_moi

    verdicts: dict[int, bool] = {}
    ordered = sorted(records, key=lambda r: r.id)
    for idx, record in enumerate(ordered):
        if record.status not in ATTEMPTED_STATUSES:
            continue
        prior = [
            r for r in ordered[:idx]
            if r.status in (Status.SEED, Status.LEARNED, Status.FAILED)
        ]
        prior.sort(key=lambda r: (-cosine(r.embedding, record.embedding), r.id))
        bundle = render_moi(
            [(r.description, r.env_code) for r in prior[:moi_similar]],
            (record.description, record.env_code),
            robot_desc=robot_desc,
            model_name=model_name,
            temperature=temperature,
        )
        response = gateway.complete(bundle)
        try:
            verdicts[record.id] = parse_yes_no(response.raw_text, MOI_QUESTION_HEADER)
        except Exception as exc:
            raise MetricsError(f"task {record.id}: unreadable requery verdict: {exc}") from exc
    return verdicts


def percent_learned(trace: Sequence[TraceEntry]) -> list[float]:
    """Learned-so-far over attempted-so-far, one value per attempted task."""
    validate_trace(trace)
    series = []
    attempted = 0
    learned = 0
    for entry in trace:
        if not entry.attempted:
            continue
        attempted += 1
        if entry.status is Status.LEARNED:
            learned += 1
        series.append(learned / attempted)
    return series


@dataclass(frozen=True)
class Pca2d:
    coords: np.ndarray  # (n, 2)
    components: np.ndarray  # (2, d)
    mean: np.ndarray  # (d,)
    degenerate: bool

    def project(self, vectors) -> np.ndarray:
        x = np.asarray(vectors, dtype=np.float64)
        out = (x - self.mean) @ self.components.T
        if self.degenerate:
            out[:, 1] = 0.0
        return out


def pca_2d(embeddings) -> Pca2d:
    """Project onto the top two principal directions.

    Deterministic sign convention: each component's largest-magnitude
    entry is made positive. Rank-deficient inputs flatten the second
    coordinate to zero and set the degenerate flag.
    """
    x = np.asarray(embeddings, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 2:
        raise MetricsError("need at least two vectors")
    if x.shape[1] < 2:
        raise MetricsError("need at least two dimensions")
    mean = x.mean(axis=0)
    centered = x - mean
    cov = (centered.T @ centered) / (x.shape[0] - 1)
    eigenvalues, eigenvectors = np.linalg.eigh(cov)
    order = np.argsort(eigenvalues)[::-1][:2]
    values = eigenvalues[order]
    components = eigenvectors[:, order].T.copy()
    for row in components:
        pivot = np.argmax(np.abs(row))
        if row[pivot] < 0:
            row *= -1.0
    tol = max(values[0], 0.0) * 1e-12
    degenerate = bool(values[1] <= tol)
    coords = centered @ components.T
    if degenerate:
        coords[:, 1] = 0.0
    return Pca2d(coords=coords, components=components, mean=mean, degenerate=degenerate)


def grid_cell(x: float, y: float, bounds: tuple[float, float, float, float],
              level: int) -> tuple[int, int]:
    """Bin a point onto a level x level grid; the max edge joins the last bin."""
    min_x, max_x, min_y, max_y = bounds

    def axis(value, low, high):
        if high <= low:
            return 0
        idx = int(np.floor((value - low) / (high - low) * level))
        return min(max(idx, 0), level - 1)

    return axis(y, min_y, max_y), axis(x, min_x, max_x)


def cell_coverage(archives: Sequence[Sequence], level: int) -> list[int]:
    """Occupied-bin count per archive on a shared grid.

    The 2-D projection and the grid bounds are fitted jointly over the
    union of all archives, so counts are comparable across them.
    """
    if level < 1:
        raise MetricsError("level must be >= 1")
    sizes = [len(a) for a in archives]
    union = [np.asarray(v, dtype=np.float64) for a in archives for v in a]
    if not union:
        return [0] * len(archives)
    if len(union) == 1:
        return [1 if n else 0 for n in sizes]
    coords = pca_2d(np.stack(union)).coords
    bounds = (
        float(coords[:, 0].min()), float(coords[:, 0].max()),
        float(coords[:, 1].min()), float(coords[:, 1].max()),
    )
    counts = []
    offset = 0
    for size in sizes:
        cells = {
            grid_cell(float(x), float(y), bounds, level)
            for x, y in coords[offset:offset + size]
        }
        counts.append(len(cells))
        offset += size
    return counts


def export_graph(records: Sequence[TaskRecord], closest_parent_only: bool = True) -> dict:
    """Lineage graph document: every archived task is a node; edges run
    parent -> child. With closest_parent_only, each child keeps only the
    in-context parent nearest to it in embedding space."""
    by_id = {r.id: r for r in records}
    nodes = [
        {
            "id": r.id,
            "title": r.title,
            "status": r.status.value,
            "generation": r.generation,
            "embedding": [float(v) for v in r.embedding],
        }
        for r in records
    ]
    edges = []
    for child in records:
        parents = [pid for pid in child.parent_ids if pid in by_id]
        if not parents:
            continue
        if closest_parent_only:
            # max similarity; exact ties go to the smaller parent id
            best = max(parents, key=lambda pid: (cosine(by_id[pid].embedding, child.embedding), -pid))
            parents = [best]
        for pid in parents:
            edges.append({
                "source": pid,
                "target": child.id,
                "similarity": cosine(by_id[pid].embedding, child.embedding),
            })
    return {"closest_parent_only": closest_parent_only, "nodes": nodes, "edges": edges}


# ----------------------------------------------------------------------
# file output

def write_series_csv(path: Path, rows: Iterable[tuple], header: tuple[str, ...]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def write_graph_json(path: Path, graph: dict) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(graph, indent=2), encoding="utf-8")
