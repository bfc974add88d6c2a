"""Run directory layout.

Self-describing tree: a config snapshot, the event log, one directory
per task (description, code, metadata), and output subtrees for metrics
and learner artifacts. Task files are a convenience cache; the event log
is authoritative and the cache is rebuilt from it on resume.
"""
from __future__ import annotations

import json
from pathlib import Path

from .config import RunConfig, load_snapshot, save_snapshot
from .store import TaskRecord, TaskStore


class RunDirError(Exception):
    pass


class RunDir:
    def __init__(self, root: Path):
        self.root = Path(root)

    @property
    def config_path(self) -> Path:
        return self.root / "config.yaml"

    @property
    def events_path(self) -> Path:
        return self.root / "events.jsonl"

    @property
    def tasks_dir(self) -> Path:
        return self.root / "tasks"

    @property
    def metrics_dir(self) -> Path:
        return self.root / "metrics"

    @property
    def artifacts_dir(self) -> Path:
        return self.root / "artifacts"

    @property
    def cache_dir(self) -> Path:
        return self.root / "cache"

    @classmethod
    def create(cls, root, config: RunConfig) -> "RunDir":
        run_dir = cls(Path(root))
        if run_dir.events_path.exists():
            raise RunDirError(f"{run_dir.events_path} already exists; use resume")
        for sub in (run_dir.tasks_dir, run_dir.metrics_dir, run_dir.artifacts_dir,
                    run_dir.cache_dir):
            sub.mkdir(parents=True, exist_ok=True)
        save_snapshot(config, run_dir.config_path)
        return run_dir

    @classmethod
    def open(cls, root) -> "RunDir":
        run_dir = cls(Path(root))
        if not run_dir.config_path.exists():
            raise RunDirError(f"{root} is not a run directory (no config.yaml)")
        if not run_dir.events_path.exists():
            raise RunDirError(f"{root} has no event log to resume from")
        return run_dir

    def load_config(self) -> RunConfig:
        return load_snapshot(self.config_path)

    def write_task(self, record: TaskRecord) -> None:
        task_dir = self.tasks_dir / str(record.id)
        task_dir.mkdir(parents=True, exist_ok=True)
        (task_dir / "description.txt").write_text(record.description, encoding="utf-8")
        (task_dir / "env.code").write_text(record.env_code, encoding="utf-8")
        meta = record.to_dict()
        del meta["description"], meta["env_code"]
        (task_dir / "meta.json").write_text(
            json.dumps(meta, indent=2, sort_keys=True), encoding="utf-8"
        )

    def write_index(self, store: TaskStore) -> None:
        index = [
            {
                "id": r.id,
                "title": r.title,
                "status": r.status.value,
                "generation": r.generation,
            }
            for r in store.records()
        ]
        (self.tasks_dir / "index.json").write_text(
            json.dumps(index, indent=2), encoding="utf-8"
        )
