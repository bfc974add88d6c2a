"""openloop: an open-ended task generation loop.

Generates natural-language tasks and executable environments with
foundation-model backends, gates them for interestingness, dispatches
them to pluggable learners, verifies success, and grows a retrievable
task archive with progress and diversity metrics over the run log.
"""

__version__ = "0.1.0"

from .config import AblationFlags, RunConfig, load_config
from .engine import Engine, resume_run, start_run
from .store import Status, TaskRecord, TaskStore

__all__ = [
    "AblationFlags",
    "Engine",
    "RunConfig",
    "Status",
    "TaskRecord",
    "TaskStore",
    "__version__",
    "load_config",
    "resume_run",
    "start_run",
]
