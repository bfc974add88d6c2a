"""The generate / gate / learn / verify control loop.

One iteration is a single pass of the state machine: sample an anchor
and retrieve its neighbors, ask for the next task, turn the description
into environment code with a bounded repair loop, gate the result for
interestingness, train the configured learner from the nearest warm
start, verify success, and archive the outcome. Every externally visible
step lands in the event log; replaying that log reproduces the archive
exactly, which is what powers resume.
"""
from __future__ import annotations

import hashlib
import time
from pathlib import Path
from typing import Callable, Optional, Sequence

from . import data as shipped
from . import events as ev
from . import prompts
from .config import RunConfig
from .embedding import EmbeddingError, MockEmbedder, RemoteEmbedder
from .gateway import (
    FmError,
    Gateway,
    MOI_QUESTION_HEADER,
    ParseError,
    PromptBundle,
    RemoteChatBackend,
    ScriptedBackend,
    parse_code_block,
    parse_task_description,
    parse_yes_no,
)
from .learners import (
    AlwaysSuccessLearner,
    LearnerError,
    LearnerOutcome,
    ProcessLearner,
    SkillModelLearner,
    TrainRequest,
)
from .rundir import RunDir
from .sandbox import (
    AcceptAllSandbox,
    ProcessSandbox,
    SyntaxCheckSandbox,
    run_checks,
)
from .store import (
    EmptyPoolError,
    POOL_STATUSES,
    Status,
    TaskRecord,
    TaskStore,
    embedding_text,
)


class EngineError(Exception):
    pass


class IterationAbort(Exception):
    """Internal signal: this iteration cannot finish; log and move on."""


def derive_seed(*parts) -> int:
    """Stable 63-bit seed from a tuple of values; resume-safe by design."""
    digest = hashlib.blake2b(":".join(str(p) for p in parts).encode(), digest_size=8).digest()
    return int.from_bytes(digest, "big") >> 1


class Engine:
    def __init__(
        self,
        config: RunConfig,
        store: TaskStore,
        embedder,
        gateway: Gateway,
        learner,
        sandbox,
        log: ev.EventLog,
        run_dir: Optional[RunDir] = None,
    ):
        self.config = config
        self.store = store
        self.embedder = embedder
        self.gateway = gateway
        self.learner = learner
        self.sandbox = sandbox
        self.log = log
        self.run_dir = run_dir
        self._iteration = 0
        self._initialized = False
        self._fixture_pairs = shipped.fixture_pairs(config.envgen_fewshot)
        self._fixture_codes = shipped.fixture_codes(config.envgen_fewshot)

    # ------------------------------------------------------------------
    # setup

    def _seed_payloads(self) -> list[shipped.TaskPayload]:
        if not self.config.seeds:
            return shipped.load_seeds()
        payloads = []
        for spec in self.config.seeds:
            payloads.append(shipped.TaskPayload(
                name=spec.name or Path(spec.description_file).stem,
                description=Path(spec.description_file).read_text(encoding="utf-8"),
                env_code=Path(spec.env_code_file).read_text(encoding="utf-8"),
            ))
        return payloads

    def init_run(self) -> None:
        """Archive the seed tasks, training a from-scratch policy for each."""
        if self._initialized:
            return
        payloads = self._seed_payloads()
        if not payloads:
            raise EngineError("at least one seed task is required")
        already = len(self.store.by_status(*Status))
        already_seeds = sum(1 for r in self.store.records() if r.generation == 0)
        if already != already_seeds:
            raise EngineError("store contains non-seed records before init")
        for index, payload in enumerate(payloads):
            if index < already_seeds:
                continue
            try:
                embedding = self.embedder.embed(embedding_text(payload.description, payload.env_code))
            except EmbeddingError as exc:
                raise EngineError(f"seed embedding failed: {exc}") from exc
            outcome = self.learner.train(TrainRequest(
                env_code=payload.env_code,
                warm_start=None,
                budget_steps=self.config.learner.budget_steps,
                rng_seed=derive_seed(self.config.rng_seed, "seed", index),
            ))
            self.log.emit(ev.LEARNER_RESULT, {
                "iteration": 0,
                "success": outcome.success,
                "steps_used": outcome.steps_used,
                "failure_reason": outcome.failure_reason,
                "policy_artifact": outcome.policy_artifact,
            })
            self._archive(
                iteration=0,
                description=payload.description,
                env_code=payload.env_code,
                status=Status.SEED,
                parents=(),
                repairs=0,
                reflections=0,
                warm_id=None,
                verdict=None,
                artifact=outcome.policy_artifact,
                embedding=embedding,
            )
        self._initialized = True

    # ------------------------------------------------------------------
    # event helpers

    def _emit_sandbox(self, iteration: int, op: str, verdict) -> None:
        payload = {"iteration": iteration, "op": op}
        payload.update(verdict.to_payload())
        self.log.emit(ev.SANDBOX_RESULT, payload)

    def _complete_parsed(
        self,
        bundle: PromptBundle,
        parser: Callable[[str], object],
        iteration: int,
        context_ids: Optional[list[int]] = None,
    ):
        """One completion plus at most one re-prompt on a parse failure."""
        for parse_attempt in (1, 2):
            response = self.gateway.complete(bundle, iteration=iteration, context_ids=context_ids)
            try:
                return parser(response.raw_text)
            except ParseError as exc:
                self.log.emit(ev.PARSE_ERROR, {
                    "iteration": iteration,
                    "kind": bundle.kind.value,
                    "error": str(exc),
                    "parse_attempt": parse_attempt,
                })
                if parse_attempt == 2:
                    raise

    # ------------------------------------------------------------------
    # iteration phases

    def _context_examples(self, iteration: int) -> tuple[list[TaskRecord], list[TaskRecord]]:
        cfg = self.config
        if cfg.ablation.no_archive:
            return self.store.by_status(Status.SEED)[: cfg.num_learned_examples], []
        try:
            anchor = self.store.sample_anchor(derive_seed(cfg.rng_seed, "anchor", iteration))
        except EmptyPoolError:
            return [], []
        learned = (
            self.store.retrieve_similar(anchor.embedding, cfg.num_learned_examples,
                                        {Status.SEED, Status.LEARNED})
            if cfg.num_learned_examples > 0 else []
        )
        failed = (
            self.store.retrieve_similar(anchor.embedding, cfg.num_failed_examples, {Status.FAILED})
            if cfg.num_failed_examples > 0 else []
        )
        return learned, failed

    def _generate_description(self, iteration: int,
                              learned: Sequence[TaskRecord],
                              failed: Sequence[TaskRecord],
                              context_ids: list[int]) -> str:
        cfg = self.config
        bundle = prompts.render_task_gen(
            cfg.robot_desc,
            [(r.description, r.env_code) for r in learned],
            [(r.description, r.env_code) for r in failed],
            env_examples=self._fixture_codes,
            model_name=cfg.models.task_gen.name,
            temperature=cfg.models.task_gen.temperature,
            lang_tag=cfg.sandbox.lang_tag,
            no_interestingness=cfg.ablation.no_interestingness,
            no_learnability=cfg.ablation.learning_progress_only,
        )
        try:
            _, task_desc = self._complete_parsed(bundle, parse_task_description,
                                                 iteration, context_ids)
        except ParseError as exc:
            raise IterationAbort(f"task description unparseable after re-prompt: {exc}") from exc
        return task_desc

    def _generate_env_code(self, iteration: int, task_desc: str) -> str:
        cfg = self.config
        bundle = prompts.render_env_gen(
            task_desc,
            examples=[],
            robot_desc=cfg.robot_desc,
            model_name=cfg.models.env_gen.name,
            temperature=cfg.models.env_gen.temperature,
            lang_tag=cfg.sandbox.lang_tag,
            fallback_examples=self._fixture_pairs,
        )
        return self._parse_code(bundle, iteration, "environment code")

    def _parse_code(self, bundle: PromptBundle, iteration: int, what: str) -> str:
        try:
            return self._complete_parsed(
                bundle, lambda raw: parse_code_block(raw, self.config.sandbox.lang_tag), iteration
            )
        except ParseError as exc:
            raise IterationAbort(f"{what} unparseable after re-prompt: {exc}") from exc

    def _repair_loop(self, iteration: int, env_code: str) -> tuple[str, int, bool]:
        """Validate code, feeding every failure back for a repaired version.

        Returns (code, repairs used, ok). Validation attempts are capped at
        the repair budget plus the initial pass; once the budget is spent
        the last repaired code is handed back unvalidated and the task is
        archived as a code-generation failure.
        """
        cfg = self.config
        repairs = 0
        while True:
            check = run_checks(self.sandbox, env_code, cfg.sandbox.smoke_steps,
                               derive_seed(cfg.rng_seed, "rollout", iteration, repairs))
            for op, verdict in check.steps:
                self._emit_sandbox(iteration, op, verdict)
            if check.ok:
                return env_code, repairs, True
            if repairs >= cfg.codegen_max_repairs:
                return env_code, repairs, False
            repairs += 1
            bundle = prompts.render_env_reflect(
                env_code,
                check.traceback or "unknown error",
                robot_desc=cfg.robot_desc,
                model_name=cfg.models.env_reflect.name,
                temperature=cfg.models.env_reflect.temperature,
                lang_tag=cfg.sandbox.lang_tag,
                examples=self._fixture_pairs,
            )
            env_code = self._parse_code(bundle, iteration, "repaired environment code")
            if repairs >= cfg.codegen_max_repairs:
                return env_code, repairs, False

    def _moi_gate(self, iteration: int, task_desc: str, env_code: str, embedding) -> bool:
        cfg = self.config
        if cfg.ablation.no_archive:
            similar = self.store.by_status(Status.SEED)[: cfg.moi_similar]
        elif cfg.moi_similar > 0:
            similar = self.store.retrieve_similar(embedding, cfg.moi_similar, POOL_STATUSES)
        else:
            similar = []
        bundle = prompts.render_moi(
            [(r.description, r.env_code) for r in similar],
            (task_desc, env_code),
            robot_desc=cfg.robot_desc,
            model_name=cfg.models.moi.name,
            temperature=cfg.models.moi.temperature,
            lang_tag=cfg.sandbox.lang_tag,
        )
        defaulted = False
        try:
            interesting = self._complete_parsed(
                bundle, lambda raw: parse_yes_no(raw, MOI_QUESTION_HEADER), iteration
            )
        except ParseError:
            # Fail closed: an unreadable verdict never lets a task through.
            interesting, defaulted = False, True
        self.log.emit(ev.MOI_VERDICT, {
            "iteration": iteration,
            "interesting": bool(interesting),
            "defaulted": defaulted,
        })
        return bool(interesting)

    def _pick_warm_start(self, embedding) -> tuple[Optional[int], Optional[str]]:
        if not self.config.learner.warm_start:
            return None, None
        if self.config.ablation.no_archive:
            seeds = self.store.retrieve_similar(embedding, 1, {Status.SEED})
            warm_id = seeds[0].id if seeds else None
        else:
            warm_id = self.store.nearest_learned(embedding)
        if warm_id is None:
            return None, None
        artifact = self.store.get(warm_id).policy_artifact
        if artifact is None:
            return None, None  # no stored policy: train from scratch
        return warm_id, artifact

    def _train(self, iteration: int, env_code: str, warm_artifact: Optional[str],
               attempt: int) -> LearnerOutcome:
        outcome = self.learner.train(TrainRequest(
            env_code=env_code,
            warm_start=warm_artifact,
            budget_steps=self.config.learner.budget_steps,
            rng_seed=derive_seed(self.config.rng_seed, "train", iteration, attempt),
        ))
        self.log.emit(ev.LEARNER_RESULT, {
            "iteration": iteration,
            "success": outcome.success,
            "steps_used": outcome.steps_used,
            "failure_reason": outcome.failure_reason,
            "policy_artifact": outcome.policy_artifact,
        })
        return outcome

    def _resolve_success(self, iteration: int, env_code: str, outcome: LearnerOutcome) -> bool:
        if not outcome.success:
            self.log.emit(ev.SUCCESS_CHECK, {"iteration": iteration, "source": "learner",
                                             "success": False})
            return False
        if outcome.final_state_blob is not None:
            verdict = self.sandbox.success_check(env_code, outcome.final_state_blob)
            self._emit_sandbox(iteration, "success_check", verdict)
            if not verdict.ok:
                self.log.emit(ev.SUCCESS_CHECK, {"iteration": iteration, "source": "sandbox",
                                                 "success": False})
                return False
            if verdict.success is not None:
                self.log.emit(ev.SUCCESS_CHECK, {"iteration": iteration, "source": "sandbox",
                                                 "success": bool(verdict.success)})
                return bool(verdict.success)
        self.log.emit(ev.SUCCESS_CHECK, {"iteration": iteration, "source": "learner",
                                         "success": True})
        return True

    def _reflect_task(self, iteration: int, task_desc: str, env_code: str,
                      outcome: LearnerOutcome, round_no: int) -> Optional[str]:
        cfg = self.config
        failure_summary = outcome.failure_reason or \
            "Training finished but the success check returned false."
        bundle = prompts.render_task_reflect(
            task_desc,
            env_code,
            failure_summary,
            robot_desc=cfg.robot_desc,
            model_name=cfg.models.task_reflect.name,
            temperature=cfg.models.task_reflect.temperature,
            lang_tag=cfg.sandbox.lang_tag,
            examples=self._fixture_pairs,
        )
        try:
            new_code = self._complete_parsed(
                bundle, lambda raw: parse_code_block(raw, cfg.sandbox.lang_tag), iteration
            )
        except ParseError:
            return None
        check = run_checks(self.sandbox, new_code, cfg.sandbox.smoke_steps,
                           derive_seed(cfg.rng_seed, "reflect-rollout", iteration, round_no))
        for op, verdict in check.steps:
            self._emit_sandbox(iteration, op, verdict)
        return new_code if check.ok else None

    # ------------------------------------------------------------------
    # archive

    def _archive(self, iteration: int, *, description: str, env_code: str, status: Status,
                 parents: Sequence[int], repairs: int, reflections: int,
                 warm_id: Optional[int], verdict: Optional[bool],
                 artifact: Optional[str], embedding) -> TaskRecord:
        record = TaskRecord(
            id=self.store.next_id(),
            description=description,
            env_code=env_code,
            status=status,
            generation=iteration,
            embedding=embedding,
            parent_ids=tuple(parents),
            codegen_repairs_used=repairs,
            reflection_rounds_used=reflections,
            warm_start_from=warm_id,
            moi_verdict=verdict,
            policy_artifact=artifact,
            created_at=time.time(),
        )
        self.store.insert(record)
        self.log.emit(ev.TASK_ARCHIVED, {"iteration": iteration, "record": record.to_dict()})
        if self.run_dir is not None:
            self.run_dir.write_task(record)
            self.run_dir.write_index(self.store)
        return record

    # ------------------------------------------------------------------
    # the loop

    def _execute_iteration(self, iteration: int) -> None:
        cfg = self.config
        learned, failed = self._context_examples(iteration)
        context_ids = list(dict.fromkeys([r.id for r in learned] + [r.id for r in failed]))

        task_desc = self._generate_description(iteration, learned, failed, context_ids)
        env_code = self._generate_env_code(iteration, task_desc)
        env_code, repairs, code_ok = self._repair_loop(iteration, env_code)

        if not code_ok:
            self._archive(
                iteration,
                description=task_desc,
                env_code=env_code,
                status=Status.CODEGEN_FAILED,
                parents=context_ids,
                repairs=repairs,
                reflections=0,
                warm_id=None,
                verdict=None,
                artifact=None,
                embedding=self.embedder.embed(embedding_text(task_desc, env_code)),
            )
            return

        embedding = self.embedder.embed(embedding_text(task_desc, env_code))

        verdict: Optional[bool] = None
        if not cfg.ablation.no_interestingness:
            verdict = self._moi_gate(iteration, task_desc, env_code, embedding)
            if not verdict:
                self._archive(
                    iteration,
                    description=task_desc,
                    env_code=env_code,
                    status=Status.UNINTERESTING,
                    parents=context_ids,
                    repairs=repairs,
                    reflections=0,
                    warm_id=None,
                    verdict=False,
                    artifact=None,
                    embedding=embedding,
                )
                return

        warm_id, warm_artifact = self._pick_warm_start(embedding)
        outcome = self._train(iteration, env_code, warm_artifact, attempt=0)
        success = self._resolve_success(iteration, env_code, outcome)

        reflections = 0
        while not success and reflections < cfg.reflection_max:
            reflections += 1
            new_code = self._reflect_task(iteration, task_desc, env_code, outcome, reflections)
            if new_code is None:
                break
            env_code = new_code
            embedding = self.embedder.embed(embedding_text(task_desc, env_code))
            outcome = self._train(iteration, env_code, warm_artifact, attempt=reflections)
            success = self._resolve_success(iteration, env_code, outcome)

        self._archive(
            iteration,
            description=task_desc,
            env_code=env_code,
            status=Status.LEARNED if success else Status.FAILED,
            parents=context_ids,
            repairs=repairs,
            reflections=reflections,
            warm_id=warm_id,
            verdict=verdict,
            artifact=outcome.policy_artifact if success else None,
            embedding=embedding,
        )

    def run_iteration(self) -> list[dict]:
        """Execute one full pass; failures abort the iteration, not the run."""
        if not self._initialized:
            raise EngineError("init_run() must be called first")
        iteration = self._iteration + 1
        mark = len(self.log.events)
        self.log.emit(ev.ITER_START, {"iteration": iteration})
        try:
            self._execute_iteration(iteration)
        except IterationAbort as exc:
            self.log.emit(ev.ITER_ABORTED, {"iteration": iteration, "reason": str(exc)})
        except (FmError, LearnerError, EmbeddingError) as exc:
            self.log.emit(ev.ITER_ABORTED, {
                "iteration": iteration,
                "reason": f"{type(exc).__name__}: {exc}",
            })
        self._iteration = iteration
        return self.log.events[mark:]

    def run(self, n_iterations: int) -> dict:
        """Run n iterations (aborted ones count) and tally terminal statuses."""
        if n_iterations < 0:
            raise EngineError("n_iterations must be >= 0")
        summary = {
            "iterations": 0,
            "learned": 0,
            "failed": 0,
            "uninteresting": 0,
            "codegen_failed": 0,
            "aborted": 0,
        }
        keys = {
            Status.LEARNED.value: "learned",
            Status.FAILED.value: "failed",
            Status.UNINTERESTING.value: "uninteresting",
            Status.CODEGEN_FAILED.value: "codegen_failed",
        }
        for _ in range(n_iterations):
            events = self.run_iteration()
            summary["iterations"] += 1
            for event in events:
                if event["kind"] == ev.TASK_ARCHIVED:
                    summary[keys[event["payload"]["record"]["status"]]] += 1
                elif event["kind"] == ev.ITER_ABORTED:
                    summary["aborted"] += 1
        return summary

    @property
    def iteration(self) -> int:
        return self._iteration


# ----------------------------------------------------------------------
# component factories

def build_embedder(config: RunConfig, run_dir: Optional[RunDir] = None):
    emb = config.embedding
    if emb.backend == "mock":
        return MockEmbedder(dim=emb.dim, mock_seed=emb.mock_seed)
    import os

    return RemoteEmbedder(
        dim=emb.dim,
        model_name=emb.model_name,
        base_url=emb.base_url,
        api_key=os.environ.get(emb.api_key_env, ""),
        cache_dir=(run_dir.cache_dir / "embeddings") if (run_dir and emb.cache) else None,
        max_attempts=emb.max_attempts,
        timeout_s=emb.timeout_s,
        max_in_flight=emb.max_in_flight,
    )


def build_fm_backend(config: RunConfig):
    fm = config.fm
    if fm.backend == "scripted":
        if fm.script_dir is None:
            raise EngineError("fm.script_dir is required for the scripted backend")
        return ScriptedBackend.from_dir(fm.script_dir)
    import os

    return RemoteChatBackend(
        base_url=fm.base_url,
        api_key=os.environ.get(fm.api_key_env, ""),
        timeout_s=fm.timeout_s,
    )


def build_learner(config: RunConfig):
    cfg = config.learner
    if cfg.kind == "always_success":
        return AlwaysSuccessLearner()
    if cfg.kind == "skill_model":
        return SkillModelLearner(p_warm=cfg.p_warm, p_cold=cfg.p_cold)
    return ProcessLearner(cfg.command, timeout_s=cfg.timeout_s)


def build_sandbox(config: RunConfig):
    cfg = config.sandbox
    if cfg.kind == "acceptall":
        return AcceptAllSandbox()
    if cfg.kind == "syntax":
        return SyntaxCheckSandbox()
    return ProcessSandbox(cfg.command, timeout_s=cfg.timeout_s)


def start_run(config: RunConfig, run_path, *, backend=None, learner=None,
              sandbox=None) -> Engine:
    """Create a fresh run directory and an initialized engine over it."""
    run_dir = RunDir.create(run_path, config)
    store = TaskStore(dim=config.embedding.dim)
    log = ev.EventLog(run_dir.events_path)
    gateway = Gateway(backend or build_fm_backend(config), log=log,
                      max_attempts=config.fm.max_attempts)
    engine = Engine(
        config,
        store,
        build_embedder(config, run_dir),
        gateway,
        learner or build_learner(config),
        sandbox or build_sandbox(config),
        log,
        run_dir,
    )
    engine.init_run()
    return engine


def resume_run(run_path, *, backend=None, learner=None, sandbox=None) -> Engine:
    """Rebuild an engine from a run directory's event log and continue.

    The log's tail past the last commit point (a partial iteration left by
    a crash) is truncated; scripted backends are fast-forwarded by the
    number of replies the kept prefix consumed.
    """
    run_dir = RunDir.open(run_path)
    config = run_dir.load_config()
    all_events = ev.read_events(run_dir.events_path)
    state = ev.replay(all_events)
    if len(state.kept) != len(all_events):
        ev.truncate_log(run_dir.events_path, len(state.kept))

    store = TaskStore(dim=config.embedding.dim)
    for record in state.records:
        store.insert(record)
        run_dir.write_task(record)
    run_dir.write_index(store)

    fm_backend = backend or build_fm_backend(config)
    if isinstance(fm_backend, ScriptedBackend):
        fm_backend.restore(state.fm_response_kinds)
    the_learner = learner or build_learner(config)
    if isinstance(the_learner, SkillModelLearner):
        the_learner.skip(state.learner_calls)

    log = ev.EventLog(run_dir.events_path, start_seq=state.next_seq)
    gateway = Gateway(fm_backend, log=log, max_attempts=config.fm.max_attempts)
    engine = Engine(
        config,
        store,
        build_embedder(config, run_dir),
        gateway,
        the_learner,
        sandbox or build_sandbox(config),
        log,
        run_dir,
    )
    engine._iteration = state.last_iteration
    n_seeds = len(config.seeds) or len(shipped.SEED_ORDER)
    if state.seeds_archived >= n_seeds:
        engine._initialized = True
    else:
        engine.init_run()
    return engine
