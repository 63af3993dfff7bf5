"""DAG job execution with retries, parallel workers and an on-disk result cache.

A job is a list of :class:`TaskSpec`.  Each task names a module registered in
a :class:`Registry`; the module is a callable taking a :class:`TaskContext`
and returning a JSON-serializable dict (its result), which downstream tasks
receive through ``ctx.inputs``.
"""

from __future__ import annotations

import graphlib
import hashlib
import json
import logging
import os
import threading
import time
from collections import deque
from concurrent.futures import FIRST_COMPLETED, ThreadPoolExecutor, wait
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Callable, Optional

from .errors import MapDigitError

logger = logging.getLogger(__name__)

MAX_RETRY_LIMIT = 5


class StoreIOError(MapDigitError):
    """The artifact store could not be read or written; aborts the job."""


class TaskStatus(str, Enum):
    PENDING = "pending"
    RUNNING = "running"
    SUCCEEDED = "succeeded"
    FAILED = "failed"
    SKIPPED_CACHED = "skipped_cached"
    SKIPPED_UPSTREAM_FAILED = "skipped_upstream_failed"


DONE_OK = (TaskStatus.SUCCEEDED, TaskStatus.SKIPPED_CACHED)


@dataclass(frozen=True)
class TaskSpec:
    id: str
    module: str
    params: dict = field(default_factory=dict)
    deps: tuple[str, ...] = ()
    retry_limit: int = 0
    cache_key: Optional[str] = None

    def __post_init__(self):
        object.__setattr__(self, "deps", tuple(self.deps))
        object.__setattr__(self, "params", dict(self.params or {}))


@dataclass
class JobGraph:
    tasks: list[TaskSpec] = field(default_factory=list)
    name: str = "job"

    def by_id(self) -> dict[str, TaskSpec]:
        return {t.id: t for t in self.tasks}


@dataclass(frozen=True)
class Finding:
    kind: str  # cycle | dangling-dep | duplicate-id | retry-limit | unknown-module
    message: str
    nodes: tuple[str, ...] = ()


def validate_graph(graph: JobGraph, registry: Optional["Registry"] = None,
                   max_retry: int = MAX_RETRY_LIMIT) -> list[Finding]:
    """Structural checks; returns findings instead of raising.  Empty means ok."""
    findings = []
    seen = set()
    for t in graph.tasks:
        if t.id in seen:
            findings.append(Finding("duplicate-id", f"task id {t.id!r} is defined more than once", (t.id,)))
        seen.add(t.id)
        if not (0 <= t.retry_limit <= max_retry):
            findings.append(Finding("retry-limit", f"{t.id}: retry_limit {t.retry_limit} outside [0, {max_retry}]",
                                    (t.id,)))
        if registry is not None and t.module not in registry:
            findings.append(Finding("unknown-module", f"{t.id}: module {t.module!r} is not registered", (t.id,)))
    for t in graph.tasks:
        for d in t.deps:
            if d not in seen:
                findings.append(Finding("dangling-dep", f"{t.id} depends on unknown task {d!r}", (t.id, d)))
    sorter = graphlib.TopologicalSorter({t.id: [d for d in t.deps if d in seen] for t in graph.tasks})
    try:
        sorter.prepare()
    except graphlib.CycleError as exc:
        cycle = tuple(exc.args[1])
        findings.append(Finding("cycle", "dependency cycle: " + " -> ".join(cycle), cycle))
    return findings


def topological_order(graph: JobGraph) -> list[str]:
    index = {t.id: i for i, t in enumerate(graph.tasks)}
    sorter = graphlib.TopologicalSorter({t.id: t.deps for t in graph.tasks})
    sorter.prepare()
    order = []
    while sorter.is_active():
        ready = sorted(sorter.get_ready(), key=index.__getitem__)
        order.extend(ready)
        sorter.done(*ready)
    return order


class Registry:
    """Name -> callable table for task modules."""

    def __init__(self):
        self._modules: dict[str, Callable] = {}

    def register(self, name: str):
        def deco(fn):
            self._modules[name] = fn
            return fn
        return deco

    def add(self, name: str, fn: Callable) -> None:
        self._modules[name] = fn

    def __contains__(self, name):
        return name in self._modules

    def __getitem__(self, name) -> Callable:
        return self._modules[name]

    def names(self) -> list[str]:
        return sorted(self._modules)


default_registry = Registry()


class ArtifactStore:
    """Per-task artifact directories under ``root`` plus a completion stamp.

    Writes to a given task directory are serialized by a per-path lock.
    """

    STAMP = ".stamp.json"

    def __init__(self, root):
        self.root = Path(root)
        self._locks: dict[str, threading.Lock] = {}
        self._guard = threading.Lock()

    def lock(self, task_id: str) -> threading.Lock:
        with self._guard:
            return self._locks.setdefault(task_id, threading.Lock())

    def task_dir(self, task_id: str) -> Path:
        path = self.root / task_id
        try:
            path.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise StoreIOError(f"cannot create {path}: {exc}") from exc
        return path

    def read_stamp(self, task_id: str) -> Optional[dict]:
        path = self.root / task_id / self.STAMP
        try:
            with open(path, encoding="utf-8") as fh:
                doc = json.load(fh)
        except FileNotFoundError:
            return None
        except (OSError, ValueError):
            return None
        if not isinstance(doc, dict) or not isinstance(doc.get("cache_key"), str):
            return None
        return doc

    def write_stamp(self, task_id: str, cache_key: Optional[str], result: Any) -> None:
        path = self.task_dir(task_id) / self.STAMP
        tmp = path.with_name(path.name + ".tmp")
        with self.lock(task_id):
            try:
                with open(tmp, "w", encoding="utf-8") as fh:
                    json.dump({"cache_key": cache_key, "result": result}, fh)
                os.replace(tmp, path)
            except (OSError, TypeError, ValueError) as exc:
                raise StoreIOError(f"cannot write stamp for {task_id}: {exc}") from exc

    def clear_stamp(self, task_id: str) -> None:
        try:
            (self.root / task_id / self.STAMP).unlink()
        except FileNotFoundError:
            pass
        except OSError as exc:
            raise StoreIOError(str(exc)) from exc


def canonical_json(value) -> str:
    return json.dumps(value, sort_keys=True, separators=(",", ":"), default=str)


def compute_cache_key(task: TaskSpec, dep_keys: list[str]) -> str:
    payload = canonical_json({"module": task.module, "params": task.params,
                              "deps": list(dep_keys)})
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def resolve_cache(task: TaskSpec, store: ArtifactStore, cache_key: Optional[str] = None) -> bool:
    """Hit iff the store holds a stamp for ``task`` carrying the same key."""
    key = cache_key if cache_key is not None else task.cache_key
    if key is None:
        return False
    stamp = store.read_stamp(task.id)
    return stamp is not None and stamp["cache_key"] == key


@dataclass
class TaskContext:
    task: TaskSpec
    inputs: dict[str, Any]
    out_dir: Path
    store: ArtifactStore
    attempt: int
    shared: dict = field(default_factory=dict)

    @property
    def params(self) -> dict:
        return self.task.params


@dataclass
class TaskState:
    status: TaskStatus = TaskStatus.PENDING
    attempts: int = 0
    started_at: Optional[float] = None
    finished_at: Optional[float] = None
    error: Optional[str] = None
    cache_key: Optional[str] = None
    result: Any = None

    @property
    def duration(self) -> Optional[float]:
        if self.started_at is None or self.finished_at is None:
            return None
        return self.finished_at - self.started_at


@dataclass
class JobReport:
    name: str
    states: dict[str, TaskState]
    aborted: Optional[str] = None

    @property
    def succeeded(self) -> bool:
        return self.aborted is None and all(s.status in DONE_OK for s in self.states.values())

    @property
    def status(self) -> str:
        return "succeeded" if self.succeeded else "failed"

    def executed(self) -> list[str]:
        """Tasks whose body actually ran at least once."""
        return [k for k, s in self.states.items() if s.attempts > 0]

    def to_dict(self) -> dict:
        return {
            "job": self.name,
            "status": self.status,
            "aborted": self.aborted,
            "tasks": {
                k: {"status": s.status.value, "attempts": s.attempts, "duration_s": s.duration,
                    "error": s.error, "cache_key": s.cache_key, "result": s.result}
                for k, s in self.states.items()
            },
        }


class JobValidationError(MapDigitError):
    def __init__(self, findings: list[Finding]):
        super().__init__("; ".join(f.message for f in findings))
        self.findings = findings


def _run_attempts(fn, task: TaskSpec, inputs, store, state: TaskState, shared, retry_delay: float):
    out_dir = store.task_dir(task.id)
    state.started_at = time.monotonic()
    while True:
        state.attempts += 1
        ctx = TaskContext(task, inputs, out_dir, store, state.attempts, shared)
        try:
            result = fn(ctx)
        except StoreIOError:
            raise
        except Exception as exc:  # task bodies may fail arbitrarily; retries decide
            state.error = f"{type(exc).__name__}: {exc}"
            logger.warning("task %s attempt %d failed: %s", task.id, state.attempts, state.error)
            if state.attempts > task.retry_limit:
                state.finished_at = time.monotonic()
                return TaskStatus.FAILED, None
            if retry_delay:
                time.sleep(retry_delay)
            continue
        state.error = None
        result = {} if result is None else result
        store.write_stamp(task.id, state.cache_key, result)
        state.finished_at = time.monotonic()
        return TaskStatus.SUCCEEDED, result


def run_job(graph: JobGraph, workers: int = 1, store: Optional[ArtifactStore] = None,
            registry: Optional[Registry] = None, use_cache: bool = True,
            retry_delay: float = 0.0, shared: Optional[dict] = None) -> JobReport:
    """Execute ``graph``; ready tasks are dispatched FIFO in definition order."""
    if workers < 1:
        raise ValueError("workers must be >= 1")
    registry = registry if registry is not None else default_registry
    findings = validate_graph(graph, registry)
    if findings:
        raise JobValidationError(findings)
    if store is None:
        raise ValueError("an ArtifactStore is required")
    shared = {} if shared is None else shared

    tasks = graph.by_id()
    index = {t.id: i for i, t in enumerate(graph.tasks)}
    states = {t.id: TaskState() for t in graph.tasks}
    report = JobReport(graph.name, states)

    for tid in topological_order(graph):
        t = tasks[tid]
        if t.cache_key is not None:
            states[tid].cache_key = t.cache_key
        elif use_cache:
            states[tid].cache_key = compute_cache_key(t, [states[d].cache_key for d in t.deps])

    sorter = graphlib.TopologicalSorter({t.id: t.deps for t in graph.tasks})
    sorter.prepare()
    ready: deque[str] = deque()
    running = {}

    def refill():
        ready.extend(sorted(sorter.get_ready(), key=index.__getitem__))

    with ThreadPoolExecutor(max_workers=workers) as pool:
        refill()
        while ready or running:
            while ready and len(running) < workers and report.aborted is None:
                tid = ready.popleft()
                t, st = tasks[tid], states[tid]
                if any(states[d].status not in DONE_OK for d in t.deps):
                    st.status = TaskStatus.SKIPPED_UPSTREAM_FAILED
                    sorter.done(tid)
                    refill()
                    continue
                inputs = {d: states[d].result for d in t.deps}
                if use_cache and resolve_cache(t, store, st.cache_key):
                    st.status = TaskStatus.SKIPPED_CACHED
                    st.result = store.read_stamp(tid)["result"]
                    st.started_at = st.finished_at = time.monotonic()
                    sorter.done(tid)
                    refill()
                    continue
                st.status = TaskStatus.RUNNING
                fut = pool.submit(_run_attempts, registry[t.module], t, inputs, store, st, shared, retry_delay)
                running[fut] = tid
            if not running:
                break
            done, _ = wait(running, return_when=FIRST_COMPLETED)
            for fut in sorted(done, key=lambda f: index[running[f]]):
                tid = running.pop(fut)
                st = states[tid]
                try:
                    status, result = fut.result()
                except StoreIOError as exc:
                    st.status = TaskStatus.FAILED
                    st.error = str(exc)
                    st.finished_at = time.monotonic()
                    report.aborted = f"store error in {tid}: {exc}"
                    logger.error("aborting job %s: %s", graph.name, report.aborted)
                    continue
                st.status, st.result = status, result
                if report.aborted is None:
                    sorter.done(tid)
            if report.aborted is None:
                refill()
            else:
                ready.clear()
    if report.aborted is None:
        _propagate_skips(graph, states)
    return report


def _propagate_skips(graph: JobGraph, states: dict[str, TaskState]) -> None:
    # Normally already handled in-loop; this catches anything left pending.
    tasks = graph.by_id()
    for tid in topological_order(graph):
        t = tasks[tid]
        if states[tid].status == TaskStatus.PENDING and any(
                states[d].status not in DONE_OK for d in t.deps):
            states[tid].status = TaskStatus.SKIPPED_UPSTREAM_FAILED


def graph_from_dict(doc: dict) -> JobGraph:
    tasks = []
    for raw in doc.get("tasks", []):
        tasks.append(TaskSpec(
            id=str(raw["id"]),
            module=str(raw["module"]),
            params=raw.get("params") or {},
            deps=tuple(raw.get("deps") or ()),
            retry_limit=int(raw.get("retry_limit", 0)),
            cache_key=raw.get("cache_key"),
        ))
    return JobGraph(tasks, str(doc.get("name", "job")))
