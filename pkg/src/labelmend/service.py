"""Task-serving service: durable event log, lease-based queue, HTTP API."""
from __future__ import annotations

import json
import os
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Iterable

from pydantic import BaseModel

from .geometry import BBox
from .tasks import AnnotatorResponse, Microtask, MicrotaskKind, validate_answer

DEFAULT_LEASE_SECONDS = 600.0


# module level so the postponed annotation on the endpoint resolves
class SubmitBody(BaseModel):
    task_id: str
    annotator_id: str
    answer: Any
    duration_ms: float


class UnknownAssignment(KeyError):
    pass


class InvalidAnswer(ValueError):
    pass


class NoTasksAvailable(LookupError):
    pass


class EventLog:
    """Append-only JSON-lines log; every append is flushed and fsynced."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._lock = threading.Lock()
        self._seq = 0
        if self.path.exists():
            for _ in self._read_all():
                self._seq += 1
        self._fh = open(self.path, "a", encoding="utf-8")

    def _read_all(self):
        with open(self.path, encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    yield json.loads(line)

    def append(self, kind: str, payload: dict) -> dict:
        with self._lock:
            self._seq += 1
            event = {"seq": self._seq, "kind": kind, **payload}
            self._fh.write(json.dumps(event) + "\n")
            self._fh.flush()
            os.fsync(self._fh.fileno())
            return event

    def replay(self) -> Iterable[dict]:
        with self._lock:
            self._fh.flush()
        yield from self._read_all()

    def close(self) -> None:
        self._fh.close()


@dataclass
class TaskState:
    task: Microtask
    priority: float = 0.0
    order: int = 0
    answered_by: set[str] = field(default_factory=set)
    served_to: dict[str, float] = field(default_factory=dict)  # annotator -> lease deadline

    @property
    def open_slots(self) -> int:
        return self.task.n_annotators - len(self.answered_by) - len(self.served_to)


class TaskQueue:
    """Serves microtasks with lease timeouts; all mutations go through the log.

    Every state change is appended (and fsynced) before it is applied, so
    replaying the log reconstructs the exact acknowledged state.
    """

    def __init__(
        self,
        log: EventLog,
        clock: Callable[[], float] = time.monotonic,
        lease_seconds: float = DEFAULT_LEASE_SECONDS,
    ):
        self.log = log
        self.clock = clock
        self.lease_seconds = lease_seconds
        self._lock = threading.RLock()
        self.tasks: dict[str, TaskState] = {}
        self.responses: list[AnnotatorResponse] = []
        self._response_keys: set[tuple[str, str]] = set()
        for event in log.replay():
            self._apply(event)

    # -- event application (shared by live mutation and replay) --

    def _apply(self, event: dict) -> None:
        kind = event["kind"]
        if kind == "TaskCreated":
            task = Microtask(
                task_id=event["task_id"],
                kind=MicrotaskKind(event["task_kind"]),
                image_id=event["image_id"],
                n_annotators=event["n_annotators"],
                bbox=BBox(*event["bbox"]) if event.get("bbox") else None,
                payload=event.get("payload", {}),
            )
            self.tasks[task.task_id] = TaskState(
                task=task, priority=event.get("priority", 0.0), order=event["seq"]
            )
        elif kind == "Served":
            state = self.tasks[event["task_id"]]
            state.served_to[event["annotator_id"]] = event["deadline"]
        elif kind == "Expired":
            state = self.tasks[event["task_id"]]
            state.served_to.pop(event["annotator_id"], None)
        elif kind == "ResponseRecorded":
            state = self.tasks[event["task_id"]]
            key = (event["task_id"], event["annotator_id"])
            state.served_to.pop(event["annotator_id"], None)
            if key not in self._response_keys:
                self._response_keys.add(key)
                state.answered_by.add(event["annotator_id"])
                self.responses.append(
                    AnnotatorResponse(
                        task_id=event["task_id"],
                        annotator_id=event["annotator_id"],
                        answer=event["answer"],
                        duration=event["duration"],
                        timestamp=event.get("timestamp", 0.0),
                    )
                )

    def _record(self, kind: str, payload: dict) -> None:
        event = self.log.append(kind, payload)
        self._apply(event)

    # -- mutations --

    def create_task(self, task: Microtask, priority: float = 0.0) -> None:
        with self._lock:
            if task.task_id in self.tasks:
                raise ValueError(f"duplicate task id {task.task_id}")
            self._record(
                "TaskCreated",
                {
                    "task_id": task.task_id,
                    "task_kind": task.kind.value,
                    "image_id": task.image_id,
                    "n_annotators": task.n_annotators,
                    "bbox": task.bbox.as_list() if task.bbox else None,
                    "payload": task.payload,
                    "priority": priority,
                },
            )

    def _expire_stale_leases(self) -> None:
        now = self.clock()
        for state in self.tasks.values():
            for annotator, deadline in list(state.served_to.items()):
                if deadline <= now:
                    self._record(
                        "Expired",
                        {"task_id": state.task.task_id, "annotator_id": annotator},
                    )

    def next_task(self, annotator_id: str) -> Microtask:
        """Highest-priority open task this annotator has not answered.

        A lease that expired frees its slot for anyone, including the original
        annotator (their assignment re-enters the served state).
        """
        with self._lock:
            self._expire_stale_leases()
            candidates = [
                s for s in self.tasks.values()
                if s.open_slots > 0
                and annotator_id not in s.answered_by
                and annotator_id not in s.served_to
            ]
            if not candidates:
                raise NoTasksAvailable(annotator_id)
            best = min(candidates, key=lambda s: (-s.priority, s.order))
            self._record(
                "Served",
                {
                    "task_id": best.task.task_id,
                    "annotator_id": annotator_id,
                    "deadline": self.clock() + self.lease_seconds,
                },
            )
            return best.task

    def submit_response(
        self, task_id: str, annotator_id: str, answer: Any, duration: float
    ) -> dict:
        """Record one answer; duplicates are acknowledged without re-recording."""
        with self._lock:
            state = self.tasks.get(task_id)
            if state is None:
                raise UnknownAssignment(task_id)
            key = (task_id, annotator_id)
            if key in self._response_keys:
                return {"status": "ok", "duplicate": True}
            if annotator_id not in state.served_to:
                raise UnknownAssignment(f"{task_id} was not served to {annotator_id}")
            if not validate_answer(state.task.kind, answer):
                raise InvalidAnswer(f"invalid answer for {state.task.kind.value}: {answer!r}")
            self._record(
                "ResponseRecorded",
                {
                    "task_id": task_id,
                    "annotator_id": annotator_id,
                    "answer": answer,
                    "duration": duration,
                    "timestamp": time.time(),
                },
            )
            return {"status": "ok", "duplicate": False}

    # -- reads --

    def export_responses(self, task_ids: set[str] | None = None) -> list[AnnotatorResponse]:
        with self._lock:
            return [
                r for r in self.responses
                if task_ids is None or r.task_id in task_ids
            ]

    def progress(self) -> dict:
        with self._lock:
            per_task = {
                tid: {
                    "answered": len(s.answered_by),
                    "needed": s.task.n_annotators,
                    "leased": len(s.served_to),
                }
                for tid, s in self.tasks.items()
            }
            done = sum(1 for v in per_task.values() if v["answered"] >= v["needed"])
            return {
                "tasks": len(per_task),
                "complete": done,
                "responses": len(self.responses),
                "per_task": per_task,
            }


def create_app(
    queue: TaskQueue,
    image_dir: str | Path | None = None,
    webui_dir: str | Path | None = None,
):
    """HTTP+JSON API over a task queue, optionally hosting images and the UI."""
    from fastapi import FastAPI, HTTPException
    from fastapi.responses import FileResponse

    app = FastAPI(title="labelmend annotation service")

    @app.get("/api/tasks/next")
    def api_next_task(annotator: str):
        try:
            task = queue.next_task(annotator)
        except NoTasksAvailable:
            return {"task": None}
        return {
            "task": {
                "task_id": task.task_id,
                "kind": task.kind.value,
                "image_id": task.image_id,
                "bbox": task.bbox.as_list() if task.bbox else None,
                "options": list(task.options),
                "payload": task.payload,
            }
        }

    @app.post("/api/responses")
    def api_submit(body: SubmitBody):
        try:
            ack = queue.submit_response(
                body.task_id, body.annotator_id, body.answer, body.duration_ms / 1000.0
            )
        except UnknownAssignment as e:
            raise HTTPException(status_code=404, detail=str(e))
        except InvalidAnswer as e:
            raise HTTPException(status_code=422, detail=str(e))
        return ack

    @app.get("/api/progress")
    def api_progress():
        return queue.progress()

    @app.get("/api/export")
    def api_export():
        return {
            "responses": [
                {
                    "task_id": r.task_id,
                    "annotator_id": r.annotator_id,
                    "answer": r.answer,
                    "duration": r.duration,
                    "timestamp": r.timestamp,
                }
                for r in queue.export_responses()
            ]
        }

    if image_dir is not None:
        image_dir = Path(image_dir)

        @app.get("/api/images/{image_id}")
        def api_image(image_id: str):
            for ext in (".png", ".jpg", ".jpeg"):
                path = image_dir / f"{image_id}{ext}"
                if path.exists():
                    return FileResponse(path)
            raise HTTPException(status_code=404, detail=f"no image {image_id}")

    if webui_dir is not None:
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=str(webui_dir), html=True), name="webui")

    return app
