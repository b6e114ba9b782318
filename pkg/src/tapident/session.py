"""One operator session: clock, audit trail, capture source, runs.

The device has a single capture interface and a single operator, so at
most one run is active at a time and all lifecycle mutations are
serialized here.
"""

from __future__ import annotations

import enum
import threading
import time
from datetime import datetime
from pathlib import Path
from typing import Callable, Mapping

from .audit import AuditEventKind, AuditLog, DestructionRecord, begin_session
from .capture import CaptureSource, FrameStream, open_source
from .framework import (PluginRegistry, PluginRun, RunStatus,
                        RunStillActiveError, rerun as framework_rerun,
                        start_run as framework_start_run)
from .plugins import default_registry


class SessionError(Exception):
    code = "SessionError"


class UnknownRunError(SessionError):
    code = "UnknownRun"


class RelevanceVerdict(enum.Enum):
    RELEVANT = "Relevant"
    IRRELEVANT = "Irrelevant"


class Session:
    def __init__(self, source: CaptureSource, logging_enabled: bool = True,
                 entered_now: datetime | None = None,
                 audit_path: Path | None = None,
                 registry: PluginRegistry | None = None,
                 monotonic_ns: Callable[[], int] = time.monotonic_ns,
                 stream_opener: Callable[[CaptureSource], FrameStream] = open_source):
        self.source = source
        self.logging_enabled = logging_enabled
        self.registry = registry if registry is not None else default_registry()
        self.audit: AuditLog = begin_session(
            logging_enabled, entered_now=entered_now,
            path=audit_path if logging_enabled else None,
            monotonic_ns=monotonic_ns,
        )
        self._open_stream = stream_opener
        self._runs: dict[int, PluginRun] = {}
        self._relevance: dict[int, RelevanceVerdict] = {}
        self._next_run_id = 1
        self._lock = threading.Lock()
        if source.replay_path is not None:
            self._probe_source()

    def _probe_source(self) -> None:
        # Surface a bad replay file at session creation, not mid-run.
        probe = self._open_stream(self.source)
        probe.stop()
        for _ in probe:
            pass

    def descriptors(self):
        return self.registry.descriptors()

    def _active_run(self) -> PluginRun | None:
        for run in self._runs.values():
            if run.status is RunStatus.RUNNING:
                return run
        return None

    def start_run(self, plugin_id: str, params: Mapping[str, str]) -> PluginRun:
        with self._lock:
            active = self._active_run()
            if active is not None:
                raise RunStillActiveError(f"run {active.run_id} is still running")
            stream = self._open_stream(self.source)
            run_id = self._next_run_id
            run = framework_start_run(self.registry, plugin_id, params, stream,
                                      self.audit, run_id)
            self._next_run_id += 1
            self._runs[run_id] = run
            return run

    def run(self, run_id: int) -> PluginRun:
        try:
            return self._runs[run_id]
        except KeyError:
            raise UnknownRunError(f"no such run: {run_id}") from None

    def stop_run(self, run_id: int):
        return self.run(run_id).stop()

    def rerun(self, run_id: int) -> PluginRun:
        with self._lock:
            previous = self.run(run_id)
            active = self._active_run()
            if active is not None:
                raise RunStillActiveError(f"run {active.run_id} is still running")
            stream = self._open_stream(self.source)
            new_id = self._next_run_id
            run = framework_rerun(previous, stream, self.audit, self.registry, new_id)
            self._next_run_id += 1
            self._runs[new_id] = run
            return run

    def mark_relevance(self, run_id: int,
                       verdict: RelevanceVerdict) -> DestructionRecord | None:
        """Decide what happens to a stopped run's results.

        Relevant: the full result is persisted in a ResultRecorded event.
        Irrelevant: the in-memory result is overwritten and only a
        DestructionRecord (counts and offsets, no addresses) is persisted.
        """
        with self._lock:
            run = self.run(run_id)
            if run.status is not RunStatus.STOPPED:
                raise RunStillActiveError(f"run {run_id} must be stopped first")
            result = run.result
            if result is None:
                raise UnknownRunError(f"run {run_id} has no result (already destroyed?)")
            self.audit.append(AuditEventKind.RELEVANCE_MARKED,
                              {"run_id": run_id, "verdict": verdict.value})
            self._relevance[run_id] = verdict
            if verdict is RelevanceVerdict.RELEVANT:
                self.audit.append(AuditEventKind.RESULT_RECORDED,
                                  {"run_id": run_id, "result": result.to_document()})
                return None
            destroyed = run.destroy_result()
            record = DestructionRecord(
                run_id=run_id,
                destroyed_record_count=destroyed,
                covered_offset_range=(run.started_at_offset_ns,
                                      run.stopped_at_offset_ns or run.started_at_offset_ns),
                reason="marked irrelevant by operator",
            )
            self.audit.append(AuditEventKind.DESTRUCTION_RECORDED, record.to_payload())
            return record

    def relevance(self, run_id: int) -> RelevanceVerdict | None:
        return self._relevance.get(run_id)

    def close(self) -> None:
        for run in self._runs.values():
            if run.status is RunStatus.RUNNING:
                run.stop()
        self.audit.close()
