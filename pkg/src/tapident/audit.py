"""Append-only, tamper-evident audit trail with the operator-anchored clock.

The device has no synchronized real-time clock: the operator enters the
current date and time (minute resolution) at session start and every
event's wall time is derived as that anchor plus elapsed monotonic time.
With logging bypassed, events still carry relative offsets but go only
to a volatile in-memory trail.

Each committed event is hash-chained to its predecessor over a canonical
serialization (sorted keys, no insignificant whitespace), so any
mutation of the persisted file is detectable after the fact.
"""

from __future__ import annotations

import enum
import hashlib
import json
import os
import time
from dataclasses import dataclass
from datetime import datetime, timedelta
from pathlib import Path
from typing import Callable, Mapping

LOG_FORMAT = "tapident-audit"
LOG_VERSION = 1
DIGEST_ALGORITHM = "sha256"

_HEADER_DOC = {"format": LOG_FORMAT, "version": LOG_VERSION, "digest": DIGEST_ALGORITHM}


class AuditError(Exception):
    code = "AuditError"


class MissingTimeAnchorError(AuditError):
    code = "MissingTimeAnchor"


class StorageFailureError(AuditError):
    """Raised when an append cannot be made durable; the run must halt
    rather than continue unlogged."""

    code = "StorageFailure"


class UnreadableLogError(AuditError):
    code = "UnreadableLog"


class AuditEventKind(enum.Enum):
    SESSION_START = "SessionStart"
    LOGGING_BYPASSED = "LoggingBypassed"
    PLUGIN_SELECTED = "PluginSelected"
    PARAMETER_ENTERED = "ParameterEntered"
    RUN_STARTED = "RunStarted"
    RUN_STOPPED = "RunStopped"
    RESULT_RECORDED = "ResultRecorded"
    RELEVANCE_MARKED = "RelevanceMarked"
    DESTRUCTION_RECORDED = "DestructionRecorded"
    RERUN = "Rerun"


def canonical(doc: Mapping) -> str:
    """The canonical serialization that digests are computed over."""
    return json.dumps(doc, sort_keys=True, separators=(",", ":"))


def _digest(prev_digest: str, body: Mapping) -> str:
    return hashlib.sha256((prev_digest + canonical(body)).encode("utf-8")).hexdigest()


class SessionClock:
    """Wall-time anchor entered by the operator plus a monotonic offset.

    ``wall_anchor`` is None in bypass mode; offsets are always available.
    """

    def __init__(self, wall_anchor: datetime | None = None,
                 monotonic_ns: Callable[[], int] = time.monotonic_ns):
        self.wall_anchor = wall_anchor
        self._monotonic_ns = monotonic_ns
        self.monotonic_anchor = monotonic_ns()

    def offset_ns(self) -> int:
        return max(0, self._monotonic_ns() - self.monotonic_anchor)

    def wall_time(self, offset_ns: int) -> datetime | None:
        if self.wall_anchor is None:
            return None
        return self.wall_anchor + timedelta(microseconds=offset_ns / 1000)


@dataclass(frozen=True)
class AuditEvent:
    seq: int
    offset_ns: int
    wall_time: datetime | None
    kind: AuditEventKind
    payload: Mapping
    chain_digest: str

    def body_document(self) -> dict:
        doc = {
            "seq": self.seq,
            "offset_ns": self.offset_ns,
            "kind": self.kind.value,
            "payload": dict(self.payload),
        }
        if self.wall_time is not None:
            doc["wall_time"] = self.wall_time.isoformat(timespec="seconds")
        return doc

    def to_document(self) -> dict:
        doc = self.body_document()
        doc["chain_digest"] = self.chain_digest
        return doc


@dataclass(frozen=True)
class DestructionRecord:
    """Proof that irrelevant identifying data was destroyed: counts and
    time ranges only, never any address."""

    run_id: int
    destroyed_record_count: int
    covered_offset_range: tuple[int, int]
    reason: str

    def to_payload(self) -> dict:
        return {
            "run_id": self.run_id,
            "destroyed_record_count": self.destroyed_record_count,
            "covered_offset_range": list(self.covered_offset_range),
            "reason": self.reason,
        }


class AuditLog:
    """Single-writer, append-only event log.

    File-backed when a path is given: every append is flushed and fsynced
    before the call returns. Without a path the trail is volatile (bypass
    mode) but keeps the identical chain structure.
    """

    def __init__(self, clock: SessionClock, path: Path | None = None):
        self.clock = clock
        self.path = path
        self._events: list[AuditEvent] = []
        self._header_line = canonical(_HEADER_DOC)
        self._prev_digest = hashlib.sha256(self._header_line.encode("utf-8")).hexdigest()
        self._fh = None
        if path is not None:
            try:
                # Exclusive create: an audit file is never silently extended
                # or overwritten by a new session.
                self._fh = open(path, "x", encoding="utf-8")
                self._write_line(self._header_line)
            except OSError as exc:
                raise StorageFailureError(f"cannot create audit log {path}: {exc}") from exc

    @property
    def persistent(self) -> bool:
        return self._fh is not None

    def _write_line(self, line: str) -> None:
        assert self._fh is not None
        try:
            self._fh.write(line + "\n")
            self._fh.flush()
            os.fsync(self._fh.fileno())
        except (OSError, ValueError) as exc:
            raise StorageFailureError(f"audit append failed: {exc}") from exc

    def append(self, kind: AuditEventKind, payload: Mapping) -> AuditEvent:
        """Append one event; it is durable before this returns."""
        offset_ns = self.clock.offset_ns()
        event = AuditEvent(
            seq=len(self._events) + 1,
            offset_ns=offset_ns,
            wall_time=self.clock.wall_time(offset_ns),
            kind=kind,
            payload=dict(payload),
            chain_digest="",
        )
        digest = _digest(self._prev_digest, event.body_document())
        event = AuditEvent(event.seq, event.offset_ns, event.wall_time,
                           event.kind, event.payload, digest)
        if self._fh is not None:
            self._write_line(canonical(event.to_document()))
        self._events.append(event)
        self._prev_digest = digest
        return event

    def events(self) -> tuple[AuditEvent, ...]:
        return tuple(self._events)

    def export_lines(self) -> list[str]:
        """The committed log, verbatim: header first, then one line per event."""
        return [self._header_line] + [canonical(e.to_document()) for e in self._events]

    def close(self) -> None:
        if self._fh is not None:
            self._fh.close()
            self._fh = None


def begin_session(logging_enabled: bool, entered_now: datetime | None = None,
                  path: Path | None = None,
                  monotonic_ns: Callable[[], int] = time.monotonic_ns) -> AuditLog:
    """Start a session trail, emitting SessionStart or LoggingBypassed.

    With logging enabled the operator-entered time anchor is mandatory.
    """
    if logging_enabled:
        if entered_now is None:
            raise MissingTimeAnchorError("logging is enabled but no date/time was entered")
        clock = SessionClock(wall_anchor=entered_now, monotonic_ns=monotonic_ns)
        log = AuditLog(clock, path=path)
        log.append(AuditEventKind.SESSION_START, {"logging_enabled": True})
    else:
        clock = SessionClock(wall_anchor=None, monotonic_ns=monotonic_ns)
        log = AuditLog(clock, path=None)
        log.append(AuditEventKind.LOGGING_BYPASSED, {"logging_enabled": False})
    return log


@dataclass(frozen=True)
class VerifyResult:
    intact: bool
    broken_seq: int | None = None

    def __str__(self) -> str:
        return "Intact" if self.intact else f"BrokenAt({self.broken_seq})"


def verify_lines(lines: list[str]) -> VerifyResult:
    """Recompute the digest chain over exported/stored log lines.

    A stored line must equal the canonical serialization of its own
    parsed content byte-for-byte; this closes the gap where a mutation
    keeps a line parseable and value-equal but alters its bytes.
    """
    if not lines:
        return VerifyResult(True)
    header_line = lines[0]
    try:
        header = json.loads(header_line)
    except ValueError as exc:
        raise UnreadableLogError(f"unreadable header line: {exc}") from exc
    if header.get("digest") != DIGEST_ALGORITHM or header.get("format") != LOG_FORMAT:
        raise UnreadableLogError("unknown log format or digest algorithm")
    prev = hashlib.sha256(header_line.encode("utf-8")).hexdigest()
    for seq, line in enumerate(lines[1:], start=1):
        try:
            doc = json.loads(line)
        except ValueError:
            return VerifyResult(False, seq)
        if not isinstance(doc, dict) or canonical(doc) != line:
            return VerifyResult(False, seq)
        stored_digest = doc.pop("chain_digest", None)
        if doc.get("seq") != seq or stored_digest != _digest(prev, doc):
            return VerifyResult(False, seq)
        prev = stored_digest
    return VerifyResult(True)


def verify_chain(path: Path | str) -> VerifyResult:
    """Verify a persisted log file end-to-end; empty files are vacuously intact."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise UnreadableLogError(f"cannot read audit log {path}: {exc}") from exc
    lines = [line for line in text.split("\n") if line]
    return verify_lines(lines)
