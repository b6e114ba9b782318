"""Local control service for the operator console and scripted clients.

Plain HTTP over loopback. Mutating endpoints are serialized (single
logical operator); any number of clients may read. Live counters are
pushed as a server-sent event stream at a fixed cadence.

Endpoints:
    POST /session              create the session (logging flag, time, source)
    GET  /session              current session info
    GET  /plugins              plugin descriptors
    POST /runs                 start a run {plugin_id, params}
    GET  /runs/{id}/state      latest counter snapshot + status
    GET  /runs/{id}/stream     SSE snapshot stream (default 4 Hz)
    POST /runs/{id}/stop       stop, returns the result (idempotent)
    POST /runs/{id}/rerun      same parameters, fresh run id
    POST /runs/{id}/relevance  {"verdict": "Relevant"|"Irrelevant"}
    GET  /audit/export         committed log lines + verification trailer
"""

from __future__ import annotations

import json
import re
import threading
import time
import uuid
from datetime import datetime
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

from .audit import verify_lines
from .capture import CaptureSource
from .framework import PluginRegistry, RunStatus
from .session import RelevanceVerdict, Session

TIME_ANCHOR_FORMAT = "%Y-%m-%d %H:%M"


class ServiceError(Exception):
    def __init__(self, status: int, code: str, detail: str):
        super().__init__(detail)
        self.status = status
        self.code = code
        self.detail = detail


_ERROR_STATUS = {
    "MissingTimeAnchor": 400,
    "MissingParameter": 400,
    "InvalidParameterValue": 400,
    "BadFileMagic": 400,
    "InterfaceNotFound": 400,
    "PermissionDenied": 403,
    "UnknownPlugin": 404,
    "UnknownRun": 404,
    "SessionAlreadyActive": 409,
    "NoSession": 409,
    "RunStillActive": 409,
    "ResultDestroyed": 409,
    "StorageFailure": 500,
    "UnreadableLog": 500,
}


def _to_service_error(exc: Exception) -> ServiceError:
    """Domain exceptions carry a stable ``code``; anything else is internal."""
    if isinstance(exc, ServiceError):
        return exc
    code = getattr(exc, "code", "InternalError")
    return ServiceError(_ERROR_STATUS.get(code, 500), code, str(exc))


def _run_state_document(run) -> dict:
    terminal = run.stream_terminal
    return {
        "run_id": run.run_id,
        "plugin_id": run.plugin_id,
        "status": run.status.value,
        "started_at_offset_ns": run.started_at_offset_ns,
        "counters": run.snapshot(),
        "stream_terminal": None if terminal is None else {
            "kind": terminal.kind.value, "detail": terminal.detail,
        },
    }


def _parse_source(doc: dict) -> CaptureSource:
    replay = doc.get("replay")
    interface = doc.get("interface")
    kwargs = {}
    if "snap_length" in doc:
        kwargs["snap_length"] = int(doc["snap_length"])
    try:
        if replay is not None and interface is None:
            return CaptureSource.replay(Path(replay), realtime=bool(doc.get("realtime", False)),
                                        **kwargs)
        if interface is not None and replay is None:
            return CaptureSource.live(str(interface), **kwargs)
    except ValueError as exc:
        raise ServiceError(400, "InvalidParameterValue", str(exc)) from exc
    raise ServiceError(400, "InvalidParameterValue",
                       "source needs exactly one of 'replay' or 'interface'")


class ControlService:
    """Owns at most one Session and serves the control API over loopback."""

    def __init__(self, host: str = "127.0.0.1", port: int = 0,
                 audit_dir: Path | None = None,
                 registry: PluginRegistry | None = None,
                 snapshot_hz: float = 4.0,
                 stream_opener=None):
        self._audit_dir = Path(audit_dir) if audit_dir is not None else Path.cwd()
        self._registry = registry
        self._stream_opener = stream_opener
        self.snapshot_hz = snapshot_hz
        self.session: Session | None = None
        self.session_id: str | None = None
        self._mutate_lock = threading.Lock()

        service = self

        class Handler(BaseHTTPRequestHandler):
            protocol_version = "HTTP/1.1"

            def log_message(self, fmt, *args):  # quiet by default
                pass

            def do_GET(self):
                service._dispatch(self, "GET")

            def do_POST(self):
                service._dispatch(self, "POST")

        self._httpd = ThreadingHTTPServer((host, port), Handler)
        self._httpd.daemon_threads = True
        self._thread: threading.Thread | None = None

    # -- lifecycle ---------------------------------------------------------

    @property
    def address(self) -> tuple[str, int]:
        host, port = self._httpd.server_address[:2]
        return str(host), int(port)

    @property
    def url(self) -> str:
        host, port = self.address
        return f"http://{host}:{port}"

    def start(self) -> None:
        self._thread = threading.Thread(
            target=lambda: self._httpd.serve_forever(poll_interval=0.05),
            name="control-service", daemon=True)
        self._thread.start()

    def serve_forever(self) -> None:
        self._httpd.serve_forever()

    def shutdown(self) -> None:
        self._httpd.shutdown()
        self._httpd.server_close()
        if self.session is not None:
            self.session.close()
        if self._thread is not None:
            self._thread.join(timeout=5)

    # -- routing -----------------------------------------------------------

    _ROUTES = [
        ("POST", re.compile(r"^/session$"), "_create_session"),
        ("GET", re.compile(r"^/session$"), "_get_session"),
        ("GET", re.compile(r"^/plugins$"), "_list_plugins"),
        ("POST", re.compile(r"^/runs$"), "_start_run"),
        ("GET", re.compile(r"^/runs/(\d+)/state$"), "_run_state"),
        ("GET", re.compile(r"^/runs/(\d+)/stream$"), "_run_stream"),
        ("POST", re.compile(r"^/runs/(\d+)/stop$"), "_stop_run"),
        ("POST", re.compile(r"^/runs/(\d+)/rerun$"), "_rerun"),
        ("POST", re.compile(r"^/runs/(\d+)/relevance$"), "_relevance"),
        ("GET", re.compile(r"^/audit/export$"), "_export_audit"),
    ]

    def _dispatch(self, handler: BaseHTTPRequestHandler, method: str) -> None:
        path = handler.path.split("?", 1)[0]
        for route_method, pattern, name in self._ROUTES:
            if route_method != method:
                continue
            match = pattern.match(path)
            if match:
                try:
                    getattr(self, name)(handler, *match.groups())
                except BrokenPipeError:
                    pass
                except Exception as exc:  # noqa: BLE001 - mapped to wire errors
                    self._send_error(handler, _to_service_error(exc))
                return
        self._send_error(handler, ServiceError(404, "NotFound", f"no route {method} {path}"))

    @staticmethod
    def _read_json(handler) -> dict:
        length = int(handler.headers.get("Content-Length") or 0)
        raw = handler.rfile.read(length) if length else b""
        if not raw:
            return {}
        try:
            doc = json.loads(raw)
        except ValueError as exc:
            raise ServiceError(400, "InvalidParameterValue", f"bad JSON body: {exc}") from exc
        if not isinstance(doc, dict):
            raise ServiceError(400, "InvalidParameterValue", "body must be an object")
        return doc

    @staticmethod
    def _send_json(handler, doc: dict, status: int = 200) -> None:
        body = json.dumps(doc).encode("utf-8")
        handler.send_response(status)
        handler.send_header("Content-Type", "application/json")
        handler.send_header("Content-Length", str(len(body)))
        handler.end_headers()
        handler.wfile.write(body)

    def _send_error(self, handler, error: ServiceError) -> None:
        try:
            self._send_json(handler, {"error": {"code": error.code, "detail": error.detail}},
                            status=error.status)
        except BrokenPipeError:
            pass

    def _require_session(self) -> Session:
        if self.session is None:
            raise ServiceError(409, "NoSession", "create a session first")
        return self.session

    # -- handlers ----------------------------------------------------------

    def _create_session(self, handler) -> None:
        doc = self._read_json(handler)
        with self._mutate_lock:
            if self.session is not None:
                raise ServiceError(409, "SessionAlreadyActive",
                                   f"session {self.session_id} is active")
            logging_enabled = bool(doc.get("logging_enabled", True))
            entered_now = None
            if doc.get("entered_now"):
                try:
                    entered_now = datetime.strptime(doc["entered_now"], TIME_ANCHOR_FORMAT)
                except ValueError as exc:
                    raise ServiceError(400, "InvalidParameterValue",
                                       f"entered_now must look like '2015-06-01 12:00': {exc}") from exc
            source = _parse_source(doc.get("source") or {})
            session_id = f"s-{uuid.uuid4().hex[:8]}"
            audit_path = None
            if logging_enabled:
                self._audit_dir.mkdir(parents=True, exist_ok=True)
                audit_path = self._audit_dir / f"audit-{session_id}.log"
            kwargs = {}
            if self._registry is not None:
                kwargs["registry"] = self._registry
            if self._stream_opener is not None:
                kwargs["stream_opener"] = self._stream_opener
            self.session = Session(source, logging_enabled=logging_enabled,
                                   entered_now=entered_now, audit_path=audit_path,
                                   **kwargs)
            self.session_id = session_id
        self._send_json(handler, self._session_document())

    def _session_document(self) -> dict:
        assert self.session is not None
        return {
            "session_id": self.session_id,
            "logging_enabled": self.session.logging_enabled,
            "bypass": not self.session.logging_enabled,
            "audit_path": str(self.session.audit.path) if self.session.audit.path else None,
        }

    def _get_session(self, handler) -> None:
        self._require_session()
        self._send_json(handler, self._session_document())

    def _list_plugins(self, handler) -> None:
        registry = self.session.registry if self.session is not None else None
        if registry is None:
            from .plugins import default_registry
            registry = self._registry if self._registry is not None else default_registry()
        self._send_json(handler, {
            "plugins": [d.to_document() for d in registry.descriptors()],
        })

    def _start_run(self, handler) -> None:
        doc = self._read_json(handler)
        session = self._require_session()
        plugin_id = doc.get("plugin_id")
        if not plugin_id:
            raise ServiceError(400, "MissingParameter", "plugin_id is required")
        params = doc.get("params") or {}
        if not isinstance(params, dict):
            raise ServiceError(400, "InvalidParameterValue", "params must be an object")
        with self._mutate_lock:
            run = session.start_run(str(plugin_id), {str(k): str(v) for k, v in params.items()})
        self._send_json(handler, _run_state_document(run))

    def _run_state(self, handler, run_id: str) -> None:
        run = self._require_session().run(int(run_id))
        self._send_json(handler, _run_state_document(run))

    def _run_stream(self, handler, run_id: str) -> None:
        run = self._require_session().run(int(run_id))
        handler.send_response(200)
        handler.send_header("Content-Type", "text/event-stream")
        handler.send_header("Cache-Control", "no-store")
        handler.send_header("Connection", "close")
        handler.end_headers()
        interval = 1.0 / self.snapshot_hz
        while True:
            doc = _run_state_document(run)
            handler.wfile.write(f"data: {json.dumps(doc)}\n\n".encode("utf-8"))
            handler.wfile.flush()
            if run.status is RunStatus.STOPPED:
                return
            time.sleep(interval)

    def _stop_run(self, handler, run_id: str) -> None:
        session = self._require_session()
        with self._mutate_lock:
            result = session.stop_run(int(run_id))
        self._send_json(handler, {
            "run": _run_state_document(session.run(int(run_id))),
            "result": result.to_document(),
            "lines": result.lines(),
        })

    def _rerun(self, handler, run_id: str) -> None:
        session = self._require_session()
        with self._mutate_lock:
            run = session.rerun(int(run_id))
        doc = _run_state_document(run)
        doc["previous_run_id"] = int(run_id)
        self._send_json(handler, doc)

    def _relevance(self, handler, run_id: str) -> None:
        doc = self._read_json(handler)
        session = self._require_session()
        verdict_text = doc.get("verdict")
        try:
            verdict = RelevanceVerdict(verdict_text)
        except ValueError:
            raise ServiceError(400, "InvalidParameterValue",
                               "verdict must be 'Relevant' or 'Irrelevant'") from None
        with self._mutate_lock:
            record = session.mark_relevance(int(run_id), verdict)
        if record is None:
            self._send_json(handler, {"run_id": int(run_id), "verdict": verdict.value,
                                      "recorded": True})
        else:
            self._send_json(handler, {"run_id": int(run_id), "verdict": verdict.value,
                                      "destruction": record.to_payload()})

    def _export_audit(self, handler) -> None:
        session = self._require_session()
        lines = session.audit.export_lines()
        verdict = verify_lines(lines)
        trailer = {"trailer": {
            "chain": "Intact" if verdict.intact else "BrokenAt",
            "broken_seq": verdict.broken_seq,
            "events": len(lines) - 1 if lines else 0,
        }}
        body = ("\n".join(lines + [json.dumps(trailer)]) + "\n").encode("utf-8")
        handler.send_response(200)
        handler.send_header("Content-Type", "application/x-ndjson")
        handler.send_header("Content-Length", str(len(body)))
        handler.end_headers()
        handler.wfile.write(body)
