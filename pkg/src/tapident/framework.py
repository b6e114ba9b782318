"""Identification-plugin registry and the run lifecycle.

Plugins are in-process implementations of a narrow observe/finalize
contract registered statically; there is no dynamic code loading on an
evidence-handling tool. The framework validates parameters before
anything touches the audit trail, so committed parameter values are
always well-formed.
"""

from __future__ import annotations

import abc
import enum
import threading
from dataclasses import dataclass
from typing import Any, ClassVar, Mapping

from .audit import AuditEventKind, AuditLog
from .capture import FrameStream
from .frames import CapturedFrame, IpSourceView


class FrameworkError(Exception):
    code = "FrameworkError"


class DuplicatePluginIdError(FrameworkError):
    code = "DuplicatePluginId"


class UnknownPluginError(FrameworkError):
    code = "UnknownPlugin"


class MissingParameterError(FrameworkError):
    code = "MissingParameter"

    def __init__(self, name: str):
        super().__init__(f"required parameter missing: {name}")
        self.name = name


class InvalidParameterValueError(FrameworkError):
    code = "InvalidParameterValue"

    def __init__(self, name: str, reason: str):
        super().__init__(f"parameter {name}: {reason}")
        self.name = name


class RunStillActiveError(FrameworkError):
    code = "RunStillActive"


class ResultDestroyedError(FrameworkError):
    code = "ResultDestroyed"


class ParameterType(enum.Enum):
    IP_ADDRESS = "IpAddress"
    TEXT = "Text"
    UNSIGNED_INTEGER = "UnsignedInteger"


class ResultKind(enum.Enum):
    ADDRESS_LIST = "AddressList"
    MATCH_TALLY = "MatchTally"


class RunStatus(enum.Enum):
    RUNNING = "Running"
    STOPPED = "Stopped"


@dataclass(frozen=True)
class ParameterSpec:
    name: str
    value_type: ParameterType
    required: bool = True


@dataclass(frozen=True)
class PluginDescriptor:
    id: str
    display_name: str
    parameters: tuple[ParameterSpec, ...]
    result_kind: ResultKind

    def __post_init__(self) -> None:
        names = [p.name for p in self.parameters]
        if len(names) != len(set(names)):
            raise ValueError(f"duplicate parameter names in {self.id}")

    def to_document(self) -> dict:
        return {
            "id": self.id,
            "display_name": self.display_name,
            "parameters": [
                {"name": p.name, "value_type": p.value_type.value, "required": p.required}
                for p in self.parameters
            ],
            "result_kind": self.result_kind.value,
        }


class PluginResult(abc.ABC):
    """A finished run's result in one of the two observed shapes."""

    kind: ClassVar[ResultKind]

    @abc.abstractmethod
    def lines(self) -> list[str]:
        """The delimited presentation, one line per item."""

    def serialize(self) -> str:
        return "\n".join(self.lines())

    @abc.abstractmethod
    def to_document(self) -> dict:
        """Full structured form; persisted to audit only on a Relevant verdict."""

    @abc.abstractmethod
    def summary_counters(self) -> dict[str, int]:
        """Address-free counters, safe in any persisted event."""

    @abc.abstractmethod
    def record_count(self) -> int:
        """How many result records a destruction would cover."""


class IdentificationPlugin(abc.ABC):
    """One identification method. Instances are per-run and consume the
    whole stream on a single thread."""

    descriptor: ClassVar[PluginDescriptor]

    @abc.abstractmethod
    def observe(self, frame: CapturedFrame) -> None: ...

    @abc.abstractmethod
    def counters(self) -> dict[str, int]:
        """Current totals; every value is non-decreasing over a run."""

    @abc.abstractmethod
    def finalize(self) -> PluginResult: ...

    def destroy(self) -> None:
        """Overwrite any address-bearing state (Irrelevant verdict)."""


def validate_parameters(descriptor: PluginDescriptor,
                        raw: Mapping[str, str]) -> dict[str, Any]:
    """Check raw text parameters against the descriptor and convert them.

    IpAddress values become IpSourceView, UnsignedInteger become int.
    Unknown names are rejected: an evidence tool never ignores input.
    """
    known = {p.name: p for p in descriptor.parameters}
    for name in raw:
        if name not in known:
            raise InvalidParameterValueError(name, "not a parameter of this plugin")
    values: dict[str, Any] = {}
    for spec in descriptor.parameters:
        if spec.name not in raw:
            if spec.required:
                raise MissingParameterError(spec.name)
            continue
        text = str(raw[spec.name])
        if spec.value_type is ParameterType.IP_ADDRESS:
            try:
                values[spec.name] = IpSourceView.from_text(text)
            except ValueError as exc:
                raise InvalidParameterValueError(spec.name, f"not an IP address: {text!r}") from exc
        elif spec.value_type is ParameterType.UNSIGNED_INTEGER:
            try:
                number = int(text)
            except ValueError as exc:
                raise InvalidParameterValueError(spec.name, f"not an integer: {text!r}") from exc
            if number < 0:
                raise InvalidParameterValueError(spec.name, "must be non-negative")
            values[spec.name] = number
        else:
            values[spec.name] = text
    return values


class PluginRegistry:
    def __init__(self) -> None:
        self._plugins: dict[str, type[IdentificationPlugin]] = {}

    def register(self, plugin_cls: type[IdentificationPlugin]) -> None:
        plugin_id = plugin_cls.descriptor.id
        if plugin_id in self._plugins:
            raise DuplicatePluginIdError(f"plugin id already registered: {plugin_id}")
        self._plugins[plugin_id] = plugin_cls

    def descriptors(self) -> list[PluginDescriptor]:
        return [cls.descriptor for cls in self._plugins.values()]

    def get(self, plugin_id: str) -> type[IdentificationPlugin]:
        try:
            return self._plugins[plugin_id]
        except KeyError:
            raise UnknownPluginError(f"no such plugin: {plugin_id}") from None

    def create(self, plugin_id: str, raw_params: Mapping[str, str]) -> IdentificationPlugin:
        cls = self.get(plugin_id)
        return cls(validate_parameters(cls.descriptor, raw_params))


class PluginRun:
    """One live run: a plugin consuming one stream on a worker thread.

    Live counters are published as immutable snapshots built by the run
    thread, so readers never observe a torn update.
    """

    def __init__(self, run_id: int, plugin: IdentificationPlugin,
                 raw_params: Mapping[str, str], stream: FrameStream,
                 audit: AuditLog, started_at_offset_ns: int):
        self.run_id = run_id
        self.plugin_id = plugin.descriptor.id
        self.parameters = dict(raw_params)
        self.started_at_offset_ns = started_at_offset_ns
        self.stopped_at_offset_ns: int | None = None
        self._plugin = plugin
        self._stream = stream
        self._audit = audit
        self._status = RunStatus.RUNNING
        self._counters: dict[str, int] = dict(plugin.counters())
        self._result: PluginResult | None = None
        self._result_destroyed = False
        self._stop_lock = threading.Lock()
        self._thread = threading.Thread(
            target=self._consume, name=f"run-{run_id}-{self.plugin_id}", daemon=True
        )

    def _start(self) -> None:
        self._thread.start()

    def _consume(self) -> None:
        for frame in self._stream:
            self._plugin.observe(frame)
            self._counters = dict(self._plugin.counters())
        self._counters = dict(self._plugin.counters())

    @property
    def status(self) -> RunStatus:
        return self._status

    @property
    def stream_terminal(self):
        return self._stream.terminal

    def snapshot(self) -> dict[str, int]:
        """The latest published counters (an immutable copy)."""
        return dict(self._counters)

    def wait(self, timeout: float | None = None) -> bool:
        """Block until the stream is exhausted; True if it finished."""
        self._thread.join(timeout)
        return not self._thread.is_alive()

    def stop(self) -> PluginResult:
        """Stop the stream, finalize, and return the result (idempotent)."""
        with self._stop_lock:
            if self._result is not None:
                return self._result
            if self._result_destroyed:
                raise ResultDestroyedError(f"run {self.run_id} result was destroyed")
            self._stream.stop()
            self._thread.join()
            result = self._plugin.finalize()
            self._result = result
            self._status = RunStatus.STOPPED
            terminal = self._stream.terminal
            event = self._audit.append(AuditEventKind.RUN_STOPPED, {
                "run_id": self.run_id,
                "plugin_id": self.plugin_id,
                "stream_terminal": terminal.kind.value if terminal else None,
                "counters": result.summary_counters(),
            })
            self.stopped_at_offset_ns = event.offset_ns
            return result

    @property
    def result(self) -> PluginResult | None:
        return self._result

    def destroy_result(self) -> int:
        """Overwrite the in-memory result; returns the destroyed record count."""
        with self._stop_lock:
            if self._result is None:
                raise RunStillActiveError(f"run {self.run_id} has no result to destroy")
            count = self._result.record_count()
            self._plugin.destroy()
            self._result = None
            self._result_destroyed = True
            return count


def start_run(registry: PluginRegistry, plugin_id: str, raw_params: Mapping[str, str],
              stream: FrameStream, audit: AuditLog, run_id: int) -> PluginRun:
    """Validate, commit the selection and parameters to audit, then run.

    Parameter events are appended before the first frame is consumed, so
    the trail always shows what the decision was based on.
    """
    plugin = registry.create(plugin_id, raw_params)
    audit.append(AuditEventKind.PLUGIN_SELECTED, {"plugin_id": plugin_id, "run_id": run_id})
    for spec in plugin.descriptor.parameters:
        if spec.name in raw_params:
            audit.append(AuditEventKind.PARAMETER_ENTERED, {
                "run_id": run_id, "name": spec.name, "value": str(raw_params[spec.name]),
            })
    started = audit.append(AuditEventKind.RUN_STARTED, {"run_id": run_id, "plugin_id": plugin_id})
    run = PluginRun(run_id, plugin, raw_params, stream, audit, started.offset_ns)
    run._start()
    return run


def rerun(previous: PluginRun, stream: FrameStream, audit: AuditLog,
          registry: PluginRegistry, run_id: int) -> PluginRun:
    """Run the same plugin again with identical parameters under a new id."""
    if previous.status is not RunStatus.STOPPED:
        raise RunStillActiveError(f"run {previous.run_id} is still running")
    audit.append(AuditEventKind.RERUN, {
        "previous_run_id": previous.run_id, "run_id": run_id,
        "plugin_id": previous.plugin_id,
    })
    return start_run(registry, previous.plugin_id, previous.parameters, stream, audit, run_id)
