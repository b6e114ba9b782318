"""Frame acquisition: pcap replay files and the receive-only live adapter.

Both paths produce the same FrameStream contract, so everything above
the engine can be tested hermetically against replay fixtures. The snap
length is enforced here, at the earliest point a frame exists in memory.
"""

from __future__ import annotations

import enum
import socket
import struct
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import BinaryIO, Iterable, Iterator, Protocol

from .frames import ETH_HEADER_LEN, CapturedFrame, LinkType

DEFAULT_SNAP_LENGTH = 34  # Ethernet header + fixed IPv4 header, headers only

PCAP_MAGIC = 0xA1B2C3D4
PCAP_GLOBAL_HEADER_LEN = 24
PCAP_RECORD_HEADER_LEN = 16
PCAP_LINKTYPE_ETHERNET = 1


class CaptureError(Exception):
    """Base class for capture-source failures; ``code`` is the stable
    machine-readable name used by the CLI and the control service."""

    code = "CaptureError"


class BadFileMagicError(CaptureError):
    code = "BadFileMagic"


class InterfaceNotFoundError(CaptureError):
    code = "InterfaceNotFound"


class PermissionDeniedError(CaptureError):
    code = "PermissionDenied"


@dataclass(frozen=True)
class CaptureSource:
    """Where frames come from: exactly one of a live interface or a replay file."""

    interface: str | None = None
    replay_path: Path | None = None
    snap_length: int = DEFAULT_SNAP_LENGTH
    realtime: bool = False

    def __post_init__(self) -> None:
        if (self.interface is None) == (self.replay_path is None):
            raise ValueError("exactly one of interface / replay_path must be set")
        if self.snap_length < ETH_HEADER_LEN:
            raise ValueError(f"snap_length must cover an Ethernet header ({ETH_HEADER_LEN} octets)")

    @classmethod
    def live(cls, interface: str, snap_length: int = DEFAULT_SNAP_LENGTH) -> "CaptureSource":
        return cls(interface=interface, snap_length=snap_length)

    @classmethod
    def replay(cls, path: str | Path, snap_length: int = DEFAULT_SNAP_LENGTH,
               realtime: bool = False) -> "CaptureSource":
        return cls(replay_path=Path(path), snap_length=snap_length, realtime=realtime)


class TerminalKind(enum.Enum):
    END_OF_FILE = "EndOfFile"
    STOPPED = "Stopped"
    SOURCE_ERROR = "SourceError"


@dataclass(frozen=True)
class Terminal:
    kind: TerminalKind
    detail: str | None = None


class _Finished(Exception):
    """Internal: a producer signalling its terminal marker."""

    def __init__(self, terminal: Terminal):
        self.terminal = terminal


class FrameStream:
    """Ordered CapturedFrame iterator with a terminal marker.

    ``stop()`` may be called from any thread; the stream terminates with
    Stopped no later than the next frame boundary and stop is idempotent
    (stopping a finished stream leaves the marker unchanged).
    """

    def __init__(self) -> None:
        self._stop_requested = threading.Event()
        self._terminal: Terminal | None = None

    def __iter__(self) -> Iterator[CapturedFrame]:
        return self

    def __next__(self) -> CapturedFrame:
        if self._terminal is not None:
            raise StopIteration
        if self._stop_requested.is_set():
            self._finish(Terminal(TerminalKind.STOPPED))
            raise StopIteration
        try:
            return self._produce()
        except _Finished as fin:
            self._finish(fin.terminal)
            raise StopIteration from None

    def stop(self) -> None:
        self._stop_requested.set()

    @property
    def terminal(self) -> Terminal | None:
        return self._terminal

    def _finish(self, terminal: Terminal) -> None:
        if self._terminal is None:
            self._terminal = terminal
            self._close()

    def _produce(self) -> CapturedFrame:
        raise NotImplementedError

    def _close(self) -> None:
        """Release resources; called exactly once when the terminal is set."""


class SequenceFrameStream(FrameStream):
    """A stream over an in-memory frame sequence (tests, tap simulation)."""

    def __init__(self, frames: Iterable[CapturedFrame]):
        super().__init__()
        self._it = iter(frames)

    def _produce(self) -> CapturedFrame:
        try:
            return next(self._it)
        except StopIteration:
            raise _Finished(Terminal(TerminalKind.END_OF_FILE)) from None


class ReplayFrameStream(FrameStream):
    """Classic-pcap replay. Offsets are the file's own timestamps rebased
    so the first record sits at offset 0 (clamped non-decreasing)."""

    def __init__(self, fh: BinaryIO, byte_order: str, snap_length: int, realtime: bool):
        super().__init__()
        self._fh = fh
        self._order = byte_order
        self._snap = snap_length
        self._realtime = realtime
        self._base_ns: int | None = None
        self._prev_offset_ns = 0

    def _produce(self) -> CapturedFrame:
        header = self._fh.read(PCAP_RECORD_HEADER_LEN)
        if not header:
            raise _Finished(Terminal(TerminalKind.END_OF_FILE))
        if len(header) < PCAP_RECORD_HEADER_LEN:
            raise _Finished(Terminal(TerminalKind.SOURCE_ERROR, "truncated pcap record header"))
        ts_sec, ts_usec, incl_len, orig_len = struct.unpack(self._order + "IIII", header)
        data = self._fh.read(incl_len)
        if len(data) < incl_len:
            raise _Finished(Terminal(TerminalKind.SOURCE_ERROR, "truncated pcap record data"))

        ts_ns = ts_sec * 1_000_000_000 + ts_usec * 1_000
        if self._base_ns is None:
            self._base_ns = ts_ns
        offset_ns = max(ts_ns - self._base_ns, self._prev_offset_ns)

        if self._realtime:
            delay_s = (offset_ns - self._prev_offset_ns) / 1e9
            if delay_s > 0 and self._stop_requested.wait(delay_s):
                raise _Finished(Terminal(TerminalKind.STOPPED))
        self._prev_offset_ns = offset_ns

        stored = data[: self._snap]
        # A corrupt orig_len smaller than the stored data must not crash the tap.
        return CapturedFrame(
            capture_offset_ns=offset_ns,
            original_length=max(orig_len, len(stored)),
            data=stored,
            link_type=LinkType.ETHERNET,
        )

    def _close(self) -> None:
        self._fh.close()


class LiveAdapter(Protocol):
    """Receive-only access to one interface. Implementations must never
    transmit; the engine only ever calls open/recv/close."""

    def open(self, interface: str, snap_length: int) -> None: ...

    def recv(self, timeout_s: float) -> tuple[bytes, int] | None:
        """Next raw frame as (data, original_length), or None on timeout."""
        ...

    def close(self) -> None: ...


class PacketSocketAdapter:
    """AF_PACKET capture socket (Linux). Opened for reception only and
    never written to, matching the receive-only tap cable."""

    def __init__(self) -> None:
        self._sock: socket.socket | None = None

    def open(self, interface: str, snap_length: int) -> None:
        if not hasattr(socket, "AF_PACKET"):
            raise InterfaceNotFoundError("AF_PACKET capture unsupported on this platform")
        try:
            sock = socket.socket(socket.AF_PACKET, socket.SOCK_RAW, socket.htons(0x0003))
            sock.bind((interface, 0))
        except PermissionError as exc:
            raise PermissionDeniedError(f"cannot open {interface}: {exc}") from exc
        except OSError as exc:
            raise InterfaceNotFoundError(f"cannot open {interface}: {exc}") from exc
        self._sock = sock

    def recv(self, timeout_s: float) -> tuple[bytes, int] | None:
        assert self._sock is not None
        self._sock.settimeout(timeout_s)
        try:
            data = self._sock.recv(65535)
        except TimeoutError:
            return None
        except socket.timeout:  # pre-3.10 alias, kept for safety
            return None
        return data, len(data)

    def close(self) -> None:
        if self._sock is not None:
            self._sock.close()
            self._sock = None


class LiveFrameStream(FrameStream):
    """Frames from a LiveAdapter; offsets count from stream open."""

    _POLL_S = 0.2

    def __init__(self, adapter: LiveAdapter, snap_length: int,
                 monotonic_ns=time.monotonic_ns):
        super().__init__()
        self._adapter = adapter
        self._snap = snap_length
        self._monotonic_ns = monotonic_ns
        self._anchor_ns = monotonic_ns()
        self._prev_offset_ns = 0

    def _produce(self) -> CapturedFrame:
        while True:
            if self._stop_requested.is_set():
                raise _Finished(Terminal(TerminalKind.STOPPED))
            try:
                got = self._adapter.recv(self._POLL_S)
            except OSError as exc:
                raise _Finished(Terminal(TerminalKind.SOURCE_ERROR, str(exc))) from exc
            if got is None:
                continue
            data, original_length = got
            offset_ns = max(self._monotonic_ns() - self._anchor_ns, self._prev_offset_ns)
            self._prev_offset_ns = offset_ns
            return CapturedFrame(
                capture_offset_ns=offset_ns,
                original_length=original_length,
                data=data[: self._snap],
                link_type=LinkType.ETHERNET,
            )

    def _close(self) -> None:
        self._adapter.close()


def _read_pcap_header(fh: BinaryIO, path: Path) -> str:
    header = fh.read(PCAP_GLOBAL_HEADER_LEN)
    if len(header) < PCAP_GLOBAL_HEADER_LEN:
        raise BadFileMagicError(f"{path}: too short for a pcap global header")
    for order in ("<", ">"):
        (magic,) = struct.unpack(order + "I", header[:4])
        if magic == PCAP_MAGIC:
            break
    else:
        raise BadFileMagicError(f"{path}: not a classic pcap file (magic 0x{header[:4].hex()})")
    _maj, _min, _zone, _sig, _snaplen, network = struct.unpack(order + "HHiIII", header[4:])
    if network != PCAP_LINKTYPE_ETHERNET:
        raise BadFileMagicError(f"{path}: unsupported link type {network} (Ethernet only)")
    return order


def open_source(source: CaptureSource, adapter: LiveAdapter | None = None) -> FrameStream:
    """Open a capture source and return its frame stream.

    Open-time failures raise the typed CaptureError subclasses above;
    failures after opening terminate the stream with a SourceError
    marker instead (each reported exactly once).
    """
    if source.replay_path is not None:
        path = source.replay_path
        try:
            fh = open(path, "rb")
        except OSError as exc:
            raise BadFileMagicError(f"cannot read pcap file: {exc}") from exc
        try:
            order = _read_pcap_header(fh, path)
        except BadFileMagicError:
            fh.close()
            raise
        return ReplayFrameStream(fh, order, source.snap_length, source.realtime)

    assert source.interface is not None
    live_adapter = adapter if adapter is not None else PacketSocketAdapter()
    live_adapter.open(source.interface, source.snap_length)
    return LiveFrameStream(live_adapter, source.snap_length)
