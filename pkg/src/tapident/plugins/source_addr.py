"""SourceAddr: enumerate every unique upstream (MAC, IP) source pair.

Frames whose Ethernet header decodes but that carry no IP (ARP and other
ethertypes) still yield a record with an absent IP, because a MAC alone
identifies a host. Undecodable frames are counted, never dropped
silently.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Mapping

from ..frames import (CapturedFrame, IpSourceView, SourceAddressRecord,
                      extract_source_pair, mac_text)
from ..framework import (IdentificationPlugin, PluginDescriptor, PluginResult,
                         ResultKind)


@dataclass(frozen=True)
class AddressListResult(PluginResult):
    """Final SourceAddr output, ordered by first appearance."""

    kind = ResultKind.ADDRESS_LIST

    records: tuple[SourceAddressRecord, ...]
    total_frames: int
    undecodable_frames: int

    def __post_init__(self) -> None:
        counted = sum(r.packet_count for r in self.records) + self.undecodable_frames
        if counted != self.total_frames:
            raise ValueError("record counts and undecodable frames must add up to the total")

    def lines(self) -> list[str]:
        return [
            "\t".join((
                mac_text(r.src_mac),
                r.src_ip.text if r.src_ip is not None else "-",
                str(r.packet_count),
            ))
            for r in self.records
        ]

    def to_document(self) -> dict:
        return {
            "kind": self.kind.value,
            "total_frames": self.total_frames,
            "undecodable_frames": self.undecodable_frames,
            "records": [
                {
                    "src_mac": mac_text(r.src_mac),
                    "src_ip": r.src_ip.text if r.src_ip is not None else None,
                    "packet_count": r.packet_count,
                    "first_seen_offset_ns": r.first_seen_offset_ns,
                }
                for r in self.records
            ],
        }

    def summary_counters(self) -> dict[str, int]:
        return {
            "total_frames": self.total_frames,
            "unique_records": len(self.records),
            "undecodable_frames": self.undecodable_frames,
        }

    def record_count(self) -> int:
        return len(self.records)


class SourceAddrPlugin(IdentificationPlugin):
    descriptor = PluginDescriptor(
        id="source_addr",
        display_name="SourceAddr",
        parameters=(),
        result_kind=ResultKind.ADDRESS_LIST,
    )

    def __init__(self, params: Mapping[str, Any]):
        # key -> [count, first_seen_offset_ns]; dict keeps insertion order,
        # so equal first-seen offsets still present deterministically.
        self._records: dict[tuple[bytes, IpSourceView | None], list[int]] = {}
        self._total = 0
        self._undecodable = 0

    def observe(self, frame: CapturedFrame) -> None:
        self._total += 1
        pair = extract_source_pair(frame)
        if pair is None:
            self._undecodable += 1
            return
        entry = self._records.get((pair.src_mac, pair.src_ip))
        if entry is None:
            self._records[(pair.src_mac, pair.src_ip)] = [1, frame.capture_offset_ns]
        else:
            entry[0] += 1

    def counters(self) -> dict[str, int]:
        return {
            "total_frames": self._total,
            "unique_records": len(self._records),
            "undecodable_frames": self._undecodable,
        }

    def finalize(self) -> AddressListResult:
        records = [
            SourceAddressRecord(mac, ip, count, first_seen)
            for (mac, ip), (count, first_seen) in self._records.items()
        ]
        records.sort(key=lambda r: r.first_seen_offset_ns)
        return AddressListResult(
            records=tuple(records),
            total_frames=self._total,
            undecodable_frames=self._undecodable,
        )

    def destroy(self) -> None:
        self._records.clear()
