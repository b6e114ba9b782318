"""KnownIP: confirm one investigator-entered address without revealing
anything else.

The only state this plugin ever holds is the entered address and two
counters, so its results and live snapshots cannot leak a third-party
address by construction. Matching is exact source-IP equality,
version-sensitive; no prefix matching, which would widen the privacy
aperture.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Mapping

from ..frames import CapturedFrame, IpSourceView, extract_source_pair
from ..framework import (IdentificationPlugin, ParameterSpec, ParameterType,
                         PluginDescriptor, PluginResult, ResultKind)


@dataclass(frozen=True)
class MatchTallyResult(PluginResult):
    """Matched/total packet counts for the entered address."""

    kind = ResultKind.MATCH_TALLY

    known_address: IpSourceView
    matched: int
    total: int

    def __post_init__(self) -> None:
        if self.matched > self.total:
            raise ValueError("matched packets cannot exceed the total")

    @property
    def identified(self) -> bool:
        """At least one upstream packet carried the known source address."""
        return self.matched >= 1

    def lines(self) -> list[str]:
        return [f"matched={self.matched} total={self.total} address={self.known_address.text}"]

    def to_document(self) -> dict:
        return {
            "kind": self.kind.value,
            "known_address": self.known_address.text,
            "matched": self.matched,
            "total": self.total,
            "identified": self.identified,
        }

    def summary_counters(self) -> dict[str, int]:
        return {"matched": self.matched, "total": self.total}

    def record_count(self) -> int:
        return 1


class KnownIpPlugin(IdentificationPlugin):
    descriptor = PluginDescriptor(
        id="known_ip",
        display_name="KnownIP",
        parameters=(ParameterSpec("known_address", ParameterType.IP_ADDRESS, required=True),),
        result_kind=ResultKind.MATCH_TALLY,
    )

    def __init__(self, params: Mapping[str, Any]):
        self._known: IpSourceView = params["known_address"]
        self._matched = 0
        self._total = 0

    def observe(self, frame: CapturedFrame) -> None:
        self._total += 1
        pair = extract_source_pair(frame)
        if pair is not None and pair.src_ip == self._known:
            self._matched += 1

    def counters(self) -> dict[str, int]:
        return {"matched": self._matched, "total": self._total}

    def finalize(self) -> MatchTallyResult:
        return MatchTallyResult(known_address=self._known,
                                matched=self._matched, total=self._total)

    def destroy(self) -> None:
        self._matched = 0
        self._total = 0
