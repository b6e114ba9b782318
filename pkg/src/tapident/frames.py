"""Ethernet and IP header dissection over truncated frames.

Only upstream *source* addresses are ever extracted. The parsers stop at
the IP header and never touch payload bytes, so they stay correct (and
privacy-preserving) under the default 34-octet snap length.
"""

from __future__ import annotations

import enum
import ipaddress
from dataclasses import dataclass

ETHERTYPE_IPV4 = 0x0800
ETHERTYPE_ARP = 0x0806
ETHERTYPE_VLAN = 0x8100
ETHERTYPE_IPV6 = 0x86DD

# 802.3 encodes a length, not a type, below this bound.
MIN_ETHERTYPE = 0x0600

ETH_HEADER_LEN = 14
VLAN_TAG_LEN = 4
IPV4_HEADER_LEN = 20
IPV6_HEADER_LEN = 40


class LinkType(enum.Enum):
    ETHERNET = 1


class DissectError(Exception):
    """Base class for frame decode failures."""


class TooShortError(DissectError):
    """Frame data ends before the Ethernet header does."""


class NotIpError(DissectError):
    """EtherType carries no IP packet (ARP, 802.3 length field, ...)."""


class TruncatedError(DissectError):
    """Frame is IP but the snap length cut the header off."""


@dataclass(frozen=True)
class CapturedFrame:
    """One truncated, timestamped link-layer frame as stored under the snap rule.

    ``capture_offset_ns`` counts from the capture source's own anchor
    (first record of a replay file, stream open for live capture).
    """

    capture_offset_ns: int
    original_length: int
    data: bytes
    link_type: LinkType = LinkType.ETHERNET

    def __post_init__(self) -> None:
        if self.capture_offset_ns < 0:
            raise ValueError("capture offset must be non-negative")
        if len(self.data) > self.original_length:
            raise ValueError("stored data longer than the frame on the wire")


class IpVersion(enum.Enum):
    V4 = 4
    V6 = 6


@dataclass(frozen=True)
class IpSourceView:
    """A source IP address read from a frame, compared octet-for-octet.

    Version matters: a v4 address never equals a v6 address, even a
    mapped one.
    """

    version: IpVersion
    packed: bytes

    def __post_init__(self) -> None:
        expected = 4 if self.version is IpVersion.V4 else 16
        if len(self.packed) != expected:
            raise ValueError(f"{self.version.name} source must be {expected} octets")

    @classmethod
    def from_text(cls, text: str) -> "IpSourceView":
        addr = ipaddress.ip_address(text)
        version = IpVersion.V4 if addr.version == 4 else IpVersion.V6
        return cls(version, addr.packed)

    @property
    def text(self) -> str:
        """Canonical text form (lowercase, compressed for v6)."""
        return str(ipaddress.ip_address(self.packed))


@dataclass(frozen=True)
class EthernetHeaderView:
    dst_mac: bytes
    src_mac: bytes
    ethertype: int
    vlan_id: int | None = None

    @property
    def payload_offset(self) -> int:
        """Offset of the first octet after the (possibly tagged) header."""
        return ETH_HEADER_LEN + (VLAN_TAG_LEN if self.vlan_id is not None else 0)


@dataclass(frozen=True)
class SourcePair:
    """The identifying (MAC, IP) pair a frame reveals; src_ip is None for
    non-IP ethertypes such as ARP."""

    src_mac: bytes
    src_ip: IpSourceView | None


@dataclass(frozen=True)
class SourceAddressRecord:
    """A unique upstream source pair with its occurrence count."""

    src_mac: bytes
    src_ip: IpSourceView | None
    packet_count: int
    first_seen_offset_ns: int

    def __post_init__(self) -> None:
        if self.packet_count < 1:
            raise ValueError("a record exists only once a packet was seen")


def parse_ethernet(frame: CapturedFrame) -> EthernetHeaderView:
    """Decode the Ethernet header, skipping at most one 802.1Q tag.

    Raises TooShortError when fewer than 14 octets were stored (18 with
    a VLAN tag); the caller must count such frames as undecodable.
    """
    if frame.link_type is not LinkType.ETHERNET:
        raise ValueError(f"cannot parse {frame.link_type} as Ethernet")
    data = frame.data
    if len(data) < ETH_HEADER_LEN:
        raise TooShortError(f"{len(data)} octets, Ethernet header needs {ETH_HEADER_LEN}")
    dst_mac = bytes(data[0:6])
    src_mac = bytes(data[6:12])
    ethertype = int.from_bytes(data[12:14], "big")
    vlan_id = None
    if ethertype == ETHERTYPE_VLAN:
        if len(data) < ETH_HEADER_LEN + VLAN_TAG_LEN:
            raise TooShortError("802.1Q tag present but cut off")
        vlan_id = int.from_bytes(data[14:16], "big") & 0x0FFF  # TCI low 12 bits
        ethertype = int.from_bytes(data[16:18], "big")
    return EthernetHeaderView(dst_mac=dst_mac, src_mac=src_mac, ethertype=ethertype, vlan_id=vlan_id)


def parse_ip_source(frame: CapturedFrame, eth: EthernetHeaderView) -> IpSourceView:
    """Read the source address out of the IP header following ``eth``.

    Which header layout to expect is decided purely by ethertype. Only
    the fixed header prefix is required to be present; nothing past the
    source address field is ever read, so IPv4 options are irrelevant.
    """
    off = eth.payload_offset
    data = frame.data
    if eth.ethertype == ETHERTYPE_IPV4:
        if len(data) < off + IPV4_HEADER_LEN:
            raise TruncatedError("IPv4 header cut off by snap length")
        return IpSourceView(IpVersion.V4, bytes(data[off + 12:off + 16]))
    if eth.ethertype == ETHERTYPE_IPV6:
        if len(data) < off + IPV6_HEADER_LEN:
            raise TruncatedError("IPv6 header cut off by snap length")
        return IpSourceView(IpVersion.V6, bytes(data[off + 8:off + 24]))
    raise NotIpError(f"ethertype 0x{eth.ethertype:04x}")


def extract_source_pair(frame: CapturedFrame) -> SourcePair | None:
    """Total composition of the two parsers.

    Returns None for undecodable frames (Ethernet header too short, or
    an IP header the snap cut off); a SourcePair with src_ip=None for
    sound non-IP frames. Never raises on any input bytes.
    """
    try:
        eth = parse_ethernet(frame)
    except TooShortError:
        return None
    try:
        ip = parse_ip_source(frame, eth)
    except NotIpError:
        return SourcePair(eth.src_mac, None)
    except TruncatedError:
        return None
    return SourcePair(eth.src_mac, ip)


def mac_text(mac: bytes) -> str:
    """Lowercase colon-separated hex, the presentation form used everywhere."""
    return ":".join(f"{octet:02x}" for octet in mac)
