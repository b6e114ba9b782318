import sys
from pathlib import Path

import pytest

# Tests import the oracle helpers as a plain module.
sys.path.insert(0, str(Path(__file__).parent))

from oracle import ipv4_frame, write_pcap  # noqa: E402


@pytest.fixture
def three_hosts_pcap(tmp_path):
    """100 frames from three v4 hosts, a staple fixture."""
    hosts = [
        ("02:00:00:00:00:aa", "192.0.2.7"),
        ("02:00:00:00:00:bb", "192.0.2.8"),
        ("02:00:00:00:00:cc", "198.51.100.23"),
    ]
    frames = [ipv4_frame(hosts[i % 3][0], hosts[i % 3][1], payload=b"x" * 26)
              for i in range(100)]
    return write_pcap(tmp_path / "three_hosts.pcap", frames)
