"""SourceAddr and KnownIP behaviour against the brute-force oracle."""

import random

from hypothesis import given, settings
from hypothesis import strategies as st

from oracle import (arp_frame, count_source_pairs, ipv4_frame,
                    random_fixture_frames, write_pcap)
from tapident.capture import CaptureSource, SequenceFrameStream, open_source
from tapident.frames import CapturedFrame, IpSourceView, mac_text
from tapident.plugins import KnownIpPlugin, SourceAddrPlugin


def captured(data: bytes, offset_ns: int = 0) -> CapturedFrame:
    return CapturedFrame(capture_offset_ns=offset_ns, original_length=max(len(data), 1500),
                         data=data[:34])


def run_over_pcap(plugin, path, snap=34):
    stream = open_source(CaptureSource.replay(path, snap_length=snap))
    for frame in stream:
        plugin.observe(frame)
    return plugin.finalize()


class TestSourceAddrObserve:
    def test_insertion_then_increment(self):
        plugin = SourceAddrPlugin({})
        frame = captured(ipv4_frame("02:00:00:00:00:aa", "192.0.2.7"), offset_ns=5)
        plugin.observe(frame)
        result_one = SourceAddrPlugin({})
        result_one.observe(frame)
        result_one.observe(frame)
        one = plugin.finalize()
        two = result_one.finalize()
        assert len(one.records) == 1 and one.records[0].packet_count == 1
        assert len(two.records) == 1 and two.records[0].packet_count == 2
        assert two.total_frames == 2
        assert two.records[0].first_seen_offset_ns == 5

    def test_arp_recorded_with_absent_ip(self):
        plugin = SourceAddrPlugin({})
        plugin.observe(captured(arp_frame("02:00:00:00:00:aa")))
        result = plugin.finalize()
        assert len(result.records) == 1
        assert result.records[0].src_ip is None
        assert result.lines()[0] == "02:00:00:00:00:aa\t-\t1"

    def test_undecodable_counted_separately(self):
        plugin = SourceAddrPlugin({})
        plugin.observe(captured(b"\x00" * 5))
        plugin.observe(captured(ipv4_frame("02:00:00:00:00:aa", "192.0.2.7")))
        result = plugin.finalize()
        assert result.undecodable_frames == 1
        assert result.total_frames == 2
        assert sum(r.packet_count for r in result.records) + result.undecodable_frames \
            == result.total_frames

    def test_finalize_orders_by_first_seen(self):
        plugin = SourceAddrPlugin({})
        plugin.observe(captured(ipv4_frame("02:00:00:00:00:bb", "192.0.2.8"), offset_ns=5))
        plugin.observe(captured(ipv4_frame("02:00:00:00:00:aa", "192.0.2.7"), offset_ns=3))
        # second sighting of the later host must not reorder anything
        plugin.observe(captured(ipv4_frame("02:00:00:00:00:bb", "192.0.2.8"), offset_ns=9))
        result = plugin.finalize()
        assert [r.first_seen_offset_ns for r in result.records] == [3, 5]

    def test_empty_state_empty_list(self):
        assert SourceAddrPlugin({}).finalize().lines() == []


class TestSourceAddrOracle:
    def test_three_host_fixture_counts_sum(self, tmp_path):
        rng = random.Random(11)
        hosts = [("02:00:00:00:00:%02x" % i, f"192.0.2.{i}") for i in (1, 2, 3)]
        frames = [ipv4_frame(*hosts[rng.randrange(3)]) for _ in range(100)]
        path = write_pcap(tmp_path / "f.pcap", frames)
        result = run_over_pcap(SourceAddrPlugin({}), path)
        oracle = count_source_pairs(path, snap=34)
        assert len(result.records) == 3
        assert sum(r.packet_count for r in result.records) == 100 - result.undecodable_frames
        got = {(mac_text(r.src_mac), r.src_ip.text if r.src_ip else None): r.packet_count
               for r in result.records}
        assert got == oracle["pairs"]

    def test_mixed_fixture_set_equivalence(self, tmp_path):
        rng = random.Random(12)
        hosts = [("02:00:00:00:01:%02x" % i, f"10.0.0.{i}") for i in range(6)]
        hosts.append(("02:00:00:00:02:01", "2001:db8::5"))
        frames = random_fixture_frames(rng, 3000, hosts)
        path = write_pcap(tmp_path / "mixed.pcap", frames)
        result = run_over_pcap(SourceAddrPlugin({}), path)
        oracle = count_source_pairs(path, snap=34)
        got = {(mac_text(r.src_mac), r.src_ip.text if r.src_ip else None): r.packet_count
               for r in result.records}
        assert got == oracle["pairs"]
        assert result.total_frames == oracle["total"]
        assert result.undecodable_frames == oracle["undecodable"]

    def test_snap_34_loses_nothing_for_plain_v4(self, tmp_path):
        rng = random.Random(13)
        hosts = [("02:00:00:00:03:%02x" % i, f"172.16.0.{i}") for i in range(5)]
        frames = [ipv4_frame(*hosts[rng.randrange(5)], payload=rng.randbytes(rng.randrange(400)))
                  for _ in range(1500)]
        path = write_pcap(tmp_path / "v4.pcap", frames)
        truncated = run_over_pcap(SourceAddrPlugin({}), path, snap=34)
        full = run_over_pcap(SourceAddrPlugin({}), path, snap=65535)
        key = lambda r: (mac_text(r.src_mac), r.src_ip.text if r.src_ip else None)  # noqa: E731
        assert {key(r) for r in truncated.records} == {key(r) for r in full.records}

    def test_replay_determinism_of_finalize(self, tmp_path, three_hosts_pcap):
        first = run_over_pcap(SourceAddrPlugin({}), three_hosts_pcap)
        second = run_over_pcap(SourceAddrPlugin({}), three_hosts_pcap)
        assert first.lines() == second.lines()


class TestKnownIp:
    def _plugin(self, address="192.0.2.7"):
        return KnownIpPlugin({"known_address": IpSourceView.from_text(address)})

    def test_empty_stream_zero_tally(self):
        result = self._plugin().finalize()
        assert (result.matched, result.total) == (0, 0)

    def test_match_counts_exact_equality_only(self):
        plugin = self._plugin("192.0.2.7")
        plugin.observe(captured(ipv4_frame("02:00:00:00:00:aa", "192.0.2.7")))
        plugin.observe(captured(ipv4_frame("02:00:00:00:00:bb", "192.0.2.77")))
        plugin.observe(captured(arp_frame("02:00:00:00:00:cc")))
        result = plugin.finalize()
        assert (result.matched, result.total) == (1, 3)

    def test_v4_known_never_matches_v6_frames(self):
        from oracle import ipv6_frame
        plugin = self._plugin("192.0.2.7")
        frame = ipv6_frame("02:00:00:00:00:aa", "::ffff:192.0.2.7")
        plugin.observe(CapturedFrame(0, len(frame), frame))  # untruncated so v6 parses
        assert plugin.finalize().matched == 0

    def test_single_match_confirms_presence(self, tmp_path):
        rng = random.Random(14)
        frames = [ipv4_frame("02:00:00:00:00:bb", "10.9.8.7") for _ in range(49_999)]
        frames.insert(rng.randrange(len(frames)), ipv4_frame("02:00:00:00:00:aa", "192.0.2.7"))
        plugin = self._plugin("192.0.2.7")
        for data in frames:
            plugin.observe(captured(data))
        result = plugin.finalize()
        assert result.total == 50_000
        assert result.matched == 1
        assert result.identified is True

    def test_serialization_shape(self):
        plugin = self._plugin("192.0.2.7")
        plugin.observe(captured(ipv4_frame("02:00:00:00:00:aa", "192.0.2.7")))
        assert plugin.finalize().lines() == ["matched=1 total=1 address=192.0.2.7"]

    @settings(max_examples=50, deadline=None)
    @given(split=st.integers(min_value=0, max_value=60), seed=st.integers(0, 2**16))
    def test_tally_additivity_over_concatenation(self, split, seed):
        rng = random.Random(seed)
        hosts = [("02:00:00:00:09:01", "192.0.2.7"), ("02:00:00:00:09:02", "192.0.2.9")]
        frames = [captured(ipv4_frame(*hosts[rng.randrange(2)])) for _ in range(60)]
        left, right = frames[:split], frames[split:]

        def tally(chunk):
            plugin = self._plugin("192.0.2.7")
            for frame in chunk:
                plugin.observe(frame)
            fin = plugin.finalize()
            return fin.matched, fin.total

        whole = tally(frames)
        parts = tally(left), tally(right)
        assert whole == (parts[0][0] + parts[1][0], parts[0][1] + parts[1][1])


class TestKnownIpPrivacy:
    SENTINELS = [f"203.0.113.{i}" for i in range(1, 11)]

    def test_result_and_snapshots_contain_no_third_party_address(self):
        """Serialized tallies never contain any sentinel address, textual
        or binary."""
        import ipaddress
        plugin = KnownIpPlugin({"known_address": IpSourceView.from_text("192.0.2.7")})
        snapshots = []
        rng = random.Random(15)
        for i in range(500):
            sentinel = self.SENTINELS[rng.randrange(10)]
            plugin.observe(captured(ipv4_frame("02:00:00:00:00:a1", sentinel)))
            snapshots.append(str(plugin.counters()))
        result = plugin.finalize()
        blob = (result.serialize() + str(result.to_document()) + "".join(snapshots)).encode()
        for sentinel in self.SENTINELS:
            assert sentinel.encode() not in blob
            assert ipaddress.IPv4Address(sentinel).packed not in blob
