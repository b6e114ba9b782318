"""Control service endpoints over real loopback HTTP, including SSE."""

import json

import httpx
import pytest

from oracle import ipv4_frame, write_pcap
from tapident.service import ControlService


@pytest.fixture
def service(tmp_path):
    svc = ControlService(audit_dir=tmp_path / "audit", snapshot_hz=50.0)
    svc.start()
    yield svc
    svc.shutdown()


@pytest.fixture
def client(service):
    with httpx.Client(base_url=service.url, timeout=10.0) as c:
        yield c


def make_session(client, pcap, logging_enabled=True, **overrides):
    body = {
        "logging_enabled": logging_enabled,
        "entered_now": "2015-06-01 12:00",
        "source": {"replay": str(pcap), "snap_length": 34},
    }
    if not logging_enabled:
        body.pop("entered_now")
    body.update(overrides)
    return client.post("/session", json=body)


class TestSession:
    def test_create_session(self, client, three_hosts_pcap):
        r = make_session(client, three_hosts_pcap)
        assert r.status_code == 200
        doc = r.json()
        assert doc["logging_enabled"] is True
        assert doc["audit_path"]

    def test_second_session_conflicts(self, client, three_hosts_pcap):
        assert make_session(client, three_hosts_pcap).status_code == 200
        r = make_session(client, three_hosts_pcap)
        assert r.status_code == 409
        assert r.json()["error"]["code"] == "SessionAlreadyActive"

    def test_logging_without_time_anchor(self, client, three_hosts_pcap):
        r = client.post("/session", json={
            "logging_enabled": True,
            "source": {"replay": str(three_hosts_pcap)},
        })
        assert r.status_code == 400
        assert r.json()["error"]["code"] == "MissingTimeAnchor"

    def test_get_session_before_create(self, client):
        r = client.get("/session")
        assert r.status_code == 409
        assert r.json()["error"]["code"] == "NoSession"


class TestPlugins:
    def test_list_plugins_needs_no_session(self, client):
        r = client.get("/plugins")
        assert r.status_code == 200
        ids = {p["id"] for p in r.json()["plugins"]}
        assert ids == {"source_addr", "known_ip"}

    def test_known_ip_declares_required_ip_parameter(self, client):
        plugins = {p["id"]: p for p in client.get("/plugins").json()["plugins"]}
        assert plugins["known_ip"]["parameters"] == [
            {"name": "known_address", "value_type": "IpAddress", "required": True},
        ]
        assert plugins["source_addr"]["parameters"] == []


class TestRuns:
    def test_lifecycle_counters_monotonic(self, client, three_hosts_pcap):
        make_session(client, three_hosts_pcap)
        run = client.post("/runs", json={
            "plugin_id": "known_ip", "params": {"known_address": "192.0.2.7"},
        }).json()
        assert run["status"] == "Running"
        snapshots = []
        for _ in range(10):
            snapshots.append(client.get(f"/runs/{run['run_id']}/state").json()["counters"])
        for before, after in zip(snapshots, snapshots[1:]):
            assert after["total"] >= before["total"]
            assert after["matched"] >= before["matched"]

        stopped = client.post(f"/runs/{run['run_id']}/stop")
        assert stopped.status_code == 200
        result = stopped.json()["result"]
        assert result["kind"] == "MatchTally"
        assert result["total"] == 100

    def test_stop_twice_same_body(self, client, three_hosts_pcap):
        make_session(client, three_hosts_pcap)
        run = client.post("/runs", json={"plugin_id": "source_addr"}).json()
        first = client.post(f"/runs/{run['run_id']}/stop")
        second = client.post(f"/runs/{run['run_id']}/stop")
        assert first.status_code == second.status_code == 200
        assert first.json()["result"] == second.json()["result"]

    def test_missing_parameter_code(self, client, three_hosts_pcap):
        make_session(client, three_hosts_pcap)
        r = client.post("/runs", json={"plugin_id": "known_ip"})
        assert r.status_code == 400
        assert r.json()["error"]["code"] == "MissingParameter"

    def test_invalid_parameter_code(self, client, three_hosts_pcap):
        make_session(client, three_hosts_pcap)
        r = client.post("/runs", json={"plugin_id": "known_ip",
                                       "params": {"known_address": "not-an-ip"}})
        assert r.status_code == 400
        assert r.json()["error"]["code"] == "InvalidParameterValue"

    def test_unknown_plugin_code(self, client, three_hosts_pcap):
        make_session(client, three_hosts_pcap)
        r = client.post("/runs", json={"plugin_id": "ghost"})
        assert r.status_code == 404
        assert r.json()["error"]["code"] == "UnknownPlugin"

    def test_concurrent_run_conflict(self, client, three_hosts_pcap):
        make_session(client, three_hosts_pcap)
        run = client.post("/runs", json={"plugin_id": "source_addr"}).json()
        r = client.post("/runs", json={"plugin_id": "source_addr"})
        assert r.status_code == 409
        assert r.json()["error"]["code"] == "RunStillActive"
        client.post(f"/runs/{run['run_id']}/stop")

    def test_rerun_round_trip(self, client, three_hosts_pcap):
        make_session(client, three_hosts_pcap)
        run = client.post("/runs", json={
            "plugin_id": "known_ip", "params": {"known_address": "192.0.2.7"},
        }).json()
        first = client.post(f"/runs/{run['run_id']}/stop").json()["result"]
        second_run = client.post(f"/runs/{run['run_id']}/rerun").json()
        assert second_run["previous_run_id"] == run["run_id"]
        second = client.post(f"/runs/{second_run['run_id']}/stop").json()["result"]
        assert (first["matched"], first["total"]) == (second["matched"], second["total"])


class TestStream:
    def test_sse_snapshots_monotonic_until_stopped(self, client, three_hosts_pcap, service):
        make_session(client, three_hosts_pcap)
        run = client.post("/runs", json={"plugin_id": "source_addr"}).json()
        run_id = run["run_id"]

        docs = []
        with client.stream("GET", f"/runs/{run_id}/stream") as response:
            assert response.headers["content-type"].startswith("text/event-stream")
            for line in response.iter_lines():
                if not line.startswith("data: "):
                    continue
                docs.append(json.loads(line[len("data: "):]))
                if len(docs) == 3:
                    client.post(f"/runs/{run_id}/stop")
                if docs[-1]["status"] == "Stopped":
                    break
        assert docs[-1]["status"] == "Stopped"
        totals = [d["counters"]["total_frames"] for d in docs]
        assert totals == sorted(totals)


class TestRelevanceAndExport:
    def test_irrelevant_then_export_has_destruction_and_no_addresses(
            self, client, three_hosts_pcap):
        make_session(client, three_hosts_pcap)
        run = client.post("/runs", json={"plugin_id": "source_addr"}).json()
        client.post(f"/runs/{run['run_id']}/stop")
        verdict = client.post(f"/runs/{run['run_id']}/relevance",
                              json={"verdict": "Irrelevant"})
        assert verdict.status_code == 200
        assert verdict.json()["destruction"]["destroyed_record_count"] == 3

        export = client.get("/audit/export")
        assert export.status_code == 200
        lines = export.text.strip().split("\n")
        trailer = json.loads(lines[-1])["trailer"]
        assert trailer["chain"] == "Intact"
        kinds = [json.loads(l).get("kind") for l in lines[1:-1]]
        assert "DestructionRecorded" in kinds
        assert "192.0.2.7" not in export.text
        assert "02:00:00:00:00:aa" not in export.text

    def test_relevant_recorded(self, client, three_hosts_pcap):
        make_session(client, three_hosts_pcap)
        run = client.post("/runs", json={
            "plugin_id": "known_ip", "params": {"known_address": "192.0.2.7"},
        }).json()
        client.post(f"/runs/{run['run_id']}/stop")
        r = client.post(f"/runs/{run['run_id']}/relevance", json={"verdict": "Relevant"})
        assert r.json() == {"run_id": run["run_id"], "verdict": "Relevant", "recorded": True}
        export = client.get("/audit/export").text
        assert "ResultRecorded" in export

    def test_bad_verdict(self, client, three_hosts_pcap):
        make_session(client, three_hosts_pcap)
        run = client.post("/runs", json={"plugin_id": "source_addr"}).json()
        client.post(f"/runs/{run['run_id']}/stop")
        r = client.post(f"/runs/{run['run_id']}/relevance", json={"verdict": "maybe"})
        assert r.status_code == 400

    def test_export_on_fresh_session(self, client, three_hosts_pcap):
        make_session(client, three_hosts_pcap)
        lines = client.get("/audit/export").text.strip().split("\n")
        # header + SessionStart + trailer
        assert len(lines) == 3
        assert json.loads(lines[1])["kind"] == "SessionStart"

    def test_export_in_bypass_mode(self, client, three_hosts_pcap):
        make_session(client, three_hosts_pcap, logging_enabled=False)
        lines = client.get("/audit/export").text.strip().split("\n")
        assert json.loads(lines[1])["kind"] == "LoggingBypassed"
        assert json.loads(lines[-1])["trailer"]["chain"] == "Intact"


class TestSourceErrors:
    def test_bad_replay_file_maps_to_code(self, client, tmp_path):
        bad = tmp_path / "junk.pcap"
        bad.write_bytes(b"nope")
        r = make_session(client, bad)
        assert r.status_code == 400
        assert r.json()["error"]["code"] == "BadFileMagic"

    def test_unknown_route(self, client):
        r = client.get("/nothing")
        assert r.status_code == 404
