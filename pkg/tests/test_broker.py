import pytest

from capmesh.broker import ToolBroker
from capmesh.errors import ProbeUnhealthy, RegistryUnreachable, ValidationError
from capmesh.registry import RegistryConfig, ToolDescriptor, ToolRegistry
from capmesh.util import MockClock


def make_descriptor(tool_id="svc-1"):
    return ToolDescriptor.from_document(
        {
            "tool_id": tool_id,
            "name": tool_id,
            "description": "a demo capability",
            "tags": [],
            "endpoint": f"inproc://{tool_id}",
            "params": [],
            "output_schema": [],
        }
    )


class ProbeSwitch:
    def __init__(self):
        self.healthy: set[str] = set()

    def __call__(self, url: str) -> bool:
        return url in self.healthy


@pytest.fixture()
def clock():
    return MockClock(start=0.0)


@pytest.fixture()
def registry(clock):
    return ToolRegistry(RegistryConfig(), clock=clock)


@pytest.fixture()
def probes():
    return ProbeSwitch()


def make_broker(registry, clock, probes, **kwargs):
    return ToolBroker(
        "broker-1",
        registry,
        clock=clock,
        probe=probes,
        sleep=lambda _s: None,
        jitter_seed=7,
        **kwargs,
    )


class TestAddService:
    def test_added_but_not_registered(self, registry, clock, probes):
        broker = make_broker(registry, clock, probes)
        probes.healthy.add("inproc://svc-1/health")
        entry = broker.add_service(make_descriptor(), "inproc://svc-1/health")
        assert entry.registered is False
        assert registry.get_tool("svc-1") is None

    def test_duplicate_rejected(self, registry, clock, probes):
        broker = make_broker(registry, clock, probes)
        broker.add_service(make_descriptor(), "inproc://svc-1/health")
        with pytest.raises(ValidationError):
            broker.add_service(make_descriptor(), "inproc://svc-1/health")

    def test_unreachable_probe_recorded(self, registry, clock, probes):
        broker = make_broker(registry, clock, probes)
        entry = broker.add_service(make_descriptor(), "inproc://svc-1/health")
        assert entry.last_probe_ok is False


class TestRegisterManaged:
    def test_healthy_service_registers_and_heartbeats(self, registry, clock, probes):
        broker = make_broker(registry, clock, probes)
        probes.healthy.add("inproc://svc-1/health")
        broker.add_service(make_descriptor(), "inproc://svc-1/health")
        broker.register_managed("svc-1")
        assert registry.get_tool("svc-1").state == "available"
        reply = broker.heartbeat_cycle()
        assert reply["acknowledged"] == ["svc-1"]

    def test_probe_unhealthy_blocks_registration(self, registry, clock, probes):
        broker = make_broker(registry, clock, probes)
        broker.add_service(make_descriptor(), "inproc://svc-1/health")
        with pytest.raises(ProbeUnhealthy):
            broker.register_managed("svc-1")

    def test_registry_down_retries_then_raises(self, clock, probes, caplog):
        class DownRegistry:
            def __init__(self):
                self.attempts = 0

            def register_tool(self, desc, broker_id):
                self.attempts += 1
                raise ConnectionError("connection refused")

            def heartbeat(self, broker_id, tool_ids, timestamp=None):
                raise ConnectionError("connection refused")

        registry = DownRegistry()
        broker = make_broker(registry, clock, probes, register_attempts=3)
        probes.healthy.add("inproc://svc-1/health")
        broker.add_service(make_descriptor(), "inproc://svc-1/health")
        with caplog.at_level("WARNING"):
            with pytest.raises(RegistryUnreachable):
                broker.register_managed("svc-1")
        assert registry.attempts == 3
        assert sum("retrying" in r.message for r in caplog.records) == 3


class TestHeartbeatCycle:
    def test_unhealthy_tool_omitted(self, registry, clock, probes):
        broker = make_broker(registry, clock, probes)
        for tid in ("svc-1", "svc-2"):
            probes.healthy.add(f"inproc://{tid}/health")
            broker.add_service(make_descriptor(tid), f"inproc://{tid}/health")
            broker.register_managed(tid)
        probes.healthy.discard("inproc://svc-1/health")
        broker.probe_all()
        reply = broker.heartbeat_cycle()
        assert reply["acknowledged"] == ["svc-2"]
        # With no heartbeats, svc-1 goes suspect after the miss threshold.
        clock.advance(25)
        registry.heartbeat("broker-1", ["svc-2"])
        registry.sweep_stale()
        assert registry.get_tool("svc-1").state == "suspect"
        assert registry.get_tool("svc-2").state == "available"

    def test_eviction_triggers_reregistration_within_two_cycles(
        self, registry, clock, probes
    ):
        broker = make_broker(registry, clock, probes)
        probes.healthy.add("inproc://svc-1/health")
        broker.add_service(make_descriptor(), "inproc://svc-1/health")
        broker.register_managed("svc-1")

        clock.advance(31)
        registry.sweep_stale()
        assert registry.get_tool("svc-1").state == "unavailable"

        first = broker.heartbeat_cycle()  # cycle 1: flagged unknown
        assert first["unknown"] == ["svc-1"]
        second = broker.heartbeat_cycle()  # cycle 2: re-registered + heartbeat
        assert second["acknowledged"] == ["svc-1"]
        assert registry.get_tool("svc-1").state == "available"

    def test_no_registered_services_sends_nothing(self, registry, clock, probes):
        broker = make_broker(registry, clock, probes)
        assert broker.heartbeat_cycle() == {"acknowledged": [], "unknown": []}


class TestCadence:
    def test_jitter_bounded_to_ten_percent(self, registry, clock, probes):
        broker = make_broker(registry, clock, probes, heartbeat_interval_s=10.0)
        gaps = [broker.next_interval() for _ in range(200)]
        assert all(9.0 <= g <= 11.0 for g in gaps)
        assert len(set(round(g, 6) for g in gaps)) > 1  # actually jittered


class TestDurability:
    def test_managed_set_survives_restart(self, registry, clock, probes, tmp_path):
        db = str(tmp_path / "broker.sqlite")
        probes.healthy.add("inproc://svc-1/health")
        first = ToolBroker(
            "broker-1", registry, db_path=db, clock=clock, probe=probes,
            sleep=lambda _s: None,
        )
        first.add_service(make_descriptor(), "inproc://svc-1/health")
        first.register_managed("svc-1")

        second = ToolBroker(
            "broker-1", registry, db_path=db, clock=clock, probe=probes,
            sleep=lambda _s: None,
        )
        entries = second.list_services()
        assert [e.descriptor.tool_id for e in entries] == ["svc-1"]
        assert entries[0].registered is True
        assert second.heartbeat_cycle()["acknowledged"] == ["svc-1"]
