import pytest

from capmesh.profile import MAX_VALUE_BYTES, ProfileStore


@pytest.fixture()
def store():
    return ProfileStore()


class TestPutGet:
    def test_read_after_write(self, store):
        store.put("user:u1", "home_address", "A1")
        assert store.get("user:u1", "home_address") == "A1"

    def test_overwrite_visible(self, store):
        store.put("user:u1", "home_address", "A1")
        store.put("user:u1", "home_address", "A2")
        assert store.get("user:u1", "home_address") == "A2"

    def test_structured_values_round_trip(self, store):
        value = {"city": "C1", "tags": ["a", "b"], "rank": 3}
        store.put("system", "defaults", value)
        assert store.get("system", "defaults") == value

    def test_absent_key_is_none(self, store):
        assert store.get("user:u1", "nothing") is None

    def test_get_after_delete(self, store):
        store.put("system", "k", "v")
        assert store.delete("system", "k") is True
        assert store.get("system", "k") is None

    def test_namespaces_are_isolated(self, store):
        store.put("user:u1", "k", "one")
        store.put("user:u2", "k", "two")
        assert store.get("user:u1", "k") == "one"
        assert store.get("user:u2", "k") == "two"

    def test_empty_key_rejected(self, store):
        with pytest.raises(ValueError):
            store.put("system", "", "v")

    def test_oversized_value_rejected(self, store):
        with pytest.raises(ValueError):
            store.put("system", "blob", "x" * (MAX_VALUE_BYTES + 1))


class TestPersistence:
    def test_values_survive_reopen(self, tmp_path):
        path = str(tmp_path / "profiles.sqlite")
        first = ProfileStore(path)
        first.put("user:u1", "home_address", "A1")
        first.close()

        second = ProfileStore(path)
        assert second.get("user:u1", "home_address") == "A1"
        second.close()

    def test_entries_listing(self, store):
        store.put("a", "k1", 1)
        store.put("a", "k2", 2)
        store.put("b", "k1", 3)
        assert len(store.entries()) == 3
        assert [e["key"] for e in store.entries("a")] == ["k1", "k2"]
