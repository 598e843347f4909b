"""Shadow store semantics, with an exhaustive delta oracle."""
from __future__ import annotations

import itertools
import random
import threading

import pytest
from hypothesis import given, strategies as st

from vahr.shadow import (
    InvalidPatch,
    ShadowStore,
    StatePatch,
    UnknownThing,
    compute_delta,
)

KEYS = ("k1", "k2", "k3")
VALUES = ("v1", "v2", "v3")


def all_state_maps():
    """Every map over 3 keys where each key is absent or holds one of 3 values."""
    maps = []
    for combo in itertools.product((None,) + VALUES, repeat=len(KEYS)):
        maps.append({k: v for k, v in zip(KEYS, combo) if v is not None})
    return maps


def oracle_delta(desired, reported):
    out = {}
    for k in desired:
        if not (k in reported and reported[k] == desired[k]):
            out[k] = desired[k]
    return out


scalar_values = st.one_of(st.text(max_size=5), st.integers(), st.booleans(),
                          st.floats(allow_nan=False, allow_infinity=False))
state_maps = st.dictionaries(st.sampled_from(KEYS), scalar_values, max_size=3)


class TestComputeDelta:
    def test_empty_desired(self):
        assert compute_delta({}, {"anything": 1}) == {}

    def test_equal_maps(self):
        assert compute_delta({"zone": "A"}, {"zone": "A"}) == {}

    def test_desired_not_reported(self):
        assert compute_delta({"zone": "A"}, {}) == {"zone": "A"}

    def test_exhaustive_oracle(self):
        maps = all_state_maps()
        assert len(maps) ** 2 == 4096
        for desired in maps:
            for reported in maps:
                assert compute_delta(desired, reported) == oracle_delta(desired, reported)

    @given(state_maps, state_maps)
    def test_delta_soundness(self, desired, reported):
        delta = compute_delta(desired, reported)
        assert set(delta) <= set(desired)
        agreement = {k for k in desired if reported.get(k) == desired[k] and k in reported}
        assert not (set(delta) & agreement)


class TestStatePatch:
    def test_disjointness_enforced(self):
        with pytest.raises(InvalidPatch):
            StatePatch({"a": 1}, tombstones=frozenset({"a"}))

    def test_rejects_nested_values(self):
        with pytest.raises(InvalidPatch):
            StatePatch({"a": {"nested": 1}})  # type: ignore[dict-item]

    def test_tombstone_clears_key(self):
        patch = StatePatch({"b": 2}, tombstones=frozenset({"a"}))
        assert patch.apply({"a": 1, "c": 3}) == {"b": 2, "c": 3}


class TestShadowStore:
    def test_update_reported_increments_version(self):
        store = ShadowStore()
        doc = store.register("placebot1")
        assert doc.version == 1 and doc.reported == {}
        doc = store.update_reported("placebot1", StatePatch({"status": "Task Completed"}))
        assert doc.version == 2
        assert doc.reported == {"status": "Task Completed"}

    def test_empty_patch_still_bumps_version(self):
        store = ShadowStore()
        store.register("t")
        before = store.peek("t")
        after = store.update_reported("t", StatePatch())
        assert after.version == before.version + 1
        assert after.reported == before.reported
        assert after.desired == before.desired

    def test_unknown_thing(self):
        store = ShadowStore()
        with pytest.raises(UnknownThing):
            store.update_reported("ghost", StatePatch())
        with pytest.raises(UnknownThing):
            store.get_shadow("ghost")

    def test_desired_delta_flow(self):
        store = ShadowStore()
        store.register("t")
        doc = store.update_desired("t", StatePatch({"zone": "A"}))
        assert doc.delta == {"zone": "A"}
        doc = store.update_reported("t", StatePatch({"zone": "A"}))
        assert doc.delta == {}

    def test_random_patch_sequences_match_replay_oracle(self):
        rng = random.Random(99)
        for _ in range(50):
            store = ShadowStore()
            store.register("t")
            expected: dict = {}
            for _ in range(rng.randint(1, 12)):
                entries = {rng.choice(KEYS): rng.choice(VALUES)
                           for _ in range(rng.randint(0, 3))}
                clearable = [k for k in KEYS if k not in entries]
                tombs = frozenset(k for k in clearable if rng.random() < 0.2)
                patch = StatePatch(entries, tombstones=tombs)
                store.update_reported("t", patch)
                expected = {k: v for k, v in expected.items() if k not in tombs}
                expected.update(entries)
            assert store.peek("t").reported == expected

    def test_read_does_not_change_version_and_is_idempotent(self):
        store = ShadowStore()
        store.register("t")
        store.update_reported("t", StatePatch({"a": 1}))
        d1 = store.get_shadow("t")
        d2 = store.get_shadow("t")
        assert d1 == d2
        assert d1.version == 2

    def test_interleaved_updates_delta_matches_oracle_each_step(self):
        rng = random.Random(7)
        store = ShadowStore()
        store.register("t")
        for _ in range(60):
            side = rng.choice(("desired", "reported"))
            patch = StatePatch({rng.choice(KEYS): rng.choice(VALUES)})
            if side == "desired":
                store.update_desired("t", patch)
            else:
                store.update_reported("t", patch)
            doc = store.peek("t")
            assert doc.delta == oracle_delta(doc.desired, doc.reported)

    def test_version_strictly_increasing(self):
        store = ShadowStore()
        store.register("t")
        versions = []
        for i in range(10):
            versions.append(store.update_reported("t", StatePatch({"i": i})).version)
        assert versions == sorted(versions)
        assert len(set(versions)) == len(versions)

    @given(state_maps, state_maps)
    def test_merge_commutes_on_disjoint_keys(self, m1, m2):
        overlap = set(m1) & set(m2)
        for k in overlap:
            del m2[k]
        a = ShadowStore()
        a.register("t")
        a.update_reported("t", StatePatch(m1))
        a.update_reported("t", StatePatch(m2))
        b = ShadowStore()
        b.register("t")
        b.update_reported("t", StatePatch(m2))
        b.update_reported("t", StatePatch(m1))
        assert a.peek("t").reported == b.peek("t").reported

    @given(state_maps)
    def test_idempotent_re_report(self, m):
        store = ShadowStore()
        store.register("t")
        patch = StatePatch(m)
        first = store.update_reported("t", patch).reported
        second = store.update_reported("t", patch).reported
        assert first == second

    def test_request_counter_counts_reads_and_writes(self):
        store = ShadowStore()
        store.register("t")
        assert store.request_count("t") == 0
        store.update_reported("t", StatePatch({"a": 1}))
        store.get_shadow("t")
        store.update_desired("t", StatePatch({"b": 2}))
        assert store.request_count("t") == 3
        store.peek("t")  # internal reads are free
        assert store.total_requests() == 3

    def test_concurrent_reads_see_write_prefixes(self):
        """Interactive mode: every snapshot equals some prefix of the writes."""
        store = ShadowStore()
        store.register("t")
        patches = [StatePatch({"step": i, "noise": i * 7 % 5}) for i in range(300)]
        prefix_states = [{}]
        state: dict = {}
        for patch in patches:
            state = patch.apply(state)
            prefix_states.append(dict(state))
        snapshots = []

        def reader():
            for _ in range(400):
                snapshots.append(store.peek("t"))

        threads = [threading.Thread(target=reader) for _ in range(3)]
        for th in threads:
            th.start()
        for patch in patches:
            store.update_reported("t", patch)
        for th in threads:
            th.join()
        for doc in snapshots:
            # version v corresponds to v-1 applied patches
            assert doc.reported == prefix_states[doc.version - 1]

    def test_json_serialization_shape(self):
        clock = {"t": 42}
        store = ShadowStore(clock=lambda: clock["t"])
        store.register("placebot1")
        store.update_desired("placebot1", StatePatch({"zone": "A"}))
        data = store.peek("placebot1").to_json_dict()
        assert data == {
            "thing_id": "placebot1",
            "version": 2,
            "desired": {"zone": "A"},
            "reported": {},
            "delta": {"zone": "A"},
            "last_updated": 42,
        }
