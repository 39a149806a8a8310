import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from evstream import OpKind, Store
from evstream.errors import EmptyKey, KeyTooLong, NotFound, ValueTooLarge


class Recorder:
    def __init__(self):
        self.calls = []

    def __call__(self, op, key, value):
        self.calls.append((op, key, value))


@pytest.fixture
def rec():
    return Recorder()


def test_set_classifies_create_then_update(rec):
    s = Store(rec)
    assert s.set("score:game1", "3-2") == (1, OpKind.CREATE)
    assert s.set("score:game1", "4-2") == (2, OpKind.UPDATE)
    assert s.get("score:game1") == b"4-2"
    assert [c[0] for c in rec.calls] == [OpKind.CREATE, OpKind.UPDATE, OpKind.READ]


def test_key_and_value_limits(rec):
    s = Store(rec, max_value=16)
    with pytest.raises(EmptyKey):
        s.set("", "x")
    with pytest.raises(KeyTooLong):
        s.set(b"k" * 513, b"")
    with pytest.raises(ValueTooLarge):
        s.set(b"k", b"v" * 17)
    assert s.set(b"k" * 512, b"v" * 16) == (1, OpKind.CREATE)
    assert len(rec.calls) == 1


def test_get_missing_and_empty_value(rec):
    s = Store(rec)
    with pytest.raises(NotFound):
        s.get("missing")
    s.set("e", b"")
    assert s.get("e") == b""
    assert rec.calls[-1] == (OpKind.READ, b"e", b"")


def test_delete(rec):
    s = Store(rec)
    s.set("k", "v")
    assert s.delete("k") == OpKind.DELETE
    with pytest.raises(NotFound):
        s.get("k")
    n = len(rec.calls)
    with pytest.raises(NotFound):
        s.delete("k")
    assert len(rec.calls) == n


def test_version_resets_with_entry():
    s = Store()
    assert s.set("k", "a")[0] == 1
    s.delete("k")
    assert s.set("k", "b") == (1, OpKind.CREATE)


def test_footprint_tracks_keys_and_values():
    s = Store()
    s.set("ab", "xyz")
    s.set("c", "")
    assert s.footprint == 6
    s.set("ab", "x")
    assert s.footprint == 4
    s.delete("ab")
    assert s.footprint == 1


# -- oracle -------------------------------------------------------------------

KEYS = [b"k%d" % i for i in range(12)]
command = st.one_of(
    st.tuples(st.just("set"), st.sampled_from(KEYS), st.binary(max_size=8)),
    st.tuples(st.just("get"), st.sampled_from(KEYS), st.just(b"")),
    st.tuples(st.just("del"), st.sampled_from(KEYS), st.just(b"")),
)


def replay(commands):
    """Run commands against both the store and a dict oracle, asserting as we go."""
    rec = Recorder()
    s = Store(rec)
    oracle: dict[bytes, tuple[bytes, int]] = {}
    for name, key, value in commands:
        before = len(rec.calls)
        if name == "set":
            present = key in oracle
            version = oracle[key][1] + 1 if present else 1
            oracle[key] = (value, version)
            expected_op = OpKind.UPDATE if present else OpKind.CREATE
            assert s.set(key, value) == (version, expected_op)
            assert rec.calls[before:] == [(expected_op, key, value)]
        elif name == "get":
            if key in oracle:
                assert s.get(key) == oracle[key][0]
                assert rec.calls[before:] == [(OpKind.READ, key, oracle[key][0])]
            else:
                with pytest.raises(NotFound):
                    s.get(key)
                assert len(rec.calls) == before
        else:
            if key in oracle:
                del oracle[key]
                assert s.delete(key) == OpKind.DELETE
                assert [c[:2] for c in rec.calls[before:]] == [(OpKind.DELETE, key)]
            else:
                with pytest.raises(NotFound):
                    s.delete(key)
                assert len(rec.calls) == before
    assert s.snapshot() == {k: v for k, (v, _) in oracle.items()}
    for k, (v, ver) in oracle.items():
        assert s.entry(k).version == ver


@settings(max_examples=200, deadline=None)
@given(st.lists(command, max_size=200))
def test_store_matches_map_oracle(commands):
    replay(commands)


def test_store_matches_map_oracle_long_sequence():
    rng = random.Random(11)
    cmds = [
        (rng.choice(("set", "set", "get", "del")), rng.choice(KEYS), rng.randbytes(rng.randrange(0, 6)))
        for _ in range(10_000)
    ]
    replay(cmds)
