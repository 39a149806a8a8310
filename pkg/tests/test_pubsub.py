import random
import threading

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from evstream import Broker
from evstream.errors import InvalidChannelName, InvalidGlob, UnknownSubscription, ValueTooLarge

from test_kernels import naive_glob


def test_subscribe_then_publish():
    b = Broker()
    s = b.connect()
    assert b.subscribe(s, "scores") == {b"scores": 1}
    assert b.publish("scores", "x") == (1, 1)
    (ev,) = s.drain()
    assert (ev.channel, ev.seq, ev.payload) == (b"scores", 1, b"x")


def test_no_replay_for_late_subscriber():
    b = Broker()
    b.publish("c", "early")
    s = b.connect()
    assert b.subscribe(s, "c") == {b"c": 2}
    b.publish("c", "late")
    assert [e.payload for e in s.drain()] == [b"late"]


def test_glob_subscription():
    b = Broker()
    s = b.connect()
    b.subscribe(s, "sco?es")
    assert b.publish("scores", "x")[1] == 1
    assert b.publish("scares", "x")[1] == 0


def test_unsubscribe_and_dedup():
    b = Broker()
    s = b.connect()
    b.subscribe(s, "c")
    b.subscribe(s, "*")
    assert b.publish("c", "1") == (1, 1)
    b.unsubscribe(s, "c")
    assert b.publish("c", "2") == (2, 1)
    b.unsubscribe(s, "*")
    assert b.publish("c", "3") == (3, 0)
    with pytest.raises(UnknownSubscription):
        b.unsubscribe(s, "nope")
    assert [e.seq for e in s.drain()] == [1, 2]


def test_publish_counts_and_sequence():
    b = Broker()
    assert b.publish("c", "") == (1, 0)
    subs = [b.connect() for _ in range(3)]
    for s in subs:
        b.subscribe(s, "c")
    assert b.publish("c", "") == (2, 3)
    assert b.next_seq("c") == 3


def test_validation():
    b = Broker(max_payload=4)
    s = b.connect()
    with pytest.raises(InvalidGlob):
        b.subscribe(s, "")
    with pytest.raises(InvalidChannelName):
        b.publish("", "x")
    with pytest.raises(ValueTooLarge):
        b.publish("c", "12345")


def test_disconnect_stops_delivery():
    b = Broker()
    s = b.connect()
    b.subscribe(s, "c")
    b.disconnect(s)
    assert b.publish("c", "x") == (1, 0)
    assert s.drain() == []


def test_overflow_drops_subscriber_only():
    dropped = []
    b = Broker(max_queue=3)
    slow = b.connect(on_overflow=dropped.append)
    fast = b.connect()
    b.subscribe(slow, "c")
    b.subscribe(fast, "c")
    for i in range(3):
        assert b.publish("c", str(i))[1] == 2
    fast.drain()
    assert b.publish("c", "x")[1] == 1
    assert dropped == [slow] and slow.overflowed and not slow.connected
    assert b.publish("c", "y")[1] == 1


def test_on_ready_fires_on_empty_to_nonempty():
    ready = []
    b = Broker()
    s = b.connect(on_ready=ready.append)
    b.subscribe(s, "c")
    b.publish("c", "1")
    b.publish("c", "2")
    assert len(ready) == 1
    s.drain()
    b.publish("c", "3")
    assert len(ready) == 2


def test_publish_ts_monotone_with_seq():
    b = Broker()
    s = b.connect()
    b.subscribe(s, "c")
    for _ in range(500):
        b.publish("c", "")
    evs = s.drain()
    assert [e.seq for e in evs] == list(range(1, 501))
    assert all(x.publish_ts <= y.publish_ts for x, y in zip(evs, evs[1:]))


def test_concurrent_publishers_fifo_gapless():
    b = Broker()
    subs = [b.connect() for _ in range(3)]
    b.subscribe(subs[0], "*")
    b.subscribe(subs[1], "a")
    b.subscribe(subs[2], "?")
    channels = ["a", "b"]

    def pub(seed):
        rng = random.Random(seed)
        for _ in range(2000):
            b.publish(rng.choice(channels), b"")

    threads = [threading.Thread(target=pub, args=(i,)) for i in range(4)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    total = {ch.encode(): b.next_seq(ch) - 1 for ch in channels}
    assert sum(total.values()) == 8000
    for s, wanted in zip(subs, (channels, ["a"], channels)):
        evs = s.drain()
        for ch in wanted:
            seqs = [e.seq for e in evs if e.channel == ch.encode()]
            assert seqs == list(range(1, total[ch.encode()] + 1))


names = st.lists(st.sampled_from(b"ab"), min_size=1, max_size=4).map(bytes)
globs = st.lists(st.sampled_from(b"ab*?"), min_size=1, max_size=4).map(bytes)


@settings(max_examples=150, deadline=None)
@given(st.lists(st.lists(globs, max_size=3), max_size=5), names)
def test_delivered_count_brute_force(patterns_per_sub, channel):
    b = Broker()
    subs = []
    for patterns in patterns_per_sub:
        s = b.connect()
        for p in patterns:
            b.subscribe(s, p)
        subs.append(s)
    expected = sum(1 for pats in patterns_per_sub if any(naive_glob(p, channel) for p in pats))
    assert b.publish(channel, b"")[1] == expected
    assert sum(len(s.drain()) for s in subs) == expected
