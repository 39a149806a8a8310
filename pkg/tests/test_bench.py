import pytest
from hypothesis import given
from hypothesis import strategies as st

from evstream import bench
from evstream.bench import LatencyRecord, Send, WorkloadSpec, nearest_rank, payloads, schedule
from evstream.errors import EmptyInput, InvalidSpec


def test_schedule_examples():
    assert sum(len(p) for p in schedule(WorkloadSpec(1000, duration_s=2))) == 2000
    (only,) = schedule(WorkloadSpec(4, duration_s=1))
    assert [s.offset_ns for s in only] == [0, 250_000_000, 500_000_000, 750_000_000]
    a, b = schedule(WorkloadSpec(4, duration_s=1, publishers=2))
    assert [s.index for s in a] == [0, 2] and [s.index for s in b] == [1, 3]


def test_schedule_count_rounds_up():
    assert WorkloadSpec(3, duration_s=1.1).total_sends == 4
    assert WorkloadSpec(5000, duration_s=1.1).total_sends == 5500


@pytest.mark.parametrize(
    "kwargs",
    [{"target_rate": 0}, {"target_rate": 1, "duration_s": 0}, {"target_rate": 1, "message_size_bytes": 63},
     {"target_rate": 1, "message_size_bytes": 513}, {"target_rate": 1, "publishers": 0}],
)
def test_invalid_specs(kwargs):
    with pytest.raises(InvalidSpec):
        WorkloadSpec(**kwargs)


def test_size_override():
    assert WorkloadSpec(1, message_size_bytes=4096, allow_any_size=True).message_size_bytes == 4096


def test_payloads_seeded():
    spec = WorkloadSpec(100, message_size_bytes=128, duration_s=1, seed=9)
    a, b = payloads(spec), payloads(spec)
    assert a == b and len(a) == 100 and all(len(p) == 128 for p in a)
    assert payloads(WorkloadSpec(100, message_size_bytes=128, duration_s=1, seed=10)) != a


def test_nearest_rank_examples():
    assert nearest_rank([4, 1, 3, 2], [0.5, 1.0, 0.0]) == [2, 4, 1]
    assert nearest_rank([7], [0.01, 0.5, 0.99, 1]) == [7, 7, 7, 7]
    assert nearest_rank(list(range(1, 101)), [0.99]) == [99]
    with pytest.raises(EmptyInput):
        nearest_rank([], [0.5])


@given(st.lists(st.integers(0, 10**9), min_size=1, max_size=200), st.floats(0, 1))
def test_nearest_rank_is_a_sample_with_rank_property(xs, q):
    (v,) = nearest_rank(xs, [q])
    n = len(xs)
    below = sum(1 for x in xs if x <= v)
    assert v in xs and below >= q * n - 1e-9


def test_latency_uses_slowest_subscriber():
    r = LatencyRecord(1, intended_send_ts=90, actual_send_ts=95, publish_ts=100, receive_ts=[130, 180, 150])
    assert r.event_latency_ns == 80 and r.corrected_latency_ns == 90 and r.recv_max == 180
    assert LatencyRecord(None, 0, None, None).event_latency_ns is None
    p = bench.percentiles([r], [0.5])
    assert p.event == [80] and p.corrected == [90]


def test_csv_round_trip(tmp_path):
    spec = WorkloadSpec(2, duration_s=1)
    recs = [LatencyRecord(1, 1000, 1005, 1010, [1050]), LatencyRecord(None, 2000, None, None)]
    res = bench.RunResult(spec, recs, start_ns=1000, delivered=1, achieved_rate=1.0)
    path = tmp_path / "c.csv"
    bench.write_csv(res, path)
    assert path.read_text().splitlines() == [
        ",".join(bench.CSV_HEADER), "1,0,5,10,50,40,50", ",1000,,,,,",
    ]
    assert bench.read_csv(path)[0]["latency_ns"] == 40


def test_run_three_subscribers(server):
    spec = WorkloadSpec(500, duration_s=0.5, subscribers=3, publishers=2, seed=1)
    res = bench.run(spec, server.address)
    assert len(res.records) == 250 and res.delivered == 250
    for r in res.records:
        assert len(r.receive_ts) == 3
        assert r.event_latency_ns == max(r.receive_ts) - r.publish_ts >= 0
    seqs = [r.seq for r in res.records]
    assert sorted(seqs) == list(range(1, 251))


def test_run_beyond_capacity_keeps_intended_times(server):
    spec = WorkloadSpec(1_000_000, duration_s=0.3, subscribers=1)
    res = bench.run(spec, server.address)
    assert res.achieved_rate < spec.target_rate
    assert len(res.records) == spec.total_sends
    assert all(r.intended_send_ts is not None for r in res.records)
    sent = [r for r in res.records if r.actual_send_ts is not None]
    assert all(r.actual_send_ts >= r.intended_send_ts for r in sent)


def test_run_leaves_no_registration(server):
    bench.run(WorkloadSpec(100, duration_s=0.2), server.address)
    assert server.node.host.registrations == []


def test_unreachable_server():
    with pytest.raises(OSError):
        bench.run(WorkloadSpec(100, duration_s=0.1), ("127.0.0.1", 1))
