import json
import threading

import pytest

from adages.aggregation import SelectionSet, aggregate
from adages.service import Client, Coordinator, CoordinatorServer, ServiceError, parse_addr


class FakeClock:
    def __init__(self):
        self.t = 0.0

    def __call__(self):
        return self.t


@pytest.fixture
def coord():
    return Coordinator(clock=FakeClock())


@pytest.fixture
def server():
    srv = CoordinatorServer(("127.0.0.1", 0))
    srv.start()
    yield srv
    srv.shutdown()
    srv.server_close()


def test_open_gives_distinct_tokens(coord):
    assert coord.open_session(3, 4) != coord.open_session(3, 4)


@pytest.mark.parametrize("k,d,rule", [(0, 4, "adages"), (2, 0, "union"), (2, 4, "mode"), (2, 4, "fixed:3")])
def test_open_rejects_bad_requests(coord, k, d, rule):
    with pytest.raises(ServiceError) as e:
        coord.open_session(k, d, rule)
    assert e.value.code == "bad_request"


def test_union_example(coord):
    sid = coord.open_session(3, 4, "union")
    assert coord.submit(sid, 0, 4, [0, 1])["status"] == "pending"
    assert coord.submit(sid, 1, 4, [1, 2])["received"] == 2
    res = coord.submit(sid, 2, 4, [1])
    assert res["type"] == "result" and res["status"] == "complete"
    assert res["selected"] == [0, 1, 2] and res["threshold_used"] == 1
    assert res["machine_sizes"] == {"0": 2, "1": 2, "2": 1}
    assert coord.poll(sid) == res


def test_adages_example(coord):
    sid = coord.open_session(3, 4, "adages")
    for m, s in enumerate([[0, 1], [1, 2], [1]]):
        res = coord.submit(sid, m, 4, s)
    assert res["threshold_used"] == 1 and res["selected"] == [0, 1, 2] and res["c0"] == 1


def test_duplicate_rejected_and_retry_idempotent(coord):
    sid = coord.open_session(2, 5)
    ack = coord.submit(sid, 0, 5, [1, 2])
    assert coord.submit(sid, 0, 5, [2, 1]) == ack
    with pytest.raises(ServiceError) as e:
        coord.submit(sid, 0, 5, [3])
    assert e.value.code == "duplicate"
    assert coord.poll(sid)["received"] == 1
    res = coord.submit(sid, 1, 5, [2])
    assert coord.submit(sid, 1, 5, [2]) == res
    assert coord.aggregations == 1


def test_dimension_mismatch(coord):
    sid = coord.open_session(2, 5)
    for d, sel in [(6, [1]), (5, [5]), (5, [-1])]:
        with pytest.raises(ServiceError) as e:
            coord.submit(sid, 0, d, sel)
        assert e.value.code == "dimension"
    assert coord.poll(sid)["received"] == 0


def test_unknown_session_and_full_session(coord):
    with pytest.raises(ServiceError) as e:
        coord.poll("nope")
    assert e.value.code == "unknown_session"
    sid = coord.open_session(1, 3)
    coord.submit(sid, 0, 3, [])
    with pytest.raises(ServiceError) as e:
        coord.submit(sid, 1, 3, [])
    assert e.value.code == "complete"


def test_timeout_expires_partial_session():
    clock = FakeClock()
    coord = Coordinator(timeout=5, clock=clock)
    sid = coord.open_session(2, 3)
    coord.submit(sid, 0, 3, [0])
    clock.t = 6
    with pytest.raises(ServiceError) as e:
        coord.submit(sid, 1, 3, [0])
    assert e.value.code == "timeout"
    res = coord.poll(sid)
    assert res["type"] == "result" and res["status"] == "timeout" and "selected" not in res
    assert coord.aggregations == 0


def test_capacity_counts_pending_sessions():
    clock = FakeClock()
    coord = Coordinator(timeout=5, capacity=2, clock=clock)
    coord.open_session(2, 3)
    done = coord.open_session(1, 3)
    coord.submit(done, 0, 3, [1])
    coord.open_session(2, 3)
    with pytest.raises(ServiceError) as e:
        coord.open_session(2, 3)
    assert e.value.code == "capacity"
    clock.t = 10
    coord.open_session(2, 3)


def test_concurrent_reports_aggregate_once(coord):
    k = 8
    sid = coord.open_session(k, 10, "adages")
    sets = [[j for j in range(10) if (i + j) % 3] for i in range(k)]
    out = [None] * k
    barrier = threading.Barrier(k)

    def go(i):
        barrier.wait()
        out[i] = coord.submit(sid, i, 10, sets[i])

    ts = [threading.Thread(target=go, args=(i,)) for i in range(k)]
    for t in ts:
        t.start()
    for t in ts:
        t.join()
    results = [o for o in out if o["type"] == "result"]
    assert len(results) == 1 and coord.aggregations == 1
    lib = aggregate([SelectionSet(10, frozenset(s)) for s in sets], "adages")
    assert results[0]["selected"] == lib.selected.sorted()


def test_wire_roundtrip(server):
    with Client(server.address) as c:
        opened = c.open(2, 4, "intersection")
        sid = opened["session"]
        assert opened["type"] == "open" and opened["k"] == 2
        assert c.report(sid, 0, 4, [0, 3])["type"] == "report"
        err = c.report(sid, 1, 5, [0])
        assert err["type"] == "error" and err["code"] == "dimension"
        res = c.report(sid, 1, 4, [3])
        assert res["type"] == "result" and res["selected"] == [3]
        assert c.wait_result(sid) == res
        bad = c.request({"type": "shout"})
        assert bad["type"] == "error" and bad["code"] == "bad_request"
        missing = c.request({"type": "poll"})
        assert missing["code"] == "bad_request"


def test_garbage_line_gets_error(server):
    with Client(server.address) as c:
        c.sock.sendall(b"not json\n")
        reply = json.loads(c._rfile.readline())
        assert reply["type"] == "error"
        assert c.poll("x")["code"] == "unknown_session"


def test_parse_addr():
    assert parse_addr("127.0.0.1:80") == ("127.0.0.1", 80)
    assert parse_addr(":9") == ("127.0.0.1", 9)
    with pytest.raises(ValueError):
        parse_addr("localhost")
