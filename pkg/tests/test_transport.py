"""Simulated network and TCP framing tests."""

import socket
import threading

import pytest
from hypothesis import given, strategies as st

from discedge.errors import DecodeError, RoutingError
from discedge.transport import (
    FRAME_OVERHEAD_BYTES,
    LinkSpec,
    SimClock,
    SimNetwork,
    recv_frame,
    send_frame,
)


def make_net(seed=0, latency=5.0, jitter=0.0):
    net = SimNetwork(seed=seed)
    net.add_link(LinkSpec("x", "y", latency, jitter))
    return net


# -- basics ----------------------------------------------------------------------

def test_delivery_after_latency_and_byte_accounting():
    net = make_net()
    got = []
    net.register("y", lambda src, frame: got.append((net.now_ms, src, frame)))
    net.send("x", "y", b"p" * 100)
    assert net.link_stats("x", "y").bytes_sent == 104
    assert got == []
    delivered = net.advance_clock(5.0)
    assert delivered == 1
    assert got == [(5.0, "x", b"p" * 100)]


def test_fifo_on_one_link():
    net = make_net()
    got = []
    net.register("y", lambda src, frame: got.append(frame))
    net.send("x", "y", b"first")
    net.send("x", "y", b"second")
    net.advance_clock(10.0)
    assert got == [b"first", b"second"]


def test_partition_drops_and_counts():
    net = make_net()
    got = []
    net.register("y", lambda src, frame: got.append(frame))
    net.partition("x", "y")
    net.send("x", "y", b"lost")
    assert net.advance_clock(50.0) == 0
    assert got == []
    assert net.link_stats("x", "y").frames_dropped == 1
    net.heal("x", "y")
    net.send("x", "y", b"found")
    net.advance_clock(50.0)
    assert got == [b"found"]


def test_unknown_link_raises():
    net = make_net()
    net.register("z", lambda src, frame: None)
    with pytest.raises(RoutingError):
        net.send("x", "z", b"nope")


def test_unregistered_destination_raises():
    net = make_net()
    with pytest.raises(RoutingError):
        net.send("x", "y", b"nobody-home")


def test_duplicate_link_rejected():
    net = make_net()
    with pytest.raises(ValueError):
        net.add_link(LinkSpec("x", "y", 1.0))


def test_negative_latency_rejected():
    with pytest.raises(ValueError):
        LinkSpec("x", "y", -1.0)


# -- clock mechanics ---------------------------------------------------------------

def test_advance_counts_nested_deliveries():
    net = SimNetwork()
    net.add_link(LinkSpec("x", "y", 1.0))
    net.add_link(LinkSpec("y", "z", 1.0))
    hops = []
    net.register("y", lambda src, frame: net.send("y", "z", frame))
    net.register("z", lambda src, frame: hops.append(net.now_ms))
    net.send("x", "y", b"relay")
    assert net.advance_clock(10.0) == 2
    assert hops == [2.0]


def test_timestamp_ties_break_by_link_id():
    net = SimNetwork()
    net.add_link(LinkSpec("b", "y", 5.0))
    net.add_link(LinkSpec("a", "y", 5.0))
    order = []
    net.register("y", lambda src, frame: order.append(src))
    net.send("b", "y", b"1")
    net.send("a", "y", b"1")
    net.advance_clock(5.0)
    assert order == ["a", "b"]


def test_run_until_lands_on_event_times():
    net = make_net(latency=7.5)
    got = []
    net.register("y", lambda src, frame: got.append(frame))
    net.send("x", "y", b"z")
    assert net.run_until(lambda: got) is True
    assert net.now_ms == 7.5


def test_run_until_false_when_queue_empties():
    net = make_net()
    assert net.run_until(lambda: False, max_ms=100.0) is False


def test_schedule_timer():
    net = make_net()
    fired = []
    net.schedule(3.0, lambda: fired.append(net.now_ms))
    net.advance_clock(2.9)
    assert fired == []
    net.advance_clock(0.1)
    assert fired == [3.0]


def test_sim_clock_views_network_time():
    net = make_net()
    clock = SimClock(net)
    assert clock.now_ms() == 0.0
    clock.sleep_ms(12.25)
    assert net.now_ms == 12.25


def test_reentrant_advance_from_handler():
    # A handler that charges compute time mid-delivery (what the engine does).
    net = make_net(latency=1.0)
    clock = SimClock(net)
    seen = []

    def handler(src, frame):
        clock.sleep_ms(4.0)
        seen.append(net.now_ms)

    net.register("y", handler)
    net.send("x", "y", b"work")
    net.advance_clock(1.0)
    assert seen == [5.0]
    assert net.now_ms == 5.0


def test_determinism_same_seed_same_timeline():
    def timeline(seed):
        net = SimNetwork(seed=seed)
        net.add_link(LinkSpec("x", "y", 5.0, jitter_ms=3.0))
        times = []
        net.register("y", lambda src, frame: times.append(net.now_ms))
        for _ in range(20):
            net.send("x", "y", b"f")
        net.drain()
        return times

    assert timeline(42) == timeline(42)
    assert timeline(42) != timeline(43)


@given(st.integers(min_value=0, max_value=2**31), st.integers(2, 25))
def test_jitter_preserves_fifo(seed, count):
    net = SimNetwork(seed=seed)
    net.add_link(LinkSpec("x", "y", 5.0, jitter_ms=5.0))
    got = []
    net.register("y", lambda src, frame: got.append(frame))
    frames = [bytes([i]) for i in range(count)]
    for frame in frames:
        net.send("x", "y", frame)
    net.drain()
    assert got == frames


# -- TCP framing ---------------------------------------------------------------------

def socket_pair():
    return socket.socketpair()


def test_frame_round_trip_over_socket():
    left, right = socket_pair()
    with left, right:
        payload = b"\x00\x01framed\xff"
        thread = threading.Thread(target=send_frame, args=(left, payload))
        thread.start()
        assert recv_frame(right) == payload
        thread.join()


def test_recv_none_on_clean_eof():
    left, right = socket_pair()
    with right:
        left.close()
        assert recv_frame(right) is None


def test_recv_raises_mid_frame():
    left, right = socket_pair()
    with right:
        left.sendall((100).to_bytes(4, "big") + b"short")
        left.close()
        with pytest.raises(DecodeError):
            recv_frame(right)


def test_oversize_frame_rejected():
    left, right = socket_pair()
    with left, right:
        left.sendall((2**31).to_bytes(4, "big"))
        with pytest.raises(DecodeError):
            recv_frame(right)


def test_frame_overhead_constant():
    assert FRAME_OVERHEAD_BYTES == 4
