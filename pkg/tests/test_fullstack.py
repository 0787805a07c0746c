"""Delayed-ACK and sliding-window behavior of the reference peer."""

from uipsim import wire
from uipsim.fullstack import (
    ESTABLISHED,
    FullApp,
    FullTcpConfig,
    FullTcpNode,
    LAST_ACK,
    TIMER_DELAYED_ACK,
    TIMER_RTO,
)

FULL = "10.0.0.2"
PEER = "10.0.0.1"


def peer_packet(sport, dport, seq, ack, flags, payload=b"", mss=None, window=360):
    seg = wire.build_tcp_segment(PEER, FULL, sport, dport, seq, ack, flags, window,
                                 payload, mss)
    return wire.build_ipv4(PEER, FULL, wire.PROTO_TCP, seg, 0)


def parse_out(packet):
    ip, reason = wire.parse_ipv4(packet)
    assert reason == ""
    tcp, reason = wire.parse_tcp(ip.src, ip.dst, ip.payload)
    assert reason == ""
    return ip, tcp


class SinkApp(FullApp):
    def __init__(self):
        self.received = bytearray()

    def data(self, node, conn, data):
        self.received.extend(data)


def serverside(node=None, app=None, port=80, peer_port=4096, peer_seq=100,
               peer_mss=360):
    node = node or FullTcpNode(FULL)
    app = app or SinkApp()
    node.listen(port, app)
    outs = node.input(peer_packet(peer_port, port, peer_seq, 0, wire.TCP_SYN,
                                  mss=peer_mss), now=0)
    _, synack = parse_out(outs[0])
    assert synack.flags == wire.TCP_SYN | wire.TCP_ACK
    node.input(peer_packet(peer_port, port, peer_seq + 1, synack.seq + 1,
                           wire.TCP_ACK), now=1000)
    conn = node.conns[(port, PEER, peer_port)]
    assert conn.state == ESTABLISHED
    return node, app, conn, synack.seq


def full_sized_segment(i, conn_iss, start=101, size=360):
    seq = start + i * size
    return peer_packet(4096, 80, seq, conn_iss + 1, wire.TCP_ACK, bytes(size))


def test_single_full_segment_is_ack_delayed():
    node, app, conn, iss = serverside()
    node.take_timer_requests()
    outs = node.input(full_sized_segment(0, iss), now=10_000)
    assert outs == []  # no immediate ACK
    requests = node.take_timer_requests()
    assert (TIMER_DELAYED_ACK, 210_000, conn.key) in requests
    outs = node.on_delayed_ack_timer(conn.key, 210_000)
    assert len(outs) == 1
    _, ack = parse_out(outs[0])
    assert ack.flags == wire.TCP_ACK and ack.ack == 461


def test_second_segment_triggers_immediate_ack_covering_both():
    node, app, conn, iss = serverside()
    assert node.input(full_sized_segment(0, iss), now=10_000) == []
    outs = node.input(full_sized_segment(1, iss), now=12_000)
    assert len(outs) == 1
    _, ack = parse_out(outs[0])
    assert ack.ack == 101 + 720


def test_timer_after_every_n_ack_emits_nothing():
    node, app, conn, iss = serverside()
    node.input(full_sized_segment(0, iss), now=10_000)
    node.input(full_sized_segment(1, iss), now=12_000)  # immediate ACK here
    assert node.on_delayed_ack_timer(conn.key, 210_000) == []


def test_two_arms_before_expiry_single_ack():
    # two arrivals below the every-n threshold both want an ACK; the deadline
    # stays at the first arrival and exactly one ACK comes out
    node = FullTcpNode(FULL, FullTcpConfig(ack_every_n_segments=3))
    node, app, conn, iss = serverside(node=node, peer_mss=1000)
    node.take_timer_requests()
    node.input(peer_packet(4096, 80, 101, iss + 1, wire.TCP_ACK, bytes(10)), now=1_000)
    first_requests = node.take_timer_requests()
    assert first_requests == [(TIMER_DELAYED_ACK, 201_000, conn.key)]
    outs = node.input(peer_packet(4096, 80, 111, iss + 1, wire.TCP_ACK, bytes(10)),
                      now=2_000)
    assert node.take_timer_requests() == []  # timer already armed
    assert conn.ack_deadline == 201_000
    outs = node.on_delayed_ack_timer(conn.key, 201_000)
    assert len(outs) == 1
    assert node.on_delayed_ack_timer(conn.key, 202_000) == []


def test_out_of_order_gets_immediate_duplicate_ack():
    node, app, conn, iss = serverside()
    outs = node.input(full_sized_segment(2, iss), now=10_000)
    assert len(outs) == 1
    _, ack = parse_out(outs[0])
    assert ack.ack == 101  # unchanged
    # filling the gap delivers everything and acks immediately
    node.input(full_sized_segment(1, iss), now=11_000)
    outs = node.input(full_sized_segment(0, iss), now=12_000)
    assert len(outs) == 1
    _, ack = parse_out(outs[0])
    assert ack.ack == 101 + 3 * 360
    assert len(app.received) == 3 * 360


def test_send_respects_constrained_peer_window():
    node, app, conn, iss = serverside()  # peer window 360 from the handshake
    outs = node.send(conn, bytes(1000), now=20_000)
    assert len(outs) == 1
    _, seg = parse_out(outs[0])
    assert len(seg.payload) == 360
    # the ACK opens the window again
    outs = node.input(peer_packet(4096, 80, 101, seg.seq + 360, wire.TCP_ACK),
                      now=30_000)
    assert len(outs) == 1
    _, seg2 = parse_out(outs[0])
    assert len(seg2.payload) == 360


def test_send_wide_window_bursts_three_segments():
    node, app, conn, iss = serverside()
    conn.peer_window = 65535
    conn.peer_mss = 360
    outs = node.send(conn, bytes(1000), now=20_000)
    assert [len(parse_out(p)[1].payload) for p in outs] == [360, 360, 280]


def test_send_empty_data_no_output():
    node, app, conn, iss = serverside()
    assert node.send(conn, b"", now=20_000) == []


def test_rto_retransmits_first_unacked():
    node, app, conn, iss = serverside()
    node.take_timer_requests()
    outs = node.send(conn, bytes(100), now=20_000)
    (kind, deadline, key), = node.take_timer_requests()
    assert kind == TIMER_RTO and deadline == 1_020_000
    outs = node.on_rto_timer(conn.key, deadline)
    assert len(outs) == 1
    _, seg = parse_out(outs[0])
    assert len(seg.payload) == 100
    assert conn.stat_rexmits == 1


def test_peer_fin_closes_back_with_finack():
    node, app, conn, iss = serverside()
    outs = node.input(peer_packet(4096, 80, 101, iss + 1,
                                  wire.TCP_FIN | wire.TCP_ACK), now=50_000)
    assert conn.state == LAST_ACK
    assert len(outs) == 1
    _, finack = parse_out(outs[0])
    assert finack.flags == wire.TCP_FIN | wire.TCP_ACK
    assert finack.ack == 102
    node.input(peer_packet(4096, 80, 102, finack.seq + 1, wire.TCP_ACK), now=60_000)
    assert conn.key not in node.conns


def test_fin_is_acked_immediately_even_with_pending_delayed_ack():
    node, app, conn, iss = serverside()
    node.input(full_sized_segment(0, iss), now=10_000)  # arms delayed ack
    outs = node.input(peer_packet(4096, 80, 461, iss + 1,
                                  wire.TCP_FIN | wire.TCP_ACK), now=20_000)
    assert len(outs) == 1
    _, finack = parse_out(outs[0])
    assert finack.ack == 462
    assert not conn.pending_ack


def test_delayed_ack_timeout_bound_validated():
    import pytest

    with pytest.raises(ValueError):
        FullTcpConfig(delayed_ack_timeout_us=600_000).validate()


def test_rst_to_closed_port():
    node = FullTcpNode(FULL)
    outs = node.input(peer_packet(4096, 99, 100, 0, wire.TCP_SYN), now=0)
    assert len(outs) == 1
    _, rst = parse_out(outs[0])
    assert rst.flags & wire.TCP_RST
