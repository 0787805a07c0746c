from hypothesis import given, strategies as st

from uipsim import wire


def test_checksum_worked_example():
    # hand sum: 0x0001 + 0xf203 + 0xf4f5 + 0xf6f7 folds to 0xddf2; complement 0x220d
    data = bytes([0x00, 0x01, 0xF2, 0x03, 0xF4, 0xF5, 0xF6, 0xF7])
    assert wire.internet_checksum(data) == 0x220D


def test_checksum_empty_is_ffff():
    assert wire.internet_checksum(b"") == 0xFFFF


def test_checksum_odd_length_zero_padded():
    assert wire.internet_checksum(b"\x01") == wire.internet_checksum(b"\x01\x00")


@given(st.binary(min_size=0, max_size=64))
def test_checksum_fold_property(data):
    # embedding the correct checksum at a 16-bit-aligned offset (as every
    # real header does) makes the whole thing verify to 0
    if len(data) % 2:
        data = data + b"\x00"
    cksum = wire.internet_checksum(data)
    folded = wire.internet_checksum(data + cksum.to_bytes(2, "big"))
    assert folded == 0


def test_ipv4_round_trip():
    packet = wire.build_ipv4("10.0.0.1", "10.0.0.2", wire.PROTO_TCP, b"payload", ident=42)
    parsed, reason = wire.parse_ipv4(packet)
    assert reason == ""
    assert parsed.src == "10.0.0.1"
    assert parsed.dst == "10.0.0.2"
    assert parsed.proto == wire.PROTO_TCP
    assert parsed.ident == 42
    assert parsed.payload == b"payload"


def test_ipv4_header_checksum_verifies_to_zero():
    packet = wire.build_ipv4("1.2.3.4", "5.6.7.8", 6, b"", 0)
    assert wire.internet_checksum(packet[:20]) == 0


def test_ipv4_corruption_detected():
    packet = bytearray(wire.build_ipv4("1.2.3.4", "5.6.7.8", 6, b"zz", 0))
    packet[8] ^= 0xFF  # ttl
    parsed, reason = wire.parse_ipv4(bytes(packet))
    assert parsed is None and reason == "ip-checksum"


def test_tcp_round_trip_with_mss():
    seg = wire.build_tcp_segment(
        "10.0.0.1", "10.0.0.2", 4096, 80, seq=1000, ack=2000,
        flags=wire.TCP_SYN, window=360, mss_option=360,
    )
    parsed, reason = wire.parse_tcp("10.0.0.1", "10.0.0.2", seg)
    assert reason == ""
    assert parsed.sport == 4096 and parsed.dport == 80
    assert parsed.seq == 1000 and parsed.ack == 2000
    assert parsed.flags == wire.TCP_SYN
    assert parsed.mss_option == 360
    assert parsed.payload == b""


def test_tcp_checksum_detects_payload_flip():
    seg = bytearray(
        wire.build_tcp_segment("10.0.0.1", "10.0.0.2", 1, 2, 0, 0, wire.TCP_ACK, 100, b"data")
    )
    seg[-1] ^= 0x01
    parsed, reason = wire.parse_tcp("10.0.0.1", "10.0.0.2", bytes(seg))
    assert parsed is None and reason == "tcp-checksum"


def test_tcp_pseudo_header_covers_addresses():
    seg = wire.build_tcp_segment("10.0.0.1", "10.0.0.2", 1, 2, 0, 0, wire.TCP_ACK, 100)
    parsed, _ = wire.parse_tcp("10.0.0.9", "10.0.0.2", seg)
    assert parsed is None


def test_udp_round_trip():
    dg = wire.build_udp_datagram("10.0.0.1", "10.0.0.2", 5000, 6000, b"blast")
    parsed, reason = wire.parse_udp("10.0.0.1", "10.0.0.2", dg)
    assert reason == ""
    assert (parsed.sport, parsed.dport, parsed.payload) == (5000, 6000, b"blast")


def test_udp_checksum_disabled_is_zero_on_wire():
    dg = wire.build_udp_datagram("10.0.0.1", "10.0.0.2", 5000, 6000, b"x", with_checksum=False)
    assert dg[6:8] == b"\x00\x00"
    parsed, reason = wire.parse_udp("10.0.0.1", "10.0.0.2", dg, verify_checksum=True)
    assert parsed is not None  # zero means "no checksum supplied"


def test_flag_names():
    assert wire.flag_names(wire.TCP_SYN | wire.TCP_ACK) == frozenset({"SYN", "ACK"})
