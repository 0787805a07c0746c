"""IPv4/TCP/UDP wire formats, big-endian, no IP options.

Both stack models emit complete IPv4 packets built here, and these exact bytes
are what the trace module writes to pcap files.
"""

import struct
from dataclasses import dataclass

IP_HEADER_LEN = 20
TCP_HEADER_LEN = 20
UDP_HEADER_LEN = 8

PROTO_TCP = 6
PROTO_UDP = 17

TCP_FIN = 0x01
TCP_SYN = 0x02
TCP_RST = 0x04
TCP_PSH = 0x08
TCP_ACK = 0x10
TCP_URG = 0x20

_FLAG_NAMES = (
    (TCP_FIN, "FIN"),
    (TCP_SYN, "SYN"),
    (TCP_RST, "RST"),
    (TCP_PSH, "PSH"),
    (TCP_ACK, "ACK"),
    (TCP_URG, "URG"),
)

SEQ_MOD = 1 << 32


def flag_names(flags: int) -> frozenset[str]:
    return frozenset(name for bit, name in _FLAG_NAMES if flags & bit)


def seq_add(a: int, b: int) -> int:
    return (a + b) % SEQ_MOD


def seq_diff(a: int, b: int) -> int:
    return (a - b) % SEQ_MOD


def addr_to_bytes(addr: str) -> bytes:
    parts = addr.split(".")
    if len(parts) != 4:
        raise ValueError(f"bad IPv4 address {addr!r}")
    return bytes(int(p) for p in parts)


def addr_from_bytes(raw: bytes) -> str:
    return ".".join(str(b) for b in raw)


def internet_checksum(data: bytes, initial: int = 0) -> int:
    """Ones-complement of the ones-complement 16-bit word sum of `data`.

    Words are read big-endian; an odd trailing byte is zero-padded. `initial`
    is folded into the sum, which lets callers chain partial sums.
    """
    if len(data) % 2:
        data = data + b"\x00"
    total = initial & 0xFFFF
    if data:
        for word in struct.unpack(f">{len(data) // 2}H", data):
            total += word
    while total >> 16:
        total = (total & 0xFFFF) + (total >> 16)
    return (~total) & 0xFFFF


def build_ipv4(src: str, dst: str, proto: int, payload: bytes, ident: int, ttl: int = 64) -> bytes:
    total_len = IP_HEADER_LEN + len(payload)
    header = struct.pack(
        ">BBHHHBBH4s4s",
        0x45, 0, total_len, ident & 0xFFFF, 0, ttl, proto, 0,
        addr_to_bytes(src), addr_to_bytes(dst),
    )
    cksum = internet_checksum(header)
    return header[:10] + struct.pack(">H", cksum) + header[12:] + payload


@dataclass(frozen=True)
class ParsedIp:
    src: str
    dst: str
    proto: int
    ident: int
    ttl: int
    payload: bytes


def parse_ipv4(packet: bytes) -> tuple[ParsedIp | None, str]:
    """Parse and verify an IPv4 packet; returns (None, reason) on any defect."""
    if len(packet) < IP_HEADER_LEN:
        return None, "short-header"
    ver_ihl, _, total_len, ident, _, ttl, proto, _, src, dst = struct.unpack(
        ">BBHHHBBH4s4s", packet[:IP_HEADER_LEN]
    )
    if ver_ihl >> 4 != 4:
        return None, "not-ipv4"
    if ver_ihl & 0x0F != 5:
        return None, "ip-options"
    if total_len != len(packet):
        return None, "length-mismatch"
    if internet_checksum(packet[:IP_HEADER_LEN]) != 0:
        return None, "ip-checksum"
    return (
        ParsedIp(addr_from_bytes(src), addr_from_bytes(dst), proto, ident, ttl,
                 packet[IP_HEADER_LEN:]),
        "",
    )


def _pseudo_header(src: str, dst: str, proto: int, length: int) -> bytes:
    return addr_to_bytes(src) + addr_to_bytes(dst) + struct.pack(">BBH", 0, proto, length)


def build_tcp_segment(
    src: str,
    dst: str,
    sport: int,
    dport: int,
    seq: int,
    ack: int,
    flags: int,
    window: int,
    payload: bytes = b"",
    mss_option: int | None = None,
) -> bytes:
    options = b""
    if mss_option is not None:
        options = struct.pack(">BBH", 2, 4, mss_option)
    offset_words = (TCP_HEADER_LEN + len(options)) // 4
    header = struct.pack(
        ">HHIIHHHH",
        sport, dport, seq % SEQ_MOD, ack % SEQ_MOD,
        (offset_words << 12) | (flags & 0x3F), window, 0, 0,
    )
    segment = header + options + payload
    pseudo = _pseudo_header(src, dst, PROTO_TCP, len(segment))
    cksum = internet_checksum(pseudo + segment)
    return segment[:16] + struct.pack(">H", cksum) + segment[18:]


@dataclass(frozen=True)
class ParsedTcp:
    sport: int
    dport: int
    seq: int
    ack: int
    flags: int
    window: int
    mss_option: int | None
    payload: bytes


def parse_tcp(src: str, dst: str, segment: bytes) -> tuple[ParsedTcp | None, str]:
    if len(segment) < TCP_HEADER_LEN:
        return None, "short-tcp"
    sport, dport, seq, ack, offset_flags, window, _, _ = struct.unpack(
        ">HHIIHHHH", segment[:TCP_HEADER_LEN]
    )
    offset = (offset_flags >> 12) * 4
    if offset < TCP_HEADER_LEN or offset > len(segment):
        return None, "bad-offset"
    pseudo = _pseudo_header(src, dst, PROTO_TCP, len(segment))
    if internet_checksum(pseudo + segment) != 0:
        return None, "tcp-checksum"
    mss = None
    options = segment[TCP_HEADER_LEN:offset]
    i = 0
    while i < len(options):
        kind = options[i]
        if kind == 0:
            break
        if kind == 1:
            i += 1
            continue
        if i + 1 >= len(options) or options[i + 1] < 2:
            return None, "bad-option"
        if kind == 2 and options[i + 1] == 4:
            mss = struct.unpack(">H", options[i + 2 : i + 4])[0]
        i += options[i + 1]
    return (
        ParsedTcp(sport, dport, seq, ack, offset_flags & 0x3F, window, mss, segment[offset:]),
        "",
    )


def build_udp_datagram(
    src: str, dst: str, sport: int, dport: int, payload: bytes, with_checksum: bool = True
) -> bytes:
    length = UDP_HEADER_LEN + len(payload)
    header = struct.pack(">HHHH", sport, dport, length, 0)
    if with_checksum:
        pseudo = _pseudo_header(src, dst, PROTO_UDP, length)
        cksum = internet_checksum(pseudo + header + payload)
        if cksum == 0:
            cksum = 0xFFFF  # transmitted form of a computed zero
        header = header[:6] + struct.pack(">H", cksum)
    return header + payload


@dataclass(frozen=True)
class ParsedUdp:
    sport: int
    dport: int
    payload: bytes


def parse_udp(src: str, dst: str, datagram: bytes, verify_checksum: bool = True) -> tuple[ParsedUdp | None, str]:
    if len(datagram) < UDP_HEADER_LEN:
        return None, "short-udp"
    sport, dport, length, cksum = struct.unpack(">HHHH", datagram[:UDP_HEADER_LEN])
    if length != len(datagram):
        return None, "udp-length"
    if verify_checksum and cksum != 0:
        pseudo = _pseudo_header(src, dst, PROTO_UDP, length)
        if internet_checksum(pseudo + datagram) != 0:
            return None, "udp-checksum"
    return ParsedUdp(sport, dport, datagram[UDP_HEADER_LEN:]), ""
