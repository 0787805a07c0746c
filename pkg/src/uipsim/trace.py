"""Classic pcap writing/reading and behavioral trace comparison.

Files use the classic 24-byte global header (magic 0xa1b2c3d4, version 2.4,
snaplen 65535) with linktype 101 (raw IPv4): simulator frames are IP packets
once the link layer is stripped, so captures need no layer-2 synthesis.
Writes are little-endian; reads accept either byte order. Timestamps carry
simulation time.
"""

import struct
from dataclasses import dataclass

from . import wire

PCAP_MAGIC = 0xA1B2C3D4
LINKTYPE_RAW_IPV4 = 101
GLOBAL_HEADER_LEN = 24
RECORD_HEADER_LEN = 16

# Ports below this value normalize as "fixed" service ports.
EPHEMERAL_PORT_FLOOR = 1024


class TraceError(Exception):
    pass


class NonMonotonicTimestamp(TraceError):
    pass


class BadMagic(TraceError):
    pass


class TruncatedRecord(TraceError):
    pass


class UnsupportedLinktype(TraceError):
    pass


class MultipleFlows(TraceError):
    pass


def global_header_bytes() -> bytes:
    return struct.pack("<IHHiIII", PCAP_MAGIC, 2, 4, 0, 0, 65535, LINKTYPE_RAW_IPV4)


class TraceWriter:
    def __init__(self, path):
        self._file = open(path, "wb")
        self._file.write(global_header_bytes())
        self._last_ts = 0
        self._wrote_any = False

    def write(self, time_us: int, packet: bytes) -> None:
        if self._wrote_any and time_us < self._last_ts:
            raise NonMonotonicTimestamp(
                f"timestamp {time_us} after {self._last_ts}"
            )
        self._last_ts = time_us
        self._wrote_any = True
        sec, usec = divmod(time_us, 10**6)
        self._file.write(struct.pack("<IIII", sec, usec, len(packet), len(packet)))
        self._file.write(packet)

    def close(self) -> None:
        if not self._file.closed:
            self._file.flush()
            self._file.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
        return False


def trace_open(path) -> TraceWriter:
    return TraceWriter(path)


def trace_read(path) -> list[tuple[int, bytes]]:
    """Read all records as (time_us, packet) pairs."""
    with open(path, "rb") as f:
        data = f.read()
    if len(data) < GLOBAL_HEADER_LEN:
        raise BadMagic("file shorter than a pcap global header")
    magic_le = struct.unpack("<I", data[:4])[0]
    if magic_le == PCAP_MAGIC:
        endian = "<"
    elif struct.unpack(">I", data[:4])[0] == PCAP_MAGIC:
        endian = ">"
    else:
        raise BadMagic(f"magic 0x{magic_le:08x} is not a classic pcap magic")
    _, _, _, _, _, linktype = struct.unpack(endian + "HHiIII", data[4:GLOBAL_HEADER_LEN])
    if linktype != LINKTYPE_RAW_IPV4:
        raise UnsupportedLinktype(f"linktype {linktype}, expected {LINKTYPE_RAW_IPV4}")
    records: list[tuple[int, bytes]] = []
    offset = GLOBAL_HEADER_LEN
    index = 0
    while offset < len(data):
        if offset + RECORD_HEADER_LEN > len(data):
            raise TruncatedRecord(f"record {index}: header truncated")
        sec, usec, incl_len, _ = struct.unpack(
            endian + "IIII", data[offset : offset + RECORD_HEADER_LEN]
        )
        offset += RECORD_HEADER_LEN
        if offset + incl_len > len(data):
            raise TruncatedRecord(f"record {index}: {incl_len} bytes declared, "
                                  f"{len(data) - offset} present")
        records.append((sec * 10**6 + usec, data[offset : offset + incl_len]))
        offset += incl_len
        index += 1
    return records


@dataclass(frozen=True)
class NormalizedPacket:
    direction: str  # "a->b" or "b->a"
    proto: str  # "tcp" or "udp"
    tcp_flags: frozenset
    rel_seq: int
    rel_ack: int
    payload_len: int
    src_port_class: str  # "fixed" or "ephemeral"


def _port_class(port: int) -> str:
    return "fixed" if port < EPHEMERAL_PORT_FLOOR else "ephemeral"


def normalize(records: list[tuple[int, bytes]], endpoint_a: str) -> list[NormalizedPacket]:
    """Behavior-only projection of a single-conversation trace.

    Sequence numbers are rebased to each direction's initial value, and
    timestamps, addresses, and concrete port numbers are erased (ports keep
    only their fixed/ephemeral class). Multi-flow traces are rejected.
    """
    parsed = []
    flow_keys = set()
    for _, packet in records:
        ip, reason = wire.parse_ipv4(packet)
        if ip is None:
            raise TraceError(f"unparseable packet in trace: {reason}")
        if ip.proto == wire.PROTO_TCP:
            tcp, reason = wire.parse_tcp(ip.src, ip.dst, ip.payload)
            if tcp is None:
                raise TraceError(f"bad TCP segment in trace: {reason}")
            key = ("tcp", frozenset(((ip.src, tcp.sport), (ip.dst, tcp.dport))))
            parsed.append((ip, tcp))
        elif ip.proto == wire.PROTO_UDP:
            udp, reason = wire.parse_udp(ip.src, ip.dst, ip.payload, verify_checksum=False)
            if udp is None:
                raise TraceError(f"bad UDP datagram in trace: {reason}")
            key = ("udp", frozenset(((ip.src, udp.sport), (ip.dst, udp.dport))))
            parsed.append((ip, udp))
        else:
            raise TraceError(f"unsupported protocol {ip.proto} in trace")
        flow_keys.add(key)
        if len(flow_keys) > 1:
            raise MultipleFlows(f"{len(flow_keys)} flows in one trace")

    # each direction rebases to its first SYN's sequence number, falling back
    # to the first segment seen when the trace lacks the handshake
    syn_isn: dict[str, int] = {}
    first_seen: dict[str, int] = {}
    for ip, seg in parsed:
        if isinstance(seg, wire.ParsedTcp):
            direction = "a->b" if ip.src == endpoint_a else "b->a"
            first_seen.setdefault(direction, seg.seq)
            if seg.flags & wire.TCP_SYN and direction not in syn_isn:
                syn_isn[direction] = seg.seq
    isn = {d: syn_isn.get(d, first_seen[d]) for d in first_seen}

    out: list[NormalizedPacket] = []
    for ip, seg in parsed:
        direction = "a->b" if ip.src == endpoint_a else "b->a"
        reverse = "b->a" if direction == "a->b" else "a->b"
        if isinstance(seg, wire.ParsedTcp):
            rel_seq = wire.seq_diff(seg.seq, isn.get(direction, seg.seq))
            if seg.flags & wire.TCP_ACK and reverse in isn:
                rel_ack = wire.seq_diff(seg.ack, isn[reverse])
            else:
                rel_ack = 0
            out.append(
                NormalizedPacket(
                    direction=direction,
                    proto="tcp",
                    tcp_flags=wire.flag_names(seg.flags),
                    rel_seq=rel_seq,
                    rel_ack=rel_ack,
                    payload_len=len(seg.payload),
                    src_port_class=_port_class(seg.sport),
                )
            )
        else:
            out.append(
                NormalizedPacket(
                    direction=direction,
                    proto="udp",
                    tcp_flags=frozenset(),
                    rel_seq=0,
                    rel_ack=0,
                    payload_len=len(seg.payload),
                    src_port_class=_port_class(seg.sport),
                )
            )
    return out


@dataclass(frozen=True)
class TracesEqual:
    length: int


@dataclass(frozen=True)
class FirstDivergence:
    index: int
    a_packet: NormalizedPacket
    b_packet: NormalizedPacket


@dataclass(frozen=True)
class LengthMismatch:
    len_a: int
    len_b: int


def trace_compare(a: list[NormalizedPacket], b: list[NormalizedPacket]):
    """Elementwise comparison; a divergence wins over a length mismatch."""
    for index, (pa, pb) in enumerate(zip(a, b)):
        if pa != pb:
            return FirstDivergence(index, pa, pb)
    if len(a) != len(b):
        return LengthMismatch(len(a), len(b))
    return TracesEqual(len(a))
