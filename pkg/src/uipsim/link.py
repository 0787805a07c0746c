"""Point-to-point link model: latency, serialization, Bernoulli loss, and
link-layer fragmentation with an 8-byte fragment header.

Frames on a link are encoded fragments; the payload of a complete fragment set
is one IP datagram. The fragment header is a generic stand-in (id, offset,
total length, 2 reserved bytes, all big-endian 16-bit fields).
"""

import struct
from dataclasses import dataclass

from .rng import Rng

FRAG_HEADER_LEN = 8
MAX_DATAGRAM_LEN = 65535


class LinkError(Exception):
    pass


class FrameTooLarge(LinkError):
    pass


class DatagramTooLarge(LinkError):
    pass


class InconsistentFragments(LinkError):
    pass


@dataclass(frozen=True)
class Link:
    latency_us: int
    bandwidth_bps: int
    loss_prob: float
    frag_threshold: int

    def __post_init__(self):
        if self.latency_us < 0:
            raise ValueError("latency must be non-negative")
        if self.bandwidth_bps <= 0:
            raise ValueError("bandwidth must be positive")
        if not 0.0 <= self.loss_prob <= 1.0:
            raise ValueError("loss_prob must be in [0, 1]")
        if self.frag_threshold < FRAG_HEADER_LEN:
            raise ValueError(f"frag_threshold must be >= {FRAG_HEADER_LEN}")


def serialization_us(nbytes: int, bandwidth_bps: int) -> int:
    return (nbytes * 8 * 10**6 + bandwidth_bps - 1) // bandwidth_bps


def link_transmit(link: Link, frame: bytes, depart_us: int, rng: Rng) -> int | None:
    """Arrival time of `frame` sent at `depart_us`, or None when lost.

    A draw below loss_prob loses the frame (so loss_prob=1 drops everything
    and loss_prob=0 never draws a loss). Delivery time is departure plus
    serialization at the link rate plus propagation latency.
    """
    if len(frame) > link.frag_threshold:
        raise FrameTooLarge(f"{len(frame)} byte frame exceeds threshold {link.frag_threshold}")
    if rng.next_float() < link.loss_prob:
        return None
    return depart_us + serialization_us(len(frame), link.bandwidth_bps) + link.latency_us


@dataclass(frozen=True)
class Fragment:
    datagram_id: int
    offset: int
    total_len: int
    payload: bytes

    def encode(self) -> bytes:
        return struct.pack(">HHHH", self.datagram_id, self.offset, self.total_len, 0) + self.payload

    @classmethod
    def decode(cls, frame: bytes) -> "Fragment":
        if len(frame) < FRAG_HEADER_LEN:
            raise InconsistentFragments("frame shorter than fragment header")
        datagram_id, offset, total_len, _ = struct.unpack(">HHHH", frame[:FRAG_HEADER_LEN])
        payload = frame[FRAG_HEADER_LEN:]
        if offset + len(payload) > total_len:
            raise InconsistentFragments("fragment extends past total length")
        return cls(datagram_id, offset, total_len, payload)


def fragment(datagram: bytes, threshold: int, datagram_id: int) -> list[Fragment]:
    """Split a datagram into fragments whose encoded size is <= threshold."""
    if len(datagram) > MAX_DATAGRAM_LEN:
        raise DatagramTooLarge(f"{len(datagram)} bytes exceeds {MAX_DATAGRAM_LEN}")
    if threshold < FRAG_HEADER_LEN:
        raise ValueError(f"threshold must be >= {FRAG_HEADER_LEN}")
    effective = threshold - FRAG_HEADER_LEN
    if not datagram:
        return [Fragment(datagram_id, 0, 0, b"")]
    if effective < 1:
        raise ValueError("threshold leaves no room for payload")
    total = len(datagram)
    return [
        Fragment(datagram_id, off, total, datagram[off : off + effective])
        for off in range(0, total, effective)
    ]


def reassemble(fragments: list[Fragment]) -> bytes | None:
    """Rebuild the datagram, or return None while coverage is incomplete.

    Fragments may arrive in any order; duplicates must carry identical bytes.
    Disagreement on overlapping bytes, total length, or datagram id raises
    InconsistentFragments.
    """
    if not fragments:
        return None
    datagram_id = fragments[0].datagram_id
    total = fragments[0].total_len
    buf = bytearray(total)
    covered = bytearray(total)
    for frag in fragments:
        if frag.datagram_id != datagram_id:
            raise InconsistentFragments("mixed datagram ids in one reassembly")
        if frag.total_len != total:
            raise InconsistentFragments("fragments disagree on total length")
        for i, byte in enumerate(frag.payload):
            pos = frag.offset + i
            if covered[pos] and buf[pos] != byte:
                raise InconsistentFragments(f"overlapping fragments disagree at offset {pos}")
            buf[pos] = byte
            covered[pos] = 1
    if not all(covered):
        return None
    return bytes(buf)


class Reassembler:
    """Incremental per-direction reassembly with a bounded pending set.

    Partial datagrams whose fragments were lost linger until evicted; the
    oldest pending id is dropped once max_pending ids are in flight.
    """

    def __init__(self, max_pending: int = 8):
        self.max_pending = max_pending
        self._pending: dict[int, list[Fragment]] = {}

    def add(self, frag: Fragment) -> bytes | None:
        frags = self._pending.setdefault(frag.datagram_id, [])
        frags.append(frag)
        done = reassemble(frags)
        if done is not None:
            del self._pending[frag.datagram_id]
            return done
        while len(self._pending) > self.max_pending:
            oldest = next(iter(self._pending))
            del self._pending[oldest]
        return None
