import random

import pytest
from hypothesis import given, strategies as st

from uipsim.link import (
    Fragment,
    FrameTooLarge,
    DatagramTooLarge,
    InconsistentFragments,
    Link,
    Reassembler,
    fragment,
    link_transmit,
    reassemble,
    serialization_us,
)
from uipsim.rng import Rng


def test_transmit_arithmetic():
    # 127 bytes at 250 kbit/s: 127*8*1e6/250000 = 4064 us, plus 1000 us latency
    link = Link(latency_us=1000, bandwidth_bps=250_000, loss_prob=0.0, frag_threshold=200)
    arrival = link_transmit(link, bytes(127), depart_us=0, rng=Rng(1))
    assert arrival == 4064 + 1000


def test_transmit_slow_link():
    link = Link(latency_us=0, bandwidth_bps=8, loss_prob=0.0, frag_threshold=64)
    assert link_transmit(link, b"x", 0, Rng(1)) == 10**6


def test_loss_prob_one_always_drops():
    link = Link(latency_us=0, bandwidth_bps=1000, loss_prob=1.0, frag_threshold=64)
    rng = Rng(5)
    assert all(link_transmit(link, b"ab", 0, rng) is None for _ in range(50))


def test_loss_prob_zero_never_drops():
    link = Link(latency_us=0, bandwidth_bps=1000, loss_prob=0.0, frag_threshold=64)
    rng = Rng(5)
    assert all(link_transmit(link, b"ab", 0, rng) is not None for _ in range(50))


def test_oversize_frame_rejected():
    link = Link(latency_us=0, bandwidth_bps=1000, loss_prob=0.0, frag_threshold=16)
    with pytest.raises(FrameTooLarge):
        link_transmit(link, bytes(17), 0, Rng(1))


def test_threshold_floor():
    with pytest.raises(ValueError):
        Link(latency_us=0, bandwidth_bps=1, loss_prob=0.0, frag_threshold=7)


def test_fragment_sizes():
    # 300 bytes at threshold 135: effective 127 -> payloads 127, 127, 46
    frags = fragment(bytes(300), threshold=135, datagram_id=7)
    assert [len(f.payload) for f in frags] == [127, 127, 46]
    assert [f.offset for f in frags] == [0, 127, 254]
    assert all(f.total_len == 300 for f in frags)
    assert all(f.datagram_id == 7 for f in frags)


def test_small_datagram_single_fragment():
    frags = fragment(b"hello", threshold=64, datagram_id=1)
    assert len(frags) == 1
    assert frags[0].offset == 0


def test_datagram_too_large():
    with pytest.raises(DatagramTooLarge):
        fragment(bytes(65536), threshold=64, datagram_id=0)


def test_fragment_encode_round_trip():
    frag = Fragment(513, 254, 300, b"abc")
    assert Fragment.decode(frag.encode()) == frag


def test_reassemble_any_permutation():
    data = bytes(range(256)) * 3
    frags = fragment(data, threshold=100, datagram_id=9)
    rng = random.Random(4)
    for _ in range(10):
        shuffled = frags[:]
        rng.shuffle(shuffled)
        assert reassemble(shuffled) == data


def test_reassemble_missing_fragment_incomplete():
    frags = fragment(bytes(300), threshold=100, datagram_id=2)
    assert reassemble(frags[:-1]) is None


def test_reassemble_conflicting_bytes_rejected():
    a = Fragment(1, 0, 4, b"abcd")
    b = Fragment(1, 0, 4, b"abce")
    with pytest.raises(InconsistentFragments):
        reassemble([a, b])


def test_reassemble_duplicates_tolerated():
    frags = fragment(b"payload-bytes", threshold=12, datagram_id=3)
    assert reassemble(frags + [frags[0]]) == b"payload-bytes"


def test_reassemble_total_len_conflict():
    a = Fragment(1, 0, 4, b"ab")
    b = Fragment(1, 2, 6, b"cd")
    with pytest.raises(InconsistentFragments):
        reassemble([a, b])


@given(st.binary(min_size=0, max_size=2000), st.integers(min_value=9, max_value=300))
def test_round_trip_property(data, threshold):
    frags = fragment(data, threshold, datagram_id=11)
    assert all(len(f.encode()) <= threshold for f in frags)
    shuffled = frags[::-1]
    assert reassemble(shuffled) == data


def test_incremental_reassembler():
    data = bytes(500)
    frags = fragment(data, threshold=100, datagram_id=4)
    r = Reassembler()
    for f in frags[:-1]:
        assert r.add(f) is None
    assert r.add(frags[-1]) == data


def test_serialization_rounding_up():
    assert serialization_us(1, 9_999_999) == 1
