"""Reference full-scale TCP peer.

A behavioral model rather than an extracted OS stack: sliding-window sender,
out-of-order receive buffering, and the standard delayed-acknowledgment
policy (acknowledge every second in-order data segment immediately, otherwise
no later than a fixed timeout after the first unacknowledged arrival). Timers
are requested from the host rather than owned, so the model stays a passive
state machine under an external event loop.
"""

from collections import Counter
from dataclasses import dataclass, field

from . import wire
from .wire import TCP_ACK, TCP_FIN, TCP_RST, TCP_SYN, seq_add, seq_diff

CLOSED = "CLOSED"
SYN_SENT = "SYN_SENT"
SYN_RCVD = "SYN_RCVD"
ESTABLISHED = "ESTABLISHED"
FIN_WAIT_1 = "FIN_WAIT_1"
FIN_WAIT_2 = "FIN_WAIT_2"
CLOSING = "CLOSING"
TIME_WAIT = "TIME_WAIT"
LAST_ACK = "LAST_ACK"

TIMER_DELAYED_ACK = "delayed-ack"
TIMER_RTO = "rto"
TIMER_TIME_WAIT = "time-wait"


class FullStackError(Exception):
    pass


@dataclass
class FullTcpConfig:
    recv_window: int = 65535
    delayed_ack_timeout_us: int = 200_000
    ack_every_n_segments: int = 2
    initial_rto_us: int = 1_000_000
    rto_cap_us: int = 16_000_000
    mss: int = 1460
    max_retransmissions: int = 8
    reorder_limit: int = 64
    time_wait_us: int = 2_000_000

    def validate(self) -> None:
        if self.delayed_ack_timeout_us > 500_000:
            raise ValueError("delayed_ack_timeout_us must be <= 500000")
        if self.ack_every_n_segments < 1:
            raise ValueError("ack_every_n_segments must be >= 1")
        for name in ("recv_window", "initial_rto_us", "mss", "reorder_limit", "time_wait_us"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


@dataclass
class _Unacked:
    seq: int
    payload: bytes
    is_syn: bool = False
    is_fin: bool = False

    def span(self) -> int:
        return len(self.payload) + (1 if self.is_syn or self.is_fin else 0)


@dataclass
class FullConnection:
    key: tuple[int, str, int]  # (local port, remote addr, remote port)
    state: str
    iss: int
    snd_una: int
    snd_nxt: int
    rcv_nxt: int
    peer_window: int = 0
    peer_mss: int | None = None
    send_queue: bytearray = field(default_factory=bytearray)
    unacked: list[_Unacked] = field(default_factory=list)
    fin_pending: bool = False
    fin_sent: bool = False
    # delayed-ack state
    pending_ack: bool = False
    ack_deadline: int = 0
    ack_timer_armed: bool = False
    unacked_segments: int = 0
    reorder: dict[int, bytes] = field(default_factory=dict)
    # retransmission state
    rto_deadline: int | None = None
    rto_interval_us: int = 0
    nrtx: int = 0
    app: object = None
    stat_bytes_acked: int = 0
    stat_segments_out: int = 0
    stat_rexmits: int = 0

    def snd_nxt_wire(self) -> int:
        """Sequence number for empty control segments."""
        return self.snd_nxt


class FullApp:
    """Default application hooks; subclass and override what you need."""

    def established(self, node, conn):
        pass

    def data(self, node, conn, data: bytes):
        pass

    def peer_closed(self, node, conn) -> bool:
        return True  # close our side in response

    def closed(self, node, conn):
        pass

    def aborted(self, node, conn):
        pass


class FullTcpNode:
    """Host-facing wrapper: one address, many connections, timer requests."""

    def __init__(self, addr: str, config: FullTcpConfig | None = None):
        self.addr = addr
        self.config = config or FullTcpConfig()
        self.config.validate()
        self.conns: dict[tuple, FullConnection] = {}
        self.listeners: dict[int, FullApp] = {}
        self.timer_requests: list[tuple[str, int, tuple]] = []
        self.counters: Counter = Counter()
        self._iss_next = 3_000_001
        self._port_next = 49152
        self._ip_ident = 0

    def take_timer_requests(self) -> list[tuple[str, int, tuple]]:
        requests, self.timer_requests = self.timer_requests, []
        return requests

    def listen(self, port: int, app: FullApp | None = None) -> None:
        self.listeners[port] = app or FullApp()

    def connect(self, remote_addr: str, remote_port: int, now: int,
                app: FullApp | None = None, local_port: int | None = None) -> list[bytes]:
        lport = local_port if local_port is not None else self._next_port()
        key = (lport, remote_addr, remote_port)
        if key in self.conns:
            raise FullStackError(f"connection {key} already exists")
        iss = self._next_iss()
        conn = FullConnection(
            key=key, state=SYN_SENT, iss=iss, snd_una=iss,
            snd_nxt=seq_add(iss, 1), rcv_nxt=0, app=app or FullApp(),
        )
        self.conns[key] = conn
        out: list[bytes] = []
        conn.unacked.append(_Unacked(iss, b"", is_syn=True))
        self._emit(out, conn, TCP_SYN, iss, mss_option=self.config.mss)
        self._arm_rto(conn, now)
        return out

    def queue(self, conn: FullConnection, data: bytes) -> None:
        """Buffer application data without emitting; the current or next
        processing pass sends whatever the peer window allows."""
        conn.send_queue.extend(data)

    def send(self, conn: FullConnection, data: bytes, now: int) -> list[bytes]:
        """Queue application data and emit whatever the peer window allows."""
        if conn.state not in (ESTABLISHED, SYN_SENT, SYN_RCVD):
            raise FullStackError(f"cannot send in state {conn.state}")
        conn.send_queue.extend(data)
        out: list[bytes] = []
        self._try_send(out, conn, now)
        return out

    def close(self, conn: FullConnection, now: int) -> list[bytes]:
        conn.fin_pending = True
        out: list[bytes] = []
        self._try_send(out, conn, now)
        return out

    # -- input ----------------------------------------------------------------

    def input(self, packet: bytes, now: int) -> list[bytes]:
        out: list[bytes] = []
        ip, reason = wire.parse_ipv4(packet)
        if ip is None:
            self.counters[f"drop_{reason}"] += 1
            return out
        if ip.dst != self.addr:
            self.counters["drop_not_mine"] += 1
            return out
        if ip.proto != wire.PROTO_TCP:
            self.counters["drop_proto"] += 1
            return out
        tcp, reason = wire.parse_tcp(ip.src, ip.dst, ip.payload)
        if tcp is None:
            self.counters[f"drop_{reason}"] += 1
            return out
        conn = self.conns.get((tcp.dport, ip.src, tcp.sport))
        if conn is None:
            self._unbound(out, ip, tcp, now)
            return out
        self._segment(out, conn, tcp, now)
        return out

    def _unbound(self, out, ip, tcp, now) -> None:
        if tcp.flags & TCP_RST:
            return
        if tcp.flags & TCP_SYN and not (tcp.flags & TCP_ACK) and tcp.dport in self.listeners:
            iss = self._next_iss()
            conn = FullConnection(
                key=(tcp.dport, ip.src, tcp.sport),
                state=SYN_RCVD, iss=iss, snd_una=iss, snd_nxt=seq_add(iss, 1),
                rcv_nxt=seq_add(tcp.seq, 1),
                peer_window=tcp.window, peer_mss=tcp.mss_option,
                app=self.listeners[tcp.dport],
            )
            self.conns[conn.key] = conn
            conn.unacked.append(_Unacked(iss, b"", is_syn=True))
            self._emit(out, conn, TCP_SYN | TCP_ACK, iss, mss_option=self.config.mss)
            self._arm_rto(conn, now)
            return
        # reset for anything else addressed at a closed port
        seg_len = len(tcp.payload)
        seg_len += 1 if tcp.flags & TCP_SYN else 0
        seg_len += 1 if tcp.flags & TCP_FIN else 0
        if tcp.flags & TCP_ACK:
            seq, ack, flags = tcp.ack, 0, TCP_RST
        else:
            seq, ack, flags = 0, seq_add(tcp.seq, seg_len), TCP_RST | TCP_ACK
        segment = wire.build_tcp_segment(self.addr, ip.src, tcp.dport, tcp.sport,
                                         seq, ack, flags, 0)
        out.append(self._packetize(ip.src, segment))
        self.counters["rst_out"] += 1

    def _segment(self, out, conn, tcp, now) -> None:
        flags = tcp.flags
        if flags & TCP_RST:
            conn.app.aborted(self, conn)
            self._drop_conn(conn)
            return

        conn.peer_window = tcp.window
        if tcp.mss_option is not None:
            conn.peer_mss = tcp.mss_option

        if conn.state == SYN_SENT:
            if flags & TCP_SYN and flags & TCP_ACK and tcp.ack == seq_add(conn.iss, 1):
                conn.rcv_nxt = seq_add(tcp.seq, 1)
                self._consume_acks(conn, tcp.ack, now)
                conn.state = ESTABLISHED
                self._emit(out, conn, TCP_ACK, conn.snd_nxt)
                conn.app.established(self, conn)
                self._try_send(out, conn, now)
            return
        if conn.state == SYN_RCVD:
            if flags & TCP_SYN and not flags & TCP_ACK:
                self._emit(out, conn, TCP_SYN | TCP_ACK, conn.iss,
                           mss_option=self.config.mss)
                return
            if flags & TCP_ACK and tcp.ack == seq_add(conn.iss, 1):
                self._consume_acks(conn, tcp.ack, now)
                conn.state = ESTABLISHED
                conn.app.established(self, conn)
            else:
                return

        if flags & TCP_ACK:
            self._consume_acks(conn, tcp.ack, now)
            self._try_send(out, conn, now)
            if conn.state == CLOSED:
                return

        dlen = len(tcp.payload)
        fin = bool(flags & TCP_FIN)
        if not dlen and not fin:
            return
        if conn.state == TIME_WAIT:
            self._emit(out, conn, TCP_ACK, conn.snd_nxt_wire())
            return
        if conn.state not in (ESTABLISHED, FIN_WAIT_1, FIN_WAIT_2):
            self._emit(out, conn, TCP_ACK, conn.snd_nxt_wire())
            return

        if dlen and tcp.seq == conn.rcv_nxt:
            conn.rcv_nxt = seq_add(conn.rcv_nxt, dlen)
            conn.app.data(self, conn, tcp.payload)
            filled_gap = self._drain_reorder(conn)
            conn.unacked_segments += 1
            if fin:
                self._peer_fin(out, conn, now)
            elif filled_gap or conn.unacked_segments >= self.config.ack_every_n_segments:
                self._emit(out, conn, TCP_ACK, conn.snd_nxt_wire())
            else:
                self._arm_delayed_ack(conn, now)
        elif dlen:
            offset = seq_diff(tcp.seq, conn.rcv_nxt)
            if 0 < offset < self.config.recv_window and len(conn.reorder) < self.config.reorder_limit:
                conn.reorder.setdefault(tcp.seq, tcp.payload)
            # duplicate or out-of-order data: acknowledge immediately
            self._emit(out, conn, TCP_ACK, conn.snd_nxt_wire())
            if fin:
                self.counters["fin_out_of_order"] += 1
        elif fin:
            if tcp.seq == conn.rcv_nxt:
                self._peer_fin(out, conn, now)
            else:
                self._emit(out, conn, TCP_ACK, conn.snd_nxt_wire())

    def _peer_fin(self, out, conn, now) -> None:
        conn.rcv_nxt = seq_add(conn.rcv_nxt, 1)
        if conn.state == ESTABLISHED:
            close_back = conn.app.peer_closed(self, conn)
            if close_back:
                # acknowledge their FIN and send ours in one segment
                conn.fin_pending = True
                conn.state = LAST_ACK
                self._queue_fin(out, conn, now)
            else:
                self._emit(out, conn, TCP_ACK, conn.snd_nxt_wire())
                conn.state = LAST_ACK  # our FIN follows once the app closes
        elif conn.state == FIN_WAIT_1:
            conn.state = CLOSING
            self._emit(out, conn, TCP_ACK, conn.snd_nxt_wire())
            conn.app.peer_closed(self, conn)
        elif conn.state == FIN_WAIT_2:
            conn.state = TIME_WAIT
            self._emit(out, conn, TCP_ACK, conn.snd_nxt_wire())
            conn.app.peer_closed(self, conn)
            self.timer_requests.append((TIMER_TIME_WAIT, now + self.config.time_wait_us, conn.key))

    # -- ack bookkeeping ---------------------------------------------------------

    def _consume_acks(self, conn, ack, now) -> None:
        progressed = False
        while conn.unacked:
            head = conn.unacked[0]
            end = seq_add(head.seq, head.span())
            if seq_diff(ack, end) < (1 << 31):  # ack >= end (mod 2**32)
                conn.unacked.pop(0)
                conn.snd_una = end
                conn.stat_bytes_acked += len(head.payload)
                if head.is_fin:
                    self._fin_acked(conn, now)
                conn.nrtx = 0
                progressed = True
            else:
                break
        if progressed:
            if conn.unacked:
                self._arm_rto(conn, now, restart=True)
            else:
                conn.rto_deadline = None

    def _fin_acked(self, conn, now) -> None:
        if conn.state == FIN_WAIT_1:
            conn.state = FIN_WAIT_2
        elif conn.state == CLOSING:
            conn.state = TIME_WAIT
            self.timer_requests.append((TIMER_TIME_WAIT, now + self.config.time_wait_us, conn.key))
        elif conn.state == LAST_ACK:
            conn.app.closed(self, conn)
            self._drop_conn(conn)

    def _drain_reorder(self, conn) -> bool:
        filled = False
        while conn.rcv_nxt in conn.reorder:
            data = conn.reorder.pop(conn.rcv_nxt)
            conn.rcv_nxt = seq_add(conn.rcv_nxt, len(data))
            conn.app.data(self, conn, data)
            filled = True
        return filled

    # -- sending -------------------------------------------------------------------

    def _effective_mss(self, conn) -> int:
        if conn.peer_mss is not None:
            return min(self.config.mss, conn.peer_mss)
        return self.config.mss

    def _outstanding(self, conn) -> int:
        return sum(u.span() for u in conn.unacked)

    def _try_send(self, out, conn, now) -> None:
        if conn.state not in (ESTABLISHED, LAST_ACK, FIN_WAIT_1, CLOSING):
            return
        mss = self._effective_mss(conn)
        while conn.send_queue:
            window_left = conn.peer_window - self._outstanding(conn)
            if window_left <= 0:
                break
            size = min(mss, len(conn.send_queue), window_left)
            payload = bytes(conn.send_queue[:size])
            del conn.send_queue[:size]
            conn.unacked.append(_Unacked(conn.snd_nxt, payload))
            self._emit(out, conn, TCP_ACK, conn.snd_nxt, payload)
            conn.snd_nxt = seq_add(conn.snd_nxt, size)
            self._arm_rto(conn, now)
        if conn.fin_pending and not conn.fin_sent and not conn.send_queue:
            self._queue_fin(out, conn, now)

    def _queue_fin(self, out, conn, now) -> None:
        conn.fin_sent = True
        if conn.state == ESTABLISHED:
            conn.state = FIN_WAIT_1
        conn.unacked.append(_Unacked(conn.snd_nxt, b"", is_fin=True))
        self._emit(out, conn, TCP_FIN | TCP_ACK, conn.snd_nxt)
        conn.snd_nxt = seq_add(conn.snd_nxt, 1)
        self._arm_rto(conn, now)

    # -- timers ---------------------------------------------------------------------

    def _arm_delayed_ack(self, conn, now) -> None:
        if not conn.pending_ack:
            conn.pending_ack = True
            conn.ack_deadline = now + self.config.delayed_ack_timeout_us
        if not conn.ack_timer_armed:
            conn.ack_timer_armed = True
            self.timer_requests.append((TIMER_DELAYED_ACK, conn.ack_deadline, conn.key))

    def on_delayed_ack_timer(self, key, now) -> list[bytes]:
        out: list[bytes] = []
        conn = self.conns.get(key)
        if conn is None:
            return out
        conn.ack_timer_armed = False
        if conn.pending_ack:
            self._emit(out, conn, TCP_ACK, conn.snd_nxt_wire())
        return out

    def _arm_rto(self, conn, now, restart: bool = False) -> None:
        interval = self.config.initial_rto_us << min(conn.nrtx, 4)
        interval = min(interval, self.config.rto_cap_us)
        conn.rto_interval_us = interval
        deadline = now + interval
        if restart or conn.rto_deadline is None:
            conn.rto_deadline = deadline
            self.timer_requests.append((TIMER_RTO, deadline, conn.key))

    def on_rto_timer(self, key, now) -> list[bytes]:
        out: list[bytes] = []
        conn = self.conns.get(key)
        if conn is None:
            return out
        if conn.rto_deadline is None or not conn.unacked:
            conn.rto_deadline = None
            return out
        if now < conn.rto_deadline:
            self.timer_requests.append((TIMER_RTO, conn.rto_deadline, key))
            return out
        if conn.nrtx >= self.config.max_retransmissions:
            self._emit(out, conn, TCP_RST, conn.snd_nxt_wire())
            conn.app.aborted(self, conn)
            self._drop_conn(conn)
            return out
        conn.nrtx += 1
        conn.stat_rexmits += 1
        head = conn.unacked[0]
        if head.is_syn:
            flags = TCP_SYN if conn.state == SYN_SENT else TCP_SYN | TCP_ACK
            self._emit(out, conn, flags, head.seq, mss_option=self.config.mss)
        elif head.is_fin:
            self._emit(out, conn, TCP_FIN | TCP_ACK, head.seq)
        else:
            self._emit(out, conn, TCP_ACK, head.seq, head.payload)
        conn.rto_deadline = None
        self._arm_rto(conn, now, restart=True)
        return out

    def on_time_wait_timer(self, key, now) -> None:
        conn = self.conns.get(key)
        if conn is not None and conn.state == TIME_WAIT:
            conn.app.closed(self, conn)
            self._drop_conn(conn)

    # -- emission ----------------------------------------------------------------------

    def _packetize(self, dst: str, segment: bytes) -> bytes:
        packet = wire.build_ipv4(self.addr, dst, wire.PROTO_TCP, segment, self._ip_ident)
        self._ip_ident = (self._ip_ident + 1) & 0xFFFF
        return packet

    def _emit(self, out, conn, flags, seq, payload: bytes = b"",
              mss_option: int | None = None) -> None:
        lport, raddr, rport = conn.key
        ack = conn.rcv_nxt if flags & TCP_ACK else 0
        segment = wire.build_tcp_segment(
            self.addr, raddr, lport, rport, seq, ack, flags,
            self.config.recv_window, payload, mss_option,
        )
        out.append(self._packetize(raddr, segment))
        if flags & TCP_ACK:
            conn.pending_ack = False
            conn.unacked_segments = 0
        if payload:
            conn.stat_segments_out += 1

    def _drop_conn(self, conn) -> None:
        conn.state = CLOSED
        self.conns.pop(conn.key, None)

    def _next_iss(self) -> int:
        iss = self._iss_next
        self._iss_next = (self._iss_next + 131_072) % wire.SEQ_MOD
        return iss

    def _next_port(self) -> int:
        port = self._port_next
        self._port_next += 1
        if self._port_next > 0xFFFF:
            self._port_next = 49152
        return port
