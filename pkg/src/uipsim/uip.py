"""Constrained TCP/IP stack model.

Mirrors the micro-stack discipline: a single packet buffer shared by input and
output, stop-and-wait TCP with at most one unacknowledged segment, periodic
timer driven retransmission with no retransmission buffer (the application
regenerates data on request), and an event-callback application interface.
The optional split mode emits an exactly-full segment as two back-to-back
halves so delayed-ACK receivers acknowledge immediately.
"""

from collections import Counter
from dataclasses import dataclass, field

from . import wire
from .wire import (
    TCP_ACK,
    TCP_FIN,
    TCP_RST,
    TCP_SYN,
    seq_add,
)

CLOSED = "CLOSED"
SYN_SENT = "SYN_SENT"
SYN_RCVD = "SYN_RCVD"
ESTABLISHED = "ESTABLISHED"
FIN_WAIT_1 = "FIN_WAIT_1"
FIN_WAIT_2 = "FIN_WAIT_2"
CLOSING = "CLOSING"
TIME_WAIT = "TIME_WAIT"
LAST_ACK = "LAST_ACK"

EVENT_FLAGS = frozenset(
    {"connected", "newdata", "acked", "rexmit", "poll", "closed", "aborted", "timedout"}
)

IP_TCP_OVERHEAD = 40  # IPv4 header + TCP header, no options in data segments


class UipError(Exception):
    pass


class ConnectionTableFull(UipError):
    pass


class ListenerTableFull(UipError):
    pass


class SendWhileInflight(UipError):
    pass


@dataclass
class UipConfig:
    max_connections: int = 40
    max_listen_ports: int = 40
    buffer_size: int = 400
    packetbuf_size: int = 400
    tcp_enabled: bool = True
    udp_enabled: bool = True
    udp_checksums: bool = True
    tcp_split: bool = False
    periodic_interval_us: int = 500_000
    max_retransmissions: int = 8
    initial_rto_periods: int = 3
    rto_cap_periods: int = 16
    time_wait_periods: int = 2
    max_udp_endpoints: int = 10

    def mss(self) -> int:
        return self.buffer_size - IP_TCP_OVERHEAD

    def validate(self) -> None:
        if self.buffer_size < 60:
            raise ValueError("buffer_size must be at least 60")
        if self.packetbuf_size < 60:
            raise ValueError("packetbuf_size must be at least 60")
        for name in ("max_connections", "max_listen_ports", "periodic_interval_us",
                     "initial_rto_periods", "rto_cap_periods", "time_wait_periods"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.max_retransmissions < 0:
            raise ValueError("max_retransmissions must be non-negative")


@dataclass(frozen=True)
class AppEvent:
    flags: frozenset
    data: bytes = b""


@dataclass
class UipConnection:
    slot: int
    local_port: int
    remote_addr: str
    remote_port: int
    state: str
    iss: int
    snd_nxt: int
    rcv_nxt: int
    mss: int
    inflight_len: int = 0
    timer: int = 0
    nrtx: int = 0
    close_pending: bool = False
    fin_sent: bool = False
    syn_emitted: bool = False
    app: object = None
    peer_mss: int | None = None
    # accounting used by flow statistics
    stat_units_sent: int = 0
    stat_units_acked: int = 0
    stat_rexmits: int = 0
    stat_segments_out: int = 0


@dataclass
class UdpEndpoint:
    slot: int
    local_port: int
    remote_addr: str | None
    remote_port: int
    on_data: object = None


@dataclass
class StubTable:
    """Environment functions supplied to the stack by its host."""

    clock: object
    random: object
    log: object


def _default_stubs() -> StubTable:
    sink: list[str] = []
    return StubTable(clock=lambda: 0, random=lambda: 0, log=sink.append)


class UipApi:
    """Per-callback handle; only valid for the duration of one app callback."""

    def __init__(self, conn: UipConnection, rexmit: bool):
        self._conn = conn
        self._rexmit = rexmit
        self._active = True
        self.send_data: bytes | None = None
        self.close_req = False
        self.abort_req = False

    def send(self, data: bytes) -> int:
        """Hand at most one MSS of data to the stack; returns bytes accepted."""
        if not self._active:
            raise UipError("app api used outside its callback")
        conn = self._conn
        accepted = min(len(data), conn.mss)
        if self._rexmit:
            if accepted != conn.inflight_len:
                raise UipError("retransmission must regenerate the in-flight payload")
            self.send_data = bytes(data[:accepted])
            return accepted
        if conn.state != ESTABLISHED:
            raise UipError(f"cannot send in state {conn.state}")
        if conn.inflight_len or self.send_data is not None:
            raise SendWhileInflight("one unacknowledged segment at a time")
        if accepted == 0:
            return 0
        self.send_data = bytes(data[:accepted])
        return accepted

    def close(self) -> None:
        self.close_req = True

    def abort(self) -> None:
        self.abort_req = True

    def _deactivate(self) -> None:
        self._active = False


class UipInstance:
    """One stack instance: connection tables, listeners, and the packet buffer."""

    def __init__(self, addr: str, config: UipConfig | None = None, app=None,
                 stubs: StubTable | None = None):
        self.config = config or UipConfig()
        self.config.validate()
        self.addr = addr
        self.app = app
        self.stubs = stubs or _default_stubs()
        self.buf = bytearray(self.config.buffer_size)
        self.buf_len = 0
        self.conns: list[UipConnection | None] = [None] * self.config.max_connections
        self.listeners: dict[int, object] = {}
        self.udp_endpoints: list[UdpEndpoint | None] = [None] * self.config.max_udp_endpoints
        self.counters: Counter = Counter()
        self._out: list[bytes] | None = None
        self._iss_next = 10_001
        self._local_port_next = 4096
        self._ip_ident = 0
        self._now = 0

    # -- host interface -------------------------------------------------

    def set_now(self, now_us: int) -> None:
        if now_us < self._now:
            raise UipError("clock must be monotone")
        self._now = now_us

    def now(self) -> int:
        return self._now

    # -- connection management -------------------------------------------

    def active_connections(self) -> list[UipConnection]:
        return [c for c in self.conns if c is not None and c.state != CLOSED]

    def _alloc_slot(self) -> int | None:
        for i, c in enumerate(self.conns):
            if c is None:
                return i
        return None

    def _next_iss(self) -> int:
        iss = self._iss_next
        self._iss_next = (self._iss_next + 65_536) % wire.SEQ_MOD
        return iss

    def _next_local_port(self) -> int:
        while True:
            port = self._local_port_next
            self._local_port_next += 1
            if self._local_port_next > 0xFFFF:
                self._local_port_next = 4096
            used = port in self.listeners or any(
                c is not None and c.local_port == port for c in self.conns
            )
            if not used:
                return port

    def tcp_connect(self, remote_addr: str, remote_port: int, app=None) -> UipConnection:
        """Open a client connection; the SYN goes out on the next processing pass."""
        slot = self._alloc_slot()
        if slot is None:
            raise ConnectionTableFull(f"{self.config.max_connections} connections in use")
        iss = self._next_iss()
        conn = UipConnection(
            slot=slot,
            local_port=self._next_local_port(),
            remote_addr=remote_addr,
            remote_port=remote_port,
            state=SYN_SENT,
            iss=iss,
            snd_nxt=seq_add(iss, 1),
            rcv_nxt=0,
            mss=self.config.mss(),
            timer=self.config.initial_rto_periods,
            app=app,
        )
        self.conns[slot] = conn
        return conn

    def tcp_listen(self, port: int, app=None) -> None:
        if port in self.listeners:
            self.listeners[port] = app
            return
        if len(self.listeners) >= self.config.max_listen_ports:
            raise ListenerTableFull(f"{self.config.max_listen_ports} listeners in use")
        self.listeners[port] = app

    def tcp_unlisten(self, port: int) -> None:
        self.listeners.pop(port, None)

    def tcp_close(self, conn: UipConnection) -> None:
        conn.close_pending = True

    def udp_new(self, remote_addr: str | None, remote_port: int,
                local_port: int | None = None, on_data=None) -> UdpEndpoint:
        slot = next((i for i, e in enumerate(self.udp_endpoints) if e is None), None)
        if slot is None:
            raise ListenerTableFull(f"{self.config.max_udp_endpoints} UDP endpoints in use")
        endpoint = UdpEndpoint(
            slot=slot,
            local_port=local_port if local_port is not None else self._next_local_port(),
            remote_addr=remote_addr,
            remote_port=remote_port,
            on_data=on_data,
        )
        self.udp_endpoints[slot] = endpoint
        return endpoint

    def udp_send(self, endpoint: UdpEndpoint, payload: bytes,
                 remote: tuple[str, int] | None = None) -> list[bytes]:
        if not self.config.udp_enabled:
            raise UipError("UDP disabled by configuration")
        addr, port = remote or (endpoint.remote_addr, endpoint.remote_port)
        if addr is None:
            raise UipError("endpoint has no remote address")
        limit = self.config.buffer_size - wire.IP_HEADER_LEN - wire.UDP_HEADER_LEN
        if len(payload) > limit:
            raise UipError(f"UDP payload exceeds buffer ({len(payload)} > {limit})")
        self._begin_pass()
        datagram = wire.build_udp_datagram(
            self.addr, addr, endpoint.local_port, port, payload,
            with_checksum=self.config.udp_checksums,
        )
        self._emit_ip(addr, wire.PROTO_UDP, datagram)
        return self._end_pass()

    # -- processing passes -------------------------------------------------

    def input(self, packet: bytes) -> list[bytes]:
        """Process one received IP packet; returns emitted packets (at most
        one, or two when split mode fires)."""
        self._begin_pass()
        if len(packet) > self.config.buffer_size:
            self.counters["drop_too_large"] += 1
            return self._end_pass()
        self.buf[: len(packet)] = packet
        self.buf_len = len(packet)
        ip, reason = wire.parse_ipv4(bytes(self.buf[: self.buf_len]))
        if ip is None:
            self.counters[f"drop_{reason}"] += 1
            self.stubs.log(f"drop: {reason}")
            return self._end_pass()
        if ip.dst != self.addr:
            self.counters["drop_not_mine"] += 1
            return self._end_pass()
        if ip.proto == wire.PROTO_TCP and self.config.tcp_enabled:
            self._tcp_input(ip)
        elif ip.proto == wire.PROTO_UDP and self.config.udp_enabled:
            self._udp_input(ip)
        else:
            self.counters["drop_proto"] += 1
        return self._end_pass()

    def periodic(self) -> list[bytes]:
        """One periodic timer pass over every connection."""
        self._begin_pass()
        for conn in list(self.conns):
            if conn is None:
                continue
            self._periodic_conn(conn)
        return self._end_pass()

    def poll(self, conn: UipConnection | None = None) -> list[bytes]:
        """Poll one connection (or all) for pending output."""
        self._begin_pass()
        targets = [conn] if conn is not None else [c for c in self.conns if c]
        for c in targets:
            if c.state == SYN_SENT and not c.syn_emitted:
                self._emit_syn(c)
                c.syn_emitted = True
            elif c.state == ESTABLISHED and c.inflight_len == 0:
                api = self._deliver(c, {"poll"})
                self._finish(c, api, need_ack=False)
        return self._end_pass()

    # -- TCP input ---------------------------------------------------------

    def _tcp_input(self, ip: wire.ParsedIp) -> None:
        tcp, reason = wire.parse_tcp(ip.src, ip.dst, ip.payload)
        if tcp is None:
            self.counters[f"drop_{reason}"] += 1
            self.stubs.log(f"drop: {reason}")
            return
        conn = self._find_conn(tcp.dport, ip.src, tcp.sport)
        if conn is None:
            self._tcp_unbound(ip, tcp)
            return

        flags = tcp.flags
        if flags & TCP_RST:
            self._deliver(conn, {"aborted"})
            self._free_conn(conn)
            return

        if conn.state == SYN_SENT:
            if flags & TCP_SYN and flags & TCP_ACK and tcp.ack == seq_add(conn.iss, 1):
                conn.rcv_nxt = seq_add(tcp.seq, 1)
                conn.state = ESTABLISHED
                conn.peer_mss = tcp.mss_option
                conn.nrtx = 0
                api = self._deliver(conn, {"connected"})
                self._finish(conn, api, need_ack=True)
            else:
                self.counters["drop_unexpected"] += 1
            return

        if conn.state == SYN_RCVD and flags & TCP_SYN and not flags & TCP_ACK:
            self._emit_synack(conn)  # retransmitted SYN from the peer
            return

        app_flags: set[str] = set()
        app_data = b""
        need_ack = False

        if conn.state == SYN_RCVD:
            if flags & TCP_ACK and tcp.ack == seq_add(conn.iss, 1):
                conn.state = ESTABLISHED
                conn.nrtx = 0
                app_flags.add("connected")
            else:
                self.counters["drop_unexpected"] += 1
                return

        if flags & TCP_ACK:
            need_ack |= self._process_ack(conn, tcp.ack, app_flags)

        dlen = len(tcp.payload)
        fin = bool(flags & TCP_FIN)
        if dlen or fin:
            if conn.state == TIME_WAIT:
                conn.timer = self.config.time_wait_periods
                need_ack = True
            elif conn.state in (ESTABLISHED, FIN_WAIT_1, FIN_WAIT_2):
                if tcp.seq == conn.rcv_nxt:
                    if dlen:
                        conn.rcv_nxt = seq_add(conn.rcv_nxt, dlen)
                        app_flags.add("newdata")
                        app_data = tcp.payload
                        need_ack = True
                    if fin:
                        if conn.inflight_len:
                            # our data is still unacknowledged; let the peer
                            # retransmit its FIN after we are done
                            pass
                        else:
                            conn.rcv_nxt = seq_add(conn.rcv_nxt, 1)
                            app_flags.add("closed")
                            need_ack = True
                            self._peer_fin_transition(conn)
                else:
                    need_ack = True  # out of order: duplicate ACK only
            else:
                need_ack = True

        api = self._deliver(conn, app_flags, app_data) if app_flags else None
        self._finish(conn, api, need_ack)

    def _process_ack(self, conn: UipConnection, ack: int, app_flags: set[str]) -> bool:
        if conn.inflight_len and ack == seq_add(conn.snd_nxt, conn.inflight_len):
            conn.snd_nxt = seq_add(conn.snd_nxt, conn.inflight_len)
            conn.inflight_len = 0
            conn.nrtx = 0
            conn.stat_units_acked += 1
            app_flags.add("acked")
        if conn.fin_sent and ack == seq_add(conn.snd_nxt, 1):
            if conn.state == FIN_WAIT_1:
                conn.state = FIN_WAIT_2
            elif conn.state == CLOSING:
                conn.state = TIME_WAIT
                conn.timer = self.config.time_wait_periods
            elif conn.state == LAST_ACK:
                self._free_conn(conn)
        return False

    def _peer_fin_transition(self, conn: UipConnection) -> None:
        if conn.state == ESTABLISHED:
            # mirror the constrained stack: acknowledge and close in one step
            conn.state = LAST_ACK
        elif conn.state == FIN_WAIT_1:
            conn.state = CLOSING
        elif conn.state == FIN_WAIT_2:
            conn.state = TIME_WAIT
            conn.timer = self.config.time_wait_periods

    def _tcp_unbound(self, ip: wire.ParsedIp, tcp: wire.ParsedTcp) -> None:
        if tcp.flags & TCP_RST:
            return
        if tcp.flags & TCP_SYN and not (tcp.flags & TCP_ACK) and tcp.dport in self.listeners:
            slot = self._alloc_slot()
            if slot is None:
                self.counters["drop_conn_table_full"] += 1
                return
            iss = self._next_iss()
            conn = UipConnection(
                slot=slot,
                local_port=tcp.dport,
                remote_addr=ip.src,
                remote_port=tcp.sport,
                state=SYN_RCVD,
                iss=iss,
                snd_nxt=seq_add(iss, 1),
                rcv_nxt=seq_add(tcp.seq, 1),
                mss=self.config.mss(),
                timer=self.config.initial_rto_periods,
                peer_mss=tcp.mss_option,
                app=self.listeners[tcp.dport],
            )
            self.conns[slot] = conn
            self._emit_synack(conn)
            return
        self._emit_reset_for(ip, tcp)
        self.counters["rst_out"] += 1

    # -- UDP input ---------------------------------------------------------

    def _udp_input(self, ip: wire.ParsedIp) -> None:
        udp, reason = wire.parse_udp(ip.src, ip.dst, ip.payload,
                                     verify_checksum=self.config.udp_checksums)
        if udp is None:
            self.counters[f"drop_{reason}"] += 1
            return
        for endpoint in self.udp_endpoints:
            if endpoint is None or endpoint.local_port != udp.dport:
                continue
            if endpoint.remote_addr is not None and (
                endpoint.remote_addr != ip.src or endpoint.remote_port != udp.sport
            ):
                continue
            if endpoint.on_data:
                endpoint.on_data(endpoint, udp.payload, (ip.src, udp.sport))
            return
        self.counters["drop_udp_unbound"] += 1

    # -- app delivery --------------------------------------------------------

    def _deliver(self, conn: UipConnection, flags: set[str], data: bytes = b"") -> UipApi:
        assert flags <= EVENT_FLAGS
        api = UipApi(conn, rexmit="rexmit" in flags)
        callback = conn.app if conn.app is not None else self.app
        if callback is not None:
            callback(conn, AppEvent(frozenset(flags), data), api)
        api._deactivate()
        return api

    # -- output ---------------------------------------------------------------

    def _finish(self, conn: UipConnection, api: UipApi | None, need_ack: bool) -> None:
        if conn.state == CLOSED:
            return
        if api is not None and api.abort_req:
            self._emit_abort(conn)
            self._free_conn(conn)
            return
        if api is not None and api.close_req:
            conn.close_pending = True

        if conn.state == LAST_ACK and not conn.fin_sent:
            # passive close: FIN+ACK answers the peer's FIN in one segment
            self._emit_fin(conn)
            return
        if api is not None and api.send_data is not None and conn.state == ESTABLISHED:
            self._emit_data(conn, api.send_data, rexmit=False)
            return
        if (
            conn.close_pending
            and not conn.fin_sent
            and conn.inflight_len == 0
            and conn.state == ESTABLISHED
        ):
            conn.state = FIN_WAIT_1
            self._emit_fin(conn)
            return
        if need_ack:
            self._emit_segment(conn, TCP_ACK, conn.snd_nxt)

    def _periodic_conn(self, conn: UipConnection) -> None:
        state = conn.state
        if state == TIME_WAIT:
            conn.timer -= 1
            if conn.timer <= 0:
                self._free_conn(conn)
            return
        retransmittable = state in (SYN_SENT, SYN_RCVD, FIN_WAIT_1, CLOSING, LAST_ACK) or (
            state == ESTABLISHED and conn.inflight_len > 0
        )
        if retransmittable:
            conn.timer -= 1
            if conn.timer > 0:
                return
            if conn.nrtx >= self.config.max_retransmissions:
                self._emit_abort(conn)
                self._deliver(conn, {"timedout"})
                self._free_conn(conn)
                return
            conn.nrtx += 1
            conn.timer = min(
                self.config.initial_rto_periods << conn.nrtx, self.config.rto_cap_periods
            )
            if state == SYN_SENT:
                self._emit_syn(conn)
                conn.syn_emitted = True
            elif state == SYN_RCVD:
                self._emit_synack(conn)
            elif state == ESTABLISHED:
                conn.stat_rexmits += 1
                api = self._deliver(conn, {"rexmit"})
                if api.send_data is not None:
                    self._emit_data(conn, api.send_data, rexmit=True)
                else:
                    self.stubs.log("rexmit: app supplied no data")
            else:
                self._emit_fin_again(conn)
        elif state == ESTABLISHED:
            api = self._deliver(conn, {"poll"})
            self._finish(conn, api, need_ack=False)

    # -- segment emission ------------------------------------------------------

    def _window(self) -> int:
        return self.config.buffer_size - IP_TCP_OVERHEAD

    def _emit_ip(self, dst: str, proto: int, payload: bytes) -> None:
        packet = wire.build_ipv4(self.addr, dst, proto, payload, self._ip_ident)
        self._ip_ident = (self._ip_ident + 1) & 0xFFFF
        if len(packet) > self.config.buffer_size:
            raise UipError("emitted packet exceeds the packet buffer")
        self.buf[: len(packet)] = packet
        self.buf_len = len(packet)
        self._out.append(bytes(self.buf[: self.buf_len]))

    def _emit_segment(self, conn: UipConnection, flags: int, seq: int,
                      payload: bytes = b"", mss_option: int | None = None) -> None:
        ack = conn.rcv_nxt if flags & TCP_ACK else 0
        segment = wire.build_tcp_segment(
            self.addr, conn.remote_addr, conn.local_port, conn.remote_port,
            seq, ack, flags, self._window(), payload, mss_option,
        )
        self._emit_ip(conn.remote_addr, wire.PROTO_TCP, segment)

    def _emit_syn(self, conn: UipConnection) -> None:
        self._emit_segment(conn, TCP_SYN, conn.iss, mss_option=conn.mss)

    def _emit_synack(self, conn: UipConnection) -> None:
        self._emit_segment(conn, TCP_SYN | TCP_ACK, conn.iss, mss_option=conn.mss)

    def _emit_data(self, conn: UipConnection, payload: bytes, rexmit: bool) -> None:
        if not rexmit:
            conn.inflight_len = len(payload)
            conn.stat_units_sent += 1
            conn.timer = self.config.initial_rto_periods
            conn.nrtx = 0
        if self.config.tcp_split and len(payload) == conn.mss:
            half = (len(payload) + 1) // 2
            self._emit_segment(conn, TCP_ACK, conn.snd_nxt, payload[:half])
            self._emit_segment(conn, TCP_ACK, seq_add(conn.snd_nxt, half), payload[half:])
            conn.stat_segments_out += 2
        else:
            self._emit_segment(conn, TCP_ACK, conn.snd_nxt, payload)
            conn.stat_segments_out += 1

    def _emit_fin(self, conn: UipConnection) -> None:
        conn.fin_sent = True
        conn.timer = self.config.initial_rto_periods
        conn.nrtx = 0
        self._emit_segment(conn, TCP_FIN | TCP_ACK, conn.snd_nxt)

    def _emit_fin_again(self, conn: UipConnection) -> None:
        self._emit_segment(conn, TCP_FIN | TCP_ACK, conn.snd_nxt)

    def _emit_abort(self, conn: UipConnection) -> None:
        flags = TCP_RST | (TCP_ACK if conn.rcv_nxt else 0)
        self._emit_segment(conn, flags, conn.snd_nxt)
        self.counters["rst_out"] += 1

    def _emit_reset_for(self, ip: wire.ParsedIp, tcp: wire.ParsedTcp) -> None:
        """RST for a segment that matched no connection."""
        seg_len = len(tcp.payload)
        if tcp.flags & TCP_SYN:
            seg_len += 1
        if tcp.flags & TCP_FIN:
            seg_len += 1
        if tcp.flags & TCP_ACK:
            seq, ack, flags = tcp.ack, 0, TCP_RST
        else:
            seq, ack, flags = 0, seq_add(tcp.seq, seg_len), TCP_RST | TCP_ACK
        segment = wire.build_tcp_segment(
            self.addr, ip.src, tcp.dport, tcp.sport, seq, ack, flags, 0
        )
        self._emit_ip(ip.src, wire.PROTO_TCP, segment)

    # -- bookkeeping -------------------------------------------------------------

    def _find_conn(self, local_port: int, remote_addr: str, remote_port: int):
        for conn in self.conns:
            if (
                conn is not None
                and conn.local_port == local_port
                and conn.remote_addr == remote_addr
                and conn.remote_port == remote_port
            ):
                return conn
        return None

    def _free_conn(self, conn: UipConnection) -> None:
        conn.state = CLOSED
        conn.inflight_len = 0
        if self.conns[conn.slot] is conn:
            self.conns[conn.slot] = None

    def _begin_pass(self) -> None:
        if self._out is not None:
            raise UipError("stack re-entered during a processing pass")
        self._out = []

    def _end_pass(self) -> list[bytes]:
        out, self._out = self._out, None
        return out
