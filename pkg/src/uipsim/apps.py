"""Traffic roles available to scenarios.

Senders regenerate retransmitted payloads from a deterministic byte pattern
(the constrained stack keeps no retransmission buffer); the one-chunk cache
here is the helper that keeps that contract simple for apps.
"""

from dataclasses import dataclass, field

from .fullstack import FullApp


def pattern_chunk(offset: int, length: int) -> bytes:
    return bytes(((offset + k) * 31 + 7) & 0xFF for k in range(length))


@dataclass
class FlowRuntime:
    flow_id: str
    node: str
    peer: str
    port: int
    variant: str
    link_index: int
    bytes_total: int
    start_us: int
    proto: str = "tcp"
    bytes_acked: int = 0
    done_at: int | None = None
    failed: str | None = None
    retransmissions: int = 0
    segments_sent: int = 0
    units_sent: int = 0
    units_acked: int = 0
    sender: object = None
    conn: object = None  # constrained-stack connection when the sender is uip


class BulkSenderUip:
    """Stop-and-wait bulk source on a constrained node."""

    def __init__(self, runner, flow: FlowRuntime):
        self.runner = runner
        self.flow = flow
        self.offset = 0
        self.last_chunk = b""
        self.closed = False
        self.conn = None

    def start(self, instance, peer_addr: str, port: int):
        self.conn = instance.tcp_connect(peer_addr, port, app=self.on_event)
        return self.conn

    def _send_next(self, api):
        remaining = self.flow.bytes_total - self.offset
        if remaining <= 0:
            return
        accepted = api.send(pattern_chunk(self.offset, min(remaining, 2048)))
        self.last_chunk = pattern_chunk(self.offset, accepted)

    def on_event(self, conn, event, api):
        flags = event.flags
        if "rexmit" in flags:
            self.flow.retransmissions += 1
            api.send(self.last_chunk)
            return
        if "acked" in flags:
            self.flow.bytes_acked += len(self.last_chunk)
            self.offset += len(self.last_chunk)
            self.last_chunk = b""
            if self.offset >= self.flow.bytes_total:
                if not self.closed:
                    self.closed = True
                    self.flow.done_at = self.runner.engine.now()
                    api.close()
            else:
                self._send_next(api)
            return
        if "connected" in flags:
            self._send_next(api)
            return
        if "poll" in flags and not self.closed and conn.inflight_len == 0:
            self._send_next(api)
            return
        if flags & {"timedout", "aborted"}:
            self.flow.failed = "timedout" if "timedout" in flags else "aborted"
            self.flow.done_at = self.runner.engine.now()


class SinkUip:
    """Counts delivered bytes on a constrained listener."""

    def __init__(self):
        self.delivered = 0

    def on_event(self, conn, event, api):
        if "newdata" in event.flags:
            self.delivered += len(event.data)


class EchoUip:
    """Reflects every received byte back, one segment at a time."""

    def __init__(self):
        self.pending = bytearray()
        self.last_chunk = b""
        self.echoed = 0

    def _try_send(self, conn, api):
        if conn.inflight_len == 0 and not self.last_chunk and self.pending:
            accepted = api.send(bytes(self.pending))
            self.last_chunk = bytes(self.pending[:accepted])
            del self.pending[:accepted]

    def on_event(self, conn, event, api):
        flags = event.flags
        if "rexmit" in flags:
            api.send(self.last_chunk)
            return
        if "acked" in flags:
            self.echoed += len(self.last_chunk)
            self.last_chunk = b""
        if "newdata" in flags:
            self.pending.extend(event.data)
        if flags & {"newdata", "acked", "poll"}:
            self._try_send(conn, api)


class UdpSinkUip:
    def __init__(self):
        self.delivered = 0
        self.datagrams = 0

    def on_data(self, endpoint, data, source):
        self.delivered += len(data)
        self.datagrams += 1


class SinkFull(FullApp):
    """Counts delivered bytes and closes back when the peer closes."""

    def __init__(self):
        self.delivered = 0

    def data(self, node, conn, data):
        self.delivered += len(data)


class BulkSenderFull(FullApp):
    """Sliding-window bulk source on the reference stack."""

    def __init__(self, runner, flow: FlowRuntime):
        self.runner = runner
        self.flow = flow
        self.conn = None

    def established(self, node, conn):
        # queued here; the pass that delivered the handshake sends it
        self.conn = conn
        node.queue(conn, pattern_chunk(0, self.flow.bytes_total))
        conn.fin_pending = True

    def closed(self, node, conn):
        self.flow.done_at = self.runner.engine.now()

    def aborted(self, node, conn):
        self.flow.failed = "aborted"
        self.flow.done_at = self.runner.engine.now()
