"""Scenario execution: wires stacks, links, apps, traces, and timers onto the
event engine and collects per-flow statistics.

A run is a pure function of (scenario, seed): event ordering, RNG draws, pcap
bytes, and the stats CSV are all reproducible bit for bit.
"""

import dataclasses
import hashlib
import os
from dataclasses import dataclass, field

from . import wire
from .apps import (
    BulkSenderFull,
    BulkSenderUip,
    EchoUip,
    FlowRuntime,
    SinkFull,
    SinkUip,
    UdpSinkUip,
    pattern_chunk,
)
from .cradle import StackRegistry
from .engine import (
    APP_POLL,
    DELAYED_ACK_TIMER,
    Engine,
    FRAME_ARRIVAL,
    PERIODIC_TIMER,
    SCENARIO_ACTION,
)
from .fullstack import (
    FullTcpNode,
    TIMER_DELAYED_ACK,
    TIMER_RTO,
    TIMER_TIME_WAIT,
)
from .link import Fragment, Link, Reassembler, fragment, link_transmit, serialization_us
from .rng import Rng
from .scenario import Scenario
from .stats import FlowStats, goodput_bps, render_csv
from .trace import TraceWriter


class RunnerError(Exception):
    pass


@dataclass
class _LinkRuntime:
    index: int
    model: Link
    a: str
    b: str
    rng: Rng
    busy_until: dict = field(default_factory=dict)  # direction -> time
    next_datagram_id: dict = field(default_factory=dict)
    reassembler: dict = field(default_factory=dict)
    frames_sent: int = 0
    frames_delivered: int = 0
    tracer: TraceWriter | None = None

    def direction(self, from_node: str) -> str:
        return "a2b" if from_node == self.a else "b2a"


@dataclass
class _NodeRuntime:
    spec: object
    kind: str  # "uip" | "full"
    addr: str
    stack_id: int | None = None
    full: FullTcpNode | None = None
    uip_sinks: dict = field(default_factory=dict)
    full_sinks: dict = field(default_factory=dict)
    udp_sinks: dict = field(default_factory=dict)
    echoes: dict = field(default_factory=dict)


@dataclass
class RunResult:
    flows: list[FlowStats]
    csv_text: str
    digest: str
    trace_paths: list[str]
    sink_bytes: dict
    event_count: int


class Runner:
    def __init__(self, scenario: Scenario, out_dir=None, monitor=None):
        self.scenario = scenario
        self.engine = Engine()
        self.monitor = monitor
        self.out_dir = out_dir

        uip_nodes = [n for n in scenario.nodes if n.stack == "uip"]
        self.registry = StackRegistry(num_stacks=max(1, len(uip_nodes)))
        self.nodes: dict[str, _NodeRuntime] = {}
        for spec in scenario.nodes:
            runtime = _NodeRuntime(spec=spec, kind=spec.stack, addr=spec.addr)
            if spec.stack == "uip":
                runtime.stack_id = self.registry.create_instance(
                    config=scenario.uip_config(spec), addr=spec.addr
                )
            else:
                runtime.full = FullTcpNode(spec.addr, scenario.full_config(spec))
            self.nodes[spec.id] = runtime
            self.engine.add_handler(spec.id, self._dispatch)

        self.links: list[_LinkRuntime] = []
        self.route: dict[tuple[str, str], _LinkRuntime] = {}
        for index, spec in enumerate(scenario.links):
            model = Link(spec.latency_us, spec.bandwidth_bps, spec.loss_prob,
                         spec.frag_threshold)
            link = _LinkRuntime(
                index=index, model=model, a=spec.a, b=spec.b,
                rng=Rng.fork(scenario.seed, index),
                busy_until={"a2b": 0, "b2a": 0},
                next_datagram_id={"a2b": 0, "b2a": 0},
                reassembler={"a2b": Reassembler(), "b2a": Reassembler()},
            )
            self.links.append(link)
            addr_a = scenario.addr_of(spec.a)
            addr_b = scenario.addr_of(spec.b)
            self.route[(spec.a, addr_b)] = link
            self.route[(spec.b, addr_a)] = link

        self.trace_paths: list[str] = []
        for t in scenario.traces:
            path = t.path
            if out_dir is not None:
                path = os.path.join(out_dir, t.path)
                os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
            self.links[t.link].tracer = TraceWriter(path)
            self.trace_paths.append(path)

        self.flows: list[FlowRuntime] = []
        self._setup_apps()

    # -- app wiring -------------------------------------------------------

    def _variant_of(self, node: _NodeRuntime) -> str:
        if node.kind == "full":
            return "full"
        split = node.spec.overrides.get("tcp_split", False)
        return "uip+split" if split else "uip"

    def _link_between(self, a: str, b: str) -> _LinkRuntime:
        return self.route[(a, self.scenario.addr_of(b))]

    def _setup_apps(self) -> None:
        for app_index, app in enumerate(self.scenario.apps):
            node = self.nodes[app.node]
            if app.role == "sink":
                if node.kind == "uip":
                    sink = SinkUip()
                    udp_sink = UdpSinkUip()
                    instance = self.registry.instance(node.stack_id)
                    instance.tcp_listen(app.port, sink.on_event)
                    instance.udp_new(None, 0, local_port=app.port,
                                     on_data=udp_sink.on_data)
                    node.uip_sinks[app.port] = sink
                    node.udp_sinks[app.port] = udp_sink
                else:
                    sink = SinkFull()
                    node.full.listen(app.port, sink)
                    node.full_sinks[app.port] = sink
            elif app.role == "echo":
                echo = EchoUip()
                instance = self.registry.instance(node.stack_id)
                instance.tcp_listen(app.port, echo.on_event)
                node.echoes[app.port] = echo
            elif app.role in ("bulk_sender", "udp_blast"):
                link = self._link_between(app.node, app.peer)
                flow = FlowRuntime(
                    flow_id=f"{app.node}->{app.peer}:{app.port}",
                    node=app.node,
                    peer=app.peer,
                    port=app.port,
                    variant=self._variant_of(node),
                    link_index=link.index,
                    bytes_total=app.bytes_total,
                    start_us=app.start_us,
                    proto="udp" if app.role == "udp_blast" else "tcp",
                )
                self.flows.append(flow)
                if self.scenario.duration_us > 0:
                    self.engine.schedule(
                        app.start_us, app.node, SCENARIO_ACTION,
                        ("start", app_index, flow),
                    )

    # -- event dispatch -----------------------------------------------------

    def _dispatch(self, event) -> None:
        node = self.nodes[event.target]
        now = event.time
        kind = event.kind
        if kind == FRAME_ARRIVAL:
            link, frame = event.payload
            self._on_frame_arrival(node, link, frame, now)
        elif kind == PERIODIC_TIMER:
            self._on_periodic(node, event.payload, now)
        elif kind == APP_POLL:
            conn = event.payload
            outs = self.registry.poll(node.stack_id, conn, now=now)
            self._send_from(event.target, outs, now)
        elif kind == DELAYED_ACK_TIMER:
            outs = node.full.on_delayed_ack_timer(event.payload, now)
            self._send_from(event.target, outs, now)
            self._drain_full_timers(event.target, node)
        elif kind == SCENARIO_ACTION:
            self._on_action(event.target, node, event.payload, now)

    def _on_periodic(self, node, payload, now) -> None:
        node_id = node.spec.id
        if payload == "uip-periodic":
            outs = self.registry.tick(node.stack_id, now)
            self._send_from(node_id, outs, now)
            interval = self.registry.instance(node.stack_id).config.periodic_interval_us
            nxt = now + interval
            if nxt <= self.scenario.duration_us:
                self.engine.schedule(nxt, node_id, PERIODIC_TIMER, "uip-periodic")
        else:
            timer_kind, key = payload
            if timer_kind == TIMER_RTO:
                outs = node.full.on_rto_timer(key, now)
                self._send_from(node_id, outs, now)
            elif timer_kind == TIMER_TIME_WAIT:
                node.full.on_time_wait_timer(key, now)
            self._drain_full_timers(node_id, node)

    def _on_action(self, node_id, node, payload, now) -> None:
        action = payload[0]
        if action == "start":
            _, app_index, flow = payload
            app = self.scenario.apps[app_index]
            if flow.proto == "udp":
                instance = self.registry.instance(node.stack_id)
                endpoint = instance.udp_new(
                    self.scenario.addr_of(app.peer), app.port, local_port=app.port
                )
                self.engine.schedule(now, node_id, SCENARIO_ACTION,
                                     ("udp-send", app_index, flow, endpoint))
            elif node.kind == "uip":
                sender = BulkSenderUip(self, flow)
                instance = self.registry.instance(node.stack_id)
                conn = sender.start(instance, self.scenario.addr_of(app.peer), app.port)
                flow.sender = sender
                flow.conn = conn
                self.engine.schedule(now, node_id, APP_POLL, conn)
            else:
                sender = BulkSenderFull(self, flow)
                outs = node.full.connect(
                    self.scenario.addr_of(app.peer), app.port, now, app=sender
                )
                flow.sender = sender
                self._send_from(node_id, outs, now)
                self._drain_full_timers(node_id, node)
        elif action == "udp-send":
            _, app_index, flow, endpoint = payload
            app = self.scenario.apps[app_index]
            sent_so_far = flow.units_sent * app.size
            if flow.bytes_total and sent_so_far >= flow.bytes_total:
                return
            instance = self.registry.instance(node.stack_id)
            payload_bytes = pattern_chunk(sent_so_far, app.size)
            outs = self.registry.with_instance(
                node.stack_id, lambda inst: inst.udp_send(endpoint, payload_bytes)
            )
            flow.units_sent += 1
            flow.segments_sent += 1
            self._send_from(node_id, outs, now)
            nxt = now + app.interval_us
            if nxt <= self.scenario.duration_us:
                self.engine.schedule(nxt, node_id, SCENARIO_ACTION,
                                     ("udp-send", app_index, flow, endpoint))

    # -- frames --------------------------------------------------------------

    def _send_from(self, node_id: str, packets: list[bytes], now: int) -> None:
        for packet in packets:
            ip, reason = wire.parse_ipv4(packet)
            if ip is None:
                raise RunnerError(f"{node_id} emitted an unparseable packet: {reason}")
            link = self.route.get((node_id, ip.dst))
            if link is None:
                raise RunnerError(f"{node_id} has no link toward {ip.dst}")
            if self.monitor is not None:
                self.monitor.on_send(node_id, packet, now)
            if link.tracer is not None:
                link.tracer.write(now, packet)
            direction = link.direction(node_id)
            dest = link.b if direction == "a2b" else link.a
            datagram_id = link.next_datagram_id[direction]
            link.next_datagram_id[direction] = (datagram_id + 1) & 0xFFFF
            depart = max(now, link.busy_until[direction])
            for frag in fragment(packet, link.model.frag_threshold, datagram_id):
                frame = frag.encode()
                depart = max(depart, link.busy_until[direction])
                arrival = link_transmit(link.model, frame, depart, link.rng)
                link.busy_until[direction] = depart + serialization_us(
                    len(frame), link.model.bandwidth_bps
                )
                link.frames_sent += 1
                if arrival is not None:
                    self.engine.schedule(arrival, dest, FRAME_ARRIVAL, (link, frame))

    def _on_frame_arrival(self, node, link: _LinkRuntime, frame: bytes, now: int) -> None:
        link.frames_delivered += 1
        node_id = node.spec.id
        direction = "a2b" if node_id == link.b else "b2a"
        datagram = link.reassembler[direction].add(Fragment.decode(frame))
        if datagram is None:
            return
        if self.monitor is not None:
            self.monitor.on_receive(node_id, datagram, now)
        if node.kind == "uip":
            outs = self.registry.inject_frame(node.stack_id, datagram, now)
        else:
            outs = node.full.input(datagram, now)
        self._send_from(node_id, outs, now)
        if node.kind == "full":
            self._drain_full_timers(node_id, node)

    def _drain_full_timers(self, node_id: str, node) -> None:
        for timer_kind, deadline, key in node.full.take_timer_requests():
            if timer_kind == TIMER_DELAYED_ACK:
                self.engine.schedule(deadline, node_id, DELAYED_ACK_TIMER, key)
            else:
                self.engine.schedule(deadline, node_id, PERIODIC_TIMER,
                                     (timer_kind, key))

    # -- run ---------------------------------------------------------------------

    def run(self) -> RunResult:
        duration = self.scenario.duration_us
        if duration > 0:
            for spec in self.scenario.nodes:
                if spec.stack == "uip":
                    interval = self.scenario.uip_config(spec).periodic_interval_us
                    if interval <= duration:
                        self.engine.schedule(interval, spec.id, PERIODIC_TIMER,
                                             "uip-periodic")
            self.engine.run_until(duration)
        for link in self.links:
            if link.tracer is not None:
                link.tracer.close()

        rows = [self._flow_stats(flow) for flow in self.flows]
        csv_text = render_csv(rows)
        digest = hashlib.sha256("\n".join(self.engine.log).encode()).hexdigest()
        sink_bytes = {}
        for node_id, node in self.nodes.items():
            for port, sink in node.uip_sinks.items():
                sink_bytes[(node_id, port)] = sink.delivered
            for port, sink in node.full_sinks.items():
                sink_bytes[(node_id, port)] = sink.delivered
            for port, sink in node.udp_sinks.items():
                key = (node_id, port)
                sink_bytes[key] = sink_bytes.get(key, 0) + sink.delivered
        return RunResult(
            flows=rows,
            csv_text=csv_text,
            digest=digest,
            trace_paths=self.trace_paths,
            sink_bytes=sink_bytes,
            event_count=len(self.engine.log),
        )

    def _flow_stats(self, flow: FlowRuntime) -> FlowStats:
        end = flow.done_at if flow.done_at is not None else self.scenario.duration_us
        duration = max(0, end - flow.start_us)
        link = self.links[flow.link_index]
        prr = (link.frames_delivered / link.frames_sent) if link.frames_sent else 1.0
        if flow.proto == "udp":
            peer = self.nodes[flow.peer]
            sink = peer.udp_sinks.get(flow.port)
            bytes_acked = sink.delivered if sink else 0
            segments = flow.segments_sent
            rexmits = 0
        elif flow.conn is not None:  # constrained-stack sender
            bytes_acked = flow.bytes_acked
            segments = flow.conn.stat_segments_out
            rexmits = flow.retransmissions
            flow.units_sent = flow.conn.stat_units_sent
            flow.units_acked = flow.conn.stat_units_acked
        else:  # reference-stack sender
            conn = flow.sender.conn if flow.sender is not None else None
            bytes_acked = conn.stat_bytes_acked if conn else 0
            segments = conn.stat_segments_out if conn else 0
            rexmits = conn.stat_rexmits if conn else 0
        return FlowStats(
            flow=flow.flow_id,
            variant=flow.variant,
            bytes_acked=bytes_acked,
            duration_us=duration,
            goodput_bps=goodput_bps(bytes_acked, duration),
            segments_sent=segments,
            retransmissions=rexmits,
            prr=prr,
        )


def run_scenario(scenario: Scenario, out_dir=None, seed: int | None = None,
                 monitor=None) -> RunResult:
    if seed is not None:
        scenario = dataclasses.replace(scenario, seed=seed)
    runner = Runner(scenario, out_dir=out_dir, monitor=monitor)
    result = runner.run()
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, "stats.csv"), "w", encoding="utf-8") as f:
            f.write(result.csv_text)
        with open(os.path.join(out_dir, "digest.txt"), "w", encoding="utf-8") as f:
            f.write(result.digest + "\n")
    return result
