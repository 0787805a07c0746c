"""Scenario files: a line-oriented format with repeatable [node], [link],
[app], and [trace] sections plus one [scenario] section, `key = value` pairs,
'#' comment lines, and all times in integer microseconds.

Every compile-time knob of the constrained stack appears here as a per-run
setting instead, so sweeping configurations needs no rebuild.
"""

from dataclasses import dataclass, field, replace

from .fullstack import FullTcpConfig
from .uip import UipConfig


class ScenarioError(Exception):
    pass


class ParseError(ScenarioError):
    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class ValidationError(ScenarioError):
    pass


class UnknownPreset(ScenarioError):
    pass


STACK_KINDS = ("uip", "full")
APP_ROLES = ("bulk_sender", "sink", "echo", "udp_blast")

UIP_KEYS = {
    "max_connections": int,
    "max_listen_ports": int,
    "buffer_size": int,
    "packetbuf_size": int,
    "tcp_enabled": "flag",
    "udp_enabled": "flag",
    "udp_checksums": "flag",
    "tcp_split": "flag",
    "periodic_interval_us": int,
    "max_retransmissions": int,
    "initial_rto_periods": int,
}

FULL_KEYS = {
    "recv_window": int,
    "delayed_ack_timeout_us": int,
    "ack_every_n_segments": int,
    "initial_rto_us": int,
    "mss": int,
}


@dataclass
class NodeSpec:
    id: str
    stack: str
    addr: str | None = None
    overrides: dict = field(default_factory=dict)


@dataclass
class LinkSpec:
    a: str
    b: str
    latency_us: int = 1000
    bandwidth_bps: int = 1_000_000
    loss_prob: float = 0.0
    frag_threshold: int = 500


@dataclass
class AppSpec:
    node: str
    role: str
    port: int
    peer: str | None = None
    bytes_total: int = 0
    start_us: int = 0
    size: int = 64  # udp_blast datagram payload bytes
    interval_us: int = 100_000  # udp_blast send period


@dataclass
class TraceSpec:
    link: int
    path: str


@dataclass
class Scenario:
    seed: int = 1
    duration_us: int = 1_000_000
    nodes: list[NodeSpec] = field(default_factory=list)
    links: list[LinkSpec] = field(default_factory=list)
    apps: list[AppSpec] = field(default_factory=list)
    traces: list[TraceSpec] = field(default_factory=list)

    def node(self, node_id: str) -> NodeSpec:
        for n in self.nodes:
            if n.id == node_id:
                return n
        raise KeyError(node_id)

    def addr_of(self, node_id: str) -> str:
        return self.node(node_id).addr

    def uip_config(self, node: NodeSpec) -> UipConfig:
        cfg = UipConfig()
        for key, value in node.overrides.items():
            setattr(cfg, key, value)
        return cfg

    def full_config(self, node: NodeSpec) -> FullTcpConfig:
        cfg = FullTcpConfig()
        for key, value in node.overrides.items():
            setattr(cfg, key, value)
        return cfg


def _parse_flag(raw: str, line_no: int) -> bool:
    low = raw.lower()
    if low in ("on", "true", "yes", "1"):
        return True
    if low in ("off", "false", "no", "0"):
        return False
    raise ParseError(line_no, f"expected on/off, got {raw!r}")


def parse_scenario(text: str) -> Scenario:
    scenario = Scenario()
    section = None
    entity: dict | None = None
    entities: list[tuple[str, dict, int]] = []

    def flush():
        nonlocal entity
        if entity is not None:
            entities.append((section, entity, entity.pop("_line")))
            entity = None

    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("[") and line.endswith("]"):
            flush()
            section = line[1:-1].strip().lower()
            if section not in ("scenario", "node", "link", "app", "trace"):
                raise ParseError(line_no, f"unknown section [{section}]")
            if section != "scenario":
                entity = {"_line": line_no}
            continue
        if "=" not in line:
            raise ParseError(line_no, f"expected key = value, got {line!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if not key or not value:
            raise ParseError(line_no, "empty key or value")
        if section is None:
            raise ParseError(line_no, "key outside any section")
        if section == "scenario":
            if key == "seed":
                scenario.seed = int(value)
            elif key == "duration_us":
                scenario.duration_us = int(value)
            else:
                raise ParseError(line_no, f"unknown scenario key {key!r}")
        else:
            entity[key] = (value, line_no)
    flush()

    for kind, fields, line_no in entities:
        fields = {k: v for k, v in fields.items()}
        try:
            if kind == "node":
                scenario.nodes.append(_build_node(fields))
            elif kind == "link":
                scenario.links.append(_build_link(fields))
            elif kind == "app":
                scenario.apps.append(_build_app(fields))
            elif kind == "trace":
                scenario.traces.append(_build_trace(fields))
        except KeyError as missing:
            raise ParseError(line_no, f"[{kind}] missing required key {missing}")
    validate_scenario(scenario)
    return scenario


def _take(fields, key, conv, default=None, required=False):
    if key not in fields:
        if required:
            raise KeyError(key)
        return default
    raw, line_no = fields.pop(key)
    if conv == "flag":
        return _parse_flag(raw, line_no)
    try:
        return conv(raw)
    except ValueError:
        raise ParseError(line_no, f"bad value for {key}: {raw!r}")


def _reject_leftovers(fields, kind):
    for key, (_, line_no) in fields.items():
        raise ParseError(line_no, f"unknown [{kind}] key {key!r}")


def _build_node(fields) -> NodeSpec:
    node = NodeSpec(
        id=_take(fields, "id", str, required=True),
        stack=_take(fields, "stack", str, required=True),
        addr=_take(fields, "addr", str),
    )
    key_table = UIP_KEYS if node.stack == "uip" else FULL_KEYS
    for key in list(fields.keys()):
        if key in key_table:
            node.overrides[key] = _take(fields, key, key_table[key])
    _reject_leftovers(fields, "node")
    return node


def _build_link(fields) -> LinkSpec:
    link = LinkSpec(
        a=_take(fields, "a", str, required=True),
        b=_take(fields, "b", str, required=True),
        latency_us=_take(fields, "latency_us", int, 1000),
        bandwidth_bps=_take(fields, "bandwidth_bps", int, 1_000_000),
        loss_prob=_take(fields, "loss_prob", float, 0.0),
        frag_threshold=_take(fields, "frag_threshold", int, 500),
    )
    _reject_leftovers(fields, "link")
    return link


def _build_app(fields) -> AppSpec:
    app = AppSpec(
        node=_take(fields, "node", str, required=True),
        role=_take(fields, "role", str, required=True),
        port=_take(fields, "port", int, required=True),
        peer=_take(fields, "peer", str),
        bytes_total=_take(fields, "bytes_total", int, 0),
        start_us=_take(fields, "start_us", int, 0),
        size=_take(fields, "size", int, 64),
        interval_us=_take(fields, "interval_us", int, 100_000),
    )
    _reject_leftovers(fields, "app")
    return app


def _build_trace(fields) -> TraceSpec:
    spec = TraceSpec(
        link=_take(fields, "link", int, required=True),
        path=_take(fields, "path", str, required=True),
    )
    _reject_leftovers(fields, "trace")
    return spec


def validate_scenario(s: Scenario) -> None:
    ids = [n.id for n in s.nodes]
    if len(ids) != len(set(ids)):
        raise ValidationError("node ids must be unique")
    for n in s.nodes:
        if n.stack not in STACK_KINDS:
            raise ValidationError(
                f"node {n.id}: unknown stack kind {n.stack!r}; allowed: {STACK_KINDS}"
            )
        try:
            if n.stack == "uip":
                s.uip_config(n).validate()
            else:
                s.full_config(n).validate()
        except ValueError as exc:
            raise ValidationError(f"node {n.id}: {exc}")
    # assign addresses deterministically where unset
    for index, n in enumerate(s.nodes):
        if n.addr is None:
            n.addr = f"10.0.0.{index + 1}"
    addrs = [n.addr for n in s.nodes]
    if len(addrs) != len(set(addrs)):
        raise ValidationError("node addresses must be unique")
    for link in s.links:
        for end in (link.a, link.b):
            if end not in ids:
                raise ValidationError(f"link endpoint {end!r} is not a node")
        if link.frag_threshold < 9:
            raise ValidationError("frag_threshold must be at least 9")
        if not 0.0 <= link.loss_prob <= 1.0:
            raise ValidationError("loss_prob must be in [0, 1]")
        if link.bandwidth_bps <= 0 or link.latency_us < 0:
            raise ValidationError("bandwidth must be positive, latency non-negative")
    linked = {frozenset((l.a, l.b)) for l in s.links}
    for app in s.apps:
        if app.node not in ids:
            raise ValidationError(f"app references unknown node {app.node!r}")
        if app.role not in APP_ROLES:
            raise ValidationError(
                f"app role {app.role!r} unknown; allowed: {APP_ROLES}"
            )
        if app.role in ("bulk_sender", "udp_blast"):
            if app.peer is None:
                raise ValidationError(f"{app.role} on {app.node} needs a peer")
            if app.peer not in ids:
                raise ValidationError(f"app peer {app.peer!r} is not a node")
            if frozenset((app.node, app.peer)) not in linked:
                raise ValidationError(
                    f"no link between {app.node} and {app.peer}; routing is single-hop"
                )
        if app.role == "udp_blast":
            for end in (app.node, app.peer):
                if s.node(end).stack != "uip":
                    raise ValidationError(
                        "udp_blast endpoints must run the constrained stack"
                    )
        if app.role == "echo" and s.node(app.node).stack != "uip":
            raise ValidationError("echo runs on the constrained stack only")
    for t in s.traces:
        if not 0 <= t.link < len(s.links):
            raise ValidationError(f"trace references unknown link {t.link}")
    if s.duration_us < 0:
        raise ValidationError("duration_us must be non-negative")


def dump_scenario(s: Scenario) -> str:
    lines = ["[scenario]", f"seed = {s.seed}", f"duration_us = {s.duration_us}", ""]
    for n in s.nodes:
        lines += ["[node]", f"id = {n.id}", f"stack = {n.stack}"]
        if n.addr:
            lines.append(f"addr = {n.addr}")
        for key, value in n.overrides.items():
            if isinstance(value, bool):
                value = "on" if value else "off"
            lines.append(f"{key} = {value}")
        lines.append("")
    for l in s.links:
        lines += [
            "[link]",
            f"a = {l.a}",
            f"b = {l.b}",
            f"latency_us = {l.latency_us}",
            f"bandwidth_bps = {l.bandwidth_bps}",
            f"loss_prob = {l.loss_prob}",
            f"frag_threshold = {l.frag_threshold}",
            "",
        ]
    for a in s.apps:
        lines += ["[app]", f"node = {a.node}", f"role = {a.role}", f"port = {a.port}"]
        if a.peer:
            lines.append(f"peer = {a.peer}")
        if a.bytes_total:
            lines.append(f"bytes_total = {a.bytes_total}")
        if a.start_us:
            lines.append(f"start_us = {a.start_us}")
        if a.role == "udp_blast":
            lines.append(f"size = {a.size}")
            lines.append(f"interval_us = {a.interval_us}")
        lines.append("")
    for t in s.traces:
        lines += ["[trace]", f"link = {t.link}", f"path = {t.path}", ""]
    return "\n".join(lines)


def load_scenario(path) -> Scenario:
    with open(path, "r", encoding="utf-8") as f:
        return parse_scenario(f.read())


# -- presets -------------------------------------------------------------------


def _two_node_bulk(tcp_split: bool) -> Scenario:
    sensor = NodeSpec(id="sensor", stack="uip", overrides={"tcp_split": tcp_split})
    gateway = NodeSpec(id="gw", stack="full")
    link = LinkSpec(a="sensor", b="gw", latency_us=5000, bandwidth_bps=1_000_000,
                    loss_prob=0.0, frag_threshold=500)
    scenario = Scenario(
        seed=1,
        duration_us=10_000_000,
        nodes=[sensor, gateway],
        links=[link],
        apps=[
            AppSpec(node="sensor", role="bulk_sender", port=5001, peer="gw",
                    bytes_total=10_000_000),
            AppSpec(node="gw", role="sink", port=5001),
        ],
        traces=[TraceSpec(link=0, path="flow.pcap")],
    )
    validate_scenario(scenario)
    return scenario


def _frag_sweep() -> list[Scenario]:
    variants = []
    for threshold in (60, 90, 127, 200, 400):
        s = _two_node_bulk(tcp_split=False)
        s.links[0] = replace(s.links[0], frag_threshold=threshold)
        validate_scenario(s)
        variants.append(s)
    return variants


def _hetero_prr() -> list[Scenario]:
    variants = []
    for loss in (0.0, 0.05, 0.1):
        nodes = [NodeSpec(id="gw", stack="full")]
        links = []
        apps = []
        sensors = [("a1", True), ("a2", True), ("b1", False), ("b2", False)]
        for i, (name, split) in enumerate(sensors):
            node_id = f"sensor_{name}"
            nodes.append(NodeSpec(id=node_id, stack="uip",
                                  overrides={"tcp_split": split}))
            links.append(LinkSpec(a=node_id, b="gw", latency_us=5000,
                                  bandwidth_bps=250_000, loss_prob=loss,
                                  frag_threshold=127))
            apps.append(AppSpec(node=node_id, role="bulk_sender",
                                port=6000 + i, peer="gw", bytes_total=1_000_000))
            apps.append(AppSpec(node="gw", role="sink", port=6000 + i))
        s = Scenario(seed=1, duration_us=10_000_000, nodes=nodes, links=links,
                     apps=apps, traces=[])
        validate_scenario(s)
        variants.append(s)
    return variants


def preset(name: str):
    """Canonical experiment scenarios. Sweep presets return a list."""
    if name == "delayed-ack":
        return _two_node_bulk(tcp_split=False)
    if name == "split-hack":
        return _two_node_bulk(tcp_split=True)
    if name == "frag-sweep":
        return _frag_sweep()
    if name == "hetero-prr":
        return _hetero_prr()
    raise UnknownPreset(
        f"unknown preset {name!r}; known: delayed-ack, split-hack, frag-sweep, hetero-prr"
    )
