import pytest

from uipsim.scenario import (
    ParseError,
    Scenario,
    UnknownPreset,
    ValidationError,
    dump_scenario,
    parse_scenario,
    preset,
)

MINIMAL = """
[scenario]
seed = 7
duration_us = 2000000

[node]
id = sensor
stack = uip

[node]
id = server
stack = full

[link]
a = sensor
b = server
latency_us = 5000
bandwidth_bps = 250000
loss_prob = 0.0
frag_threshold = 127

[app]
node = sensor
role = bulk_sender
peer = server
port = 80
bytes_total = 5000

[app]
node = server
role = sink
port = 80

[trace]
link = 0
path = t.pcap
"""


def test_minimal_scenario_parses_with_defaults():
    s = parse_scenario(MINIMAL)
    assert s.seed == 7
    assert s.duration_us == 2_000_000
    assert [n.id for n in s.nodes] == ["sensor", "server"]
    cfg = s.uip_config(s.nodes[0])
    assert cfg.buffer_size == 400
    assert cfg.max_connections == 40
    assert s.nodes[0].addr == "10.0.0.1"  # auto-assigned
    assert s.links[0].frag_threshold == 127
    assert s.apps[0].bytes_total == 5000


def test_buffer_size_below_minimum_rejected():
    text = MINIMAL.replace("stack = uip", "stack = uip\nbuffer_size = 50")
    with pytest.raises(ValidationError) as err:
        parse_scenario(text)
    assert "buffer_size" in str(err.value)


def test_unknown_stack_kind_lists_allowed():
    text = MINIMAL.replace("stack = uip", "stack = blip")
    with pytest.raises(ValidationError) as err:
        parse_scenario(text)
    assert "blip" in str(err.value) and "uip" in str(err.value)


def test_parse_error_carries_line():
    bad = "[scenario]\nseed 7\n"
    with pytest.raises(ParseError) as err:
        parse_scenario(bad)
    assert err.value.line_no == 2


def test_unknown_key_rejected():
    text = MINIMAL.replace("latency_us = 5000", "latency_us = 5000\nwifi = on")
    with pytest.raises(ParseError):
        parse_scenario(text)


def test_duplicate_node_id_rejected():
    text = MINIMAL.replace("id = server", "id = sensor", 1)
    with pytest.raises(ValidationError):
        parse_scenario(text)


def test_app_peer_without_link_rejected():
    text = MINIMAL + "\n[node]\nid = lone\nstack = uip\n"
    text += "\n[app]\nnode = lone\nrole = bulk_sender\npeer = server\nport = 99\n"
    with pytest.raises(ValidationError):
        parse_scenario(text)


def test_udp_blast_requires_uip_peers():
    text = MINIMAL + "\n[app]\nnode = sensor\nrole = udp_blast\npeer = server\nport = 88\n"
    with pytest.raises(ValidationError):
        parse_scenario(text)


def test_trace_link_bounds_checked():
    text = MINIMAL.replace("link = 0", "link = 3")
    with pytest.raises(ValidationError):
        parse_scenario(text)


def test_dump_round_trips():
    s = parse_scenario(MINIMAL)
    again = parse_scenario(dump_scenario(s))
    assert dump_scenario(again) == dump_scenario(s)


def test_preset_delayed_ack_parameters():
    s = preset("delayed-ack")
    assert s.links[0].latency_us == 5000  # half of the 10 ms round trip
    assert s.uip_config(s.node("sensor")).tcp_split is False
    assert s.full_config(s.node("gw")).delayed_ack_timeout_us == 200_000
    assert s.uip_config(s.node("sensor")).mss() == 360


def test_preset_split_differs_only_in_tcp_split():
    a = preset("delayed-ack")
    b = preset("split-hack")
    assert b.node("sensor").overrides["tcp_split"] is True
    a.node("sensor").overrides["tcp_split"] = True
    assert dump_scenario(a) == dump_scenario(b)


def test_preset_frag_sweep_has_five_variants():
    variants = preset("frag-sweep")
    assert [v.links[0].frag_threshold for v in variants] == [60, 90, 127, 200, 400]


def test_preset_hetero_has_two_variant_groups():
    scenarios = preset("hetero-prr")
    assert len(scenarios) == 3  # loss sweep
    s = scenarios[0]
    splits = [n.overrides.get("tcp_split", False) for n in s.nodes if n.stack == "uip"]
    assert splits.count(True) == 2 and splits.count(False) == 2


def test_unknown_preset():
    with pytest.raises(UnknownPreset):
        preset("warp-drive")
