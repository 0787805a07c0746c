"""Subcommand behavior and exit statuses."""

import os

import pytest

from uipsim.cli import main
from uipsim.scenario import dump_scenario, preset

LISTING = """struct uip_conn *uip_conn;

void uip_process(uint8_t flag)
{
  uip_conn = NULL;
}
"""


def write_scenario(tmp_path, scenario, name="scn.scn"):
    path = tmp_path / name
    path.write_text(dump_scenario(scenario))
    return str(path)


def test_run_writes_outputs(tmp_path, capsys):
    s = preset("delayed-ack")
    s.duration_us = 1_000_000
    s.apps[0].bytes_total = 720
    path = write_scenario(tmp_path, s)
    out_dir = str(tmp_path / "out")
    assert main(["run", path, "--out", out_dir]) == 0
    captured = capsys.readouterr().out
    assert "event-log digest:" in captured
    assert os.path.exists(os.path.join(out_dir, "stats.csv"))
    assert os.path.exists(os.path.join(out_dir, "flow.pcap"))
    assert os.path.exists(os.path.join(out_dir, "digest.txt"))


def test_run_rejects_invalid_scenario(tmp_path, capsys):
    path = tmp_path / "bad.scn"
    path.write_text("[node]\nid = x\nstack = blip\n")
    assert main(["run", str(path), "--out", str(tmp_path / "o")]) == 2
    assert "error" in capsys.readouterr().err


def test_run_seed_override_changes_digest(tmp_path, capsys):
    s = preset("delayed-ack")
    s.duration_us = 500_000
    s.links[0].loss_prob = 0.3
    path = write_scenario(tmp_path, s)
    main(["run", path, "--out", str(tmp_path / "a")])
    first = capsys.readouterr().out
    main(["run", path, "--seed", "99", "--out", str(tmp_path / "b")])
    second = capsys.readouterr().out
    digest = lambda text: [l for l in text.splitlines() if "digest" in l]
    assert digest(first) != digest(second)


def test_preset_prints_scenario(capsys):
    assert main(["preset", "delayed-ack"]) == 0
    out = capsys.readouterr().out
    assert "[scenario]" in out and "tcp_split" in out


def test_preset_sweep_writes_files(tmp_path):
    assert main(["preset", "frag-sweep", "--out", str(tmp_path)]) == 0
    names = sorted(os.listdir(tmp_path))
    assert names == [f"frag-sweep-{i}.scn" for i in range(5)]


def test_unknown_preset_is_validation_error(capsys):
    assert main(["preset", "nope"]) == 2


def test_globalize_reports_and_exit_zero(tmp_path, capsys):
    src = tmp_path / "in.c"
    src.write_text(LISTING)
    out = tmp_path / "out.c"
    assert main(["globalize", "--in", str(src), "--out", str(out)]) == 0
    printed = capsys.readouterr().out
    assert "REWROTE uip_conn 1 sites" in printed
    assert "global_uip_conn[NUM_STACKS]" in out.read_text()


def test_globalize_exclude_is_identity(tmp_path, capsys):
    src = tmp_path / "in.c"
    src.write_text(LISTING)
    out = tmp_path / "out.c"
    assert main(["globalize", "--in", str(src), "--out", str(out),
                 "--exclude", "uip_conn"]) == 0
    assert out.read_text() == LISTING
    assert "REWROTE" not in capsys.readouterr().out


def test_globalize_unsupported_initializer_aborts_without_output(tmp_path, capsys):
    src = tmp_path / "in.c"
    src.write_text("int x;\nint *p = &x;\n")
    out = tmp_path / "out.c"
    assert main(["globalize", "--in", str(src), "--out", str(out)]) == 2
    assert not out.exists()
    assert "error" in capsys.readouterr().err


def test_trace_diff_equal_and_unequal(tmp_path, capsys):
    from uipsim import wire
    from uipsim.trace import trace_open

    def handshake(path, isn):
        with trace_open(path) as w:
            syn = wire.build_tcp_segment("10.0.0.1", "10.0.0.2", 4096, 80,
                                         isn, 0, wire.TCP_SYN, 100)
            w.write(0, wire.build_ipv4("10.0.0.1", "10.0.0.2", wire.PROTO_TCP, syn, 0))
            synack = wire.build_tcp_segment("10.0.0.2", "10.0.0.1", 80, 4096,
                                            9000, isn + 1,
                                            wire.TCP_SYN | wire.TCP_ACK, 100)
            w.write(10, wire.build_ipv4("10.0.0.2", "10.0.0.1", wire.PROTO_TCP, synack, 0))

    a, b, c = (str(tmp_path / n) for n in ("a.pcap", "b.pcap", "c.pcap"))
    handshake(a, isn=1000)
    handshake(b, isn=77777)  # different ISN normalizes away
    assert main(["trace-diff", a, b]) == 0
    assert "equal" in capsys.readouterr().out

    from uipsim import wire as w2
    from uipsim.trace import trace_open as topen

    with topen(c) as w:
        syn = w2.build_tcp_segment("10.0.0.1", "10.0.0.2", 4096, 80, 5, 0,
                                   w2.TCP_SYN, 100)
        w.write(0, w2.build_ipv4("10.0.0.1", "10.0.0.2", w2.PROTO_TCP, syn, 0))
    assert main(["trace-diff", a, c]) == 1
    assert "length mismatch" in capsys.readouterr().out


def test_report_over_run_outputs(tmp_path, capsys):
    for name in ("delayed-ack", "split-hack"):
        s = preset(name)
        s.duration_us = 2_000_000
        path = write_scenario(tmp_path, s, f"{name}.scn")
        main(["run", path, "--out", str(tmp_path / name)])
    capsys.readouterr()
    assert main([
        "report",
        str(tmp_path / "delayed-ack" / "stats.csv"),
        str(tmp_path / "split-hack" / "stats.csv"),
    ]) == 0
    out = capsys.readouterr().out
    assert "throughput ratio" in out


def test_report_malformed_csv(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("not a stats file\n")
    assert main(["report", str(bad)]) == 2
