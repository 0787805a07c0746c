import pytest

from uipsim.stats import (
    FlowStats,
    SchemaMismatch,
    goodput_bps,
    parse_csv,
    render_csv,
    report,
)


def row(flow="f", variant="uip", goodput=1000.0, bytes_acked=125, rexmit=0):
    return FlowStats(flow, variant, bytes_acked, 1_000_000, goodput, 10, rexmit, 1.0)


def test_goodput_formula():
    # bytes * 8 * 1e6 / duration_us
    assert goodput_bps(16560, 10_000_000) == pytest.approx(13248.0)


def test_csv_round_trip():
    rows = [row(), row(flow="g", variant="uip+split", goodput=2000.0)]
    assert parse_csv(render_csv(rows)) == rows


def test_schema_line_checked():
    with pytest.raises(SchemaMismatch) as err:
        parse_csv("flow,variant\n")
    assert err.value.line_no == 1


def test_malformed_row_reports_line():
    text = render_csv([row()]) + "only,three,fields\n"
    with pytest.raises(SchemaMismatch) as err:
        parse_csv(text)
    assert err.value.line_no == 4


def test_report_single_input_has_no_ratio():
    text = report([[row()]])
    assert "throughput ratio" not in text
    assert "f" in text


def test_report_split_pair_prints_ratio():
    plain = row(flow="d", variant="uip", goodput=13000.0)
    split = row(flow="s", variant="uip+split", goodput=208000.0)
    text = report([[plain], [split]])
    assert "throughput ratio (split / no-split): 16.00" in text


def test_report_groups_variants():
    rows = [
        row(flow="a1", variant="uip+split", rexmit=3),
        row(flow="b1", variant="uip", rexmit=5),
    ]
    text = report([rows])
    assert "per-variant totals" in text
    assert "uip+split: flows=1" in text
    assert "retransmissions=5" in text
