"""Per-flow statistics, the versioned stats CSV, and the comparison report."""

from dataclasses import dataclass

SCHEMA_LINE = "schema=uipsim-flow-stats-1"
HEADER = "flow,variant,bytes_acked,duration_us,goodput_bps,segments_sent,retransmissions,prr"


class SchemaMismatch(Exception):
    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


@dataclass(frozen=True)
class FlowStats:
    flow: str
    variant: str
    bytes_acked: int
    duration_us: int
    goodput_bps: float
    segments_sent: int
    retransmissions: int
    prr: float


def goodput_bps(bytes_acked: int, duration_us: int) -> float:
    if duration_us <= 0:
        return 0.0
    return bytes_acked * 8 * 10**6 / duration_us


def render_csv(rows: list[FlowStats]) -> str:
    lines = [SCHEMA_LINE, HEADER]
    for r in rows:
        lines.append(
            f"{r.flow},{r.variant},{r.bytes_acked},{r.duration_us},"
            f"{r.goodput_bps:.3f},{r.segments_sent},{r.retransmissions},{r.prr:.6f}"
        )
    return "\n".join(lines) + "\n"


def parse_csv(text: str) -> list[FlowStats]:
    lines = text.splitlines()
    if not lines or lines[0] != SCHEMA_LINE:
        raise SchemaMismatch(1, f"expected {SCHEMA_LINE!r}")
    if len(lines) < 2 or lines[1] != HEADER:
        raise SchemaMismatch(2, "unexpected column header")
    rows = []
    for line_no, line in enumerate(lines[2:], start=3):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != 8:
            raise SchemaMismatch(line_no, f"expected 8 fields, got {len(parts)}")
        try:
            rows.append(
                FlowStats(
                    flow=parts[0],
                    variant=parts[1],
                    bytes_acked=int(parts[2]),
                    duration_us=int(parts[3]),
                    goodput_bps=float(parts[4]),
                    segments_sent=int(parts[5]),
                    retransmissions=int(parts[6]),
                    prr=float(parts[7]),
                )
            )
        except ValueError as exc:
            raise SchemaMismatch(line_no, str(exc))
    return rows


def report(stats_lists: list[list[FlowStats]]) -> str:
    """Plain-text comparison table over one or more stats files. When the
    inputs pair a split-enabled variant with a plain one, a throughput-ratio
    line is appended."""
    rows = [row for rows_ in stats_lists for row in rows_]
    widths = {
        "flow": max([len("flow")] + [len(r.flow) for r in rows]),
        "variant": max([len("variant")] + [len(r.variant) for r in rows]),
    }
    out = [
        f"{'flow':<{widths['flow']}}  {'variant':<{widths['variant']}}  "
        f"{'goodput_bps':>12}  {'bytes_acked':>11}  {'segments':>8}  "
        f"{'rexmit':>6}  {'prr':>8}"
    ]
    for r in rows:
        out.append(
            f"{r.flow:<{widths['flow']}}  {r.variant:<{widths['variant']}}  "
            f"{r.goodput_bps:>12.3f}  {r.bytes_acked:>11}  {r.segments_sent:>8}  "
            f"{r.retransmissions:>6}  {r.prr:>8.6f}"
        )

    by_variant: dict[str, list[FlowStats]] = {}
    for r in rows:
        by_variant.setdefault(r.variant, []).append(r)
    if len(by_variant) > 1:
        out.append("")
        out.append("per-variant totals:")
        for variant, group in by_variant.items():
            total_rexmit = sum(r.retransmissions for r in group)
            mean_goodput = sum(r.goodput_bps for r in group) / len(group)
            mean_prr = sum(r.prr for r in group) / len(group)
            out.append(
                f"  {variant}: flows={len(group)} mean_goodput_bps={mean_goodput:.3f} "
                f"retransmissions={total_rexmit} mean_prr={mean_prr:.6f}"
            )
    split = [r for r in rows if "+split" in r.variant]
    plain = [r for r in rows if r.variant == "uip"]
    if split and plain:
        split_goodput = sum(r.goodput_bps for r in split) / len(split)
        plain_goodput = sum(r.goodput_bps for r in plain) / len(plain)
        if plain_goodput > 0:
            out.append("")
            out.append(
                f"throughput ratio (split / no-split): "
                f"{split_goodput / plain_goodput:.2f}"
            )
    return "\n".join(out) + "\n"
