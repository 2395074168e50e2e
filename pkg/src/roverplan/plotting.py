"""Decorative SVG charts for sweep and trace CSVs.

Output is deterministic: pure string assembly with fixed precision, no
timestamps, no RNG. Charts are static summaries — nothing downstream reads
them back.
"""

from __future__ import annotations

W, H = 640, 400
MARGIN_L, MARGIN_R, MARGIN_T, MARGIN_B = 64, 20, 36, 48
MODE_FILL = {"OROS": "#2b6cb0", "SLAM": "#c05621"}


class PlotError(ValueError):
    """Malformed or empty CSV input."""


def _parse_csv(text: str) -> tuple[list[str], list[dict[str, str]]]:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise PlotError("empty CSV: no header")
    header = lines[0].split(",")
    rows = []
    for i, ln in enumerate(lines[1:], 2):
        parts = ln.split(",")
        if len(parts) != len(header):
            raise PlotError(f"line {i}: expected {len(header)} fields, got {len(parts)}")
        rows.append(dict(zip(header, parts)))
    if not rows:
        raise PlotError("empty CSV: header but no data rows")
    return header, rows


def _svg(body: list[str], title: str) -> str:
    head = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" '
        f'viewBox="0 0 {W} {H}">',
        f'<rect width="{W}" height="{H}" fill="#ffffff"/>',
        f'<text x="{W / 2:.1f}" y="22" text-anchor="middle" '
        f'font-family="sans-serif" font-size="14">{title}</text>',
    ]
    return "\n".join(head + body + ["</svg>"]) + "\n"


def _axes(y_label: str, y_ticks: list[tuple[float, str]]) -> list[str]:
    x0, y0, y1 = MARGIN_L, H - MARGIN_B, MARGIN_T
    out = [
        f'<line x1="{x0}" y1="{y0}" x2="{W - MARGIN_R}" y2="{y0}" stroke="#000"/>',
        f'<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="#000"/>',
        f'<text x="16" y="{(y0 + y1) / 2:.1f}" text-anchor="middle" '
        f'font-family="sans-serif" font-size="11" '
        f'transform="rotate(-90 16 {(y0 + y1) / 2:.1f})">{y_label}</text>',
    ]
    for frac, label in y_ticks:
        y = y0 - frac * (y0 - y1)
        out.append(f'<line x1="{x0 - 4}" y1="{y:.1f}" x2="{x0}" y2="{y:.1f}" stroke="#000"/>')
        out.append(
            f'<text x="{x0 - 8}" y="{y + 4:.1f}" text-anchor="end" '
            f'font-family="sans-serif" font-size="10">{label}</text>'
        )
    return out


def render_sweep_svg(csv_text: str) -> str:
    """Grouped bars: explored fraction per swept value, one bar per mode."""
    header, rows = _parse_csv(csv_text)
    needed = {"mode", "swept_key", "swept_value", "explored_fraction"}
    if not needed.issubset(header):
        raise PlotError(f"sweep CSV must have columns {sorted(needed)}")
    key = rows[0]["swept_key"]
    values = list(dict.fromkeys(r["swept_value"] for r in rows))
    modes = [m for m in MODE_FILL if any(r["mode"] == m for r in rows)]
    cell: dict[tuple[str, str], float] = {}
    for r in rows:
        try:
            cell[(r["swept_value"], r["mode"])] = float(r["explored_fraction"])
        except ValueError as err:
            raise PlotError(f"bad explored_fraction: {r['explored_fraction']!r}") from err

    x0, y0, y1 = MARGIN_L, H - MARGIN_B, MARGIN_T
    span = W - MARGIN_L - MARGIN_R
    group_w = span / len(values)
    bar_w = group_w * 0.8 / max(1, len(modes))
    body = _axes(
        "explored fraction",
        [(f, f"{f:.2f}") for f in (0.0, 0.25, 0.5, 0.75, 1.0)],
    )
    for gi, val in enumerate(values):
        gx = x0 + gi * group_w
        for mi, mode in enumerate(modes):
            frac = cell.get((val, mode))
            if frac is None:
                continue
            bh = frac * (y0 - y1)
            bx = gx + group_w * 0.1 + mi * bar_w
            body.append(
                f'<rect x="{bx:.1f}" y="{y0 - bh:.1f}" width="{bar_w:.1f}" '
                f'height="{bh:.1f}" fill="{MODE_FILL[mode]}"/>'
            )
        body.append(
            f'<text x="{gx + group_w / 2:.1f}" y="{y0 + 16}" text-anchor="middle" '
            f'font-family="sans-serif" font-size="11">{val}</text>'
        )
    body.append(
        f'<text x="{(x0 + W - MARGIN_R) / 2:.1f}" y="{H - 12}" text-anchor="middle" '
        f'font-family="sans-serif" font-size="11">{key}</text>'
    )
    for mi, mode in enumerate(modes):
        lx = W - MARGIN_R - 150 + mi * 76
        body.append(f'<rect x="{lx}" y="{MARGIN_T - 24}" width="10" height="10" '
                    f'fill="{MODE_FILL[mode]}"/>')
        body.append(
            f'<text x="{lx + 14}" y="{MARGIN_T - 15}" font-family="sans-serif" '
            f'font-size="11">{mode}</text>'
        )
    return _svg(body, f"explored fraction vs {key}")


def render_trace_svg(csv_text: str) -> str:
    """Step line: explored cell count over epochs from a replay trace CSV."""
    header, rows = _parse_csv(csv_text)
    if not {"epoch", "explored_total"}.issubset(header):
        raise PlotError("trace CSV must have columns epoch and explored_total")
    by_epoch: dict[int, int] = {}
    for r in rows:
        try:
            by_epoch[int(r["epoch"])] = int(r["explored_total"])
        except ValueError as err:
            raise PlotError(f"bad trace row: {r}") from err
    points = sorted(by_epoch.items())
    epochs = [t for t, _ in points]
    top = max(c for _, c in points)

    x0, y0, y1 = MARGIN_L, H - MARGIN_B, MARGIN_T
    span = W - MARGIN_L - MARGIN_R
    xs = {
        t: x0 + span * (i / max(1, len(epochs) - 1)) for i, t in enumerate(epochs)
    }
    ys = {t: y0 - (c / top) * (y0 - y1) for t, c in points}
    body = _axes(
        "explored cells",
        [(k / 4, f"{top * k / 4:.0f}") for k in range(5)],
    )
    path = []
    prev_t = None
    for t in epochs:
        if prev_t is None:
            path.append(f"M {xs[t]:.1f} {ys[t]:.1f}")
        else:
            path.append(f"L {xs[t]:.1f} {ys[prev_t]:.1f}")
            path.append(f"L {xs[t]:.1f} {ys[t]:.1f}")
        prev_t = t
    body.append(
        f'<path d="{" ".join(path)}" fill="none" stroke="#2b6cb0" stroke-width="2"/>'
    )
    for t in epochs:
        body.append(
            f'<text x="{xs[t]:.1f}" y="{y0 + 16}" text-anchor="middle" '
            f'font-family="sans-serif" font-size="10">{t}</text>'
        )
    body.append(
        f'<text x="{(x0 + W - MARGIN_R) / 2:.1f}" y="{H - 12}" text-anchor="middle" '
        f'font-family="sans-serif" font-size="11">epoch</text>'
    )
    return _svg(body, "explored cells over time")


def render_csv(csv_text: str) -> str:
    """Dispatch on header: sweep CSVs get bars, trace CSVs get a step line."""
    lines = [ln for ln in csv_text.splitlines() if ln.strip()]
    if not lines:
        raise PlotError("empty CSV: no header")
    header = lines[0].split(",")
    if "swept_key" in header:
        return render_sweep_svg(csv_text)
    if "explored_total" in header:
        return render_trace_svg(csv_text)
    raise PlotError("unrecognized CSV header; expected a sweep or trace CSV")
