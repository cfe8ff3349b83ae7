"""Plot-data files and static SVG renderings.

SVG is built by hand from strings: textual, diffable, byte-stable across
runs, and needs no display stack.
"""

from __future__ import annotations

import csv
import io
import warnings
from pathlib import Path

import numpy as np

from .explain import TradeoffCurve
from .metrics import MetricsReport

PALETTE = (
    "#4c72b0", "#dd8452", "#55a868", "#c44e52", "#8172b3",
    "#937860", "#da8bc3", "#8c8c8c", "#ccb974", "#64b5cd",
)
OVERLAY_COLOR = "#d62728"


def _fmt(value: float) -> str:
    return f"{value:.4f}".rstrip("0").rstrip(".")


def _svg_document(width: int, height: int, body: list[str]) -> str:
    head = (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
        f'height="{height}" viewBox="0 0 {width} {height}">'
    )
    return "\n".join([head, *body, "</svg>", ""])


def _scale(values: np.ndarray, lo: float, hi: float) -> tuple[float, float]:
    vmin, vmax = float(values.min()), float(values.max())
    if vmax == vmin:
        vmax = vmin + 1.0
    span = vmax - vmin
    return vmin - 0.05 * span, vmax + 0.05 * span


def scatter_svg(
    points: np.ndarray,
    labels: np.ndarray,
    overlays: list[tuple[str, np.ndarray]] | None = None,
    title: str = "",
    size: int = 480,
) -> str:
    """2-D scatter colored by group label, with optional overlay point sets
    (e.g. translated points) drawn as crosses."""
    points = np.asarray(points, dtype=float)
    all_points = points
    overlays = overlays or []
    for _, extra in overlays:
        all_points = np.vstack([all_points, extra])
    x_lo, x_hi = _scale(all_points[:, 0], 0, size)
    y_lo, y_hi = _scale(all_points[:, 1], 0, size)

    def px(x: float) -> str:
        return _fmt((x - x_lo) / (x_hi - x_lo) * (size - 40) + 20)

    def py(y: float) -> str:
        return _fmt(size - ((y - y_lo) / (y_hi - y_lo) * (size - 40) + 20))

    body = [f'<title>{title}</title>'] if title else []
    body.append(f'<rect width="{size}" height="{size}" fill="white"/>')
    for point, label in zip(points, labels):
        color = PALETTE[int(label) % len(PALETTE)] if label >= 0 else "#000000"
        body.append(
            f'<circle cx="{px(point[0])}" cy="{py(point[1])}" r="3" '
            f'fill="{color}" fill-opacity="0.7"/>'
        )
    for name, extra in overlays:
        for point in np.asarray(extra, dtype=float):
            x, y = px(point[0]), py(point[1])
            body.append(
                f'<path d="M {x} {y} m -4 -4 l 8 8 m 0 -8 l -8 8" '
                f'stroke="{OVERLAY_COLOR}" stroke-width="1.5" fill="none">'
                f"<title>{name}</title></path>"
            )
    return _svg_document(size, size, body)


def _heat_color(value: float) -> str:
    # white -> blue ramp over [0, 1]
    v = min(max(value, 0.0), 1.0)
    r = int(round(255 - 179 * v))
    g = int(round(255 - 141 * v))
    b = int(round(255 - 79 * v))
    return f"rgb({r},{g},{b})"


def heatmap_svg(matrix: np.ndarray, title: str = "") -> str:
    """Square heatmap of values in [0, 1] with the numbers printed in cells."""
    matrix = np.asarray(matrix, dtype=float)
    l = matrix.shape[0]
    cell = 56
    margin = 30
    size = l * cell + 2 * margin
    body = [f"<title>{title}</title>"] if title else []
    body.append(f'<rect width="{size}" height="{size}" fill="white"/>')
    for i in range(l):
        for j in range(l):
            x = margin + j * cell
            y = margin + i * cell
            body.append(
                f'<rect x="{x}" y="{y}" width="{cell}" height="{cell}" '
                f'fill="{_heat_color(matrix[i, j])}" stroke="#999999"/>'
            )
            body.append(
                f'<text x="{x + cell // 2}" y="{y + cell // 2 + 4}" '
                f'font-size="12" text-anchor="middle" font-family="monospace">'
                f"{matrix[i, j]:.2f}</text>"
            )
    for i in range(l):
        body.append(
            f'<text x="{margin - 8}" y="{margin + i * cell + cell // 2 + 4}" '
            f'font-size="12" text-anchor="end" font-family="monospace">{i}</text>'
        )
        body.append(
            f'<text x="{margin + i * cell + cell // 2}" y="{margin - 8}" '
            f'font-size="12" text-anchor="middle" font-family="monospace">{i}</text>'
        )
    return _svg_document(size, size, body)


def line_chart_svg(
    x_values,
    series: dict[str, list[float]],
    title: str = "",
    y_range: tuple[float, float] = (0.0, 1.05),
) -> str:
    """Simple line chart; one polyline per named series."""
    width, height, margin = 480, 320, 40
    xs = [float(v) for v in x_values]
    x_lo, x_hi = min(xs), max(xs)
    if x_hi == x_lo:
        x_hi = x_lo + 1.0
    y_lo, y_hi = y_range

    def px(x: float) -> float:
        return (x - x_lo) / (x_hi - x_lo) * (width - 2 * margin) + margin

    def py(y: float) -> float:
        return height - ((y - y_lo) / (y_hi - y_lo) * (height - 2 * margin) + margin)

    body = [f"<title>{title}</title>"] if title else []
    body.append(f'<rect width="{width}" height="{height}" fill="white"/>')
    body.append(
        f'<line x1="{margin}" y1="{height - margin}" x2="{width - margin}" '
        f'y2="{height - margin}" stroke="#333333"/>'
    )
    body.append(
        f'<line x1="{margin}" y1="{margin}" x2="{margin}" '
        f'y2="{height - margin}" stroke="#333333"/>'
    )
    for x in xs:
        body.append(
            f'<text x="{_fmt(px(x))}" y="{height - margin + 16}" font-size="11" '
            f'text-anchor="middle" font-family="monospace">{_fmt(x)}</text>'
        )
    for idx, (name, values) in enumerate(series.items()):
        color = PALETTE[idx % len(PALETTE)]
        pts = " ".join(f"{_fmt(px(x))},{_fmt(py(v))}" for x, v in zip(xs, values))
        body.append(
            f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="2"/>'
        )
        body.append(
            f'<text x="{width - margin + 4}" y="{_fmt(py(values[-1]))}" '
            f'font-size="11" fill="{color}" font-family="monospace">{name}</text>'
        )
    return _svg_document(width, height, body)


def _write(path: Path, content: str) -> Path:
    path.write_text(content)
    return path


def emit_metrics_plots(
    report: MetricsReport, out_dir: str | Path, prefix: str
) -> list[Path]:
    """Heatmap SVGs plus the CSV series backing them."""
    out_dir = Path(out_dir)
    written = [
        _write(
            out_dir / f"heatmap_correctness_{prefix}.svg",
            heatmap_svg(report.correctness, f"correctness ({prefix})"),
        ),
        _write(
            out_dir / f"heatmap_coverage_{prefix}.svg",
            heatmap_svg(report.coverage, f"coverage ({prefix})"),
        ),
        _write(out_dir / f"metrics_{prefix}.csv", report.to_csv()),
    ]
    return written


def emit_tradeoff_plots(curve: TradeoffCurve, out_dir: str | Path) -> list[Path]:
    """Line charts of correctness/coverage/similarity against sparsity."""
    out_dir = Path(out_dir)
    ks = [p.k for p in curve.tgt]
    chart = line_chart_svg(
        ks,
        {
            "tgt correctness": [p.avg_correctness for p in curve.tgt],
            "tgt coverage": [p.avg_coverage for p in curve.tgt],
            "tgt similarity": [p.similarity_prev for p in curve.tgt],
            "dbm correctness": [p.avg_correctness for p in curve.dbm],
            "dbm coverage": [p.avg_coverage for p in curve.dbm],
        },
        title="quality vs sparsity",
    )
    return [_write(out_dir / "tradeoff.svg", chart)]


def emit_scatter_plots(
    reps: np.ndarray,
    labels: np.ndarray,
    out_dir: str | Path,
    overlays: dict[str, np.ndarray] | None = None,
    name: str = "scatter",
) -> list[Path]:
    """Representation scatter (2-D only) and its CSV point series.

    Representations with other dimensions skip the scatter with a warning;
    callers still emit their heatmaps and curves.
    """
    out_dir = Path(out_dir)
    reps = np.asarray(reps, dtype=float)
    written = []

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["label"] + [f"r{c}" for c in range(reps.shape[1])])
    for label, row in zip(labels, reps):
        writer.writerow([int(label)] + [repr(float(v)) for v in row])
    written.append(_write(out_dir / f"{name}.csv", buf.getvalue()))

    if reps.shape[1] != 2:
        warnings.warn(
            f"representation is {reps.shape[1]}-D; scatter rendering skipped",
            stacklevel=2,
        )
        return written

    overlay_list = [(key, value) for key, value in (overlays or {}).items()]
    written.append(
        _write(
            out_dir / f"{name}.svg",
            scatter_svg(reps, labels, overlay_list, title=name),
        )
    )
    for key, value in overlay_list:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["r0", "r1"])
        for row in np.asarray(value, dtype=float):
            writer.writerow([repr(float(row[0])), repr(float(row[1]))])
        written.append(_write(out_dir / f"{name}_{key}.csv", buf.getvalue()))
    return written
