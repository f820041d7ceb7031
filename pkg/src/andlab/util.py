"""Shared plumbing: stable hashing, Wilson intervals, atomic file output, SVG.

Determinism rules used across the package:

* every random quantity is a pure function of explicit integer seeds,
  derived with the splitmix64 mixer (never Python's ``hash``);
* JSON and CSV emitters format floats with ``repr`` (shortest round-trip),
  so identical inputs give byte-identical artifacts on every run and
  thread count.
"""

from __future__ import annotations

import json
import os
import tempfile
from typing import Iterable, Sequence

_MASK64 = (1 << 64) - 1


def splitmix64(*parts: int) -> int:
    """Mix integers into a uniform 64-bit word (order-sensitive, stable)."""
    h = 0x9E3779B97F4A7C15
    for p in parts:
        h = (h + (p & _MASK64)) & _MASK64
        h = ((h ^ (h >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        h = ((h ^ (h >> 27)) * 0x94D049BB133111EB) & _MASK64
        h = h ^ (h >> 31)
    return h


def derive_seed(seed: int, *indices: int) -> int:
    """Per-trial / per-site seed, independent of execution order."""
    return splitmix64(seed, *indices)


def bernoulli_bit(seed: int, *indices: int) -> int:
    """One fair bit, a pure function of (seed, indices)."""
    return splitmix64(seed, *indices) >> 63


def wilson_interval(successes: int, trials: int, z: float = 1.96) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion."""
    if trials <= 0:
        raise ValueError("wilson_interval needs trials >= 1")
    p = successes / trials
    z2 = z * z
    denom = 1.0 + z2 / trials
    center = (p + z2 / (2 * trials)) / denom
    half = z * ((p * (1 - p) / trials + z2 / (4 * trials * trials)) ** 0.5) / denom
    return max(0.0, center - half), min(1.0, center + half)


def fmt(x) -> str:
    """Stable scalar formatting for CSV/JSON artifacts."""
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, float):
        return repr(x)
    return str(x)


def csv_bytes(header: Sequence[str], rows: Iterable[Sequence], comments: Sequence[str] = ()) -> bytes:
    """RFC-4180-ish CSV with '#' comment header lines and LF newlines."""
    out = []
    for c in comments:
        out.append("# " + c)
    out.append(",".join(header))
    for row in rows:
        cells = []
        for cell in row:
            s = fmt(cell)
            if any(ch in s for ch in ',"\n'):
                s = '"' + s.replace('"', '""') + '"'
            cells.append(s)
        out.append(",".join(cells))
    return ("\n".join(out) + "\n").encode()


def json_bytes(obj) -> bytes:
    """Canonical JSON: fixed separators, preserved key order, LF terminated."""
    def default(o):
        raise TypeError(f"not JSON-serializable: {type(o)!r}")

    return (json.dumps(obj, separators=(", ", ": "), default=default) + "\n").encode()


def atomic_write_bytes(path: str, data: bytes) -> None:
    """Write via temp-file-then-rename so readers never see partial output."""
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-andlab-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.unlink(tmp)


def svg_scatter(points, line=None, title="", width=640, height=480,
                xlabel="", ylabel="", comments: Sequence[str] = ()) -> bytes:
    """Self-contained scatter plot with an optional fitted line y = a + b*x.

    ``points`` is a sequence of (x, y). Deterministic output; no external
    assets, so the bytes can be used as golden files.
    """
    pts = [(float(x), float(y)) for x, y in points]
    if not pts:
        pts = [(0.0, 0.0)]
    xs = [p[0] for p in pts]
    ys = [p[1] for p in pts]
    x0, x1 = min(xs), max(xs)
    y0, y1 = min(ys), max(ys)
    if x1 == x0:
        x1 = x0 + 1.0
    if y1 == y0:
        y1 = y0 + 1.0
    mx, my = 60.0, 40.0
    sx = (width - 2 * mx) / (x1 - x0)
    sy = (height - 2 * my) / (y1 - y0)

    def tx(x):
        return mx + (x - x0) * sx

    def ty(y):
        return height - my - (y - y0) * sy

    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">']
    for c in comments:
        parts.append("<!-- " + c.replace("--", "- -") + " -->")
    parts.append(f'<rect width="{width}" height="{height}" fill="white"/>')
    parts.append(
        f'<line x1="{fmt(mx)}" y1="{fmt(height - my)}" x2="{fmt(width - mx)}" y2="{fmt(height - my)}" stroke="black"/>'
    )
    parts.append(f'<line x1="{fmt(mx)}" y1="{fmt(my)}" x2="{fmt(mx)}" y2="{fmt(height - my)}" stroke="black"/>')
    if title:
        parts.append(f'<text x="{width // 2}" y="20" text-anchor="middle" font-size="14">{title}</text>')
    if xlabel:
        parts.append(f'<text x="{width // 2}" y="{height - 8}" text-anchor="middle" font-size="12">{xlabel}</text>')
    if ylabel:
        parts.append(
            f'<text x="14" y="{height // 2}" text-anchor="middle" font-size="12" '
            f'transform="rotate(-90 14 {height // 2})">{ylabel}</text>'
        )
    for x, y in pts:
        parts.append(f'<circle cx="{fmt(tx(x))}" cy="{fmt(ty(y))}" r="2" fill="steelblue"/>')
    if line is not None:
        a, b = line
        ya, yb = a + b * x0, a + b * x1
        parts.append(
            f'<line x1="{fmt(tx(x0))}" y1="{fmt(ty(ya))}" x2="{fmt(tx(x1))}" y2="{fmt(ty(yb))}" '
            f'stroke="crimson" stroke-width="1.5"/>'
        )
    parts.append("</svg>")
    return ("\n".join(parts) + "\n").encode()


def svg_polyline(series, title="", width=640, height=480, xlabel="", ylabel="",
                 comments: Sequence[str] = ()) -> bytes:
    """Line chart for one or more named series [(name, [(x, y), ...]), ...]."""
    all_pts = [p for _, pts in series for p in pts]
    body = svg_scatter(all_pts, title=title, width=width, height=height,
                       xlabel=xlabel, ylabel=ylabel, comments=comments).decode()
    # splice polylines before the closing tag, reusing the scatter's frame
    pts_flat = [(float(x), float(y)) for x, y in all_pts] or [(0.0, 0.0)]
    xs = [p[0] for p in pts_flat]
    ys = [p[1] for p in pts_flat]
    x0, x1 = min(xs), max(xs)
    y0, y1 = min(ys), max(ys)
    if x1 == x0:
        x1 = x0 + 1.0
    if y1 == y0:
        y1 = y0 + 1.0
    mx, my = 60.0, 40.0
    sx = (width - 2 * mx) / (x1 - x0)
    sy = (height - 2 * my) / (y1 - y0)
    colors = ["steelblue", "crimson", "seagreen", "darkorange", "purple"]
    lines = []
    for i, (name, pts) in enumerate(series):
        coords = " ".join(
            f"{fmt(mx + (x - x0) * sx)},{fmt(height - my - (y - y0) * sy)}" for x, y in pts
        )
        color = colors[i % len(colors)]
        lines.append(f'<polyline points="{coords}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        lines.append(f'<text x="{width - 150}" y="{30 + 14 * i}" font-size="11" fill="{color}">{name}</text>')
    return (body[: -len("</svg>\n")] + "\n".join(lines) + "\n</svg>\n").encode()
