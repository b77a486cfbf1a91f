"""Deterministic SVG rendering of ray fans and intensity profiles.

The output depends only on the numbers passed in (no timestamps, no random
ids, fixed float formatting), so re-plotting data read back from the CSV
files reproduces the original SVG byte for byte.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import __version__

WIDTH, HEIGHT = 860, 520
MARGIN_L, MARGIN_R, MARGIN_T, MARGIN_B = 80, 30, 40, 60
MAX_DRAWN_RAYS = 41
MAX_POINTS = 600
#: rays launched with less than this fraction of the peak amplitude do not set the plot range
RANGE_AMPLITUDE = 1e-3

_THIN = 'fill="none" stroke="#4a6fa5" stroke-width="0.8" stroke-opacity="0.75"'
_HEAVY = 'fill="none" stroke="#b22222" stroke-width="2.6"'


@dataclass(frozen=True)
class Frame:
    """Linear map from data coordinates to the SVG plot area."""

    u0: float
    u1: float
    v0: float
    v1: float

    @property
    def inner_w(self) -> int:
        return WIDTH - MARGIN_L - MARGIN_R

    @property
    def inner_h(self) -> int:
        return HEIGHT - MARGIN_T - MARGIN_B

    def px(self, u):
        return MARGIN_L + (np.asarray(u, dtype=float) - self.u0) / (self.u1 - self.u0) * self.inner_w

    def py(self, v):
        return MARGIN_T + (self.v1 - np.asarray(v, dtype=float)) / (self.v1 - self.v0) * self.inner_h

    def aspect(self) -> dict:
        """Data units per pixel along each axis."""
        return {"horizontal_units_per_px": (self.u1 - self.u0) / self.inner_w,
                "vertical_units_per_px": (self.v1 - self.v0) / self.inner_h}


def nice_ticks(lo: float, hi: float, target: int = 6) -> list[float]:
    """Round tick positions (1, 2 or 5 times a power of ten) covering [lo, hi]."""
    if not hi > lo:
        return [lo]
    raw = (hi - lo) / target
    mag = 10.0 ** math.floor(math.log10(raw))
    step = next(m * mag for m in (1, 2, 5, 10) if m * mag >= raw)
    first = math.ceil(lo / step - 1e-9)
    last = math.floor(hi / step + 1e-9)
    return [round(k * step, 12) for k in range(first, last + 1)]


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def _tick_label(v: float) -> str:
    if v == 0:
        return "0"
    if abs(v) >= 1e6 or abs(v) < 1e-3:
        return f"{v:.3g}"
    return f"{v:g}"


def _polyline(xs, ys, style: str) -> str:
    pts = " ".join(f"{_fmt(a)},{_fmt(b)}" for a, b in zip(xs, ys))
    return f'<polyline points="{pts}" {style}/>'


def _axes(frame: Frame, xlabel: str, ylabel: str) -> list[str]:
    out = [f'<rect x="{MARGIN_L}" y="{MARGIN_T}" width="{frame.inner_w}" height="{frame.inner_h}" '
           'fill="none" stroke="#000" stroke-width="1"/>']
    bottom = MARGIN_T + frame.inner_h
    for t in nice_ticks(frame.u0, frame.u1):
        x = _fmt(float(frame.px(t)))
        out.append(f'<line x1="{x}" y1="{bottom}" x2="{x}" y2="{bottom + 5}" stroke="#000"/>')
        out.append(f'<text x="{x}" y="{bottom + 20}" font-size="12" text-anchor="middle">{_tick_label(t)}</text>')
    for t in nice_ticks(frame.v0, frame.v1):
        y = _fmt(float(frame.py(t)))
        out.append(f'<line x1="{MARGIN_L - 5}" y1="{y}" x2="{MARGIN_L}" y2="{y}" stroke="#000"/>')
        out.append(f'<text x="{MARGIN_L - 8}" y="{y}" font-size="12" text-anchor="end" '
                   f'dominant-baseline="middle">{_tick_label(t)}</text>')
    out.append(f'<text x="{MARGIN_L + frame.inner_w / 2:.1f}" y="{HEIGHT - 15}" font-size="14" '
               f'text-anchor="middle">{xlabel}</text>')
    out.append(f'<text x="18" y="{MARGIN_T + frame.inner_h / 2:.1f}" font-size="14" text-anchor="middle" '
               f'transform="rotate(-90 18 {MARGIN_T + frame.inner_h / 2:.1f})">{ylabel}</text>')
    return out


def _document(body: list[str], title: str) -> str:
    head = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f"<!-- dbs-traj {__version__} -->",
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif">',
        f"<title>{title}</title>",
        f'<rect width="{WIDTH}" height="{HEIGHT}" fill="#fff"/>',
    ]
    return "\n".join(head + body + ["</svg>"]) + "\n"


def waist_rays(label: np.ndarray) -> tuple[int, int]:
    """Indices of the rays whose launch labels are nearest -1 and +1."""
    return int(np.argmin(np.abs(label + 1.0))), int(np.argmin(np.abs(label - 1.0)))


def trajectory_frame(X: np.ndarray, Z: np.ndarray, R0: np.ndarray) -> Frame:
    keep = R0 >= RANGE_AMPLITUDE * np.max(R0)
    xs = X[:, keep]
    xm = float(np.max(np.abs(xs[np.isfinite(xs)]))) if np.isfinite(xs).any() else 1.0
    xm = max(xm, 1e-12) * 1.05
    z1 = float(np.nanmax(Z))
    return Frame(0.0, z1 if z1 > 0 else 1.0, -xm, xm)


def trajectory_svg(X: np.ndarray, Z: np.ndarray, label: np.ndarray, R0: np.ndarray):
    """Ray fan x/w0 against z/w0 with the two waist rays drawn heavy.

    ``X`` and ``Z`` are (samples, rays). Returns ``(svg_text, frame)``.
    """
    n_samples, n_rays = X.shape
    frame = trajectory_frame(X, Z, R0)
    rows = np.arange(n_samples)
    if n_samples > MAX_POINTS:
        rows = np.unique(np.concatenate((np.linspace(0, n_samples - 1, MAX_POINTS).round().astype(int),
                                         [n_samples - 1])))
    heavy = waist_rays(label)
    step = max(1, (n_rays - 1) // (MAX_DRAWN_RAYS - 1))
    centre = n_rays // 2
    thin = sorted({i for i in range(centre % step, n_rays, step)} - set(heavy))
    body = _axes(frame, "z / w0", "x / w0")
    body.append(f'<clipPath id="plot"><rect x="{MARGIN_L}" y="{MARGIN_T}" width="{frame.inner_w}" '
                f'height="{frame.inner_h}"/></clipPath>')
    body.append('<g clip-path="url(#plot)">')
    for j in list(thin) + list(heavy):
        ok = np.isfinite(X[rows, j]) & np.isfinite(Z[rows, j])
        r = rows[ok]
        style = _HEAVY if j in heavy else _THIN
        body.append(_polyline(frame.px(Z[r, j]), frame.py(X[r, j]), style))
    body.append("</g>")
    return _document(body, "ray trajectories"), frame


def profiles_svg(launch: tuple, final: tuple):
    """Launch and final relative intensity against x/w0.

    Each argument is an ``(x, intensity)`` pair. Returns ``(svg_text, frame)``.
    """
    spans = []
    for x, i in (launch, final):
        x, i = np.asarray(x, dtype=float), np.asarray(i, dtype=float)
        sel = np.isfinite(i) & (i > 1e-3)
        if sel.any():
            spans.append((float(x[sel].min()), float(x[sel].max())))
    lo = min(s[0] for s in spans) if spans else -1.0
    hi = max(s[1] for s in spans) if spans else 1.0
    pad = 0.1 * (hi - lo) if hi > lo else 1.0
    frame = Frame(lo - pad, hi + pad, 0.0, 1.05)
    body = _axes(frame, "x / w0", "relative intensity R^2")
    body.append(f'<clipPath id="plot"><rect x="{MARGIN_L}" y="{MARGIN_T}" width="{frame.inner_w}" '
                f'height="{frame.inner_h}"/></clipPath>')
    body.append('<g clip-path="url(#plot)">')
    styles = ('fill="none" stroke="#777" stroke-width="1.5" stroke-dasharray="6 4"',
              'fill="none" stroke="#b22222" stroke-width="2"')
    for (x, i), style in zip((launch, final), styles):
        x, i = np.asarray(x, dtype=float), np.asarray(i, dtype=float)
        ok = np.isfinite(x) & np.isfinite(i)
        body.append(_polyline(frame.px(x[ok]), frame.py(i[ok]), style))
    body.append("</g>")
    lx = MARGIN_L + frame.inner_w - 150
    body.append(f'<line x1="{lx}" y1="{MARGIN_T + 20}" x2="{lx + 30}" y2="{MARGIN_T + 20}" {styles[0]}/>')
    body.append(f'<text x="{lx + 38}" y="{MARGIN_T + 24}" font-size="12">launch</text>')
    body.append(f'<line x1="{lx}" y1="{MARGIN_T + 40}" x2="{lx + 30}" y2="{MARGIN_T + 40}" {styles[1]}/>')
    body.append(f'<text x="{lx + 38}" y="{MARGIN_T + 44}" font-size="12">final</text>')
    return _document(body, "intensity profiles"), frame
