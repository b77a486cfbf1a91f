"""Amplitude transport along ray tubes and the wave potential on a wavefront.

The wavefront is the polyline through the bundle's ray positions at a common
time. Transverse derivatives are taken along its arc length with three-point
stencils on the (generally nonuniform) arclength grid.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import Bundle, Mode
from .errors import CausticError


@dataclass
class WavefrontGeometry:
    tangent: np.ndarray  # (n, 2) unit vectors along the front, perpendicular to p
    normal: np.ndarray  # (n, 2) unit vectors along p
    arclen: np.ndarray  # (n,) cumulative polyline length
    crossed: np.ndarray  # (n - 1,) True where neighbours i, i+1 are out of order


def _rotate(v: np.ndarray) -> np.ndarray:
    """Rotate 2-vectors (x, z) by -90 degrees so that +z maps to +x."""
    return np.column_stack((v[:, 1], -v[:, 0]))


def wavefront_geometry(b: Bundle, strict: bool | None = None) -> WavefrontGeometry:
    """Compute tangents, normals and arclength, and write tube widths into ``b.sigma``.

    Raises CausticError when neighbours cross or come closer than the caustic
    threshold, unless ``strict`` is False (the default in classical mode, where
    foci are expected); the offending pairs are then flagged in ``crossed``.
    """
    if strict is None:
        strict = b.params.mode.has_wave_potential
    pos = b.positions
    mom = b.momenta
    pabs = np.hypot(mom[:, 0], mom[:, 1])
    normal = mom / pabs[:, None]

    seg_vec = np.diff(pos, axis=0)
    seg = np.hypot(seg_vec[:, 0], seg_vec[:, 1])
    arclen = centred_arclength(seg)

    chord = np.empty_like(pos)
    chord[1:-1] = pos[2:] - pos[:-2]
    chord[0] = seg_vec[0]
    chord[-1] = seg_vec[-1]
    along = np.einsum("ij,ij->i", chord, normal)
    tangent = chord - along[:, None] * normal
    tnorm = np.hypot(tangent[:, 0], tangent[:, 1])
    fallback = _rotate(normal)
    ok = tnorm > 1e-14 * np.maximum(np.hypot(chord[:, 0], chord[:, 1]), 1e-300)
    tangent = np.where(ok[:, None], tangent / np.where(ok, tnorm, 1.0)[:, None], fallback)
    # re-project once more so tangent . normal is zero to rounding
    tangent -= np.einsum("ij,ij->i", tangent, normal)[:, None] * normal
    tangent /= np.hypot(tangent[:, 0], tangent[:, 1])[:, None]

    sigma = np.empty(len(pos))
    sigma[1:-1] = 0.5 * (arclen[2:] - arclen[:-2])
    sigma[0] = seg[0]
    sigma[-1] = seg[-1]
    b.sigma = sigma

    # ordering: separation of neighbours across the local mean propagation direction
    mean_dir = normal[:-1] + normal[1:]
    mean_dir /= np.hypot(mean_dir[:, 0], mean_dir[:, 1])[:, None]
    across = np.einsum("ij,ij->i", seg_vec, _rotate(mean_dir))
    smin = b.params.sigma_min
    crossed = across <= smin
    if strict:
        bad = np.flatnonzero(crossed)
        thin = np.flatnonzero(sigma <= smin)
        if bad.size or thin.size:
            where = bad if bad.size else thin
            i = int(where[0])
            raise CausticError(
                f"caustic at t={b.t:.6g}: rays {i} and {i + 1} crossed or merged "
                f"near (x, z) = ({pos[i, 0]:.6g}, {pos[i, 1]:.6g})", where)
    return WavefrontGeometry(tangent, normal, arclen, crossed)


def centred_arclength(seg: np.ndarray) -> np.ndarray:
    """Cumulative length measured outward from the middle ray.

    Accumulating from the centre in both directions makes the result exactly
    antisymmetric for a mirror-symmetric front, so symmetric launches stay
    symmetric to the last bit.
    """
    n = len(seg) + 1
    c = n // 2
    s = np.empty(n)
    s[c] = 0.0
    s[c + 1:] = np.cumsum(seg[c:])
    s[:c] = -np.cumsum(seg[:c][::-1])[::-1]
    return s


def transport_amplitude(b: Bundle) -> Bundle:
    """R = sqrt(F / (|p| sigma)) from the conserved flux, per ray and per tube.

    Tubes are the strips between neighbouring rays; their width is the
    segment length and their momentum the mean of the two bounding rays.
    """
    pabs = b.p_abs
    with np.errstate(divide="ignore"):
        b.amplitude = np.sqrt(b.flux / (pabs * b.sigma))
        seg = np.hypot(np.diff(b.x), np.diff(b.z))
        b.tube_amplitude = np.sqrt(b.tube_flux / (0.5 * (pabs[1:] + pabs[:-1]) * seg))
    return b


def _log_amplitude(r: np.ndarray, floor: float) -> np.ndarray:
    return np.log(np.maximum(r, floor))


def laplacian_over_amplitude(log_r: np.ndarray, s: np.ndarray) -> np.ndarray:
    """Three-point estimate of R''/R on the grid ``s`` from L = ln R.

    Neighbour amplitudes enter only as ratios exp(L[i+-1] - L[i]), so the
    result stays finite where R itself underflows. End points are left as NaN.
    """
    out = np.full(len(s), np.nan)
    hm = s[1:-1] - s[:-2]
    hp = s[2:] - s[1:-1]
    rm = np.exp(log_r[:-2] - log_r[1:-1])
    rp = np.exp(log_r[2:] - log_r[1:-1])
    # the two neighbour terms are summed first so mirrored inputs give mirrored output bitwise
    out[1:-1] = 2.0 * ((rm / (hm * (hm + hp)) + rp / (hp * (hm + hp))) - 1.0 / (hm * hp))
    return out


def first_derivative(f: np.ndarray, s: np.ndarray) -> np.ndarray:
    """Three-point df/ds on a nonuniform grid, one-sided three-point at the ends."""
    d = np.empty(len(s))
    hm = s[1:-1] - s[:-2]
    hp = s[2:] - s[1:-1]
    d[1:-1] = ((hm / (hp * (hm + hp)) * f[2:] - hp / (hm * (hm + hp)) * f[:-2])
               + (hp - hm) / (hm * hp) * f[1:-1])
    d[0] = _end_slope(f[0], f[1], f[2], s[1] - s[0], s[2] - s[1])
    d[-1] = -_end_slope(f[-1], f[-2], f[-3], s[-1] - s[-2], s[-2] - s[-3])
    return d


def _end_slope(f0, f1, f2, h1, h2):
    """Derivative at the first of three points spaced h1, h2 (quadratic fit)."""
    return (-(2 * h1 + h2) / (h1 * (h1 + h2)) * f0
            + (h1 + h2) / (h1 * h2) * f1
            - h1 / (h2 * (h1 + h2)) * f2)


def _extrapolate(f1, f2, f3, h1, h2, h3):
    """Quadratic through points at distances h1, h1+h2, h1+h2+h3, evaluated at 0."""
    a, b, c = h1, h1 + h2, h1 + h2 + h3
    return (f1 * b * c / ((b - a) * (c - a))
            + f2 * a * c / ((a - b) * (c - b))
            + f3 * a * b / ((a - c) * (b - c)))


def wave_potential_prefactor(mode: Mode, energy: float) -> float:
    """Multiplier of R''/R: -hbar^2/2m, or -hbar^2 c^2 / 2E for Klein-Gordon rays."""
    if mode is Mode.CLASSICAL:
        return 0.0
    if mode is Mode.RELATIVISTIC:
        return -0.5 / energy
    return -0.5


def wave_potential(b: Bundle, g: WavefrontGeometry | None = None) -> Bundle:
    """Write W on every tube and every ray from the current amplitudes.

    W is evaluated at tube centres from the tube amplitudes; ray values are
    interpolated linearly between the two adjacent tube centres, and the two
    end tubes and end rays are extrapolated quadratically.
    """
    n = len(b)
    if b.params.mode is Mode.CLASSICAL:
        b.w_values = np.zeros(n)
        b.w_tube = np.zeros(n - 1)
        return b
    if g is None:
        g = wavefront_geometry(b)
    c = tube_centres(g.arclen)
    lap = laplacian_over_amplitude(_log_amplitude(b.tube_amplitude, b.params.r_floor), c)
    wt = wave_potential_prefactor(b.params.mode, b.params.energy) * lap
    wt[0] = _extrapolate(wt[1], wt[2], wt[3], c[1] - c[0], c[2] - c[1], c[3] - c[2])
    wt[-1] = _extrapolate(wt[-2], wt[-3], wt[-4], c[-1] - c[-2], c[-2] - c[-3], c[-3] - c[-4])
    b.w_tube = wt

    s = g.arclen
    w = np.empty(n)
    w[1:-1] = (wt[:-1] * (c[1:] - s[1:-1]) + wt[1:] * (s[1:-1] - c[:-1])) / (c[1:] - c[:-1])
    w[0] = _extrapolate(wt[0], wt[1], wt[2], c[0] - s[0], c[1] - c[0], c[2] - c[1])
    w[-1] = _extrapolate(wt[-1], wt[-2], wt[-3], s[-1] - c[-1], c[-1] - c[-2], c[-2] - c[-3])
    b.w_values = w
    return b


def tube_centres(arclen: np.ndarray) -> np.ndarray:
    return 0.5 * (arclen[1:] + arclen[:-1])


def wave_potential_gradient(b: Bundle, g: WavefrontGeometry) -> Bundle:
    """grad W = (dW/ds) * tangent; the component along p is discarded by construction.

    Interior rays difference the two adjacent tube values, which keeps every
    ray displacement pattern (including the alternating one) visible to the
    force. End rays use a one-sided quadratic fit through three tube values.
    """
    if b.params.mode is Mode.CLASSICAL:
        b.w_grad = np.zeros((len(b), 2))
        return b
    wt = b.w_tube
    s = g.arclen
    c = tube_centres(s)
    dwds = np.empty(len(b))
    dwds[1:-1] = np.diff(wt) / np.diff(c)
    dwds[0] = _slope_at(s[0], c[:3], wt[:3])
    dwds[-1] = _slope_at(s[-1], c[-3:][::-1], wt[-3:][::-1])
    b.w_grad = dwds[:, None] * g.tangent
    return b


def _slope_at(x, xs, fs):
    """Derivative at ``x`` of the quadratic through three points."""
    x0, x1, x2 = xs
    f0, f1, f2 = fs
    return (f0 * ((x - x1) + (x - x2)) / ((x0 - x1) * (x0 - x2))
            + f1 * ((x - x0) + (x - x2)) / ((x1 - x0) * (x1 - x2))
            + f2 * ((x - x0) + (x - x1)) / ((x2 - x0) * (x2 - x1)))


def refresh(b: Bundle, strict: bool | None = None) -> WavefrontGeometry:
    """Recompute sigma, R, W and grad W for the bundle's current positions and momenta."""
    g = wavefront_geometry(b, strict)
    transport_amplitude(b)
    wave_potential(b, g)
    wave_potential_gradient(b, g)
    return g
