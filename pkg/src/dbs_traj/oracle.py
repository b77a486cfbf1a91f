"""Independent reference solutions and intensity-profile analysis.

Nothing here touches the ray machinery: the paraxial waist law and the
closed-form Gaussian beam are analytic, and the angular-spectrum propagator
solves the free-space Helmholtz equation exactly in Fourier space. The
profile helpers (fringe counting, resampling a run onto a z plane, widths)
are shared by the CLI and the test suite.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.signal import find_peaks

from .core import TrajectoryRecord
from .errors import DbsTrajError, GridTooNarrow, PlaneNotReached

#: default far-field oracle grid, 2**14 points over [-32, 32] w0
ORACLE_POINTS = 2 ** 14
ORACLE_HALF_WIDTH = 32.0
#: input field must fall below this fraction of its peak amplitude at the grid edges
EDGE_DECAY = 1e-6
PARSEVAL_RTOL = 1e-10
#: profiles are compared where the oracle intensity exceeds this fraction of its peak
SUPPORT_LEVEL = 1e-3


@dataclass(frozen=True)
class IntensityProfile:
    """Relative intensity R**2 on a line of constant z, peak normalized to 1."""

    x: np.ndarray
    i_values: np.ndarray
    z: float = 0.0

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        i = np.asarray(self.i_values, dtype=float)
        if x.shape != i.shape or x.ndim != 1:
            raise ValueError("x and i_values must be 1-D arrays of equal length")
        if np.any(np.diff(x) <= 0):
            raise ValueError("x must be strictly increasing")
        if np.any(i < 0) or np.any(i > 1.0 + 1e-12):
            raise ValueError("i_values must lie in [0, 1]")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "i_values", i)

    @classmethod
    def from_intensity(cls, x, intensity, z: float = 0.0) -> "IntensityProfile":
        """Build a profile from unnormalized intensities."""
        intensity = np.asarray(intensity, dtype=float)
        peak = float(intensity.max())
        if not peak > 0:
            raise ValueError("intensity is zero everywhere")
        return cls(np.asarray(x, dtype=float), np.clip(intensity / peak, 0.0, 1.0), float(z))

    def __len__(self) -> int:
        return len(self.x)


def rayleigh_length(lambda0: float, w0: float = 1.0) -> float:
    return math.pi * w0 * w0 / lambda0


def gaussian_waist(z, lambda0: float, w0: float = 1.0):
    """Paraxial 1/e amplitude half-width w0 * sqrt(1 + (z / z_R)**2)."""
    if not (w0 > 0 and lambda0 > 0):
        raise ValueError("w0 and lambda0 must be positive")
    u = np.asarray(z, dtype=float) / rayleigh_length(lambda0, w0)
    out = w0 * np.sqrt(1.0 + u * u)
    return float(out) if out.ndim == 0 else out


def gaussian_beam_profile(x, z: float, lambda0: float, w0: float = 1.0) -> IntensityProfile:
    """Closed-form paraxial Gaussian beam intensity exp(-2 x**2 / w(z)**2)."""
    x = np.asarray(x, dtype=float)
    w = gaussian_waist(z, lambda0, w0)
    return IntensityProfile(x, np.exp(-2.0 * (x / w) ** 2), float(z))


def oracle_grid(points: int = ORACLE_POINTS, half_width: float = ORACLE_HALF_WIDTH) -> np.ndarray:
    """Uniform FFT grid on [-half_width, half_width) with x = 0 on a node."""
    dx = 2.0 * half_width / points
    return (np.arange(points) - points // 2) * dx


def angular_spectrum_propagate(x, u0, z: float, lambda0: float) -> IntensityProfile:
    """Propagate a complex field ``u0(x)`` a distance ``z`` through free space.

    Returns the intensity |u|**2 normalized to peak 1; see
    :func:`angular_spectrum_field` for the method.
    """
    x = np.asarray(x, dtype=float)
    u = angular_spectrum_field(x, u0, z, lambda0)
    return IntensityProfile.from_intensity(x, np.abs(u) ** 2, z)


def angular_spectrum_field(x, u0, z: float, lambda0: float) -> np.ndarray:
    """Complex field after free-space propagation by ``z``, on the same grid.

    The transfer function exp(i z (kz - k0)) with kz = sqrt(k0**2 - kx**2) is
    applied to the discrete Fourier transform; the constant phase exp(i k0 z)
    is dropped. Evanescent components are discarded.
    """
    x = np.asarray(x, dtype=float)
    u0 = np.asarray(u0, dtype=complex)
    n = len(x)
    if u0.shape != x.shape or n < 8:
        raise ValueError("x and u0 must be equal-length 1-D arrays with at least 8 points")
    dx = x[1] - x[0]
    if not np.allclose(np.diff(x), dx, rtol=1e-9, atol=0.0):
        raise ValueError("angular-spectrum propagation needs a uniform grid")
    amp = np.abs(u0)
    peak = float(amp.max())
    if not peak > 0:
        raise ValueError("input field is zero everywhere")
    edge = max(amp[0], amp[-1])
    if edge > EDGE_DECAY * peak:
        raise GridTooNarrow(f"edge amplitude {edge / peak:.3g} of peak exceeds {EDGE_DECAY:g}")

    spec = np.fft.fft(u0)
    e_space = float(np.sum(amp * amp))
    e_freq = float(np.sum(np.abs(spec) ** 2)) / n
    if abs(e_freq - e_space) > PARSEVAL_RTOL * e_space:
        raise DbsTrajError(f"Parseval check failed: {e_space!r} vs {e_freq!r}")

    k0 = 2.0 * math.pi / lambda0
    kx = 2.0 * math.pi * np.fft.fftfreq(n, d=dx)
    kx2 = kx * kx
    prop = kx2 <= k0 * k0
    # kz - k0 written as -kx^2 / (k0 + kz) to avoid cancellation when kx << k0
    dk = np.zeros(n)
    dk[prop] = -kx2[prop] / (k0 + np.sqrt(k0 * k0 - kx2[prop]))
    transfer = np.where(prop, np.exp(1j * z * dk), 0.0)
    return np.fft.ifft(spec * transfer)


def fringe_count(p: IntensityProfile, prominence: float = 0.01) -> int:
    """Number of interior maxima standing at least ``prominence`` above their flanks.

    A peak's prominence is its height above the higher of the two flanking
    minima, each flank extending to the next higher peak or to the end of the
    profile. The profile is renormalized to peak 1 first, so the count does not
    depend on the intensity scale.
    """
    i = np.asarray(p.i_values, dtype=float)
    top = float(i.max()) if len(i) else 0.0
    if not top > 0:
        return 0
    peaks, _ = find_peaks(i / top, prominence=prominence)
    return int(len(peaks))


def peak_positions(p: IntensityProfile, prominence: float = 0.01, refine: bool = True) -> np.ndarray:
    """x positions of the maxima counted by :func:`fringe_count`, in increasing order.

    With ``refine`` each position is moved to the vertex of the parabola
    through the peak sample and its two neighbours, which removes most of
    the sampling error on coarse or nonuniform grids.
    """
    i = np.asarray(p.i_values, dtype=float)
    peaks, _ = find_peaks(i / i.max(), prominence=prominence)
    if not refine:
        return p.x[peaks]
    return np.array([_vertex(p.x[k - 1:k + 2], i[k - 1:k + 2]) for k in peaks])


def _vertex(x, y) -> float:
    """Abscissa of the extremum of the parabola through three points."""
    x0, x1, x2 = x
    y0, y1, y2 = y
    d01 = (y1 - y0) / (x1 - x0)
    d12 = (y2 - y1) / (x2 - x1)
    curv = (d12 - d01) / (x2 - x0)
    if curv == 0:
        return float(x1)
    # p(x) = y0 + d01 (x - x0) + curv (x - x0)(x - x1) has its stationary point here
    return float(0.5 * (x0 + x1) - d01 / (2.0 * curv))


def first_side_maximum(p: IntensityProfile, prominence: float = 0.01, side: int = 1,
                       refine: bool = True) -> float:
    """Position of the innermost maximum strictly on one side of the profile's peak.

    ``side`` is +1 for x above the global maximum, -1 for below. Returns NaN if
    there is none.
    """
    xs = peak_positions(p, prominence, refine)
    x_main = p.x[int(np.argmax(p.i_values))]
    cand = xs[(xs - x_main) * side > 0]
    if cand.size == 0:
        return math.nan
    return float(cand[np.argmin(np.abs(cand - x_main))])


def bundle_intensity_at_plane(rec: TrajectoryRecord, z_plane: float) -> IntensityProfile:
    """Resample a run onto the plane z = ``z_plane``.

    For every ray, x and R are interpolated linearly between the two samples
    bracketing its first crossing of the plane.
    """
    X = rec.column("x")
    Z = rec.column("z")
    R = rec.column("R")
    above = Z >= z_plane
    reached = above.any(axis=0)
    if not reached.all():
        j = int(np.flatnonzero(~reached)[0])
        raise PlaneNotReached(f"ray {j} never reaches z = {z_plane:g} (max z {Z[:, j].max():g})")
    k = np.argmax(above, axis=0)
    cols = np.arange(Z.shape[1])
    if np.any((k == 0) & (Z[0] > z_plane)):
        j = int(np.flatnonzero((k == 0) & (Z[0] > z_plane))[0])
        raise PlaneNotReached(f"ray {j} starts beyond z = {z_plane:g}")
    k0 = np.maximum(k - 1, 0)
    za, zb = Z[k0, cols], Z[k, cols]
    span = zb - za
    f = np.where(span > 0, (z_plane - za) / np.where(span > 0, span, 1.0), 1.0)
    x = X[k0, cols] + f * (X[k, cols] - X[k0, cols])
    r = R[k0, cols] + f * (R[k, cols] - R[k0, cols])
    order = np.argsort(x, kind="stable")
    return IntensityProfile.from_intensity(x[order], (r * r)[order], z_plane)


def compare_profiles(bundle: IntensityProfile, oracle: IntensityProfile,
                     support: float = SUPPORT_LEVEL) -> float:
    """Largest |I_bundle - I_oracle| on the oracle support, relative to the oracle peak.

    The bundle profile is resampled onto the oracle grid by linear
    interpolation; oracle points where the intensity is at most ``support``
    times its peak are ignored.
    """
    top = float(oracle.i_values.max())
    mask = oracle.i_values > support * top
    xs = oracle.x[mask]
    if xs.min() < bundle.x[0] or xs.max() > bundle.x[-1]:
        raise ValueError("bundle profile does not cover the oracle support")
    ib = np.interp(xs, bundle.x, bundle.i_values)
    return float(np.max(np.abs(ib - oracle.i_values[mask])) / top)


def half_width(x, weights) -> float:
    """1/e**2 intensity half-width from the weighted second moment: 2 * sqrt(var).

    For a Gaussian intensity exp(-2 x**2 / w**2) this returns w exactly.
    """
    x = np.asarray(x, dtype=float)
    w = np.asarray(weights, dtype=float)
    total = float(w.sum())
    mean = float(np.dot(w, x)) / total
    var = float(np.dot(w, (x - mean) ** 2)) / total
    return 2.0 * math.sqrt(max(var, 0.0))


def width_history(rec: TrajectoryRecord):
    """Bundle half-width at every sample, with each ray weighted by its conserved flux.

    Returns ``(z_centre, widths)`` where ``z_centre`` is the centre ray's z.
    """
    X = rec.column("x")
    Z = rec.column("z")
    w = np.asarray(rec.flux, dtype=float)
    widths = np.array([half_width(row, w) for row in X])
    return Z[:, Z.shape[1] // 2].copy(), widths


def minimum_width(rec: TrajectoryRecord):
    """Smallest flux-weighted half-width over the run and the centre-ray z where it occurs."""
    z, w = width_history(rec)
    k = int(np.argmin(w))
    return float(w[k]), float(z[k])


__all__ = [
    "IntensityProfile", "rayleigh_length", "gaussian_waist", "gaussian_beam_profile",
    "oracle_grid", "angular_spectrum_propagate", "angular_spectrum_field", "fringe_count", "peak_positions",
    "first_side_maximum", "bundle_intensity_at_plane", "compare_profiles", "half_width",
    "width_history", "minimum_width",
]
