"""External potential fields V(x, z) with analytic gradients.

Every spec is an immutable value; :func:`evaluate` is vectorised over numpy
arrays and returns ``(V, dV/dx, dV/dz)``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Union

import numpy as np

from .errors import InvalidConfig, OutOfGrid


@dataclass(frozen=True)
class Free:
    kind = "free"


@dataclass(frozen=True)
class HarmonicChannel:
    """V = strength * x**2 / 2, independent of z."""

    strength: float = 1.0
    kind = "harmonic_channel"


@dataclass(frozen=True)
class LensSlab:
    """Transverse-harmonic slab switched on between ``z_on`` and ``z_off``.

    The longitudinal window rises and falls with a C1 smoothstep over 5% of
    the slab length at each end. Beyond ``|x| > aperture`` the transverse
    profile continues linearly with matching slope, which keeps V and its
    gradient continuous.
    """

    strength: float
    z_on: float
    z_off: float
    aperture: float = math.inf
    kind = "lens_slab"

    @property
    def ramp(self) -> float:
        return 0.05 * (self.z_off - self.z_on)


@dataclass(frozen=True)
class TabulatedGrid:
    """Bilinear interpolation of V sampled on a rectangular (x, z) grid."""

    x: tuple
    z: tuple
    values: tuple  # values[i][j] = V(x[i], z[j])
    source: str = field(default="", compare=False)
    kind = "tabulated_grid"

    @classmethod
    def from_csv(cls, path) -> "TabulatedGrid":
        """Load ``x,z,V`` triples (header row optional) covering a full grid."""
        rows = []
        with open(path, newline="") as fh:
            for rec in csv.reader(fh):
                if not rec or rec[0].lstrip().startswith("#"):
                    continue
                try:
                    rows.append(tuple(float(v) for v in rec[:3]))
                except ValueError:
                    if rows:
                        raise
                    continue  # header
        if not rows:
            raise InvalidConfig("potential.path", f"no data rows in {path}")
        arr = np.asarray(rows)
        xs = np.unique(arr[:, 0])
        zs = np.unique(arr[:, 1])
        if len(arr) != len(xs) * len(zs):
            raise InvalidConfig("potential.path", "CSV does not cover a full rectangular grid")
        grid = np.full((len(xs), len(zs)), np.nan)
        ix = np.searchsorted(xs, arr[:, 0])
        iz = np.searchsorted(zs, arr[:, 1])
        grid[ix, iz] = arr[:, 2]
        if np.isnan(grid).any():
            raise InvalidConfig("potential.path", "duplicate or missing grid nodes")
        return cls(tuple(xs), tuple(zs), tuple(map(tuple, grid)), source=str(path))


PotentialSpec = Union[Free, HarmonicChannel, LensSlab, TabulatedGrid]


def validate_potential(spec: PotentialSpec) -> PotentialSpec:
    if isinstance(spec, Free):
        return spec
    if isinstance(spec, HarmonicChannel):
        if not math.isfinite(spec.strength):
            raise InvalidConfig("potential.strength", "must be finite")
        return spec
    if isinstance(spec, LensSlab):
        if not math.isfinite(spec.strength):
            raise InvalidConfig("potential.strength", "must be finite")
        if not (math.isfinite(spec.z_on) and math.isfinite(spec.z_off)):
            raise InvalidConfig("potential.z_on", "slab bounds must be finite")
        if not spec.z_on < spec.z_off:
            raise InvalidConfig("potential.z_on", "must be < z_off")
        if not spec.aperture > 0:
            raise InvalidConfig("potential.aperture", "must be > 0")
        return spec
    if isinstance(spec, TabulatedGrid):
        x = np.asarray(spec.x, dtype=float)
        z = np.asarray(spec.z, dtype=float)
        v = np.asarray(spec.values, dtype=float)
        if len(x) < 2 or len(z) < 2:
            raise InvalidConfig("potential.x", "grid needs at least 2 nodes per axis")
        if np.any(np.diff(x) <= 0) or np.any(np.diff(z) <= 0):
            raise InvalidConfig("potential.x", "grid axes must be strictly increasing")
        if v.shape != (len(x), len(z)):
            raise InvalidConfig("potential.values", f"shape {v.shape} != {(len(x), len(z))}")
        if not np.all(np.isfinite(v)):
            raise InvalidConfig("potential.values", "all V values must be finite")
        return spec
    raise InvalidConfig("potential.kind", f"unknown potential {spec!r}")


def _window(spec: LensSlab, z):
    """Smoothstep window B(z) and dB/dz."""
    d = spec.ramp
    u_in = np.clip((z - spec.z_on) / d, 0.0, 1.0)
    u_out = np.clip((spec.z_off - z) / d, 0.0, 1.0)
    s_in = u_in * u_in * (3.0 - 2.0 * u_in)
    s_out = u_out * u_out * (3.0 - 2.0 * u_out)
    ds_in = 6.0 * u_in * (1.0 - u_in) / d
    ds_out = -6.0 * u_out * (1.0 - u_out) / d
    # the two ramps never overlap, so the window is their product
    return s_in * s_out, ds_in * s_out + s_in * ds_out


def _transverse(spec: LensSlab, x):
    a = spec.aperture
    ax = np.abs(x)
    inside = ax <= a
    with np.errstate(invalid="ignore"):
        q = np.where(inside, 0.5 * x * x, a * ax - 0.5 * a * a)
        dq = np.where(inside, x, a * np.sign(x))
    return q, dq


def evaluate(spec: PotentialSpec, x, z):
    """Return ``(V, dV/dx, dV/dz)`` at the given point(s)."""
    x = np.asarray(x, dtype=float)
    z = np.asarray(z, dtype=float)
    shape = np.broadcast(x, z).shape
    if isinstance(spec, Free):
        zero = np.zeros(shape)
        return zero, zero.copy(), zero.copy()
    if isinstance(spec, HarmonicChannel):
        x = np.broadcast_to(x, shape)
        return 0.5 * spec.strength * x * x, spec.strength * x, np.zeros(shape)
    if isinstance(spec, LensSlab):
        b, db = _window(spec, z)
        q, dq = _transverse(spec, x)
        k = spec.strength
        return (np.broadcast_to(k * q * b, shape).copy(),
                np.broadcast_to(k * dq * b, shape).copy(),
                np.broadcast_to(k * q * db, shape).copy())
    if isinstance(spec, TabulatedGrid):
        return _bilinear(spec, np.broadcast_to(x, shape), np.broadcast_to(z, shape))
    raise InvalidConfig("potential.kind", f"unknown potential {spec!r}")


def _bilinear(spec: TabulatedGrid, x, z):
    xs = np.asarray(spec.x)
    zs = np.asarray(spec.z)
    v = np.asarray(spec.values)
    if np.any(x < xs[0]) or np.any(x > xs[-1]) or np.any(z < zs[0]) or np.any(z > zs[-1]):
        raise OutOfGrid("query outside tabulated grid hull "
                        f"x in [{xs[0]}, {xs[-1]}], z in [{zs[0]}, {zs[-1]}]")
    i = np.clip(np.searchsorted(xs, x, side="right") - 1, 0, len(xs) - 2)
    j = np.clip(np.searchsorted(zs, z, side="right") - 1, 0, len(zs) - 2)
    hx = xs[i + 1] - xs[i]
    hz = zs[j + 1] - zs[j]
    u = (x - xs[i]) / hx
    w = (z - zs[j]) / hz
    v00, v10 = v[i, j], v[i + 1, j]
    v01, v11 = v[i, j + 1], v[i + 1, j + 1]
    val = (v00 * (1 - u) * (1 - w) + v10 * u * (1 - w)
           + v01 * (1 - u) * w + v11 * u * w)
    dvdx = ((v10 - v00) * (1 - w) + (v11 - v01) * w) / hx
    dvdz = ((v01 - v00) * (1 - u) + (v11 - v10) * u) / hz
    return val, dvdx, dvdz


def lens_strength_for_focus(energy: float, focal_length: float, slab_length: float) -> float:
    """Thin-lens estimate of the slab strength giving focal length ``focal_length``.

    A parallel ray inside the slab obeys x'' = -strength * x / (2 E) in z, so a
    slab of length L bends it like a thin lens of focal length 2E / (strength L).
    """
    return 2.0 * energy / (focal_length * slab_length)


def potential_from_dict(d: dict, base_dir: Path | None = None) -> PotentialSpec:
    d = dict(d)
    kind = d.pop("kind", None)
    allowed = {
        "free": set(),
        "harmonic_channel": {"strength"},
        "lens_slab": {"strength", "z_on", "z_off", "aperture"},
        "tabulated_grid": {"path"},
    }
    if kind not in allowed:
        raise InvalidConfig("potential.kind", f"unknown kind {kind!r}; expected one of {sorted(allowed)}")
    extra = set(d) - allowed[kind]
    if extra:
        raise InvalidConfig(f"potential.{sorted(extra)[0]}", "unknown key")
    try:
        if kind == "free":
            spec = Free()
        elif kind == "harmonic_channel":
            spec = HarmonicChannel(float(d.get("strength", 1.0)))
        elif kind == "lens_slab":
            for key in ("strength", "z_on", "z_off"):
                if key not in d:
                    raise InvalidConfig(f"potential.{key}", "required")
            ap = d.get("aperture")
            spec = LensSlab(float(d["strength"]), float(d["z_on"]), float(d["z_off"]),
                            math.inf if ap is None else float(ap))
        else:
            if "path" not in d:
                raise InvalidConfig("potential.path", "required")
            path = Path(d["path"])
            if base_dir is not None and not path.is_absolute():
                path = base_dir / path
            spec = TabulatedGrid.from_csv(path)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, InvalidConfig):
            raise
        raise InvalidConfig("potential", str(exc)) from None
    return validate_potential(spec)


def potential_to_dict(spec: PotentialSpec) -> dict:
    if isinstance(spec, Free):
        return {"kind": "free"}
    if isinstance(spec, HarmonicChannel):
        return {"kind": "harmonic_channel", "strength": spec.strength}
    if isinstance(spec, LensSlab):
        out = {"kind": "lens_slab", "strength": spec.strength,
               "z_on": spec.z_on, "z_off": spec.z_off}
        if math.isfinite(spec.aperture):
            out["aperture"] = spec.aperture
        return out
    return {"kind": "tabulated_grid", "path": spec.source}
