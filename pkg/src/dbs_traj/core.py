"""Scenario configuration, bundle state and launch conditions.

Units: hbar = 1 and m = 1 (non-relativistic) or hbar = 1 and c = 1
(relativistic); lengths are measured in launch half-widths w0. The only
physical knob is ``epsilon = lambda0 / w0``, from which k0 = 2 pi / epsilon,
p0 = k0 and (non-relativistic) E = p0**2 / 2.
"""

from __future__ import annotations

import copy
import enum
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Optional

import numpy as np

from . import potentials
from .errors import InvalidConfig
from .potentials import Free, PotentialSpec

#: R below this fraction of the launch peak is treated as this value in logs
AMPLITUDE_FLOOR = 1e-12
#: tube widths below this fraction of the launch median are caustics
SIGMA_MIN_FRACTION = 1e-6


class Mode(str, enum.Enum):
    NON_RELATIVISTIC = "nonrelativistic"
    RELATIVISTIC = "relativistic"
    CLASSICAL = "classical"  # non-relativistic with W forced to zero

    @property
    def has_wave_potential(self) -> bool:
        return self is not Mode.CLASSICAL


class Shape(str, enum.Enum):
    GAUSSIAN = "gaussian"
    BELL = "bell"  # super-Gaussian exp(-(x/w0)**4)
    UNIFORM = "uniform"
    TABULATED = "tabulated"


@dataclass(frozen=True)
class LaunchProfile:
    shape: Shape = Shape.GAUSSIAN
    half_width: float = 1.0
    span: float = 4.0
    table: Optional[tuple] = None  # ((x, R0), ...) for Shape.TABULATED

    def amplitude(self, x) -> np.ndarray:
        """Unnormalised R0 at transverse positions ``x`` (units of w0)."""
        x = np.asarray(x, dtype=float)
        if self.shape is Shape.GAUSSIAN:
            return np.exp(-x * x)
        if self.shape is Shape.BELL:
            return np.exp(-(x * x) ** 2)
        if self.shape is Shape.UNIFORM:
            return np.ones_like(x)
        tab = np.asarray(self.table, dtype=float)
        return np.interp(x, tab[:, 0], tab[:, 1], left=0.0, right=0.0)


@dataclass(frozen=True)
class DtControl:
    """Step-size controls, in units of the launch transit time w0 / v0."""

    initial_dt: float = 1.0
    safety_factor: float = 0.9
    max_dt: float = 100.0


@dataclass(frozen=True)
class OutputControl:
    stride: int = 1
    directory: str = "out"
    plot: bool = False


@dataclass(frozen=True)
class Scenario:
    mode: Mode = Mode.NON_RELATIVISTIC
    epsilon: float = 1e-4
    launch: LaunchProfile = field(default_factory=LaunchProfile)
    potential: PotentialSpec = field(default_factory=Free)
    n_rays: int = 201
    z_max: float = 1.0
    dt_control: DtControl = field(default_factory=DtControl)
    rest_mass_energy: float = 0.0  # m0 c^2 in units of p0 c
    output: OutputControl = field(default_factory=OutputControl)

    @property
    def k0(self) -> float:
        return 2.0 * math.pi / self.epsilon

    @property
    def p0(self) -> float:
        return self.k0

    @property
    def rayleigh_length(self) -> float:
        return math.pi / self.epsilon

    @property
    def rest_mass(self) -> float:
        """m0 c^2 in natural units (relativistic mode only)."""
        return self.rest_mass_energy * self.p0

    @property
    def energy(self) -> float:
        """E of the launch: p0^2/2, or sqrt(p0^2 + m0^2) in relativistic mode."""
        if self.mode is Mode.RELATIVISTIC:
            return math.hypot(self.p0, self.rest_mass)
        return 0.5 * self.p0 ** 2

    @property
    def launch_speed(self) -> float:
        if self.mode is Mode.RELATIVISTIC:
            return self.p0 / self.energy
        return self.p0

    def replace(self, **changes) -> "Scenario":
        from dataclasses import replace
        return replace(self, **changes)


def validate_scenario(s: Scenario) -> Scenario:
    """Return ``s`` unchanged if every invariant holds, else raise InvalidConfig."""
    if not isinstance(s.mode, Mode):
        raise InvalidConfig("mode", f"unknown mode {s.mode!r}")
    if not (isinstance(s.epsilon, (int, float)) and math.isfinite(s.epsilon) and s.epsilon > 0):
        raise InvalidConfig("epsilon", "must be > 0")
    _validate_launch(s.launch)
    potentials.validate_potential(s.potential)
    if not isinstance(s.n_rays, int) or isinstance(s.n_rays, bool) or s.n_rays < 9 or s.n_rays % 2 == 0:
        raise InvalidConfig("n_rays", "must be odd and ≥ 9")
    if not (math.isfinite(s.z_max) and s.z_max > 0):
        raise InvalidConfig("z_max", "must be > 0")
    dtc = s.dt_control
    for name in ("initial_dt", "safety_factor", "max_dt"):
        v = getattr(dtc, name)
        if not (math.isfinite(v) and v > 0):
            raise InvalidConfig(f"dt_control.{name}", "must be > 0")
    if s.mode is Mode.RELATIVISTIC and not (math.isfinite(s.rest_mass_energy) and s.rest_mass_energy >= 0):
        raise InvalidConfig("rest_mass_energy", "must be ≥ 0 in relativistic mode")
    if not isinstance(s.output.stride, int) or s.output.stride < 1:
        raise InvalidConfig("output.stride", "must be a positive integer")
    return s


def _validate_launch(lp: LaunchProfile) -> None:
    if not isinstance(lp.shape, Shape):
        raise InvalidConfig("launch.shape", f"unknown shape {lp.shape!r}")
    if lp.half_width != 1.0:
        raise InvalidConfig("launch.half_width", "fixed at 1.0 (w0 is the length unit)")
    if not (math.isfinite(lp.span) and lp.span >= 2.0):
        raise InvalidConfig("launch.span", "must be ≥ 2")
    if lp.shape is Shape.TABULATED:
        if lp.table is None:
            raise InvalidConfig("launch.table", "required for tabulated shape")
        tab = np.asarray(lp.table, dtype=float)
        if tab.ndim != 2 or tab.shape[1] != 2 or len(tab) < 9:
            raise InvalidConfig("launch.table", "needs at least 9 (x, R0) pairs")
        if np.any(np.diff(tab[:, 0]) <= 0):
            raise InvalidConfig("launch.table", "x must be strictly increasing")
        if np.any(tab[:, 1] < 0) or not np.all(np.isfinite(tab)):
            raise InvalidConfig("launch.table", "R0 values must be finite and ≥ 0")


# ---------------------------------------------------------------------------
# JSON scenario files

_TOP_KEYS = {f for f in Scenario.__dataclass_fields__}
_SUB_KEYS = {
    "launch": {"shape", "half_width", "span", "table"},
    "dt_control": {"initial_dt", "safety_factor", "max_dt"},
    "output": {"stride", "directory", "plot"},
}


def scenario_from_dict(d: dict, base_dir: Path | None = None) -> Scenario:
    """Build a Scenario from parsed JSON; unknown keys are rejected."""
    if not isinstance(d, dict):
        raise InvalidConfig("scenario", "top level must be a JSON object")
    extra = set(d) - _TOP_KEYS
    if extra:
        raise InvalidConfig(sorted(extra)[0], "unknown key")
    for name, allowed in _SUB_KEYS.items():
        sub = d.get(name, {})
        if not isinstance(sub, dict):
            raise InvalidConfig(name, "must be an object")
        bad = set(sub) - allowed
        if bad:
            raise InvalidConfig(f"{name}.{sorted(bad)[0]}", "unknown key")

    def conv(fieldname, fn, value):
        try:
            return fn(value)
        except (TypeError, ValueError):
            raise InvalidConfig(fieldname, f"bad value {value!r}") from None

    kw: dict[str, Any] = {}
    if "mode" in d:
        kw["mode"] = conv("mode", Mode, d["mode"])
    if "epsilon" in d:
        kw["epsilon"] = conv("epsilon", float, d["epsilon"])
    if "n_rays" in d:
        if not isinstance(d["n_rays"], int) or isinstance(d["n_rays"], bool):
            raise InvalidConfig("n_rays", "must be odd and ≥ 9")
        kw["n_rays"] = d["n_rays"]
    if "z_max" in d:
        kw["z_max"] = conv("z_max", float, d["z_max"])
    if "rest_mass_energy" in d:
        kw["rest_mass_energy"] = conv("rest_mass_energy", float, d["rest_mass_energy"])
    if "launch" in d:
        ld = dict(d["launch"])
        lkw: dict[str, Any] = {}
        if "shape" in ld:
            lkw["shape"] = conv("launch.shape", Shape, ld["shape"])
        for key in ("half_width", "span"):
            if key in ld:
                lkw[key] = conv(f"launch.{key}", float, ld[key])
        if ld.get("table") is not None:
            lkw["table"] = conv("launch.table",
                                lambda t: tuple((float(a), float(b)) for a, b in t), ld["table"])
        kw["launch"] = LaunchProfile(**lkw)
    if "potential" in d:
        if not isinstance(d["potential"], dict):
            raise InvalidConfig("potential", "must be an object")
        kw["potential"] = potentials.potential_from_dict(d["potential"], base_dir)
    if "dt_control" in d:
        kw["dt_control"] = DtControl(**{k: conv(f"dt_control.{k}", float, v)
                                        for k, v in d["dt_control"].items()})
    if "output" in d:
        od = d["output"]
        okw: dict[str, Any] = {}
        if "stride" in od:
            if not isinstance(od["stride"], int) or isinstance(od["stride"], bool):
                raise InvalidConfig("output.stride", "must be a positive integer")
            okw["stride"] = od["stride"]
        if "directory" in od:
            okw["directory"] = str(od["directory"])
        if "plot" in od:
            okw["plot"] = bool(od["plot"])
        kw["output"] = OutputControl(**okw)
    return validate_scenario(Scenario(**kw))


def load_scenario(path) -> Scenario:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except FileNotFoundError:
        raise InvalidConfig("scenario", f"no such file: {path}") from None
    except json.JSONDecodeError as exc:
        raise InvalidConfig("scenario", f"invalid JSON: {exc}") from None
    return scenario_from_dict(data, base_dir=path.parent)


def scenario_to_dict(s: Scenario) -> dict:
    launch = {"shape": s.launch.shape.value, "half_width": s.launch.half_width, "span": s.launch.span}
    if s.launch.table is not None:
        launch["table"] = [list(p) for p in s.launch.table]
    return {
        "mode": s.mode.value,
        "epsilon": s.epsilon,
        "launch": launch,
        "potential": potentials.potential_to_dict(s.potential),
        "n_rays": s.n_rays,
        "z_max": s.z_max,
        "dt_control": asdict(s.dt_control),
        "rest_mass_energy": s.rest_mass_energy,
        "output": asdict(s.output),
    }


# ---------------------------------------------------------------------------
# Ray bundles


@dataclass(frozen=True)
class Ray:
    x: float
    z: float
    px: float
    pz: float
    amplitude: float
    flux: float
    label: float


@dataclass(frozen=True)
class BundleParams:
    """Physical constants a bundle needs to evaluate its own coupling terms."""

    mode: Mode
    energy: float
    rest_mass: float = 0.0
    r_floor: float = AMPLITUDE_FLOOR
    sigma_min: float = 0.0
    spacing: float = 1.0  # launch ray spacing


@dataclass
class Bundle:
    """One discretised wavefront, stored as parallel arrays ordered by label."""

    t: float
    x: np.ndarray
    z: np.ndarray
    px: np.ndarray
    pz: np.ndarray
    amplitude: np.ndarray
    flux: np.ndarray
    label: np.ndarray
    params: BundleParams
    sigma: np.ndarray = None
    w_values: np.ndarray = None
    w_grad: np.ndarray = None
    # strips between neighbouring rays: conserved flux, amplitude and W
    tube_flux: np.ndarray = None
    tube_amplitude: np.ndarray = None
    w_tube: np.ndarray = None

    def __post_init__(self):
        n = len(self.x)
        if self.tube_flux is None:
            self.tube_flux = np.zeros(n - 1)
        if self.tube_amplitude is None:
            self.tube_amplitude = np.zeros(n - 1)
        if self.w_tube is None:
            self.w_tube = np.zeros(n - 1)
        if self.sigma is None:
            self.sigma = np.zeros(n)
        if self.w_values is None:
            self.w_values = np.zeros(n)
        if self.w_grad is None:
            self.w_grad = np.zeros((n, 2))

    def __len__(self) -> int:
        return len(self.x)

    @property
    def rays(self) -> list[Ray]:
        return [Ray(*vals) for vals in zip(self.x.tolist(), self.z.tolist(), self.px.tolist(),
                                           self.pz.tolist(), self.amplitude.tolist(),
                                           self.flux.tolist(), self.label.tolist())]

    @property
    def positions(self) -> np.ndarray:
        return np.column_stack((self.x, self.z))

    @property
    def momenta(self) -> np.ndarray:
        return np.column_stack((self.px, self.pz))

    @property
    def p_abs(self) -> np.ndarray:
        return np.hypot(self.px, self.pz)

    def copy(self) -> "Bundle":
        return copy.deepcopy(self)

    def with_state(self, t, x, z, px, pz) -> "Bundle":
        """Fresh bundle sharing labels, flux and params but with a new phase-space state."""
        return Bundle(t, x, z, px, pz, np.zeros_like(x), self.flux, self.label, self.params,
                      tube_flux=self.tube_flux)


def launch_bundle(s: Scenario) -> Bundle:
    """Seed ``n_rays`` rays on the x axis, all moving along +z with |p| = p0."""
    from . import wavefield

    n = s.n_rays
    grid = np.linspace(-s.launch.span, s.launch.span, n)
    label = 0.5 * (grid - grid[::-1])  # exactly mirror-symmetric about 0
    r0 = s.launch.amplitude(label)
    peak = float(r0.max())
    if not peak > 0:
        raise InvalidConfig("launch", "launch amplitude is zero everywhere")
    amp = r0 / peak
    h = 2.0 * s.launch.span / (n - 1)
    p0 = s.p0
    params = BundleParams(mode=s.mode, energy=s.energy,
                          rest_mass=s.rest_mass if s.mode is Mode.RELATIVISTIC else 0.0,
                          sigma_min=SIGMA_MIN_FRACTION * h, spacing=h)
    b = Bundle(0.0, label.copy(), np.zeros(n), np.zeros(n), np.full(n, p0), amp,
               np.zeros(n), label, params)
    geom = wavefield.wavefront_geometry(b)
    b.flux = np.maximum(amp, AMPLITUDE_FLOOR) ** 2 * p0 * b.sigma
    mid_amp = s.launch.amplitude(0.5 * (label[1:] + label[:-1])) / peak
    seg = np.diff(label)
    b.tube_flux = np.maximum(mid_amp, AMPLITUDE_FLOOR) ** 2 * p0 * seg
    b.tube_amplitude = mid_amp
    wavefield.wave_potential(b, geom)
    wavefield.wave_potential_gradient(b, geom)
    return b


# ---------------------------------------------------------------------------
# Trajectory records

#: columns of each per-sample state array
RECORD_COLUMNS = ("x", "z", "px", "pz", "R", "W", "H")


@dataclass
class TrajectoryRecord:
    """Time-sampled history of a run.

    ``states[k]`` is an ``(n_rays, 7)`` array with columns :data:`RECORD_COLUMNS`
    taken at ``times[k]``.
    """

    times: list
    states: list
    label: np.ndarray
    scenario_echo: dict
    report: Any = None
    error: Optional[Exception] = None
    flux: Optional[np.ndarray] = None
    n_steps: int = 0
    caustic_log: list = field(default_factory=list)

    @property
    def samples(self):
        return list(zip(self.times, self.states))

    def column(self, name: str) -> np.ndarray:
        """``(n_samples, n_rays)`` array of one recorded quantity."""
        j = RECORD_COLUMNS.index(name)
        return np.array([s[:, j] for s in self.states])

    @property
    def n_rays(self) -> int:
        return len(self.label)
