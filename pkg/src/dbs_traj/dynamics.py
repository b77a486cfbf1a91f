"""Time integration of the coupled ray bundle.

All rays are advanced together with the classic four-stage Runge-Kutta
scheme. The wave potential couples neighbouring rays through the amplitude
field, so sigma, R, W and grad W are rebuilt from the trial state at every
internal stage.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import potentials, wavefield
from .core import (RECORD_COLUMNS, Bundle, Mode, Scenario, TrajectoryRecord, launch_bundle,
                   scenario_to_dict, validate_scenario)
from .errors import CausticError, ImaginaryRoot, OutOfGrid, SingularGuidance, StepTooLarge
from .potentials import PotentialSpec

log = logging.getLogger(__name__)

#: relative distance to E - V = 0 at which the relativistic guidance law is declared singular
SINGULAR_GUIDANCE_TOL = 1e-9
#: fraction of the smallest tube width a ray may move across the front per step
STEP_CROSS_FRACTION = 0.1
#: largest omega * dt allowed for the fastest wave-potential oscillation (RK4 is stable to 2.83)
DISPERSIVE_LIMIT = 2.0
#: a step moving any ray further than this fraction of its tube width is rejected
STEP_REJECT_FRACTION = 0.5
MAX_STEP_RETRIES = 60
#: halvings tried before a caustic found at a trial stage is accepted as real
MAX_CAUSTIC_RETRIES = 6


@dataclass
class StepReport:
    t: float
    dt_used: float
    max_dH: float
    caustic_events: int


@dataclass
class Monitor:
    """Running conservation and caustic bookkeeping for one integration."""

    h0: np.ndarray
    max_dH: float = 0.0
    caustic_events: int = 0
    crossed: np.ndarray = None
    caustic_log: list = field(default_factory=list)


def derivatives_nonrel(b: Bundle, V: PotentialSpec):
    """dr/dt = p / m and dp/dt = -grad(V + W), per ray, as ``(n, 2)`` arrays."""
    _, dvdx, dvdz = potentials.evaluate(V, b.x, b.z)
    drdt = b.momenta.copy()
    dpdt = -np.column_stack((dvdx, dvdz)) - b.w_grad
    return drdt, dpdt


def derivatives_rel(b: Bundle, V: PotentialSpec, energy: float | None = None):
    """Klein-Gordon rays: dr/dt = c^2 p / (E - V), dp/dt = -grad V - E/(E - V) grad W."""
    e = b.params.energy if energy is None else energy
    v, dvdx, dvdz = potentials.evaluate(V, b.x, b.z)
    gap = e - v
    bad = np.abs(gap) < SINGULAR_GUIDANCE_TOL * abs(e)
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        raise SingularGuidance(f"E - V(r) vanishes at ray {i}, (x, z) = ({b.x[i]:.6g}, {b.z[i]:.6g})")
    drdt = b.momenta / gap[:, None]
    dpdt = -np.column_stack((dvdx, dvdz)) - (e / gap)[:, None] * b.w_grad
    return drdt, dpdt


def derivatives(b: Bundle, V: PotentialSpec):
    if b.params.mode is Mode.RELATIVISTIC:
        return derivatives_rel(b, V)
    return derivatives_nonrel(b, V)


def hamiltonian(ray, W: float, V: float, mode: Mode, E: float, rest_mass_energy: float = 0.0) -> float:
    """H = p^2/2m + W + V, or V + sqrt((pc)^2 + (m0 c^2)^2 + 2 E W) for Klein-Gordon rays."""
    p2 = ray.px ** 2 + ray.pz ** 2
    if mode is Mode.CLASSICAL:
        return 0.5 * p2 + V
    if mode is Mode.NON_RELATIVISTIC:
        return 0.5 * p2 + W + V
    rad = p2 + rest_mass_energy ** 2 + 2.0 * E * W
    if rad < 0:
        raise ImaginaryRoot(f"relativistic radicand {rad:.6g} < 0")
    return V + math.sqrt(rad)


def hamiltonian_array(b: Bundle, V: PotentialSpec) -> np.ndarray:
    """Vectorised :func:`hamiltonian` over every ray of a bundle."""
    v, _, _ = potentials.evaluate(V, b.x, b.z)
    p2 = b.px ** 2 + b.pz ** 2
    mode = b.params.mode
    if mode is Mode.CLASSICAL:
        return 0.5 * p2 + v
    if mode is Mode.NON_RELATIVISTIC:
        return 0.5 * p2 + b.w_values + v
    rad = p2 + b.params.rest_mass ** 2 + 2.0 * b.params.energy * b.w_values
    if np.any(rad < 0):
        raise ImaginaryRoot(f"relativistic radicand {rad.min():.6g} < 0")
    return v + np.sqrt(rad)


def new_monitor(b: Bundle, V: PotentialSpec) -> Monitor:
    return Monitor(h0=hamiltonian_array(b, V), crossed=np.zeros(len(b) - 1, dtype=bool))


def _stage(b: Bundle, V: PotentialSpec, t, y, strict):
    nb = b.with_state(t, y[0], y[1], y[2], y[3])
    try:
        wavefield.refresh(nb, strict)
    except CausticError as exc:
        # rays crossing at an intermediate stage mean the step overshot
        raise StepTooLarge(f"trial stage at t={t:.6g} is singular: {exc}") from exc
    drdt, dpdt = derivatives(nb, V)
    return nb, np.stack((drdt[:, 0], drdt[:, 1], dpdt[:, 0], dpdt[:, 1]))


def step(b: Bundle, V: PotentialSpec, dt: float, monitor: Monitor | None = None):
    """Advance the bundle by one RK4 step of size ``dt``.

    ``b`` must carry current sigma, R, W and grad W (as produced by
    :func:`launch_bundle` or a previous step). Returns the new bundle and a
    :class:`StepReport`; ``b`` itself is not modified.
    """
    if monitor is None:
        monitor = new_monitor(b, V)
    strict = b.params.mode.has_wave_potential
    y0 = np.stack((b.x, b.z, b.px, b.pz))
    drdt, dpdt = derivatives(b, V)
    k1 = np.stack((drdt[:, 0], drdt[:, 1], dpdt[:, 0], dpdt[:, 1]))
    _, k2 = _stage(b, V, b.t + 0.5 * dt, y0 + 0.5 * dt * k1, strict)
    _, k3 = _stage(b, V, b.t + 0.5 * dt, y0 + 0.5 * dt * k2, strict)
    _, k4 = _stage(b, V, b.t + dt, y0 + dt * k3, strict)
    y1 = y0 + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)

    g0 = wavefield.wavefront_geometry(b, strict=False)
    moved = np.abs(np.einsum("ij,ij->i", (y1[:2] - y0[:2]).T, g0.tangent))
    limit = STEP_REJECT_FRACTION * _step_scale(b)
    if np.any(moved > limit):
        i = int(np.argmax(moved / limit))
        raise StepTooLarge(f"ray {i} moved {moved[i]:.3g} across the front, "
                           f"more than {STEP_REJECT_FRACTION} x sigma = {limit[i]:.3g}")

    nb = b.with_state(b.t + dt, y1[0], y1[1], y1[2], y1[3])
    g = wavefield.refresh(nb, strict)
    if not strict:
        fresh = g.crossed & ~monitor.crossed
        if fresh.any():
            monitor.caustic_events += int(fresh.sum())
            monitor.caustic_log.append((nb.t, float(np.mean(nb.z)), int(fresh.sum())))
        monitor.crossed = g.crossed
    h = hamiltonian_array(nb, V)
    dh = float(np.max(np.abs(h - monitor.h0) / np.abs(monitor.h0)))
    monitor.max_dH = max(monitor.max_dH, dh)
    return nb, StepReport(nb.t, dt, monitor.max_dH, monitor.caustic_events)


def _step_scale(b: Bundle) -> np.ndarray:
    """Per-ray length that bounds a step's motion across the front.

    In wave modes this is the local tube width. Classical rays do not interact,
    and near a focus their spacing legitimately goes to zero, so the launch
    spacing is used instead.
    """
    if b.params.mode is Mode.CLASSICAL:
        return np.full(len(b), b.params.spacing)
    return np.maximum(b.sigma, b.params.sigma_min)


def suggest_dt(b: Bundle, V: PotentialSpec, dt_max: float, safety: float) -> float:
    """Largest step keeping every ray's motion across the front below a tenth of min(sigma).

    The predicted transverse displacement |v| dt + |a| dt**2 / 2 uses both the
    across-front velocity and acceleration, so a bundle launched at rest
    transversely but under strong wave-potential forces still gets a safe
    first step.
    """
    drdt, dpdt = derivatives(b, V)
    g = wavefield.wavefront_geometry(b, strict=False)
    v = np.abs(np.einsum("ij,ij->i", drdt, g.tangent))
    speed = np.hypot(drdt[:, 0], drdt[:, 1])
    pabs = b.p_abs
    # across-front acceleration of a ray is its transverse force scaled by speed / |p|
    a = np.abs(np.einsum("ij,ij->i", dpdt, g.tangent)) * speed / pabs
    smin = float(np.min(_step_scale(b)))
    d = safety * STEP_CROSS_FRACTION * smin
    with np.errstate(divide="ignore", invalid="ignore"):
        dt = np.where(a > 0, 2.0 * d / (v + np.sqrt(v * v + 2.0 * a * d)),
                      np.where(v > 0, d / v, np.inf))
    return float(min(dt_max, dt.min(), safety * dispersive_dt(b, V)))


def dispersive_dt(b: Bundle, V: PotentialSpec) -> float:
    """Stability bound from the wave-potential coupling.

    Linearized about a smooth front, a transverse ripple of wavenumber q in the
    ray positions oscillates at omega = K q**2, with K = 1/2 for the
    non-relativistic system and K = 1 / (2 (E - V)) for the relativistic one.
    The shortest ripple a front of spacing sigma carries has q = 2 / sigma, so
    the step is capped at DISPERSIVE_LIMIT / omega_max.
    """
    mode = b.params.mode
    if mode is Mode.CLASSICAL:
        return math.inf
    if mode is Mode.RELATIVISTIC:
        v, _, _ = potentials.evaluate(V, b.x, b.z)
        k = 0.5 / float(np.min(np.abs(b.params.energy - v)))
    else:
        k = 0.5
    smin = max(float(b.sigma.min()), b.params.sigma_min)
    return DISPERSIVE_LIMIT * smin * smin / (4.0 * k)


def _snapshot(b: Bundle, V: PotentialSpec) -> np.ndarray:
    h = hamiltonian_array(b, V)
    return np.column_stack((b.x, b.z, b.px, b.pz, b.amplitude, b.w_values, h))


def _attempt(b: Bundle, V: PotentialSpec, dt: float, mon: Monitor):
    """Take one step, halving dt while it is rejected.

    A caustic in the accepted state may also be an artefact of an oversized
    step, so it is retried a few times before being reported.
    """
    caustics = 0
    for _ in range(MAX_STEP_RETRIES):
        try:
            return step(b, V, dt, mon)
        except CausticError:
            caustics += 1
            if caustics > MAX_CAUSTIC_RETRIES:
                raise
        except StepTooLarge:
            pass
        dt *= 0.5
    raise StepTooLarge(f"no acceptable step after {MAX_STEP_RETRIES} halvings")


def run(s: Scenario, max_steps: int = 2_000_000, on_step=None) -> TrajectoryRecord:
    """Integrate a scenario from launch until the centre ray reaches ``z_max``.

    Caustics (in wave modes), singular guidance and leaving a tabulated
    potential grid end the run early. The partial record is returned with
    the triggering exception in ``error``.
    """
    s = validate_scenario(s)
    V = s.potential
    b = launch_bundle(s)
    mon = new_monitor(b, V)
    unit = 1.0 / s.launch_speed
    dt_max = s.dt_control.max_dt * unit
    dt = s.dt_control.initial_dt * unit
    centre = len(b) // 2
    stride = s.output.stride

    rec = TrajectoryRecord([b.t], [_snapshot(b, V)], b.label.copy(), scenario_to_dict(s),
                           flux=b.flux.copy())
    report = StepReport(0.0, 0.0, 0.0, 0)
    n_steps = 0
    last_sampled = 0
    while b.z[centre] < s.z_max:
        if n_steps >= max_steps:
            rec.error = RuntimeError(f"step budget of {max_steps} exhausted at t={b.t:.6g}")
            break
        try:
            if n_steps == 0:
                dt = min(dt, suggest_dt(b, V, dt_max, s.dt_control.safety_factor))
            nb, report = _attempt(b, V, dt, mon)
        except (CausticError, SingularGuidance, ImaginaryRoot, StepTooLarge, OutOfGrid) as exc:
            log.warning("run stopped at t=%g: %s", b.t, exc)
            rec.error = exc
            break
        b = nb
        n_steps += 1
        if on_step is not None:
            on_step(b, report)
        if n_steps % stride == 0:
            rec.times.append(b.t)
            rec.states.append(_snapshot(b, V))
            last_sampled = n_steps
        dt = suggest_dt(b, V, dt_max, s.dt_control.safety_factor)
    if last_sampled != n_steps:
        rec.times.append(b.t)
        rec.states.append(_snapshot(b, V))
    report.caustic_events = mon.caustic_events
    rec.report = report
    rec.caustic_log = mon.caustic_log
    rec.n_steps = n_steps
    return rec


__all__ = [
    "StepReport", "Monitor", "derivatives_nonrel", "derivatives_rel", "hamiltonian",
    "hamiltonian_array", "step", "run", "suggest_dt", "RECORD_COLUMNS",
]
