"""Command-line front end: ``dbs-traj run | validate | compare``.

Exit codes: 0 success, 1 invalid input (scenario, manifest or ray-count
mismatch), 2 runtime error during integration (the partial record is still
written), 3 a validation criterion failed.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
import tempfile
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__, dynamics, oracle, plots, validation
from .core import Mode, TrajectoryRecord, load_scenario
from .errors import InvalidConfig

log = logging.getLogger("dbs_traj")

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME, EXIT_FAILED = 0, 1, 2, 3
TRAJECTORY_COLUMNS = ("t", "ray_index", "label", "x", "z", "px", "pz", "R", "W", "H")
PROFILE_COLUMNS = ("x", "intensity")
HEADER = f"# dbs-traj {__version__}"


def thread_limit() -> int:
    """Worker cap from DBS_TRAJ_THREADS (default 1)."""
    raw = os.environ.get("DBS_TRAJ_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        log.warning("ignoring non-integer DBS_TRAJ_THREADS=%r", raw)
        return 1


def atomic_write(path: Path, text: str) -> None:
    """Write ``text`` to a temporary file beside ``path``, then rename it into place."""
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _num(v) -> str:
    """Shortest decimal that round-trips to the same double."""
    return repr(float(v))


def trajectories_csv(rec: TrajectoryRecord) -> str:
    buf = io.StringIO()
    buf.write(HEADER + "\n")
    buf.write(",".join(TRAJECTORY_COLUMNS) + "\n")
    labels = [_num(v) for v in rec.label]
    for t, state in zip(rec.times, rec.states):
        ts = _num(t)
        for i, row in enumerate(state):
            buf.write(f"{ts},{i},{labels[i]}," + ",".join(_num(v) for v in row) + "\n")
    return buf.getvalue()


def read_trajectories(path: Path) -> dict:
    """Parse a trajectories.csv into arrays shaped (samples, rays)."""
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and not r[0].startswith("#")]
    header, body = rows[0], rows[1:]
    if tuple(header) != TRAJECTORY_COLUMNS:
        raise InvalidConfig(str(path), f"unexpected columns {header}")
    data = np.array([[float(v) for v in r] for r in body]) if body else np.zeros((0, len(header)))
    ray = data[:, 1].astype(int)
    n = int(ray.max()) + 1 if len(ray) else 0
    if n == 0 or len(data) % n:
        raise InvalidConfig(str(path), "ragged trajectory table")
    out = {name: data[:, k].reshape(-1, n) for k, name in enumerate(TRAJECTORY_COLUMNS)}
    out["n_rays"] = n
    return out


def profile_arrays(x, r):
    """Sort by x and turn amplitudes into intensities relative to the largest finite one."""
    x = np.asarray(x, dtype=float)
    i = np.asarray(r, dtype=float) ** 2
    order = np.argsort(x, kind="stable")
    x, i = x[order], i[order]
    finite = np.isfinite(i)
    top = float(i[finite].max()) if finite.any() else 0.0
    if top > 0:
        i = i / top
    return x, i


def profile_csv(x, i) -> str:
    lines = [HEADER, ",".join(PROFILE_COLUMNS)]
    lines += [f"{_num(a)},{_num(b)}" for a, b in zip(x, i)]
    return "\n".join(lines) + "\n"


def read_profile(path: Path):
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and not r[0].startswith("#")]
    data = np.array([[float(v) for v in r] for r in rows[1:]])
    return data[:, 0], data[:, 1]


def render_plots(traj: dict, launch, final):
    """Both SVG documents from arrays exactly as they appear in the CSV files."""
    fan, frame = plots.trajectory_svg(traj["x"], traj["z"], traj["label"][0], traj["R"][0])
    prof, _ = plots.profiles_svg(launch, final)
    return fan, prof, frame


def _record_arrays(rec: TrajectoryRecord) -> dict:
    states = np.asarray(rec.states)
    out = {name: states[:, :, k] for k, name in enumerate(("x", "z", "px", "pz", "R", "W", "H"))}
    out["label"] = np.broadcast_to(rec.label, out["x"].shape)
    return out


def cmd_run(args) -> int:
    try:
        s = load_scenario(args.scenario)
    except InvalidConfig as exc:
        print(f"invalid scenario: {exc}", file=sys.stderr)
        return EXIT_INVALID
    if args.classical:
        s = s.replace(mode=Mode.CLASSICAL)
    elif args.relativistic:
        s = s.replace(mode=Mode.RELATIVISTIC)
    out = Path(args.out if args.out is not None else s.output.directory)
    want_plots = args.plot or s.output.plot

    t0 = time.perf_counter()
    rec = dynamics.run(s)
    elapsed = time.perf_counter() - t0

    files = {}
    files["trajectories.csv"] = trajectories_csv(rec)
    first, last = rec.states[0], rec.states[-1]
    launch = profile_arrays(first[:, 0], first[:, 4])
    final = profile_arrays(last[:, 0], last[:, 4])
    files["profile_launch.csv"] = profile_csv(*launch)
    files["profile_final.csv"] = profile_csv(*final)
    aspect = None
    if want_plots:
        fan, prof, frame = render_plots(_record_arrays(rec), launch, final)
        files["trajectories.svg"] = fan
        files["profiles.svg"] = prof
        aspect = frame.aspect()
    for name, text in files.items():
        atomic_write(out / name, text)

    report = asdict(rec.report) if rec.report is not None else None
    manifest = {
        "tool": "dbs-traj",
        "version": __version__,
        "scenario_path": str(Path(args.scenario).resolve()),
        "output_directory": str(out.resolve()),
        "files": sorted(list(files) + ["manifest.json"]),
        "wall_clock_seconds": elapsed,
        "final_report": report,
        "n_rays": s.n_rays,
        "n_samples": len(rec.times),
        "n_steps": rec.n_steps,
        "error": None if rec.error is None else f"{type(rec.error).__name__}: {rec.error}",
        "caustic_log": [list(ev) for ev in rec.caustic_log],
        "plot_aspect": aspect,
        "scenario": rec.scenario_echo,
    }
    atomic_write(out / "manifest.json", json.dumps(manifest, indent=2) + "\n")

    if rec.error is not None:
        print(f"run stopped early: {manifest['error']}", file=sys.stderr)
        print(f"partial results written to {out}")
        return EXIT_RUNTIME
    print(f"{rec.n_steps} steps, max dH/H {rec.report.max_dH:.3g}, "
          f"caustic events {rec.report.caustic_events}; wrote {len(files) + 1} files to {out}")
    return EXIT_OK


def cmd_validate(args) -> int:
    checks = validation.CHECKS[args.name]
    with ThreadPoolExecutor(max_workers=thread_limit()) as pool:
        results = list(pool.map(lambda fn: fn(), checks))
    width = max(len(r.title) for r in results)
    print(f"{'#':>2}  {'criterion':<{width}}  {'status':<6}  {'measured':>12}  required")
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        print(f"{r.key:>2}  {r.title:<{width}}  {status:<6}  {r.measured:>12.6g}  {r.required}")
        if r.detail:
            print(f"{'':>2}  {'':<{width}}  {'':<6}  {'':>12}  {r.detail}")
    failed = [r for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} passed")
    return EXIT_FAILED if failed else EXIT_OK


def _load_run(directory: Path):
    mpath = directory / "manifest.json"
    if not mpath.is_file():
        raise InvalidConfig(str(directory), "no manifest.json")
    manifest = json.loads(mpath.read_text())
    traj = read_trajectories(directory / "trajectories.csv")
    return manifest, traj


def width_profile(traj: dict):
    """Centre-ray z and 1/e^2 half-width per sample, rays weighted by launch R^2."""
    weights = traj["R"][0] ** 2
    widths = np.array([oracle.half_width(row, weights) for row in traj["x"]])
    return traj["z"][:, traj["n_rays"] // 2], widths


def cmd_compare(args) -> int:
    try:
        ma, ta = _load_run(Path(args.run_a))
        mb, tb = _load_run(Path(args.run_b))
    except (InvalidConfig, OSError, ValueError) as exc:
        print(f"cannot compare: {exc}", file=sys.stderr)
        return EXIT_INVALID
    if ta["n_rays"] != tb["n_rays"]:
        print(f"ray counts differ: {ta['n_rays']} vs {tb['n_rays']}", file=sys.stderr)
        return EXIT_INVALID
    za, wa = width_profile(ta)
    zb, wb = width_profile(tb)
    z_hi = min(za.max(), zb.max())
    planes = np.linspace(0.0, z_hi, 11)
    print(f"{'z / w0':>14}  {'width A':>12}  {'width B':>12}  {'A / B':>10}")
    for z in planes:
        a, b = np.interp(z, za, wa), np.interp(z, zb, wb)
        print(f"{z:>14.6g}  {a:>12.6g}  {b:>12.6g}  {a / b if b > 0 else float('inf'):>10.4g}")
    ka, kb = int(np.argmin(wa)), int(np.argmin(wb))
    ratio = wa[ka] / wb[kb] if wb[kb] > 0 else float("inf")
    print(f"min width A {wa[ka]:.6g} at z = {za[ka]:.6g}")
    print(f"min width B {wb[kb]:.6g} at z = {zb[kb]:.6g}")
    print(f"min width ratio A / B = {ratio:.6g}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dbs-traj", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"dbs-traj {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="integrate a scenario file and write results")
    r.add_argument("scenario")
    r.add_argument("--out", help="output directory (default: the scenario's output.directory)")
    r.add_argument("--plot", action="store_true", help="also write SVG plots")
    mode = r.add_mutually_exclusive_group()
    mode.add_argument("--classical", action="store_true", help="drop the wave potential")
    mode.add_argument("--relativistic", action="store_true", help="use the relativistic ray system")
    r.set_defaults(func=cmd_run)

    v = sub.add_parser("validate", help="run the built-in acceptance checks")
    v.add_argument("name", choices=sorted(validation.CHECKS))
    v.set_defaults(func=cmd_validate)

    c = sub.add_parser("compare", help="compare bundle widths of two run directories")
    c.add_argument("run_a")
    c.add_argument("run_b")
    c.set_defaults(func=cmd_compare)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
