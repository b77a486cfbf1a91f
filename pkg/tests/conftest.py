import numpy as np
import pytest

from dbs_traj.core import Bundle, BundleParams, Mode

#: filled by test_acceptance; printed at the end of the session
ACCEPTANCE_LINES: list[tuple[int, str]] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


def make_bundle(x, z=None, px=None, pz=None, amplitude=None, mode=Mode.NON_RELATIVISTIC,
                p0=100.0, energy=None):
    """Hand-built bundle with flux chosen so the given amplitudes are reproduced."""
    x = np.asarray(x, dtype=float)
    n = len(x)
    z = np.zeros(n) if z is None else np.asarray(z, dtype=float)
    px = np.zeros(n) if px is None else np.asarray(px, dtype=float)
    pz = np.full(n, p0) if pz is None else np.asarray(pz, dtype=float)
    amp = np.ones(n) if amplitude is None else np.asarray(amplitude, dtype=float)
    if energy is None:
        energy = 0.5 * p0 * p0 if mode is not Mode.RELATIVISTIC else p0
    h = float(np.median(np.diff(x)))
    params = BundleParams(mode=mode, energy=energy, sigma_min=1e-6 * h, spacing=h)
    b = Bundle(0.0, x, z, px, pz, amp.copy(), np.ones(n), x.copy(), params)
    return b


@pytest.fixture
def uniform_grid():
    return np.linspace(-2.0, 2.0, 41)
