import numpy as np
import pytest

from ednomp.scene_sim import WaveformConfig, steering_vector


def make_wf(n=16, m=16, scs=120e3):
    return WaveformConfig(n, m, scs, 26e9)


def cells_to_physical(wf, x, y):
    return x / (wf.n_subcarriers * wf.scs_hz), y / (wf.n_symbols * wf.symbol_duration_s)


def physical_to_cells(wf, tau, v):
    return tau * wf.n_subcarriers * wf.scs_hz, v * wf.n_symbols * wf.symbol_duration_s


def synth(wf, cells, gains):
    """Sum of atoms at (x, y) cell positions."""
    h = np.zeros(wf.n_active, dtype=complex)
    for (x, y), b in zip(cells, gains):
        h += b * steering_vector(*cells_to_physical(wf, x, y), wf)
    return h


def random_instance(rng, wf, k, min_sep=2.0, power_range=(0.5, 1.5)):
    """``k`` off-grid paths pairwise at least ``min_sep`` cells apart (wrap-aware)."""
    n, m = wf.n_subcarriers, wf.n_symbols
    cells = []
    while len(cells) < k:
        x = rng.uniform(0, n)
        y = rng.uniform(-m / 2, m / 2)
        ok = True
        for cx, cy in cells:
            dx = min(abs(x - cx), n - abs(x - cx))
            dy = min(abs(y - cy), m - abs(y - cy))
            if np.hypot(dx, dy) < min_sep:
                ok = False
        if ok:
            cells.append((x, y))
    mags = rng.uniform(*power_range, size=k)
    gains = mags * np.exp(2j * np.pi * rng.uniform(size=k))
    return cells, gains


def cell_error(wf, est, cell):
    """Wrap-aware (delay, Doppler) distance in cells between a PathEstimate and a true cell."""
    x, y = physical_to_cells(wf, est.delay_s, est.doppler_hz)
    n, m = wf.n_subcarriers, wf.n_symbols
    dx = (x - cell[0] + n / 2) % n - n / 2
    dy = (y - cell[1] + m / 2) % m - m / 2
    return abs(dx), abs(dy)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
