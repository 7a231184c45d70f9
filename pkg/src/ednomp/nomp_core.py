"""Newtonized OMP over the OFDM delay-Doppler dictionary, plus an OMP baseline.

Parameters are handled internally in grid cells: delay ``x = tau * N * scs``
(one-sided, wrapping at ``N``) and Doppler ``y = v * M * T0`` (centred,
wrapping at ``+-M/2``). One Newton tolerance then covers both axes.

Every accepted update re-solves the path amplitude by least squares and is
kept only if the residual energy does not grow, so the recorded energy trace
is non-increasing by construction.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import fft as sp_fft

from .scene_sim import ChannelObservation, WaveformConfig


class MaxPathsExceeded(UserWarning):
    """Detection stopped at ``max_paths`` before the residual fell below threshold."""


@dataclass(frozen=True)
class DetectorConfig:
    """Detector settings.

    ``stop_threshold`` is compared against the largest ``|a^H h_r|^2`` on the
    coarse grid; :func:`detection_threshold` builds a CFAR-style value.
    After each new detection, up to ``interim_rounds`` cyclic sweeps run
    until one lowers the residual energy by less than ``interim_tolerance``
    times ``||h_s||^2``; ``global_rounds`` sweeps run once detection ends,
    stopping early once a sweep gains no more than ``global_tolerance`` times
    ``||h_s||^2`` (the remaining rounds are recorded at the final energy).
    """

    stop_threshold: float
    oversampling_factor: int = 4
    max_paths: int = 8
    newton_tolerance: float = 1e-6
    max_newton_iterations: int = 20
    global_rounds: int = 10
    interim_rounds: int = 10
    interim_tolerance: float = 1e-13
    global_tolerance: float = -1.0  # negative disables early stopping
    max_step_cells: float = 0.5

    def __post_init__(self):
        if not self.stop_threshold > 0:
            raise ValueError("stop_threshold must be > 0")
        if self.oversampling_factor < 1:
            raise ValueError("oversampling_factor must be >= 1")
        if self.global_rounds < 1 or self.max_paths < 1 or self.max_newton_iterations < 1:
            raise ValueError("global_rounds, max_paths and max_newton_iterations must be >= 1")
        if self.interim_rounds < 0:
            raise ValueError("interim_rounds must be >= 0")


@dataclass(frozen=True)
class PathEstimate:
    delay_s: float
    doppler_hz: float
    gain: complex
    objective_value: float

    def to_dict(self) -> dict:
        return {
            "delay_s": self.delay_s,
            "doppler_hz": self.doppler_hz,
            "gain": [self.gain.real, self.gain.imag],
            "objective_value": self.objective_value,
        }


@dataclass
class EstimationResult:
    paths: list[PathEstimate]
    residual_energy_trace: list[float]
    n_coarse_detections: int
    max_paths_exceeded: bool = False
    round_energies: list[float] = field(default_factory=list)
    last_step_norm: float = 0.0
    residual: np.ndarray | None = field(default=None, repr=False)

    @property
    def initial_energy(self) -> float:
        return self.residual_energy_trace[0]

    @property
    def final_energy(self) -> float:
        return self.residual_energy_trace[-1]

    @property
    def explained_energy(self) -> float:
        """Joint concentrated objective: ``||h_s||^2 - ||h_r||^2``."""
        return self.initial_energy - self.final_energy

    def to_dict(self) -> dict:
        return {
            "paths": [p.to_dict() for p in self.paths],
            "residual_energy_trace": list(self.residual_energy_trace),
            "round_energies": list(self.round_energies),
            "n_coarse_detections": self.n_coarse_detections,
            "max_paths_exceeded": self.max_paths_exceeded,
        }


# ----------------------------------------------------------------------------
# Dictionary helpers (cell units)


class _Dictionary:
    def __init__(self, wf: WaveformConfig):
        self.wf = wf
        self.N = wf.n_subcarriers
        self.M = wf.n_symbols
        self.mask = wf.active_mask
        self.full = wf.mask is None
        self.n = wf.n_active
        self.kk = 2j * np.pi * np.arange(self.N) / self.N
        self.mm = 2j * np.pi * np.arange(self.M) / self.M

    def vectors(self, x, y):
        u = np.exp(-self.kk * x)
        w = np.exp(self.mm * y)
        return u, w

    def atom(self, x, y) -> np.ndarray:
        u, w = self.vectors(x, y)
        a = np.outer(u, w)
        if not self.full:
            a = a * self.mask
        return a

    def inner(self, H, x, y) -> complex:
        u, w = self.vectors(x, y)
        return complex(np.conj(u) @ H @ np.conj(w))

    def derivatives(self, H, x, y):
        """``z = a^H h`` with its first and second parameter derivatives."""
        u, w = self.vectors(x, y)
        du = -self.kk * u
        dw = self.mm * w
        U = np.conj(np.stack([u, du, -self.kk * du]))
        W = np.conj(np.stack([w, dw, self.mm * dw], axis=1))
        Z = U @ H @ W
        return Z

    def objective(self, H, x, y):
        """``S``, gradient and Hessian of ``|a^H h|^2 / ||a||^2`` in cells."""
        Z = self.derivatives(H, x, y)
        z = Z[0, 0]
        zi = np.array([Z[1, 0], Z[0, 1]])
        zij = np.array([[Z[2, 0], Z[1, 1]], [Z[1, 1], Z[0, 2]]])
        n = self.n
        S = abs(z) ** 2 / n
        g = 2.0 * np.real(np.conj(z) * zi) / n
        Hs = 2.0 * np.real(np.conj(zi)[:, None] * zi[None, :] + np.conj(z) * zij) / n
        return S, g, Hs, z

    def to_physical(self, x, y):
        tau = (x % self.N) / (self.N * self.wf.scs_hz)
        yc = (y + self.M / 2) % self.M - self.M / 2
        v = yc / (self.M * self.wf.symbol_duration_s)
        return tau, v

    def to_cells(self, tau, v):
        return tau * self.N * self.wf.scs_hz, v * self.M * self.wf.symbol_duration_s


def _as_grid(observation, wf: WaveformConfig) -> tuple[np.ndarray, float]:
    if isinstance(observation, ChannelObservation):
        return observation.to_grid(wf), observation.delay_offset_s
    values = np.asarray(observation, dtype=complex)
    if values.shape == (wf.n_subcarriers, wf.n_symbols):
        return np.where(wf.active_mask, values, 0), 0.0
    if values.shape != (wf.n_active,):
        raise ValueError(f"observation has shape {values.shape}, expected ({wf.n_active},)")
    grid = np.zeros((wf.n_subcarriers, wf.n_symbols), dtype=complex)
    grid[wf.active_mask] = values
    return grid, 0.0


def _energy(H) -> float:
    return float(np.vdot(H, H).real)


# ----------------------------------------------------------------------------
# Public operations


def correlation_spectrum(residual, wf: WaveformConfig, cfg: DetectorConfig) -> np.ndarray:
    """Delay-Doppler correlation on the ``gamma``-oversampled grid.

    Returns a ``(gamma N, gamma M)`` array with ``C[p, q] = a^H h_r`` for
    ``tau_p = p / (gamma N scs)`` and ``v_q = (q - gamma M // 2) / (gamma M T0)``.
    """
    H, _ = _as_grid(residual, wf)
    g = cfg.oversampling_factor
    gn, gm = g * wf.n_subcarriers, g * wf.n_symbols
    padded = np.zeros((gn, gm), dtype=complex)
    padded[: wf.n_subcarriers, : wf.n_symbols] = H
    C = sp_fft.fft(sp_fft.ifft(padded, axis=0, overwrite_x=True) * gn, axis=1, overwrite_x=True)
    return np.roll(C, gm // 2, axis=1)


def _coarse(H, d: _Dictionary, cfg: DetectorConfig):
    C = correlation_spectrum(H, d.wf, cfg)
    power = np.abs(C) ** 2
    flat = int(np.argmax(power))  # first maximum: lowest p, then lowest q
    p, q = divmod(flat, power.shape[1])
    g = cfg.oversampling_factor
    x = p / g
    y = (q - (g * d.M) // 2) / g
    return x, y, complex(C[p, q]) / d.n, float(power[p, q])


def coarse_detect(residual, wf: WaveformConfig, cfg: DetectorConfig):
    """Strongest grid atom: ``(tau, v, beta, peak_power)``.

    ``tau`` is window-relative (add the observation's delay offset for an
    absolute delay). ``peak_power`` is ``max |a^H h_r|^2``, the quantity the
    stop threshold is compared against.
    """
    H, _ = _as_grid(residual, wf)
    d = _Dictionary(wf)
    x, y, beta, peak = _coarse(H, d, cfg)
    tau, v = d.to_physical(x, y)
    return tau, v, beta, peak


def _newton(H, d: _Dictionary, x, y, cfg: DetectorConfig):
    """Safeguarded Newton ascent on S from (x, y); returns x, y, z, n_accepted, last_step."""
    eps = cfg.newton_tolerance
    S, g, Hs, z = d.objective(H, x, y)
    accepted = 0
    last = 0.0
    for _ in range(cfg.max_newton_iterations):
        eig = np.linalg.eigvalsh(Hs)
        if eig[-1] < 0:
            step = -np.linalg.solve(Hs, g)
        else:
            # not concave here: scaled gradient ascent, then backtracking
            curv = float(np.max(np.abs(eig)))
            step = g / curv if curv > 0 else g
        norm = math.hypot(step[0], step[1])
        if not math.isfinite(norm) or norm == 0.0:
            break
        if norm > cfg.max_step_cells:
            step = step * (cfg.max_step_cells / norm)
            norm = cfg.max_step_cells
        t = 1.0
        improved = False
        while t * norm >= eps * 1e-3:
            xn, yn = x + t * step[0], y + t * step[1]
            Sn, gn, Hn, zn = d.objective(H, xn, yn)
            if Sn > S:
                improved = True
                break
            t *= 0.5
        if not improved:
            break
        x, y, S, g, Hs, z = xn, yn, Sn, gn, Hn, zn
        accepted += 1
        last = t * norm
        if last < eps:
            break
    return x, y, z, accepted, last


def newton_refine_single(theta0, observation_for_path, wf: WaveformConfig, cfg: DetectorConfig):
    """Refine one path's ``(tau, v)`` against an observation containing it.

    Args:
        theta0: starting ``(tau_s, v_hz)``, window-relative delay.
        observation_for_path: samples over the active set (or a ChannelObservation).

    Returns:
        ``((tau, v), beta, n_iters)`` where ``n_iters`` counts accepted steps.
    """
    H, _ = _as_grid(observation_for_path, wf)
    d = _Dictionary(wf)
    x0, y0 = d.to_cells(*theta0)
    x, y, z, n_iter, _ = _newton(H, d, x0, y0, cfg)
    tau, v = d.to_physical(x, y)
    return (tau, v), z / d.n, n_iter


def concentrated_objective(theta, observation, wf: WaveformConfig) -> float:
    """``S(theta) = |a^H h|^2 / ||a||^2`` at physical ``(tau, v)``."""
    H, _ = _as_grid(observation, wf)
    d = _Dictionary(wf)
    return float(abs(d.inner(H, *d.to_cells(*theta))) ** 2 / d.n)


def objective_gradient(theta, observation, wf: WaveformConfig) -> np.ndarray:
    """Analytic ``dS/dtau, dS/dv`` in physical units (per second, per Hz).

    Written as ``2 Re{h^H a_dot beta_hat}`` with ``beta_hat = a^H h / ||a||^2``.
    """
    H, _ = _as_grid(observation, wf)
    d = _Dictionary(wf)
    x, y = d.to_cells(*theta)
    _, g, _, _ = d.objective(H, x, y)
    return np.array([g[0] * d.N * wf.scs_hz, g[1] * d.M * wf.symbol_duration_s])


class _Path:
    __slots__ = ("x", "y", "beta")

    def __init__(self, x, y, beta):
        self.x, self.y, self.beta = x, y, beta


def _sweep(H, E, paths, d, cfg, trace):
    """One cyclic re-add / refine / subtract pass. Returns (H, E, last_step)."""
    last = 0.0
    for p in paths:
        Hp = H + p.beta * d.atom(p.x, p.y)
        x, y, z, _, step = _newton(Hp, d, p.x, p.y, cfg)
        beta = z / d.n
        Hn = Hp - beta * d.atom(x, y)
        En = _energy(Hn)
        if En <= E:
            H, E = Hn, En
            p.x, p.y, p.beta = x, y, beta
            trace.append(E)
            last = step
    return H, E, last


def _finalize(H, paths, d: _Dictionary, offset: float) -> list[PathEstimate]:
    out = []
    for p in paths:
        tau, v = d.to_physical(p.x, p.y)
        z = d.inner(H, p.x, p.y) + p.beta * d.n
        out.append(PathEstimate(tau + offset, v, complex(p.beta), abs(z) ** 2 / d.n))
    out.sort(key=lambda e: e.delay_s)
    return out


def _to_internal(paths, d: _Dictionary, offset: float) -> list[_Path]:
    out = []
    for p in paths:
        x, y = d.to_cells(p.delay_s - offset, p.doppler_hz)
        out.append(_Path(x, y, complex(p.gain)))
    return out


def global_refine(paths, residual, wf: WaveformConfig, cfg: DetectorConfig, delay_offset_s: float = 0.0):
    """``cfg.global_rounds`` cyclic refinement sweeps over all paths.

    Args:
        paths: current PathEstimates (absolute delays = window delay + offset).
        residual: ``h_s`` minus all current path contributions.

    Returns:
        ``(paths, residual_values, trace)``; ``trace[0]`` is the input energy.
    """
    H, _ = _as_grid(residual, wf)
    d = _Dictionary(wf)
    internal = _to_internal(paths, d, delay_offset_s)
    E = _energy(H)
    trace = [E]
    for _ in range(cfg.global_rounds):
        H, E, _ = _sweep(H, E, internal, d, cfg, trace)
    return _finalize(H, internal, d, delay_offset_s), H[wf.active_mask], trace


def detect_all(observation, wf: WaveformConfig, cfg: DetectorConfig, warn: bool = True) -> EstimationResult:
    """Greedy detection with Newton refinement, then cyclic global refinement.

    Each iteration picks the strongest coarse-grid atom of the residual, refines
    it off-grid, subtracts it, and runs ``cfg.interim_rounds`` sweeps over all
    paths found so far. Detection stops once the coarse peak falls below
    ``cfg.stop_threshold``; hitting ``cfg.max_paths`` first sets
    ``max_paths_exceeded`` (and warns) rather than failing.
    """
    H, offset = _as_grid(observation, wf)
    d = _Dictionary(wf)
    E = _energy(H)
    trace = [E]
    paths: list[_Path] = []
    exceeded = False
    n_coarse = 0
    while E > 0:
        x, y, beta, peak = _coarse(H, d, cfg)
        if peak < cfg.stop_threshold:
            break
        if len(paths) >= cfg.max_paths:
            exceeded = True
            break
        n_coarse += 1
        xr, yr, z, _, _ = _newton(H, d, x, y, cfg)
        Hn = H - (z / d.n) * d.atom(xr, yr)
        En = _energy(Hn)
        if En > E:  # refinement cannot lose to the grid point; guard round-off anyway
            xr, yr, z = x, y, beta * d.n
            Hn = H - beta * d.atom(x, y)
            En = _energy(Hn)
        H, E = Hn, En
        paths.append(_Path(xr, yr, z / d.n))
        trace.append(E)
        for _ in range(cfg.interim_rounds):
            before = E
            H, E, _ = _sweep(H, E, paths, d, cfg, trace)
            if before - E <= cfg.interim_tolerance * trace[0]:
                break
    if exceeded and warn:
        warnings.warn(f"stopped at max_paths={cfg.max_paths}", MaxPathsExceeded, stacklevel=2)
    rounds = [E]
    last = 0.0
    if paths:
        for _ in range(cfg.global_rounds):
            before = E
            H, E, last = _sweep(H, E, paths, d, cfg, trace)
            rounds.append(E)
            if before - E <= cfg.global_tolerance * trace[0]:
                break
        rounds += [E] * (cfg.global_rounds + 1 - len(rounds))
    return EstimationResult(
        paths=_finalize(H, paths, d, offset),
        residual_energy_trace=trace,
        n_coarse_detections=n_coarse,
        max_paths_exceeded=exceeded,
        round_energies=rounds,
        last_step_norm=last,
        residual=H[wf.active_mask],
    )


def omp_baseline(observation, wf: WaveformConfig, cfg: DetectorConfig, warn: bool = True) -> EstimationResult:
    """Grid-only OMP: same detector and stop rule, joint least-squares amplitudes."""
    H, offset = _as_grid(observation, wf)
    d = _Dictionary(wf)
    mask = wf.active_mask
    h = H[mask]
    E = _energy(H)
    trace = [E]
    cells: list[tuple[float, float]] = []
    columns: list[np.ndarray] = []
    coef = np.zeros(0, dtype=complex)
    exceeded = False
    while E > 0:
        x, y, _, peak = _coarse(H, d, cfg)
        if peak < cfg.stop_threshold:
            break
        if len(cells) >= cfg.max_paths:
            exceeded = True
            break
        cells.append((x, y))
        columns.append(d.atom(x, y)[mask])
        A = np.stack(columns, axis=1)
        coef, *_ = np.linalg.lstsq(A, h, rcond=None)
        r = h - A @ coef
        H = np.zeros_like(H)
        H[mask] = r
        E = min(_energy(H), E)
        trace.append(E)
    if exceeded and warn:
        warnings.warn(f"stopped at max_paths={cfg.max_paths}", MaxPathsExceeded, stacklevel=2)
    paths = [_Path(x, y, complex(b)) for (x, y), b in zip(cells, coef)]
    return EstimationResult(
        paths=_finalize(H, paths, d, offset),
        residual_energy_trace=trace,
        n_coarse_detections=len(cells),
        max_paths_exceeded=exceeded,
        round_energies=[E],
        residual=H[mask],
    )


# ----------------------------------------------------------------------------
# Stop threshold

# Effective number of independent cells in the max over a gamma-oversampled
# grid, per Nyquist cell; calibrated by Monte-Carlo on complex white noise
# (see tests/test_nomp_core.py::test_cfar_false_alarm_rate).
_OVERSAMPLED_CELL_FACTOR = 12.0


def cfar_scale(wf: WaveformConfig, p_fa: float = 0.01, oversampling: int = 4) -> float:
    """Multiplier ``kappa`` such that ``max |C|^2 > kappa sigma^2 |Omega|`` has rate ``p_fa`` on noise."""
    n_eff = wf.n_subcarriers * wf.n_symbols * (_OVERSAMPLED_CELL_FACTOR if oversampling > 1 else 1.0)
    return -math.log(-math.expm1(math.log1p(-p_fa) / n_eff))


def estimate_noise_power(observation, wf: WaveformConfig, oversampling: int = 4) -> float:
    """Noise variance from the median coarse-spectrum power (exponential median = ln 2 * mean)."""
    H, _ = _as_grid(observation, wf)
    C = correlation_spectrum(H, wf, DetectorConfig(1.0, oversampling_factor=oversampling))
    return float(np.median(np.abs(C) ** 2) / math.log(2) / wf.n_active)


def detection_threshold(
    observation,
    wf: WaveformConfig,
    noise_power: float | None = None,
    p_fa: float = 0.01,
    oversampling: int = 4,
    floor: float = 1e-10,
) -> float:
    """CFAR stop threshold ``kappa * sigma^2 * |Omega|``.

    ``noise_power=None`` estimates sigma^2 from the spectrum median. A relative
    floor of ``floor * ||h||^2 * |Omega|`` keeps noise-free runs finite.
    """
    H, _ = _as_grid(observation, wf)
    if noise_power is None:
        noise_power = estimate_noise_power(H, wf, oversampling)
    kappa = cfar_scale(wf, p_fa, oversampling)
    delta = kappa * noise_power * wf.n_active
    return max(delta, floor * _energy(H) * wf.n_active, np.finfo(float).tiny)
