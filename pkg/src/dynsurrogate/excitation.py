"""Stochastic excitation generators.

Two families are provided:

* synthetic nonstationary ground motions, built as modulated filtered white
  noise (white noise -> time-varying SDOF filter -> per-step variance
  normalization -> gamma-type amplitude modulation -> high-pass correction);
* stationary Gaussian-approximate processes synthesized by spectral
  representation from a one-sided PSD.

All generators are pure functions of (parameters, seed).
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import numpy as np
from scipy import signal
from scipy.optimize import brentq
from scipy.special import gammainc, gammaincinv, gammaln

from .errors import CalibrationFailureError, InvalidArgumentError
from .rng import stream

G_ACCEL = 9.80665  # m/s^2 per g


@dataclass(frozen=True)
class GroundMotionParams:
    """Parameters of the modulated filtered white-noise ground motion model.

    ``arias_intensity`` is in s*g, durations and times in seconds, filter
    frequencies in rad/s (``omega_prime`` in rad/s^2).
    """

    arias_intensity: float
    d_5_95: float
    t_mid: float
    omega_mid: float
    omega_prime: float
    zeta_f: float
    dt: float = 0.01
    duration: float = 30.0
    hp_corner: float = 0.1  # Hz

    def __post_init__(self):
        if self.arias_intensity <= 0:
            raise InvalidArgumentError("arias_intensity must be > 0")
        if self.d_5_95 <= 0:
            raise InvalidArgumentError("d_5_95 must be > 0")
        if self.duration < self.d_5_95:
            raise InvalidArgumentError("duration must be >= d_5_95")
        if not 0.0 < self.zeta_f < 1.0:
            raise InvalidArgumentError("zeta_f must lie in (0, 1)")
        if self.dt <= 0:
            raise InvalidArgumentError("dt must be > 0")
        if self.hp_corner <= 0:
            raise InvalidArgumentError("hp_corner must be > 0")
        # linear frequency law: positivity on [0, duration] holds iff it holds
        # at both endpoints
        for t in (0.0, self.duration):
            if self.omega_mid + self.omega_prime * (t - self.t_mid) <= 0.0:
                raise InvalidArgumentError(
                    f"filter frequency is nonpositive at t={t:g} s"
                )

    @property
    def n_steps(self) -> int:
        return int(round(self.duration / self.dt)) + 1

    def time_grid(self) -> np.ndarray:
        return np.arange(self.n_steps) * self.dt


@dataclass(frozen=True)
class ExcitationRecord:
    """A sampled forcing series plus the seed that regenerates it."""

    samples: np.ndarray
    dt: float
    seed: int
    kind: str  # "seismic" | "stationary"
    unit: str = "g"

    def __post_init__(self):
        if self.kind not in ("seismic", "stationary"):
            raise InvalidArgumentError(f"unknown excitation kind {self.kind!r}")
        if not np.all(np.isfinite(self.samples)):
            raise InvalidArgumentError("excitation samples must be finite")

    def time_grid(self) -> np.ndarray:
        return np.arange(len(self.samples)) * self.dt


def gen_white_noise(n_steps: int, dt: float, seed: int) -> np.ndarray:
    """Discretized Gaussian white noise: i.i.d. N(0, 1/dt) samples."""
    if n_steps < 1:
        raise InvalidArgumentError("n_steps must be >= 1")
    if dt <= 0:
        raise InvalidArgumentError("dt must be > 0")
    rng = stream(seed, 0)
    return rng.standard_normal(n_steps) / math.sqrt(dt)


@dataclass(frozen=True)
class ModulationFit:
    """Gamma-modulation constants q(t) = a1 * t**(a2-1) * exp(-a3*t)."""

    alpha1: float
    alpha2: float
    alpha3: float


@functools.lru_cache(maxsize=64)
def fit_modulation(params: GroundMotionParams) -> ModulationFit:
    """Solve (a1, a2, a3) so q reproduces the Arias targets.

    q(t)^2 is proportional to a gamma density with shape k = 2*a2 - 1 and
    rate 2*a3, so the cumulative Arias fractions are gamma CDFs.  The shape is
    found by a 1-D root solve matching t_mid/d_5_95, the rate follows from
    the 5%-95% spread, and a1 scales the total to (2/pi)*I_a (acceleration
    held in g, Arias intensity in s*g).
    """

    def mismatch(k):
        t5, t45, t95 = gammaincinv(k, [0.05, 0.45, 0.95])
        return t45 / (t95 - t5) * params.d_5_95 - params.t_mid

    try:
        k = brentq(mismatch, 1.0 + 1e-9, 500.0, xtol=1e-12, maxiter=200)
    except ValueError as exc:
        raise CalibrationFailureError(
            "modulation shape solve failed to bracket a root",
            residuals={"t_mid_low": mismatch(1.0 + 1e-9), "t_mid_high": mismatch(500.0)},
        ) from exc
    rate = (gammaincinv(k, 0.95) - gammaincinv(k, 0.05)) / params.d_5_95
    alpha2 = 0.5 * (k + 1.0)
    alpha3 = 0.5 * rate
    total_q2 = (2.0 / math.pi) * params.arias_intensity
    alpha1 = math.sqrt(total_q2 * math.exp(k * math.log(rate) - gammaln(k)))
    fit = ModulationFit(alpha1=alpha1, alpha2=alpha2, alpha3=alpha3)

    # verify the fit against its own closed-form fractions
    res_mid = gammainc(k, rate * params.t_mid) - 0.45
    spread = (gammaincinv(k, 0.95) - gammaincinv(k, 0.05)) / rate
    res_dur = spread / params.d_5_95 - 1.0
    if abs(res_mid) > 1e-8 or abs(res_dur) > 1e-8:
        raise CalibrationFailureError(
            "modulation fit residuals exceed tolerance",
            residuals={"arias_45": res_mid, "d_5_95": res_dur},
        )
    return fit


def modulating_function(t, params: GroundMotionParams) -> np.ndarray:
    """Evaluate the calibrated modulation amplitude q(t)."""
    fit = fit_modulation(params)
    t = np.asarray(t, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        q = fit.alpha1 * np.power(t, fit.alpha2 - 1.0) * np.exp(-fit.alpha3 * t)
    return np.where(t > 0.0, q, 0.0)


@functools.lru_cache(maxsize=4)
def _filter_kernel(params: GroundMotionParams):
    """Impulse-superposition weights for the time-varying SDOF filter.

    Column i holds the response at all grid times to a unit impulse arriving
    at t_i, using the oscillator frozen at the arrival-time frequency.
    Returns (weights, sigma) where sigma is the per-step standard deviation
    of the filtered unit-intensity white-noise process.
    """
    t = params.time_grid()
    n = len(t)
    omega = params.omega_mid + params.omega_prime * (t - params.t_mid)
    if np.any(omega <= 0.0):
        raise InvalidArgumentError("instantaneous filter frequency must stay positive")
    zeta = params.zeta_f
    omega_d = omega * math.sqrt(1.0 - zeta * zeta)
    lag = t[:, None] - t[None, :]  # lag[j, i] = t_j - t_i
    h = np.where(
        lag > 0.0,
        np.exp(-zeta * omega[None, :] * lag) * np.sin(omega_d[None, :] * lag),
        0.0,
    )
    # white-noise increments noise_i*dt have variance dt
    sigma = np.sqrt(np.sum(h * h, axis=1) * params.dt)
    return h, sigma


def filter_white_noise(noise: np.ndarray, params: GroundMotionParams) -> np.ndarray:
    """Pass white noise through the time-varying filter, unit variance per step."""
    noise = np.asarray(noise, dtype=float)
    if len(noise) != params.n_steps:
        raise InvalidArgumentError(
            f"noise length {len(noise)} does not match the parameter grid "
            f"({params.n_steps} steps)"
        )
    h, sigma = _filter_kernel(params)
    raw = h @ (noise * params.dt)
    out = np.zeros_like(raw)
    ok = sigma > 0.0
    out[ok] = raw[ok] / sigma[ok]
    return out


def high_pass(series: np.ndarray, hp_corner: float, dt: float) -> np.ndarray:
    """Second-order critically damped oscillator high-pass.

    The input drives z'' + 2*w_c*z' + w_c^2*z = a(t); the output is z'', i.e.
    the transfer function s^2 / (s^2 + 2*w_c*s + w_c^2).  Twice-integrating
    the output recovers z(t), which decays to zero after the forcing ends.
    Discretized exactly for piecewise-linear input (first-order hold).
    """
    if hp_corner <= 0:
        raise InvalidArgumentError("hp_corner must be > 0")
    if dt <= 0:
        raise InvalidArgumentError("dt must be > 0")
    wc = 2.0 * math.pi * hp_corner
    a_mat = np.array([[0.0, 1.0], [-wc * wc, -2.0 * wc]])
    b_mat = np.array([[0.0], [1.0]])
    c_mat = np.array([[-wc * wc, -2.0 * wc]])
    d_mat = np.array([[1.0]])
    ad, bd, cd, dd, _ = signal.cont2discrete((a_mat, b_mat, c_mat, d_mat), dt, method="foh")
    num, den = signal.ss2tf(ad, bd, cd, dd)
    return signal.lfilter(num[0], den, np.asarray(series, dtype=float))


def gen_ground_motion(params: GroundMotionParams, seed: int) -> ExcitationRecord:
    """Generate one synthetic ground motion record (acceleration in g)."""
    noise = gen_white_noise(params.n_steps, params.dt, seed)
    filtered = filter_white_noise(noise, params)
    q = modulating_function(params.time_grid(), params)
    accel = high_pass(q * filtered, params.hp_corner, params.dt)
    return ExcitationRecord(samples=accel, dt=params.dt, seed=seed, kind="seismic", unit="g")


def arias_intensity(record: ExcitationRecord) -> float:
    """Arias intensity in s*g of a record stored in g."""
    if record.unit != "g":
        raise InvalidArgumentError("arias_intensity expects a record in g units")
    return 0.5 * math.pi * float(np.trapezoid(record.samples**2, dx=record.dt))


def gen_stationary(psd, duration: float, dt: float, seed: int) -> ExcitationRecord:
    """Spectral-representation synthesis of a stationary Gaussian process.

    ``psd`` is a one-sided PSD: either a callable S(f) or a (freqs, values)
    pair to be linearly interpolated.  The series is a sum of cosines with
    amplitudes sqrt(2*S(f_k)*df) and i.i.d. uniform phases.
    """
    if duration <= 0 or dt <= 0:
        raise InvalidArgumentError("duration and dt must be > 0")
    n = int(round(duration / dt)) + 1
    f_nyq = 0.5 / dt
    n_freq = max(n // 2, 1)
    df = f_nyq / n_freq
    freqs = (np.arange(n_freq) + 0.5) * df
    if callable(psd):
        s_vals = np.asarray(psd(freqs), dtype=float)
    else:
        f_tab, s_tab = psd
        s_vals = np.interp(freqs, np.asarray(f_tab, float), np.asarray(s_tab, float))
    if np.any(s_vals < 0.0) or not np.all(np.isfinite(s_vals)):
        raise InvalidArgumentError("psd must be finite and nonnegative on the grid")
    rng = stream(seed, 1)
    phases = rng.uniform(0.0, 2.0 * math.pi, size=n_freq)
    amps = np.sqrt(2.0 * s_vals * df)
    t = np.arange(n) * dt
    series = np.cos(np.outer(t, 2.0 * math.pi * freqs) + phases[None, :]) @ amps
    return ExcitationRecord(samples=series, dt=dt, seed=seed, kind="stationary", unit="m/s^2")
