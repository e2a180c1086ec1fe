"""Dimensionality reduction and inversion.

POD spatial projection, min-max normalization, periodized Daubechies wavelet
downsampling, and augmentation of input series with the system parameter
channels.  Every stage is exactly invertible (wavelet inversion is exact on
the approximation space; details can be stashed for full round trips).
"""

from __future__ import annotations

import functools
from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError, NumericalFailureError
from .rng import stream


# --- POD ---------------------------------------------------------------------


@dataclass(frozen=True)
class PodBasis:
    modes: np.ndarray  # (n_dof, n_r), orthonormal columns
    singular_values: np.ndarray  # full spectrum, descending
    energy_threshold: float
    n_snapshots: int

    @property
    def n_r(self) -> int:
        return self.modes.shape[1]


def collect_snapshots(responses, n_per_record: int, scheme: str = "uniform", seed: int = 0):
    """Stack snapshot columns from a list of (n_dof, n_t) response fields.

    Entries may be plain arrays or ResponseRecords.  "uniform" picks
    n_per_record evenly spaced interior time points; "random" draws them
    without replacement from a seeded stream.
    """
    if not len(responses):
        raise InvalidArgumentError("responses must be nonempty")
    if n_per_record < 1:
        raise InvalidArgumentError("n_per_record must be >= 1")
    fields = [
        np.asarray(getattr(resp, "displacement", resp), dtype=float) for resp in responses
    ]
    n_dof = fields[0].shape[0]
    cols = []
    rng = stream(seed, 3)
    for u in fields:
        if u.shape[0] != n_dof:
            raise InvalidArgumentError("inconsistent DoF counts across records")
        n_t = u.shape[1]
        if scheme == "uniform":
            idx = np.round(np.linspace(0, n_t - 1, n_per_record + 2)[1:-1]).astype(int)
        elif scheme == "random":
            idx = np.sort(rng.choice(n_t, size=min(n_per_record, n_t), replace=False))
        else:
            raise InvalidArgumentError(f"unknown snapshot scheme {scheme!r}")
        cols.append(u[:, idx])
    return np.hstack(cols)


def compute_pod_basis(snapshots: np.ndarray, energy_threshold: float) -> PodBasis:
    """Truncated left singular vectors capturing the requested energy."""
    snapshots = np.asarray(snapshots, dtype=float)
    if snapshots.size == 0 or not np.all(np.isfinite(snapshots)):
        raise InvalidArgumentError("snapshots must be nonempty and finite")
    if not 0.0 < energy_threshold <= 1.0:
        raise InvalidArgumentError("energy_threshold must lie in (0, 1]")
    try:
        u, s, _ = np.linalg.svd(snapshots, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailureError("SVD failed to converge") from exc
    total = float(np.sum(s * s))
    if total == 0.0:
        raise InvalidArgumentError("snapshot matrix is identically zero")
    cum = np.cumsum(s * s) / total
    n_r = int(np.searchsorted(cum, energy_threshold - 1e-15) + 1)
    return PodBasis(
        modes=u[:, :n_r].copy(),
        singular_values=s.copy(),
        energy_threshold=energy_threshold,
        n_snapshots=snapshots.shape[1],
    )


def project(series: np.ndarray, basis: PodBasis) -> np.ndarray:
    series = np.asarray(series, dtype=float)
    if series.shape[0] != basis.modes.shape[0]:
        raise InvalidArgumentError("row count does not match the basis DoF count")
    return basis.modes.T @ series


def reconstruct(reduced: np.ndarray, basis: PodBasis) -> np.ndarray:
    reduced = np.asarray(reduced, dtype=float)
    if reduced.shape[0] != basis.n_r:
        raise InvalidArgumentError("row count does not match the basis rank")
    return basis.modes @ reduced


def identity_basis(n_dof: int) -> PodBasis:
    """Bypass basis: the reduction path becomes the identity map."""
    return PodBasis(
        modes=np.eye(n_dof),
        singular_values=np.ones(n_dof),
        energy_threshold=1.0,
        n_snapshots=0,
    )


# --- Daubechies wavelets -----------------------------------------------------


@functools.lru_cache(maxsize=8)
def daubechies_filters(order: int = 6):
    """Orthonormal Daubechies scaling/wavelet filter pair of the given order.

    Built by spectral factorization of the Daubechies half-band polynomial:
    the minimum-phase root selection yields the standard filters (length
    2*order).  Satisfies sum(h) = sqrt(2) and the double-shift orthogonality
    identities to machine precision.
    """
    if order < 1:
        raise InvalidArgumentError("order must be >= 1")
    p = order
    from scipy.special import comb

    moments = [comb(p - 1 + k, k, exact=True) for k in range(p)]
    # Q(z) = z^(p-1) * P(y(z)) with z*y = (2z - z^2 - 1)/4, ascending coeffs
    q = np.zeros(2 * p - 1)
    zy = np.array([-1.0, 2.0, -1.0]) / 4.0
    term = np.array([1.0])
    for k in range(p):
        c = moments[k] * term
        q[p - 1 - k : p - 1 - k + len(c)] += c
        term = np.convolve(term, zy)
    roots = np.roots(q[::-1])
    poly = np.array([1.0 + 0j])
    for r in roots[np.abs(roots) < 1.0]:
        poly = np.convolve(poly, np.array([1.0, -r]))
    for _ in range(p):
        poly = np.convolve(poly, np.array([1.0, 1.0]))
    h = poly.real
    h = h / np.linalg.norm(h) * np.sign(h.sum())
    g = h[::-1].copy()
    g[1::2] *= -1.0
    return h, g


@dataclass(frozen=True)
class WaveletSpec:
    """Periodized multi-level DWT configuration."""

    original_length: int
    levels: int
    order: int = 6

    def __post_init__(self):
        if self.original_length < 1:
            raise InvalidArgumentError("original_length must be >= 1")
        if self.levels < 0:
            raise InvalidArgumentError("levels must be >= 0")
        if self.padded_length < 2 * self.order and self.levels > 0:
            raise InvalidArgumentError("series too short for the filter length")

    @property
    def padded_length(self) -> int:
        block = 2**self.levels
        return ((self.original_length + block - 1) // block) * block

    @property
    def n_tau(self) -> int:
        return self.padded_length // 2**self.levels


def _dwt_level(x: np.ndarray, h: np.ndarray, g: np.ndarray):
    """One periodized analysis level along the last axis (length even)."""
    n = x.shape[-1]
    approx = np.zeros(x.shape[:-1] + (n // 2,))
    detail = np.zeros_like(approx)
    for m, (hm, gm) in enumerate(zip(h, g)):
        rolled = np.roll(x, -m, axis=-1)[..., ::2]
        approx += hm * rolled
        detail += gm * rolled
    return approx, detail


def _idwt_level(approx: np.ndarray, detail: np.ndarray, h: np.ndarray, g: np.ndarray):
    """One periodized synthesis level (transpose of the analysis)."""
    n = 2 * approx.shape[-1]
    out = np.zeros(approx.shape[:-1] + (n,))
    up_a = np.zeros_like(out)
    up_d = np.zeros_like(out)
    up_a[..., ::2] = approx
    up_d[..., ::2] = detail
    for m, (hm, gm) in enumerate(zip(h, g)):
        out += hm * np.roll(up_a, m, axis=-1) + gm * np.roll(up_d, m, axis=-1)
    return out


def dwt_approx(series: np.ndarray, spec: WaveletSpec):
    """L-level approximation coefficients plus the per-level detail stash.

    Input shape (..., T) with T == spec.original_length; zero-padded to the
    next multiple of 2**levels.  Returns (approx (..., n_tau), details) where
    details[l] holds the level-(l+1) detail coefficients.
    """
    series = np.asarray(series, dtype=float)
    if series.shape[-1] != spec.original_length:
        raise InvalidArgumentError(
            f"series length {series.shape[-1]} != spec original_length {spec.original_length}"
        )
    pad = spec.padded_length - spec.original_length
    if pad:
        width = [(0, 0)] * (series.ndim - 1) + [(0, pad)]
        series = np.pad(series, width)
    h, g = daubechies_filters(spec.order)
    approx = series
    details = []
    for _ in range(spec.levels):
        approx, detail = _dwt_level(approx, h, g)
        details.append(detail)
    return approx, details


def idwt_approx(coeffs: np.ndarray, spec: WaveletSpec) -> np.ndarray:
    """Synthesis with zero detail coefficients, truncated to original_length."""
    coeffs = np.asarray(coeffs, dtype=float)
    if coeffs.shape[-1] != spec.n_tau:
        raise InvalidArgumentError(
            f"coefficient length {coeffs.shape[-1]} != expected {spec.n_tau}"
        )
    h, g = daubechies_filters(spec.order)
    out = coeffs
    for _ in range(spec.levels):
        out = _idwt_level(out, np.zeros_like(out), h, g)
    return out[..., : spec.original_length]


def idwt_full(approx: np.ndarray, details, spec: WaveletSpec) -> np.ndarray:
    """Exact inverse from approximation plus all detail coefficients."""
    h, g = daubechies_filters(spec.order)
    out = np.asarray(approx, dtype=float)
    for detail in reversed(details):
        out = _idwt_level(out, detail, h, g)
    return out[..., : spec.original_length]


# --- min-max normalization ---------------------------------------------------


@dataclass(frozen=True)
class NormStats:
    minimum: np.ndarray  # per channel
    maximum: np.ndarray

    def __post_init__(self):
        bad = np.flatnonzero(~(self.maximum > self.minimum))
        if bad.size:
            raise InvalidArgumentError(
                f"degenerate (max == min) normalization channel(s): {bad.tolist()}"
            )


def minmax_fit(data: np.ndarray) -> NormStats:
    """Per-channel (axis 0) min/max over all remaining axes."""
    data = np.asarray(data, dtype=float)
    axes = tuple(range(1, data.ndim))
    return NormStats(minimum=data.min(axis=axes), maximum=data.max(axis=axes))


def _broadcast(stats_vec: np.ndarray, ndim: int) -> np.ndarray:
    return stats_vec.reshape((-1,) + (1,) * (ndim - 1))


def minmax_apply(data: np.ndarray, stats: NormStats) -> np.ndarray:
    """Affine map sending the calibration range to [-1, 1] per channel."""
    data = np.asarray(data, dtype=float)
    lo = _broadcast(stats.minimum, data.ndim)
    hi = _broadcast(stats.maximum, data.ndim)
    return 2.0 * (data - lo) / (hi - lo) - 1.0


def minmax_invert(data: np.ndarray, stats: NormStats) -> np.ndarray:
    data = np.asarray(data, dtype=float)
    lo = _broadcast(stats.minimum, data.ndim)
    hi = _broadcast(stats.maximum, data.ndim)
    return 0.5 * (data + 1.0) * (hi - lo) + lo


def exceeds_range(data: np.ndarray, stats: NormStats) -> np.ndarray:
    """Per-channel flags: any value outside the calibration range."""
    data = np.asarray(data, dtype=float)
    axes = tuple(range(1, data.ndim))
    lo = _broadcast(stats.minimum, data.ndim)
    hi = _broadcast(stats.maximum, data.ndim)
    return np.any((data < lo) | (data > hi), axis=axes)


# --- input augmentation --------------------------------------------------------


def augment_inputs(c_p: np.ndarray, theta: np.ndarray) -> np.ndarray:
    """Concatenate constant parameter channels below the input series."""
    c_p = np.atleast_2d(np.asarray(c_p, dtype=float))
    theta = np.asarray(theta, dtype=float).ravel()
    if not np.all(np.isfinite(theta)):
        raise InvalidArgumentError("theta must be finite")
    const = np.tile(theta[:, None], (1, c_p.shape[1]))
    return np.vstack([c_p, const])
