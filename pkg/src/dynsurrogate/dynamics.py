"""High-fidelity reference solvers.

SDOF Bouc-Wen oscillator under base acceleration and an MDOF shear building
with Bouc-Wen interstory springs, both integrated by classical RK4 with
step-doubling error control.  Forcing is interpolated linearly inside steps
and the solution is emitted on the forcing grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import eigh

from .errors import InvalidArgumentError, StiffnessFailureError
from .excitation import G_ACCEL, ExcitationRecord
from .rng import stream

KIP = 4448.2216152605  # N
INCH = 0.0254  # m
KIP_PER_IN = KIP / INCH  # N/m


@dataclass(frozen=True)
class BoucWenParams:
    """Mass-normalized SDOF hysteretic oscillator parameters."""

    omega: float  # rad/s, linear-elastic circular frequency
    zeta: float = 0.02
    rho: float = 0.0  # post-yield stiffness ratio
    alpha: float = 50.0
    beta: float = 0.0
    gamma: float = 1.0
    n_exp: float = 2.0

    def __post_init__(self):
        if self.omega <= 0:
            raise InvalidArgumentError("omega must be > 0")
        if not 0.0 <= self.zeta < 1.0:
            raise InvalidArgumentError("zeta must lie in [0, 1)")
        if not 0.0 <= self.rho <= 1.0:
            raise InvalidArgumentError("rho must lie in [0, 1]")
        if self.n_exp < 1.0:
            raise InvalidArgumentError("n_exp must be >= 1")
        if self.rho < 1.0 and self.alpha + self.beta <= 0.0:
            raise InvalidArgumentError("alpha + beta must be > 0 for hysteretic systems")

    @property
    def z_ultimate(self) -> float:
        """Stationary bound of |z| under monotonic loading."""
        if self.alpha + self.beta <= 0.0:
            return math.inf
        return (self.gamma / (self.alpha + self.beta)) ** (1.0 / self.n_exp)


@dataclass(frozen=True)
class SystemRealization:
    """A draw of the uncertain parameter vector plus its distribution spec."""

    names: tuple
    values: np.ndarray
    distributions: tuple  # entries (family, *params) aligned with names
    fixed: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.names) != len(self.values):
            raise InvalidArgumentError("names and values must align")
        for value, dist in zip(self.values, self.distributions):
            family = dist[0]
            if family == "uniform":
                lo, hi = dist[1], dist[2]
                if not lo <= value <= hi:
                    raise InvalidArgumentError(
                        f"value {value} outside uniform support [{lo}, {hi}]"
                    )
            elif family == "lognormal":
                if value <= 0:
                    raise InvalidArgumentError("lognormal draw must be positive")


@dataclass(frozen=True)
class StorySpring:
    """Bouc-Wen interstory law: elastic stiffness plus hysteretic shape."""

    k_e: float  # N/m
    rho: float  # post-yield stiffness ratio
    yield_drift: float  # m; sets the ultimate hysteretic displacement
    gamma: float = 1.0
    n_exp: float = 2.0

    def __post_init__(self):
        if self.k_e <= 0:
            raise InvalidArgumentError("k_e must be > 0")
        if not 0.0 <= self.rho <= 1.0:
            raise InvalidArgumentError("rho must lie in [0, 1]")
        if self.yield_drift <= 0:
            raise InvalidArgumentError("yield_drift must be > 0")

    @property
    def alpha(self) -> float:
        # beta = 0 throughout, so z_ultimate == yield_drift exactly
        return self.gamma / self.yield_drift**self.n_exp


@dataclass(frozen=True)
class ShearBuildingParams:
    """Shear chain with Bouc-Wen interstory springs and Rayleigh damping."""

    masses: tuple  # kg per story, ground excluded
    springs: tuple  # StorySpring per story, index 0 at the base
    damping_ratio: float = 0.025  # target at the first two elastic modes
    eta: float = 1.0  # random damping factor

    def __post_init__(self):
        if len(self.masses) < 1:
            raise InvalidArgumentError("need at least one story")
        if len(self.masses) != len(self.springs):
            raise InvalidArgumentError("one spring per story required")
        if any(m <= 0 for m in self.masses):
            raise InvalidArgumentError("masses must be > 0")
        if self.eta <= 0:
            raise InvalidArgumentError("eta must be > 0")

    @property
    def n_stories(self) -> int:
        return len(self.masses)

    def mass_matrix(self) -> np.ndarray:
        return np.diag(self.masses)

    def elastic_stiffness(self) -> np.ndarray:
        ns = self.n_stories
        k = np.array([s.k_e for s in self.springs])
        mat = np.zeros((ns, ns))
        for i in range(ns):
            mat[i, i] += k[i]
            if i + 1 < ns:
                mat[i, i] += k[i + 1]
                mat[i, i + 1] -= k[i + 1]
                mat[i + 1, i] -= k[i + 1]
        return mat

    def rayleigh_coefficients(self) -> tuple:
        """(a0, a1) giving damping_ratio at the first two elastic modes."""
        m = self.mass_matrix()
        k = self.elastic_stiffness()
        eigvals = eigh(k, m, eigvals_only=True)
        omegas = np.sqrt(np.clip(eigvals, 0.0, None))
        if self.n_stories == 1:
            w1 = omegas[0]
            return 0.0, 2.0 * self.damping_ratio / w1
        w1, w2 = omegas[0], omegas[1]
        zr = self.damping_ratio
        a0 = 2.0 * zr * w1 * w2 / (w1 + w2)
        a1 = 2.0 * zr / (w1 + w2)
        return float(a0), float(a1)

    def damping_matrix(self) -> np.ndarray:
        a0, a1 = self.rayleigh_coefficients()
        return self.eta * (a0 * self.mass_matrix() + a1 * self.elastic_stiffness())


@dataclass(frozen=True)
class ResponseRecord:
    """Per-DoF state trajectories plus per-spring hysteresis series."""

    displacement: np.ndarray  # (n_dof, n)
    velocity: np.ndarray  # (n_dof, n)
    hysteretic_state: np.ndarray  # (n_springs, n)
    restoring_force: np.ndarray  # (n_springs, n)
    dt: float
    accepted_steps: int
    rejected_steps: int

    @property
    def n_dof(self) -> int:
        return self.displacement.shape[0]

    def time_grid(self) -> np.ndarray:
        return np.arange(self.displacement.shape[1]) * self.dt


def boucwen_rhs(state, a_g: float, p: BoucWenParams):
    """Right-hand side of the SDOF Bouc-Wen equations (a_g in m/s^2)."""
    u, v, z = state
    av = abs(v)
    az = abs(z)
    dz = (
        p.gamma * v
        - p.alpha * av * math.copysign(az**p.n_exp, z)
        - p.beta * v * az**p.n_exp
    )
    dv = -a_g - 2.0 * p.zeta * p.omega * v - p.omega**2 * (p.rho * u + (1.0 - p.rho) * z)
    return (v, dv, dz)


def rk4_adaptive(rhs, x0, forcing: np.ndarray, dt: float, tol: float):
    """Adaptive classical RK4 with step-doubling error control.

    ``rhs(x, f)`` must return the state derivative given the interpolated
    forcing value f.  The trajectory is emitted at every forcing grid point;
    forcing is interpolated linearly inside steps.  Returns
    (trajectory (n, dim), accepted, rejected).
    """
    if tol <= 0:
        raise InvalidArgumentError("tol must be > 0")
    forcing = np.asarray(forcing, dtype=float)
    n = len(forcing)
    x = np.asarray(x0, dtype=float).copy()
    out = np.empty((n, len(x)))
    out[0] = x
    h_min = dt * 2.0**-20
    h = dt
    accepted = rejected = 0

    def f_at(t):
        # linear interpolation on the uniform grid
        j = min(int(t / dt), n - 2)
        w = (t - j * dt) / dt
        return (1.0 - w) * forcing[j] + w * forcing[j + 1]

    def rk4_step(t, x, h):
        k1 = np.asarray(rhs(x, f_at(t)))
        k2 = np.asarray(rhs(x + 0.5 * h * k1, f_at(t + 0.5 * h)))
        k3 = np.asarray(rhs(x + 0.5 * h * k2, f_at(t + 0.5 * h)))
        k4 = np.asarray(rhs(x + h * k3, f_at(t + h)))
        return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)

    for j in range(n - 1):
        t = j * dt
        t_end = (j + 1) * dt
        while t < t_end - 1e-12 * dt:
            h_try = min(h, t_end - t)
            x_full = rk4_step(t, x, h_try)
            x_half = rk4_step(t, x, 0.5 * h_try)
            x_two = rk4_step(t + 0.5 * h_try, x_half, 0.5 * h_try)
            err = float(np.max(np.abs(x_full - x_two))) / 15.0
            scale = tol * (1.0 + float(np.max(np.abs(x))))
            if err <= scale:
                x = x_two
                t += h_try
                accepted += 1
                growth = 4.0 if err == 0.0 else min(4.0, 0.9 * (scale / err) ** 0.2)
                h = max(h_try * max(growth, 0.1), h_min)
            else:
                rejected += 1
                h = h_try * max(0.1, 0.9 * (scale / err) ** 0.2)
                if h < h_min:
                    raise StiffnessFailureError(
                        f"step size underflow at t={t:.6f} s", time=t
                    )
        out[j + 1] = x
    return out, accepted, rejected


def simulate_sdof_boucwen(
    p: BoucWenParams, gm: ExcitationRecord, tol: float = 1e-5
) -> ResponseRecord:
    """Integrate the SDOF Bouc-Wen system from rest under a ground motion."""
    accel = gm.samples * G_ACCEL if gm.unit == "g" else gm.samples

    def rhs(x, a):
        return boucwen_rhs(x, a, p)

    traj, acc, rej = rk4_adaptive(rhs, np.zeros(3), accel, gm.dt, tol)
    u = traj[:, 0][None, :]
    v = traj[:, 1][None, :]
    z = traj[:, 2][None, :]
    force = p.omega**2 * (p.rho * u + (1.0 - p.rho) * z)
    return ResponseRecord(
        displacement=u,
        velocity=v,
        hysteretic_state=z,
        restoring_force=force,
        dt=gm.dt,
        accepted_steps=acc,
        rejected_steps=rej,
    )


def _mdof_rhs_factory(p: ShearBuildingParams):
    ns = p.n_stories
    masses = np.asarray(p.masses, dtype=float)
    c_mat = p.damping_matrix()
    k_e = np.array([s.k_e for s in p.springs])
    rho = np.array([s.rho for s in p.springs])
    gamma = np.array([s.gamma for s in p.springs])
    alpha = np.array([s.alpha for s in p.springs])
    n_exp = np.array([s.n_exp for s in p.springs])
    ones = np.ones(ns)

    def spring_force(drift, z):
        return k_e * (rho * drift + (1.0 - rho) * z)

    def rhs(x, a_g):
        u = x[:ns]
        v = x[ns : 2 * ns]
        z = x[2 * ns :]
        drift_rate = np.empty(ns)
        drift_rate[0] = v[0]
        drift_rate[1:] = v[1:] - v[:-1]
        drift = np.empty(ns)
        drift[0] = u[0]
        drift[1:] = u[1:] - u[:-1]
        force = spring_force(drift, z)
        # nodal restoring force: story spring below minus spring above
        r = force.copy()
        r[:-1] -= force[1:]
        accel = -a_g * ones - (c_mat @ v + r) / masses
        dz = gamma * drift_rate - alpha * np.abs(drift_rate) * np.sign(z) * np.abs(z) ** n_exp
        return np.concatenate([v, accel, dz])

    return rhs, spring_force


def simulate_mdof_shear(
    p: ShearBuildingParams, gm: ExcitationRecord, tol: float = 1e-5
) -> ResponseRecord:
    """Integrate the shear chain from rest under a ground motion."""
    accel_in = gm.samples * G_ACCEL if gm.unit == "g" else gm.samples
    ns = p.n_stories
    rhs, spring_force = _mdof_rhs_factory(p)
    traj, acc, rej = rk4_adaptive(rhs, np.zeros(3 * ns), accel_in, gm.dt, tol)
    u = traj[:, :ns].T
    v = traj[:, ns : 2 * ns].T
    z = traj[:, 2 * ns :].T
    drift = np.vstack([u[0], u[1:] - u[:-1]]) if ns > 1 else u.copy()
    force = spring_force(drift.T, z.T).T
    return ResponseRecord(
        displacement=u,
        velocity=v,
        hysteretic_state=z,
        restoring_force=force,
        dt=gm.dt,
        accepted_steps=acc,
        rejected_steps=rej,
    )


def interstory_drift(resp: ResponseRecord) -> np.ndarray:
    """Drift series per story (equals displacement for a single DoF)."""
    u = resp.displacement
    if u.shape[0] == 1:
        return u.copy()
    return np.vstack([u[0], u[1:] - u[:-1]])


def hysteresis_curve(resp: ResponseRecord, spring_index: int = 0):
    """(drift, force) pair series for one spring, unresampled."""
    drift = interstory_drift(resp)
    if not 0 <= spring_index < drift.shape[0]:
        raise InvalidArgumentError(f"spring index {spring_index} out of range")
    return drift[spring_index].copy(), resp.restoring_force[spring_index].copy()


def replay_hysteresis(drift: np.ndarray, spring: StorySpring, dt: float) -> np.ndarray:
    """Recover the spring force series implied by a (predicted) drift history.

    The hysteretic state ODE is driven by the drift rate (central differences,
    linearly interpolated) and integrated by fixed-step RK4 on a refined grid.
    """
    drift = np.asarray(drift, dtype=float)
    rate = np.gradient(drift, dt)
    n = len(drift)
    z = 0.0
    z_out = np.empty(n)
    z_out[0] = 0.0
    n_sub = 4

    def dz(z, r):
        return spring.gamma * r - spring.alpha * abs(r) * math.copysign(
            abs(z) ** spring.n_exp, z
        )

    for j in range(n - 1):
        h = dt / n_sub
        for s in range(n_sub):
            w0 = s / n_sub
            w1 = (s + 0.5) / n_sub
            w2 = (s + 1) / n_sub
            r0 = (1 - w0) * rate[j] + w0 * rate[j + 1]
            r1 = (1 - w1) * rate[j] + w1 * rate[j + 1]
            r2 = (1 - w2) * rate[j] + w2 * rate[j + 1]
            k1 = dz(z, r0)
            k2 = dz(z + 0.5 * h * k1, r1)
            k3 = dz(z + 0.5 * h * k2, r1)
            k4 = dz(z + h * k3, r2)
            z = z + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        z_out[j + 1] = z
    return spring.k_e * (spring.rho * drift + (1.0 - spring.rho) * z_out)


def loop_area(drift: np.ndarray, force: np.ndarray) -> float:
    """Absolute enclosed (dissipated) area of a hysteresis trajectory."""
    return abs(float(np.trapezoid(force, drift)))


def energy_balance_residual(
    resp: ResponseRecord, gm: ExcitationRecord, p: BoucWenParams
) -> float:
    """Max energy-balance residual as a fraction of peak input energy (SDOF).

    Mass-normalized: input -int a_g*v dt vs kinetic + viscous-dissipated +
    restoring-force work, all by trapezoidal quadrature on the output grid.
    """
    accel = gm.samples * G_ACCEL if gm.unit == "g" else gm.samples
    v = resp.velocity[0]
    dt = resp.dt

    def cumtrapz(y):
        out = np.zeros_like(y)
        out[1:] = np.cumsum(0.5 * (y[1:] + y[:-1])) * dt
        return out

    e_in = cumtrapz(-accel * v)
    e_kin = 0.5 * v * v
    e_damp = cumtrapz(2.0 * p.zeta * p.omega * v * v)
    e_rest = cumtrapz(resp.restoring_force[0] * v)
    residual = np.abs(e_in - (e_kin + e_damp + e_rest))
    peak = float(np.max(np.abs(e_in)))
    if peak == 0.0:
        return 0.0
    return float(np.max(residual)) / peak


# --- parametric sampling -----------------------------------------------------


def lognormal_underlying(mean: float, cov: float) -> tuple:
    """(mu_ln, sigma_ln) of the underlying normal from mean and CoV."""
    sigma_ln = math.sqrt(math.log(1.0 + cov * cov))
    mu_ln = math.log(mean) - 0.5 * sigma_ln * sigma_ln
    return mu_ln, sigma_ln


def sample_system(case_spec, seed: int) -> SystemRealization:
    """Draw the uncertain parameter vector for a case specification.

    ``case_spec`` is a sequence of (name, family, *params) entries with
    family "uniform" (low, high) or "lognormal" (mean, cov).
    """
    rng = stream(seed, 2)
    names = []
    values = []
    dists = []
    for entry in case_spec:
        name, family = entry[0], entry[1]
        if family == "uniform":
            lo, hi = float(entry[2]), float(entry[3])
            values.append(rng.uniform(lo, hi))
            dists.append(("uniform", lo, hi))
        elif family == "lognormal":
            mean, cov = float(entry[2]), float(entry[3])
            mu_ln, sigma_ln = lognormal_underlying(mean, cov)
            values.append(math.exp(rng.normal(mu_ln, sigma_ln)))
            dists.append(("lognormal", mean, cov))
        else:
            raise InvalidArgumentError(f"unsupported distribution family {family!r}")
        names.append(name)
    return SystemRealization(
        names=tuple(names), values=np.array(values), distributions=tuple(dists)
    )
