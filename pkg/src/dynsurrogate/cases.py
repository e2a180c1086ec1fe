"""Case-specific model construction and simulation dispatch."""

from __future__ import annotations

import numpy as np

from . import dynamics as dyn
from . import excitation as exc
from .config import CaseConfig
from .errors import InvalidArgumentError


def record_seed(cfg: CaseConfig, index: int) -> int:
    """Deterministic per-sample excitation seed."""
    ss = np.random.SeedSequence(entropy=int(cfg.master_seed), spawn_key=(10, int(index)))
    return int(ss.generate_state(1)[0])


def system_seed(cfg: CaseConfig, index: int) -> int:
    ss = np.random.SeedSequence(entropy=int(cfg.master_seed), spawn_key=(11, int(index)))
    return int(ss.generate_state(1)[0])


def make_excitation(cfg: CaseConfig, index: int) -> exc.ExcitationRecord:
    seed = record_seed(cfg, index)
    if cfg.excitation_kind == "seismic":
        return exc.gen_ground_motion(cfg.ground_motion_params(), seed)
    level = cfg.stat_psd_level
    cutoff = cfg.stat_cutoff_hz

    def psd(f):
        return np.where(f <= cutoff, level, 0.0)

    return exc.gen_stationary(psd, cfg.gm_duration, cfg.gm_dt, seed)


def sample_realization(cfg: CaseConfig, index: int) -> dyn.SystemRealization:
    return dyn.sample_system(cfg.theta_spec(), system_seed(cfg, index))


def yield_drift_m(cfg: CaseConfig) -> float:
    """Story yield drift from f_y (ksi) and the section-area constant."""
    return cfg.sys_f_y_ksi * cfg.sys_section_area_in2 / cfg.sys_k_e_kip_per_in * dyn.INCH


def build_sdof(cfg: CaseConfig, real: dyn.SystemRealization) -> dyn.BoucWenParams:
    theta = dict(zip(real.names, real.values))
    return dyn.BoucWenParams(
        omega=float(theta["omega"]),
        zeta=cfg.sys_zeta,
        rho=cfg.sys_rho,
        alpha=float(theta["alpha"]),
        beta=cfg.sys_beta,
        gamma=cfg.sys_gamma,
        n_exp=cfg.sys_n_exp,
    )


def build_building(cfg: CaseConfig, real: dyn.SystemRealization) -> dyn.ShearBuildingParams:
    theta = dict(zip(real.names, real.values))
    ns = cfg.sys_n_stories
    weight_kip = float(theta.get("story_weight_kip", cfg.sys_story_weight_kip))
    postyield = float(theta.get("postyield_ratio", cfg.sys_postyield))
    eta = float(theta.get("eta", 1.0))
    floor_mass = weight_kip * dyn.KIP / dyn.G_ACCEL
    roof_mass = cfg.sys_roof_weight_kip * dyn.KIP / dyn.G_ACCEL
    masses = tuple([floor_mass] * (ns - 1) + [roof_mass]) if ns > 1 else (roof_mass,)
    spring = dyn.StorySpring(
        k_e=cfg.sys_k_e_kip_per_in * dyn.KIP_PER_IN,
        rho=postyield,
        yield_drift=yield_drift_m(cfg),
    )
    return dyn.ShearBuildingParams(
        masses=masses,
        springs=(spring,) * ns,
        damping_ratio=cfg.sys_damping_ratio,
        eta=eta,
    )


def simulate(
    cfg: CaseConfig, real: dyn.SystemRealization, record: exc.ExcitationRecord
) -> dyn.ResponseRecord:
    if cfg.case == "case1_sdof":
        return dyn.simulate_sdof_boucwen(build_sdof(cfg, real), record, cfg.solver_tol)
    return dyn.simulate_mdof_shear(build_building(cfg, real), record, cfg.solver_tol)


def excitation_channels(
    cfg: CaseConfig, real: dyn.SystemRealization, record: exc.ExcitationRecord
) -> np.ndarray:
    """Per-DoF forcing series (n_dof, T) to be projected on the POD basis.

    SDOF feeds the raw record; the shear chain feeds the effective seismic
    force -m_i * a_g(t) so the basis projection matches the response one.
    """
    if cfg.case == "case1_sdof":
        return record.samples[None, :].copy()
    building = build_building(cfg, real)
    accel = record.samples * dyn.G_ACCEL if record.unit == "g" else record.samples
    return -np.outer(np.asarray(building.masses), accel)


def story_spring(cfg: CaseConfig, real: dyn.SystemRealization, story: int) -> dyn.StorySpring:
    """The hysteretic law needed to replay a spring force from drift."""
    if cfg.case == "case1_sdof":
        p = build_sdof(cfg, real)
        if p.beta != 0.0:
            raise InvalidArgumentError("force replay supports beta = 0 laws only")
        return dyn.StorySpring(
            k_e=p.omega**2,
            rho=p.rho,
            yield_drift=p.z_ultimate,
            gamma=p.gamma,
            n_exp=p.n_exp,
        )
    return build_building(cfg, real).springs[story]
