"""Case configuration: flat-key YAML in, validated dataclass out.

A configuration fully determines a run: excitation parameters, system
distribution spec, solver tolerance, dataset sizing and splits, reduction
settings, network settings, and the master seed.  ``presets`` holds ready
desk-scale and paper-scale configurations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields

import yaml

from .errors import InvalidArgumentError
from .excitation import GroundMotionParams

CASES = ("case1_sdof", "case2_mdof", "stationary_mdof")


@dataclass(frozen=True)
class CaseConfig:
    case: str
    master_seed: int = 1
    n_samples: int = 160
    n_train: int = 120
    n_val: int = 10
    n_test: int = 30
    solver_tol: float = 1e-5

    # seismic excitation (modulated filtered white noise), times in s,
    # frequencies in rad/s, Arias intensity in s*g
    gm_arias_intensity: float = 0.109
    gm_d_5_95: float = 7.96
    gm_t_mid: float = 7.78
    gm_omega_mid: float = 4.66 * 2.0 * math.pi
    gm_omega_prime: float = -0.09 * 2.0 * math.pi
    gm_zeta_f: float = 0.24
    gm_dt: float = 0.02
    gm_duration: float = 30.0
    gm_hp_corner: float = 0.1

    # stationary excitation (white one-sided PSD in (m/s^2)^2/Hz up to cutoff)
    stat_psd_level: float = 0.02
    stat_cutoff_hz: float = 3.0

    # SDOF Bouc-Wen system (case1)
    sys_omega_low: float = 5.373
    sys_omega_high: float = 6.567
    sys_alpha_low: float = 45.0
    sys_alpha_high: float = 55.0
    sys_zeta: float = 0.02
    sys_rho: float = 0.0
    sys_gamma: float = 1.0
    sys_beta: float = 0.0
    sys_n_exp: float = 2.0

    # shear building (case2 analog / stationary case)
    sys_n_stories: int = 3
    sys_story_weight_low_kip: float = 50.0
    sys_story_weight_high_kip: float = 150.0
    sys_story_weight_kip: float = 100.0  # fixed value when weight is not random
    sys_postyield_low: float = 0.05
    sys_postyield_high: float = 0.15
    sys_postyield: float = 0.1  # fixed value when the ratio is not random
    sys_roof_weight_kip: float = 60.0
    sys_k_e_kip_per_in: float = 300.0
    sys_f_y_ksi: float = 20.0
    sys_section_area_in2: float = 2.4  # converts f_y to a story yield force
    sys_damping_ratio: float = 0.025
    sys_eta_mean: float = 1.0
    sys_eta_cov: float = 0.3

    # reduction
    red_bypass: bool = False
    red_pod_threshold: float = 0.9999
    red_wavelet_levels: int = 2
    red_wavelet_order: int = 6
    red_snapshots_per_record: int = 200
    red_snapshot_scheme: str = "uniform"

    # network and training
    net_hidden: int = 64
    net_dropout: float = 0.2
    net_scaled_dropout: bool = True
    net_lr: float = 0.002
    net_batch: int = 40
    net_epochs: int = 3000
    net_patience: int = 300
    net_sigma2: float = 0.0

    # evaluation
    eval_n_realizations: int = 100
    eval_ci_level: float = 0.95

    def __post_init__(self):
        if self.case not in CASES:
            raise InvalidArgumentError(f"unknown case {self.case!r}; expected one of {CASES}")
        if self.n_train + self.n_val + self.n_test != self.n_samples:
            raise InvalidArgumentError("split counts must sum to n_samples")
        if self.n_train < 1 or self.n_test < 1 or self.n_val < 0:
            raise InvalidArgumentError("need n_train >= 1, n_test >= 1, n_val >= 0")
        if self.solver_tol <= 0:
            raise InvalidArgumentError("solver_tol must be > 0")
        if self.red_wavelet_levels < 0:
            raise InvalidArgumentError("red_wavelet_levels must be >= 0")
        if not 0.0 < self.red_pod_threshold <= 1.0:
            raise InvalidArgumentError("red_pod_threshold must lie in (0, 1]")
        if not 0.0 <= self.net_dropout < 1.0:
            raise InvalidArgumentError("net_dropout must lie in [0, 1)")
        if self.net_hidden < 1 or self.net_epochs < 1 or self.net_batch < 1:
            raise InvalidArgumentError("net_hidden, net_epochs, net_batch must be >= 1")
        if self.net_lr <= 0 or self.net_patience < 1:
            raise InvalidArgumentError("net_lr must be > 0 and net_patience >= 1")
        if self.net_sigma2 < 0:
            raise InvalidArgumentError("net_sigma2 must be >= 0")
        if self.eval_n_realizations < 2:
            raise InvalidArgumentError("eval_n_realizations must be >= 2")
        if not 0.0 < self.eval_ci_level < 1.0:
            raise InvalidArgumentError("eval_ci_level must lie in (0, 1)")
        if self.sys_n_stories < 1:
            raise InvalidArgumentError("sys_n_stories must be >= 1")

    # --- derived views --------------------------------------------------------

    @property
    def n_dof(self) -> int:
        return 1 if self.case == "case1_sdof" else self.sys_n_stories

    @property
    def monitored_dofs(self) -> tuple:
        if self.n_dof == 1:
            return (0,)
        mid = (self.n_dof - 1) // 2
        roof = self.n_dof - 1
        return (mid, roof) if mid != roof else (roof,)

    @property
    def excitation_kind(self) -> str:
        return "stationary" if self.case == "stationary_mdof" else "seismic"

    def ground_motion_params(self) -> GroundMotionParams:
        return GroundMotionParams(
            arias_intensity=self.gm_arias_intensity,
            d_5_95=self.gm_d_5_95,
            t_mid=self.gm_t_mid,
            omega_mid=self.gm_omega_mid,
            omega_prime=self.gm_omega_prime,
            zeta_f=self.gm_zeta_f,
            dt=self.gm_dt,
            duration=self.gm_duration,
            hp_corner=self.gm_hp_corner,
        )

    def theta_spec(self) -> tuple:
        """(name, family, *params) entries describing the random vector."""
        if self.case == "case1_sdof":
            return (
                ("omega", "uniform", self.sys_omega_low, self.sys_omega_high),
                ("alpha", "uniform", self.sys_alpha_low, self.sys_alpha_high),
            )
        if self.case == "case2_mdof":
            return (
                (
                    "story_weight_kip",
                    "uniform",
                    self.sys_story_weight_low_kip,
                    self.sys_story_weight_high_kip,
                ),
                ("postyield_ratio", "uniform", self.sys_postyield_low, self.sys_postyield_high),
            )
        return (("eta", "lognormal", self.sys_eta_mean, self.sys_eta_cov),)

    # --- (de)serialization ------------------------------------------------------

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_dict(cls, raw: dict) -> "CaseConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise InvalidArgumentError(f"unknown config keys: {sorted(unknown)}")
        if "case" not in raw:
            raise InvalidArgumentError("config must set 'case'")
        return cls(**raw)

    @classmethod
    def from_yaml(cls, path) -> "CaseConfig":
        with open(path, "r", encoding="utf-8") as fh:
            raw = yaml.safe_load(fh)
        if not isinstance(raw, dict):
            raise InvalidArgumentError(f"{path}: expected a mapping of flat keys")
        return cls.from_dict(raw)

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=True)


# --- presets -----------------------------------------------------------------------

_PRESETS = {
    # Case 1 sized for a laptop CPU: 160 samples, 64 hidden units, wavelet
    # downsampling of the 30 s / 0.02 s series (levels=2 -> 376 steps).
    "case1_desk": dict(
        case="case1_sdof",
        n_samples=160,
        n_train=120,
        n_val=10,
        n_test=30,
        gm_dt=0.02,
        gm_duration=18.0,
        red_bypass=True,
        red_wavelet_levels=2,
        net_hidden=64,
        net_batch=40,
        net_epochs=3000,
        net_patience=600,
    ),
    # Full-size Case 1 (GPU-scale training budget).
    "case1_paper": dict(
        case="case1_sdof",
        n_samples=200,
        n_train=150,
        n_val=10,
        n_test=40,
        gm_dt=0.01,
        red_bypass=True,
        red_wavelet_levels=0,
        net_hidden=200,
        net_batch=50,
        net_epochs=40000,
        net_patience=4000,
    ),
    # 3-story shear-building analog, desk scale.
    "case2_desk": dict(
        case="case2_mdof",
        n_samples=300,
        n_train=240,
        n_val=20,
        n_test=40,
        gm_arias_intensity=0.045,
        gm_d_5_95=12.62,
        gm_t_mid=4.73,
        gm_omega_mid=20.57,
        gm_omega_prime=-0.08 * 2.0 * math.pi,
        gm_zeta_f=0.4801,
        gm_dt=0.02,
        gm_duration=24.0,
        sys_n_stories=3,
        red_bypass=False,
        red_pod_threshold=0.9999,
        red_wavelet_levels=2,
        red_snapshots_per_record=200,
        net_hidden=64,
        net_batch=40,
        net_epochs=2200,
        net_patience=500,
    ),
    # 6-story analog at the full dataset size.
    "case2_paper": dict(
        case="case2_mdof",
        n_samples=1000,
        n_train=750,
        n_val=50,
        n_test=200,
        gm_arias_intensity=0.045,
        gm_d_5_95=12.62,
        gm_t_mid=4.73,
        gm_omega_mid=20.57,
        gm_omega_prime=-0.08 * 2.0 * math.pi,
        gm_zeta_f=0.4801,
        gm_dt=0.02,
        sys_n_stories=6,
        red_bypass=False,
        red_pod_threshold=0.9999,
        red_wavelet_levels=2,
        net_hidden=200,
        net_batch=50,
        net_epochs=1500,
        net_patience=200,
    ),
    # MDOF chain under stationary excitation: exercises the full POD +
    # wavelet reduction path with a single lognormal damping factor.
    "stationary_mdof_desk": dict(
        case="stationary_mdof",
        n_samples=60,
        n_train=44,
        n_val=4,
        n_test=12,
        gm_dt=0.02,
        gm_duration=40.96,
        sys_n_stories=3,
        red_bypass=False,
        red_pod_threshold=0.9999,
        red_wavelet_levels=3,
        net_hidden=32,
        net_batch=22,
        net_epochs=400,
        net_patience=80,
    ),
}


def preset(name: str) -> CaseConfig:
    if name not in _PRESETS:
        raise InvalidArgumentError(
            f"unknown preset {name!r}; available: {sorted(_PRESETS)}"
        )
    return CaseConfig.from_dict(_PRESETS[name])


def preset_names() -> tuple:
    return tuple(sorted(_PRESETS))


def example_yaml(name: str) -> str:
    """A commented flat-key YAML rendering of a preset."""
    cfg = preset(name)
    lines = [f"# dynsurrogate configuration (preset: {name})"]
    docs = {
        "case": "one of " + ", ".join(CASES),
        "master_seed": "master seed; every artifact is a pure function of (config, seed)",
        "n_samples": "dataset size; n_train + n_val + n_test must equal it",
        "solver_tol": "adaptive RK4 local error tolerance",
        "gm_arias_intensity": "Arias intensity target, s*g",
        "gm_omega_mid": "filter frequency at t_mid, rad/s",
        "gm_hp_corner": "high-pass corner frequency, Hz",
        "stat_psd_level": "one-sided white PSD level, (m/s^2)^2/Hz (stationary case)",
        "sys_section_area_in2": "section constant converting f_y (ksi) to story yield force",
        "red_bypass": "skip POD (single-DoF identity basis) when true",
        "red_wavelet_levels": "DWT levels; series length shrinks by 2**levels",
        "net_sigma2": "observation-noise variance; 0 disables the weight-decay term",
        "eval_n_realizations": "dropout-mask resamples per prediction ensemble",
    }
    for key, value in cfg.to_dict().items():
        comment = f"  # {docs[key]}" if key in docs else ""
        rendered = yaml.safe_dump({key: value}, sort_keys=False).strip()
        lines.append(rendered + comment)
    return "\n".join(lines) + "\n"
