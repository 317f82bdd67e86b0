"""Device parameterization, model tiers and the displacement transformation.

Three model tiers:

* ``A`` -- bad-cavity: emitter only (D = 2), cavity adiabatically
  eliminated into an extra decay 4 g^2 / kappa, driven by the real
  envelope Omega_eff(t) = 2 g |alpha(t)|.
* ``B`` -- full quantum: quantized cavity mode, no phonons.  Default
  frame is the displaced one, where the classical cavity drive is
  traded for an effective emitter drive g alpha(t).
* ``C`` -- tier B plus the polaron-frame acoustic-phonon scattering
  term; coherent couplings are renormalized by <B>.
"""

import math
import warnings
from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np
from scipy.integrate import solve_ivp

from . import pulses
from .errors import ConfigError, IntegrationError
from .hilbert import HilbertConfig, build_operators
from .phonon import PhononParams, b_average
from .units import C_NM_PER_PS

TIER_A = "A"
TIER_B = "B"
TIER_C = "C"
_TIER_ALIASES = {
    "a": TIER_A, "a_bad_cavity": TIER_A, "bad_cavity": TIER_A,
    "b": TIER_B, "b_full_quantum": TIER_B, "full_quantum": TIER_B,
    "c": TIER_C, "c_full_plus_phonons": TIER_C, "full_plus_phonons": TIER_C,
}


def normalize_tier(tier: str) -> str:
    key = str(tier).lower()
    if key not in _TIER_ALIASES:
        raise ConfigError(f"unknown model tier {tier!r}")
    return _TIER_ALIASES[key]


def derive_rates(q_factor, purcell, lifetime_ps, wavelength_nm=900.0):
    """(kappa, gamma, g) in rad/ps from Q, Purcell factor and on-resonance lifetime.

    kappa = omega_c / Q, gamma = 1 / (F_p tau_on) is the bare (off-resonant)
    emitter decay, and g is fixed so the on-resonance total decay satisfies
    4 g^2 / kappa + gamma = 1 / tau_on.
    """
    if min(q_factor, purcell, lifetime_ps, wavelength_nm) <= 0:
        raise ConfigError("device parameters must be positive")
    if purcell < 1.0:
        raise ConfigError("purcell factor must be >= 1")
    omega_c = 2.0 * math.pi * C_NM_PER_PS / wavelength_nm
    kappa = omega_c / q_factor
    gamma = 1.0 / (purcell * lifetime_ps)
    purcell_rate = 1.0 / lifetime_ps - gamma
    if purcell_rate <= 0:
        raise ConfigError("inconsistent Purcell/lifetime inputs: 1/tau_on <= gamma")
    g = 0.5 * math.sqrt(kappa * purcell_rate)
    return kappa, gamma, g


@dataclass(frozen=True)
class DeviceParams:
    q_factor: float
    purcell: float
    lifetime_ps: float
    wavelength_nm: float = 900.0
    temperature_k: float = 4.0
    explicit_rates: tuple | None = None  # (kappa, gamma, g) override for toy models

    def __post_init__(self):
        kappa, _, g = self.rates()
        if 4.0 * g > kappa:
            warnings.warn(
                f"4g = {4 * g:.4g} rad/ps exceeds kappa = {kappa:.4g}; "
                "weak-coupling elimination is unreliable here",
                stacklevel=2,
            )

    @classmethod
    def from_rates(cls, kappa, gamma, g, wavelength_nm=900.0, temperature_k=4.0):
        """Device described by raw rates (rad/ps); mainly for oracle configs."""
        omega_c = 2.0 * math.pi * C_NM_PER_PS / wavelength_nm
        lifetime = 1.0 / (4.0 * g * g / kappa + gamma)
        return cls(q_factor=omega_c / kappa, purcell=1.0 / (lifetime * gamma),
                   lifetime_ps=lifetime, wavelength_nm=wavelength_nm,
                   temperature_k=temperature_k,
                   explicit_rates=(float(kappa), float(gamma), float(g)))

    def rates(self):
        if self.explicit_rates is not None:
            return self.explicit_rates
        return derive_rates(self.q_factor, self.purcell, self.lifetime_ps,
                            self.wavelength_nm)

    @property
    def kappa(self):
        return self.rates()[0]

    @property
    def gamma(self):
        return self.rates()[1]

    @property
    def g(self):
        return self.rates()[2]


@dataclass(frozen=True)
class ModelConfig:
    tier: str
    device: DeviceParams
    pulse: pulses.PulseEnvelope
    delta_c: float = 0.0  # rad/ps, cavity minus laser
    delta_x: float = 0.0  # rad/ps, exciton minus laser
    hilbert: HilbertConfig = HilbertConfig(6)
    displaced_frame: bool = True
    phonon: PhononParams | None = None
    pure_dephasing: float = 0.0  # rad/ps

    def __post_init__(self):
        object.__setattr__(self, "tier", normalize_tier(self.tier))
        if self.tier == TIER_C:
            if self.phonon is None:
                raise ConfigError("tier C requires phonon parameters")
            if not self.displaced_frame:
                raise ConfigError("tier C is only implemented in the displaced frame")
        if self.pure_dephasing < 0:
            raise ConfigError("pure_dephasing must be >= 0")

    @property
    def dim(self) -> int:
        return 2 if self.tier == TIER_A else self.hilbert.dim

    def b_renorm(self) -> float:
        """Phonon renormalization <B> of coherent couplings (1 outside tier C)."""
        return b_average(self.phonon) if self.tier == TIER_C else 1.0

    def emitter_decay(self) -> float:
        """Emitter dissipator rate: bare gamma, plus 4g^2/kappa in tier A."""
        kappa, gamma, g = self.device.rates()
        if self.tier == TIER_A:
            return gamma + 4.0 * g * g / kappa
        return gamma


# ---------------------------------------------------------------------------
# Displacement transformation: alpha' = -(i Delta_c + kappa/2) alpha - i Omega/2
# ---------------------------------------------------------------------------

class DriveProfile:
    """Classical cavity amplitude alpha(t) and the derived emitter drive.

    In the displaced frame the emitter sees g * alpha(t); tier A uses the
    real envelope Omega_eff(t) = 2 g |alpha(t)|.
    """

    def __init__(self, cfg: ModelConfig, horizon: float):
        self.cfg = cfg
        self.horizon = float(horizon)
        kappa, _, self._g = cfg.device.rates()
        self._z = 1j * cfg.delta_c + 0.5 * kappa
        if cfg.pulse.kind == pulses.CW:
            self._sol = None
            self._alpha_ss = -1j * cfg.pulse.amplitude / (2.0 * self._z)
        else:
            self._sol = _solve_alpha(cfg, self.horizon)
            self._alpha_ss = None

    def alpha(self, t):
        """alpha(t); scalar in, scalar out (complex)."""
        if self._alpha_ss is not None:
            t = np.asarray(t, dtype=float)
            val = self._alpha_ss * (1.0 - np.exp(-self._z * t))
            return complex(val) if val.ndim == 0 else val
        t_clip = np.clip(t, 0.0, self.horizon)
        u, v = self._sol(t_clip)
        val = u + 1j * v
        return complex(val) if np.ndim(t) == 0 else val

    def eta(self, t):
        """Displaced-frame emitter drive g * alpha(t) (no <B> factor)."""
        return self._g * self.alpha(t)

    def omega_eff(self, t):
        """Effective real emitter Rabi envelope 2 g |alpha(t)|."""
        return 2.0 * np.abs(self.eta(t))

    def effective_area_pi(self) -> float:
        """integral of 2 g |alpha| dt in units of pi."""
        if self.cfg.pulse.kind == pulses.CW:
            raise ConfigError("effective pulse area undefined for cw drive")
        tt = np.arange(0.0, self.horizon, _area_step(self.cfg))
        return float(np.trapezoid(self.omega_eff(tt), tt)) / math.pi

    def steady_state_rabi(self) -> float:
        """cw effective Rabi frequency 2 g |alpha_ss| in rad/ps."""
        if self._alpha_ss is None:
            raise ConfigError("steady-state Rabi only defined for cw drive")
        return 2.0 * self._g * abs(self._alpha_ss)


def _area_step(cfg: ModelConfig) -> float:
    if cfg.pulse.kind == pulses.GAUSSIAN:
        return min(0.25, cfg.pulse.sigma_ps / 40.0)
    return 0.1


def drive_horizon(cfg: ModelConfig) -> float:
    """Time by which alpha has decayed back to ~0 after the pulse."""
    kappa = cfg.device.kappa
    return pulses.support_end(cfg.pulse) + 25.0 / kappa


def _solve_alpha(cfg: ModelConfig, horizon: float):
    kappa = cfg.device.kappa
    delta_c = cfg.delta_c

    def rhs(t, y):
        u, v = y
        w = pulses.omega_of_t(cfg.pulse, t)
        return [-0.5 * kappa * u + delta_c * v,
                -delta_c * u - 0.5 * kappa * v - 0.5 * w]

    sol = solve_ivp(rhs, (0.0, horizon), [0.0, 0.0], method="DOP853",
                    dense_output=True, rtol=1e-11, atol=1e-13)
    if not sol.success:
        raise IntegrationError(f"displacement ODE failed: {sol.message}")
    return sol.sol


@lru_cache(maxsize=128)
def _cached_profile(cfg: ModelConfig, horizon: float) -> DriveProfile:
    return DriveProfile(cfg, horizon)


def resolve_drive(cfg: ModelConfig, horizon: float | None = None) -> DriveProfile:
    if horizon is None:
        horizon = drive_horizon(cfg)
    # round so near-identical horizons share a cache slot
    return _cached_profile(cfg, float(np.ceil(horizon)))


def displacement_trajectory(cfg: ModelConfig, t_grid) -> np.ndarray:
    """alpha(t) on an explicit grid (tiers B/C machinery, also used by tier A)."""
    t_grid = np.asarray(t_grid, dtype=float)
    profile = resolve_drive(cfg, horizon=float(t_grid.max()) if t_grid.size else None)
    return np.asarray(profile.alpha(t_grid))


def effective_pulse_area(cfg: ModelConfig) -> float:
    """Emitter-frame pulse area integral 2g|alpha| dt / pi; errors on cw."""
    return resolve_drive(cfg).effective_area_pi()


def calibrate_amplitude(cfg: ModelConfig, target_area_pi: float) -> ModelConfig:
    """Rescale the envelope so the *effective* emitter-frame area hits the target.

    alpha(t) is linear in the drive amplitude, so one unit-amplitude solve
    fixes the scale exactly.
    """
    if cfg.pulse.kind == pulses.CW:
        raise ConfigError("use calibrate_cw_rabi for cw drives")
    if target_area_pi < 0:
        raise ConfigError("target area must be >= 0")
    unit = replace(cfg, pulse=cfg.pulse.scaled(1.0 / cfg.pulse.amplitude)
                   if cfg.pulse.amplitude > 0 else cfg.pulse)
    if cfg.pulse.amplitude == 0:
        raise ConfigError("cannot calibrate a zero-amplitude pulse")
    per_unit = resolve_drive(unit).effective_area_pi()
    return replace(cfg, pulse=cfg.pulse.scaled(
        target_area_pi / (per_unit * cfg.pulse.amplitude)))


def calibrate_cw_rabi(cfg: ModelConfig, target_rabi: float) -> ModelConfig:
    """Set the cw amplitude so the effective emitter Rabi 2g|alpha_ss| == target (rad/ps)."""
    if cfg.pulse.kind != pulses.CW:
        raise ConfigError("calibrate_cw_rabi requires a cw drive")
    kappa, _, g = cfg.device.rates()
    amp = target_rabi * math.hypot(2.0 * cfg.delta_c, kappa) / (2.0 * g)
    return replace(cfg, pulse=pulses.cw_pulse(amp))


# ---------------------------------------------------------------------------
# Hamiltonian assembly (dense reference; the propagator builds the same
# matrix incrementally from a cached static part)
# ---------------------------------------------------------------------------

def static_hamiltonian(cfg: ModelConfig) -> np.ndarray:
    """Drive-independent part of H in the frame implied by cfg."""
    if cfg.tier == TIER_A:
        h = np.zeros((2, 2), dtype=complex)
        h[1, 1] = cfg.delta_x
        return h
    ops = build_operators(cfg.hilbert)
    a, ad = ops["a"], ops["a_dagger"]
    sm, sp = ops["sigma_minus"], ops["sigma_plus"]
    g = cfg.device.g * cfg.b_renorm()
    return (cfg.delta_c * (ad @ a) + cfg.delta_x * (sp @ sm)
            + g * (a @ sp + ad @ sm))


def build_hamiltonian(cfg: ModelConfig, t: float) -> np.ndarray:
    """Full H(t) (rad/ps) for any tier, including the drive term."""
    h = static_hamiltonian(cfg).copy()
    if cfg.tier == TIER_A:
        drive = resolve_drive(cfg)
        w = 0.5 * drive.omega_eff(t)
        h[0, 1] += w
        h[1, 0] += w
        return h
    ops = build_operators(cfg.hilbert)
    if cfg.displaced_frame:
        eta = cfg.b_renorm() * resolve_drive(cfg).eta(t)
        h += eta * ops["sigma_plus"] + np.conj(eta) * ops["sigma_minus"]
    else:
        w = 0.5 * pulses.omega_of_t(cfg.pulse, t)
        h += w * (ops["a"] + ops["a_dagger"])
    return h
