"""Acoustic-phonon coupling via the time-local polaron scattering term.

Superohmic deformation-potential spectral density
J(w) = alpha_p w^3 exp(-w^2 / 2 w_b^2), bath correlation

    phi(tau) = int_0^inf dw J(w)/w^2 [coth(hbar w / 2 kT) cos(w tau)
                                      - i sin(w tau)],

renormalization <B> = exp(-phi(0)/2), and kernel functions
G_g = cosh(phi) - 1, G_u = sinh(phi).  The scattering superoperator is

    D_ph rho = -sum_m [ X_m A_m rho + rho A_m^+ X_m
                        - A_m rho X_m - X_m rho A_m^+ ],

with A_m = int_0^tau_c G_m(tau) X_m(-tau) dtau and X_m(-tau) evolved
under the frozen system Hamiltonian.  This map is trace-preserving for
any input matrix, Hermitian or not, which is what the regression-theorem
propagation requires.
"""

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.integrate import quad
from scipy.linalg import eigh

from .errors import ConfigError, QuadratureError
from .hilbert import lmul, rmul
from .units import HBAR_OVER_KB_PS_K, thz_to_angular

_KERNEL_NODES = 64
_CUTOFF_FRACTION = 1e-4  # required decay of |phi| at tau_cutoff


def default_tau_cutoff(omega_b: float) -> float:
    """Five cutoff-frequency periods; ~5 ps for omega_b/(2 pi) = 1 THz."""
    return 5.0 * 2.0 * math.pi / omega_b


@dataclass(frozen=True)
class PhononParams:
    alpha_ps2: float  # exciton-phonon coupling strength, ps^2
    omega_b: float = thz_to_angular(1.0)  # cutoff frequency, rad/ps
    temperature_k: float = 4.0
    tau_cutoff_ps: float | None = None

    def __post_init__(self):
        if self.alpha_ps2 < 0:
            raise ConfigError("alpha_ps2 must be >= 0")
        if self.omega_b <= 0:
            raise ConfigError("omega_b must be positive")
        if self.temperature_k <= 0:
            raise ConfigError("temperature must be positive")
        if self.tau_cutoff_ps is None:
            object.__setattr__(self, "tau_cutoff_ps", default_tau_cutoff(self.omega_b))
        if self.tau_cutoff_ps <= 0:
            raise ConfigError("tau_cutoff_ps must be positive")


def spectral_density(omega, p: PhononParams):
    """J(omega) in rad/ps for omega >= 0."""
    omega = np.asarray(omega, dtype=float)
    if np.any(omega < 0):
        raise ValueError("spectral density defined for omega >= 0")
    return p.alpha_ps2 * omega ** 3 * np.exp(-(omega ** 2) / (2.0 * p.omega_b ** 2))


def phonon_correlation(tau: float, p: PhononParams, rel_tol: float = 1e-10) -> complex:
    """Bath correlation phi(tau) by adaptive quadrature, upper cutoff 8 w_b."""
    if tau < 0:
        raise ValueError("phonon correlation defined for tau >= 0")
    if p.alpha_ps2 == 0.0:
        return 0.0 + 0.0j
    beta_scale = HBAR_OVER_KB_PS_K / (2.0 * p.temperature_k)
    wb2 = 2.0 * p.omega_b ** 2

    def real_part(w):
        return (p.alpha_ps2 * w * np.exp(-w * w / wb2)
                / np.tanh(beta_scale * w) * np.cos(w * tau))

    def imag_part(w):
        return p.alpha_ps2 * w * np.exp(-w * w / wb2) * np.sin(w * tau)

    upper = 8.0 * p.omega_b
    re, re_err = quad(real_part, 0.0, upper, limit=400, epsabs=1e-14, epsrel=rel_tol)
    im, im_err = quad(imag_part, 0.0, upper, limit=400, epsabs=1e-14, epsrel=rel_tol)
    if not (np.isfinite(re) and np.isfinite(im)):
        raise QuadratureError(f"phonon correlation quadrature diverged at tau={tau}")
    return complex(re, -im)


@lru_cache(maxsize=64)
def b_average(p: PhononParams) -> float:
    """Thermal displacement average <B> = exp(-phi(0)/2), in (0, 1]."""
    if p.alpha_ps2 == 0.0:
        return 1.0
    phi0 = phonon_correlation(0.0, p)
    return float(math.exp(-0.5 * phi0.real))


class PolaronKernel:
    """Precomputed tau-quadrature of the scattering kernel for one parameter set.

    The tau integral uses fixed 64-point Gauss-Legendre nodes on
    [0, tau_cutoff]; G_g/G_u at the nodes are cached here, and the
    frozen-Hamiltonian matrices (A_g, A_u) are cached against the most
    recent Hamiltonian signature so the post-pulse tail reuses them.
    """

    def __init__(self, params: PhononParams):
        self.params = params
        self.b = b_average(params)
        tau_c = params.tau_cutoff_ps
        x, w = np.polynomial.legendre.leggauss(_KERNEL_NODES)
        self.nodes = 0.5 * tau_c * (x + 1.0)
        self.weights = 0.5 * tau_c * w
        phi = np.array([phonon_correlation(t, params) for t in self.nodes])
        self.g_g = np.cosh(phi) - 1.0
        self.g_u = np.sinh(phi)
        if params.alpha_ps2 > 0.0:
            phi0 = abs(phonon_correlation(0.0, params))
            phi_end = abs(phonon_correlation(tau_c, params))
            if phi_end > _CUTOFF_FRACTION * phi0:
                raise ConfigError(
                    f"tau_cutoff_ps={tau_c:g} too small: |phi| only decays to "
                    f"{phi_end / phi0:.2e} of phi(0)")

    def scattering_matrices(self, h_sys: np.ndarray, x_g: np.ndarray, x_u: np.ndarray):
        """(A_g, A_u) = int_0^tau_c G_m(tau) X_m(-tau) dtau for frozen h_sys."""
        evals, u = eigh(h_sys)
        dl = evals[:, None] - evals[None, :]
        # phase[i, j, k] = exp(-i (l_i - l_j) tau_k), shared by both channels
        phase = np.exp(-1j * dl[:, :, None] * self.nodes[None, None, :])
        w_g = phase @ (self.weights * self.g_g)
        w_u = phase @ (self.weights * self.g_u)
        u_dag = u.conj().T
        a_g = u @ ((u_dag @ x_g @ u) * w_g) @ u_dag
        a_u = u @ ((u_dag @ x_u @ u) * w_u) @ u_dag
        return a_g, a_u

    def apply(self, batch: np.ndarray, x_g, x_u, a_g, a_u) -> np.ndarray:
        """The scattering contribution to d(batch)/dt (same stack shape)."""
        out = np.zeros_like(batch)
        for x, a in ((x_g, a_g), (x_u, a_u)):
            p = x @ a
            out -= lmul(p, batch)
            out -= rmul(batch, p.conj().T)
            out += rmul(lmul(a, batch), x)
            out += lmul(x, rmul(batch, a.conj().T))
        return out


@lru_cache(maxsize=16)
def polaron_kernel(params: PhononParams) -> PolaronKernel:
    return PolaronKernel(params)


def coupling_operators(drive_amp: complex, jc_coupling: float, b: float,
                       sigma_plus: np.ndarray, sigma_minus: np.ndarray,
                       a: np.ndarray, a_dagger: np.ndarray):
    """Polaron interaction operators (X_g, X_u) for emitter drive eta = drive_amp.

    For a real drive eta = Omega_eff/2 these reduce to
    X_g = <B> [ (Omega_eff/2)(s+ + s-) + g (a s+ + a+ s-) ],
    X_u = i <B> [ (Omega_eff/2)(s+ - s-) + g (a s+ - a+ s-) ].
    """
    up = drive_amp * sigma_plus + jc_coupling * (a @ sigma_plus)
    down = np.conj(drive_amp) * sigma_minus + jc_coupling * (a_dagger @ sigma_minus)
    x_g = b * (up + down)
    x_u = 1j * b * (up - down)
    return x_g, x_u


def polaron_dissipator(rho: np.ndarray, h_sys: np.ndarray, params: PhononParams,
                       drive_amp: complex, jc_coupling: float,
                       sigma_plus=None, sigma_minus=None, a=None, a_dagger=None):
    """One-shot scattering term for a single state (convenience/reference path).

    h_sys must already be the polaron-frame Hamiltonian (couplings carry <B>).
    The production propagator calls the kernel directly with caching.
    """
    from .hilbert import HilbertConfig, build_operators

    if sigma_plus is None:
        dim = rho.shape[0]
        ops = build_operators(HilbertConfig(dim // 2 - 1))
        sigma_plus, sigma_minus = ops["sigma_plus"], ops["sigma_minus"]
        a, a_dagger = ops["a"], ops["a_dagger"]
    kernel = polaron_kernel(params)
    x_g, x_u = coupling_operators(drive_amp, jc_coupling, kernel.b,
                                  sigma_plus, sigma_minus, a, a_dagger)
    a_g, a_u = kernel.scattering_matrices(np.asarray(h_sys, dtype=complex), x_g, x_u)
    return kernel.apply(rho[None, :, :], x_g, x_u, a_g, a_u)[0]


def asymmetry_check(params: PhononParams, delta: float):
    """Phonon-assisted (down, up) relaxation rates across a dressed gap delta.

    Extracted from the u-channel kernel exactly as the dissipator sees it:
    rate(+/-delta) = |X_ud|^2 * 2 Re int_0^tau_c sinh(phi) e^{+/- i delta tau},
    with the dressed-state matrix element |X_ud| = delta/2 of a resonantly
    driven emitter whose renormalized Rabi frequency equals the gap.  The
    ratio obeys detailed balance exp(hbar delta / kT) up to quadrature error.
    """
    if delta == 0:
        raise ValueError("asymmetry_check requires a nonzero dressed gap")
    delta = abs(delta)
    if params.alpha_ps2 == 0.0:
        return 0.0, 0.0
    kernel = polaron_kernel(params)
    elem2 = 0.25 * delta * delta
    down = elem2 * 2.0 * np.real(
        np.sum(kernel.weights * kernel.g_u * np.exp(1j * delta * kernel.nodes)))
    up = elem2 * 2.0 * np.real(
        np.sum(kernel.weights * kernel.g_u * np.exp(-1j * delta * kernel.nodes)))
    return float(down), float(up)
