"""Unit conventions and physical constants.

Internally everything runs in angular frequency (rad/ps) and time (ps).
All user-facing I/O uses ordinary frequency in GHz and time in ps; the
factor of 2*pi lives only at the boundary, in the helpers below.
"""

import numpy as np

# speed of light in nm/ps
C_NM_PER_PS = 299792.458

# hbar / k_B in ps * K; multiplies (omega [rad/ps] / T [K]) in thermal factors
HBAR_OVER_KB_PS_K = 1.0545718176461565e-22 / 1.380649e-23


def ghz_to_angular(freq_ghz):
    """Ordinary frequency in GHz -> angular frequency in rad/ps."""
    return 2.0 * np.pi * np.asarray(freq_ghz) * 1e-3


def angular_to_ghz(omega_rad_ps):
    """Angular frequency in rad/ps -> ordinary frequency in GHz."""
    return np.asarray(omega_rad_ps) * 1e3 / (2.0 * np.pi)


def thz_to_angular(freq_thz):
    """Ordinary frequency in THz -> angular frequency in rad/ps."""
    return 2.0 * np.pi * np.asarray(freq_thz)


def thermal_frequency(temperature_k):
    """k_B T / hbar in rad/ps (~0.524 rad/ps at 4 K)."""
    if temperature_k <= 0:
        raise ValueError("temperature must be positive")
    return temperature_k / HBAR_OVER_KB_PS_K
