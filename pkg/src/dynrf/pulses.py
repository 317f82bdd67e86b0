"""Drive envelopes Omega(t).

The envelope amplitude is the bare cavity-drive Rabi frequency in rad/ps.
Pulse areas quoted to users are usually *effective* emitter-frame areas;
that calibration lives in :mod:`dynrf.model`, not here.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError

GAUSSIAN = "gaussian"
CW = "cw"
TABULATED = "tabulated"

# FWHM = 2 sqrt(2 ln 2) sigma
FWHM_TO_SIGMA = 1.0 / (2.0 * math.sqrt(2.0 * math.log(2.0)))


@dataclass(frozen=True)
class PulseEnvelope:
    kind: str
    amplitude: float  # rad/ps
    fwhm_ps: float | None = None
    center_ps: float | None = None
    table: tuple | None = None

    def __post_init__(self):
        if self.kind not in (GAUSSIAN, CW, TABULATED):
            raise ConfigError(f"unknown pulse kind {self.kind!r}")
        if self.amplitude < 0:
            raise ConfigError("pulse amplitude must be >= 0")
        if self.kind == GAUSSIAN:
            if not self.fwhm_ps or self.fwhm_ps <= 0:
                raise ConfigError("gaussian pulse requires fwhm_ps > 0")
        if self.kind == TABULATED:
            if not self.table or len(self.table) < 2:
                raise ConfigError("tabulated pulse requires >= 2 (t, omega) rows")
            ts = [row[0] for row in self.table]
            if any(t1 <= t0 for t0, t1 in zip(ts, ts[1:])):
                raise ConfigError("tabulated pulse times must be strictly increasing")
            if any(row[1] < 0 for row in self.table):
                raise ConfigError("tabulated pulse amplitudes must be >= 0")

    @property
    def sigma_ps(self) -> float:
        if self.kind != GAUSSIAN:
            raise ConfigError("sigma only defined for gaussian pulses")
        return self.fwhm_ps * FWHM_TO_SIGMA

    @property
    def center(self) -> float:
        """Pulse center; defaults to 4 sigma so Omega(0) is negligible."""
        if self.center_ps is not None:
            return self.center_ps
        if self.kind == GAUSSIAN:
            return 4.0 * self.sigma_ps
        return 0.0

    def scaled(self, factor: float) -> "PulseEnvelope":
        """Envelope with amplitude multiplied by ``factor`` (shape unchanged)."""
        if self.kind == TABULATED:
            table = tuple((t, factor * w) for t, w in self.table)
            return PulseEnvelope(self.kind, factor * self.amplitude,
                                 self.fwhm_ps, self.center_ps, table)
        return PulseEnvelope(self.kind, factor * self.amplitude,
                             self.fwhm_ps, self.center_ps, self.table)


def gaussian_pulse(*, area_pi=None, amplitude=None, fwhm_ps, center_ps=None):
    """Gaussian envelope from either its raw area (units of pi) or its peak.

    The raw area obeys area = amplitude * sigma * sqrt(2 pi).
    """
    sigma = fwhm_ps * FWHM_TO_SIGMA
    if (area_pi is None) == (amplitude is None):
        raise ConfigError("specify exactly one of area_pi / amplitude")
    if amplitude is None:
        amplitude = area_pi * math.pi / (sigma * math.sqrt(2.0 * math.pi))
    return PulseEnvelope(GAUSSIAN, float(amplitude), float(fwhm_ps), center_ps)


def cw_pulse(amplitude):
    return PulseEnvelope(CW, float(amplitude))


def tabulated_pulse(table):
    table = tuple((float(t), float(w)) for t, w in table)
    return PulseEnvelope(TABULATED, max(w for _, w in table), table=table)


def omega_of_t(pulse: PulseEnvelope, t):
    """Instantaneous drive Omega(t) in rad/ps; vectorized over t."""
    t = np.asarray(t, dtype=float)
    if pulse.kind == CW:
        return np.broadcast_to(pulse.amplitude, t.shape).copy() if t.ndim else float(pulse.amplitude)
    if pulse.kind == GAUSSIAN:
        s = pulse.sigma_ps
        val = pulse.amplitude * np.exp(-((t - pulse.center) ** 2) / (2.0 * s * s))
        return val if t.ndim else float(val)
    ts = np.array([row[0] for row in pulse.table])
    ws = np.array([row[1] for row in pulse.table])
    val = np.interp(t, ts, ws, left=0.0, right=0.0)
    return val if t.ndim else float(val)


def raw_area(pulse: PulseEnvelope) -> float:
    """Time integral of Omega(t) in rad; infinite (error) for cw."""
    if pulse.kind == CW:
        raise ConfigError("pulse area undefined for cw drive")
    if pulse.kind == GAUSSIAN:
        return pulse.amplitude * pulse.sigma_ps * math.sqrt(2.0 * math.pi)
    ts = np.array([row[0] for row in pulse.table])
    ws = np.array([row[1] for row in pulse.table])
    return float(np.trapezoid(ws, ts))


def support_end(pulse: PulseEnvelope) -> float:
    """Time after which the envelope is negligible (cw: 0, it never ends)."""
    if pulse.kind == GAUSSIAN:
        return pulse.center + 5.0 * pulse.sigma_ps
    if pulse.kind == TABULATED:
        return pulse.table[-1][0]
    return 0.0
