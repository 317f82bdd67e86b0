"""Incoherent spectra, spectral filtering and detector-response convolution.

The long-time spectrum is the double trapezoid

    S(w) = Re sum_{t'} w_{t'} sum_{tau <= t_end - t'} w_tau g(t', tau) e^{i w tau},

with w measured relative to the laser.  A cw drive has a stationary
correlation and the spectrum is reported per unit time,
S(w) = Re int_0^taumax g(tau) e^{i w tau} dtau.
"""

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .correlations import CorrelationGrid, StationaryCorrelation
from .errors import ConfigError, NumericsError
from .units import angular_to_ghz, ghz_to_angular

DEFAULT_WINDOW = ghz_to_angular(150.0)
DEFAULT_BIN = ghz_to_angular(0.25)
# Construction-time sanity bound in units of max(S).  Truncation ringing on a
# short tau span shows up as shallow negative lobes; anything past this floor
# means the grid is badly inadequate.  Physics-grade nonnegativity (1e-8 of
# max) is asserted by the test suite on properly converged grids.
NEGATIVITY_FLOOR = 1e-4


@dataclass
class SpectrumResult:
    omega: np.ndarray          # rad/ps relative to the laser
    intensity: np.ndarray      # arbitrary units, >= 0 up to quadrature noise
    map_times: np.ndarray | None = None
    map_values: np.ndarray | None = None  # (n_times, n_omega)
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        peak = float(np.max(self.intensity)) if self.intensity.size else 0.0
        floor = float(np.min(self.intensity))
        if peak > 0 and floor < -NEGATIVITY_FLOOR * peak:
            raise NumericsError(
                f"spectrum negativity {floor / peak:.2e} exceeds the numerical floor")
        self.metadata.setdefault("negativity", floor / peak if peak > 0 else 0.0)

    @property
    def freq_ghz(self) -> np.ndarray:
        return angular_to_ghz(self.omega)


def omega_grid(window: float = DEFAULT_WINDOW, bin_width: float = DEFAULT_BIN):
    """Symmetric frequency grid about the laser."""
    n = int(round(window / bin_width))
    return bin_width * np.arange(-n, n + 1)


def _triangle_weights(corr: CorrelationGrid) -> np.ndarray:
    """Trapezoid weights in t' for every tau column of the masked triangle."""
    p, q = corr.values.shape
    dt = corr.dt_prime if p > 1 else 1.0
    span = corr.t_prime[-1] - corr.t_prime[0] if p > 1 else 0.0
    w = np.zeros((p, q))
    for c in range(q):
        if corr.tau[c] > span:
            n_valid = 1
        else:
            n_valid = p - int(math.ceil(round(corr.tau[c] / dt, 9))) if p > 1 else 1
            n_valid = max(1, min(p, n_valid + 0))
        # t' runs over indices [0, n_valid); trapezoid endpoints get half weight
        if n_valid == 1:
            w[0, c] = dt
        else:
            w[:n_valid, c] = dt
            w[0, c] = w[n_valid - 1, c] = 0.5 * dt
    return w


def _tau_weights(tau: np.ndarray) -> np.ndarray:
    if tau.size == 1:
        return np.array([1.0])
    dtau = tau[1] - tau[0]
    w = np.full(tau.size, dtau)
    w[0] = w[-1] = 0.5 * dtau
    return w


def _collapsed(corr: CorrelationGrid) -> np.ndarray:
    """F(tau) = integral over t' of g(t', tau) with triangle trapezoid weights."""
    vals = np.nan_to_num(corr.values)
    return np.einsum("pq,pq->q", _triangle_weights(corr), vals)


def spectrum(corr, window: float = DEFAULT_WINDOW, bin_width: float = DEFAULT_BIN,
             time_resolved_step: float | None = None, metadata: dict | None = None,
             instrument_fwhm: float | None = None) -> SpectrumResult:
    """Incoherent spectrum from a correlation grid (pulsed or stationary).

    time_resolved_step (ps) additionally produces the cumulative map
    S(w, t); instrument_fwhm (rad/ps) convolves the result with a Gaussian
    spectrometer response.
    """
    omega = omega_grid(window, bin_width)
    if isinstance(corr, StationaryCorrelation):
        if time_resolved_step is not None:
            raise ConfigError("time-resolved map undefined for a stationary correlation")
        _check_tau_support(corr.tau, corr.dtau, window, bin_width)
        f_tau = corr.values * _tau_weights(corr.tau)
        s = np.exp(1j * np.outer(omega, corr.tau)) @ f_tau
        result = SpectrumResult(omega=omega, intensity=np.real(s),
                                metadata=dict(metadata or {}, stationary=True))
        return _apply_instrument(result, instrument_fwhm)

    _check_tau_support(corr.tau, corr.dtau, window, bin_width)
    wt = _tau_weights(corr.tau) * _collapsed(corr)
    s = np.real(np.exp(1j * np.outer(omega, corr.tau)) @ wt)

    map_times = map_vals = None
    if time_resolved_step is not None:
        map_times, map_vals = _cumulative_map(corr, omega, time_resolved_step)

    result = SpectrumResult(omega=omega, intensity=s, map_times=map_times,
                            map_values=map_vals,
                            metadata=dict(metadata or {}, stationary=False))
    return _apply_instrument(result, instrument_fwhm)


def _check_tau_support(tau, dtau, window, bin_width):
    if dtau and window > np.pi / dtau:
        raise ConfigError(
            f"tau step {dtau} ps cannot resolve the requested window "
            f"{angular_to_ghz(window):.1f} GHz (Nyquist limit)")
    tau_span = tau[-1] - tau[0]
    if tau_span <= 0 or 2.0 * np.pi / max(tau_span, 1e-12) > 40.0 * bin_width:
        warnings.warn("tau span is short; spectral bins oversample the "
                      "achievable resolution", stacklevel=3)


def _cumulative_map(corr: CorrelationGrid, omega, t_step):
    """S(w, t): the Eq.-style double integral with upper limits t."""
    stride = max(1, int(round(t_step / corr.dtau)))
    k_marks = np.arange(0, corr.times.size, stride)
    map_times = corr.times[k_marks]
    p, q = corr.values.shape
    r = int(round(corr.dt_prime / corr.dtau))
    vals = np.nan_to_num(corr.values)
    dt, dtau = corr.dt_prime, corr.dtau
    phases = np.exp(1j * np.outer(corr.tau, omega))  # (q, n_w)
    out = np.zeros((k_marks.size, omega.size))
    # accumulate row by row: row i contributes for t >= t'_i with tau <= t - t'_i
    for i in range(p):
        row = vals[i]
        if not np.any(row != 0.0):
            continue
        # running trapezoid of g(t'_i, tau) e^{i w tau} over tau
        contrib = np.cumsum((row[:, None] * phases) * dtau, axis=0)
        contrib[1:] -= 0.5 * dtau * (row[0] * phases[0] + row[1:, None] * phases[1:])
        contrib[0] = 0.0
        caps = np.minimum(k_marks - i * r, q - 1)
        valid = caps >= 0
        w_t = dt if 0 < i < p - 1 else 0.5 * dt
        out[valid] += w_t * np.real(contrib[caps[valid]])
    return map_times, out


def _apply_instrument(result: SpectrumResult, fwhm: float | None) -> SpectrumResult:
    if not fwhm:
        return result
    sigma = fwhm / (2.0 * math.sqrt(2.0 * math.log(2.0)))
    dw = result.omega[1] - result.omega[0]
    half = int(math.ceil(4.0 * sigma / dw))
    kk = dw * np.arange(-half, half + 1)
    kernel = np.exp(-0.5 * (kk / sigma) ** 2)
    kernel /= kernel.sum()
    smoothed = np.convolve(result.intensity, kernel, mode="same")
    meta = dict(result.metadata, instrument_fwhm=fwhm)
    return SpectrumResult(omega=result.omega, intensity=smoothed,
                          map_times=result.map_times, map_values=result.map_values,
                          metadata=meta)


# ---------------------------------------------------------------------------
# Sum rule: integral S(w) dw == pi * integral <b+_d b_d>(t') dt'
# ---------------------------------------------------------------------------

def frequency_integral(result: SpectrumResult) -> float:
    return float(np.trapezoid(result.intensity, result.omega))


def intensity_integral(corr) -> float:
    """pi * time integral of the incoherent intensity (pi * g(0) for cw)."""
    if isinstance(corr, StationaryCorrelation):
        return math.pi * corr.incoherent_intensity
    g0 = np.real(np.nan_to_num(corr.values[:, 0]))
    return math.pi * float(np.trapezoid(g0, corr.t_prime))


# ---------------------------------------------------------------------------
# Spectral filtering and detector response
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FilterSpec:
    """Single-pole (Lorentzian) etalon: h(t) = G exp(-G t) exp(-i w0 t), G = fwhm/2."""

    center: float            # rad/ps relative to the laser
    fwhm: float = ghz_to_angular(8.0)

    def __post_init__(self):
        if self.fwhm <= 0:
            raise ConfigError("filter fwhm must be positive")

    def impulse_response(self, t):
        t = np.asarray(t, dtype=float)
        gam = 0.5 * self.fwhm
        return np.where(t >= 0.0, gam * np.exp(-gam * t) * np.exp(-1j * self.center * t), 0.0)


@dataclass(frozen=True)
class IrfSpec:
    """Detector response: Gaussian fast core plus exponential slow tail."""

    fast_fwhm: float = 30.0   # ps
    slow_tau: float = 350.0   # ps
    slow_weight: float = 0.1

    def __post_init__(self):
        if not (0.0 <= self.slow_weight < 1.0):
            raise ConfigError("slow_weight must be in [0, 1)")
        if self.fast_fwhm <= 0 or self.slow_tau <= 0:
            raise ConfigError("IRF time constants must be positive")

    def kernel(self, dt: float):
        """(times, weights) with unit area and nonnegative entries."""
        sigma = self.fast_fwhm / (2.0 * math.sqrt(2.0 * math.log(2.0)))
        t_lo = -math.ceil(5.0 * sigma / dt) * dt
        t_hi = math.ceil(6.0 * self.slow_tau / dt) * dt
        tt = np.arange(t_lo, t_hi + 0.5 * dt, dt)
        fast = np.exp(-0.5 * (tt / sigma) ** 2)
        fast /= np.trapezoid(fast, tt)
        slow = np.where(tt >= 0.0, np.exp(-tt / self.slow_tau) / self.slow_tau, 0.0)
        slow /= np.trapezoid(slow, tt)
        kern = (1.0 - self.slow_weight) * fast + self.slow_weight * slow
        kern /= np.trapezoid(kern, tt)
        return tt, kern


@dataclass
class TimeTrace:
    times: np.ndarray
    pre_irf: np.ndarray
    post_irf: np.ndarray | None = None
    meta: dict = field(default_factory=dict)


def square_correlation(corr: CorrelationGrid) -> np.ndarray:
    """G(t1, t2) on the square t' x t' grid via Hermitian extension."""
    p = corr.t_prime.size
    r = int(round(corr.dt_prime / corr.dtau))
    g_sq = np.zeros((p, p), dtype=complex)
    for i in range(p):
        cols = (np.arange(i, p) - i) * r
        cols = cols[cols < corr.values.shape[1]]
        row = np.nan_to_num(corr.values[i, cols])
        g_sq[i, i:i + row.size] = row
    lower = g_sq.conj().T
    g_sq = g_sq + lower - np.diag(np.diag(g_sq).real)
    return g_sq


def filtered_time_trace(corr: CorrelationGrid, filt: FilterSpec,
                        irf: IrfSpec | None = None) -> TimeTrace:
    """Intensity after the etalon: I(t) = hh* sandwich of G(t1, t2)."""
    nyquist = np.pi / corr.dtau if corr.dtau else np.inf
    if abs(filt.center) > nyquist:
        warnings.warn("filter center lies outside the resolved spectral window",
                      stacklevel=2)
    g_sq = square_correlation(corr)
    tt = corr.t_prime
    dt = corr.dt_prime
    h_mat = filt.impulse_response(tt[:, None] - tt[None, :]) * dt  # (k, i)
    tmp = h_mat.conj() @ g_sq
    trace = np.real(np.einsum("ki,ki->k", tmp, h_mat))
    trace = np.maximum(trace, 0.0)

    post = None
    if irf is not None:
        k_times, kern = irf.kernel(dt)
        full = np.convolve(trace, kern * dt)
        lead = int(round(-k_times[0] / dt))
        post = full[lead:lead + trace.size]
    return TimeTrace(times=tt.copy(), pre_irf=trace, post_irf=post,
                     meta={"filter_center_ghz": float(angular_to_ghz(filt.center)),
                           "filter_fwhm_ghz": float(angular_to_ghz(filt.fwhm)),
                           "irf": None if irf is None else
                           {"fast_fwhm_ps": irf.fast_fwhm,
                            "slow_tau_ps": irf.slow_tau,
                            "slow_weight": irf.slow_weight}})
