"""Figure-level drivers: sweeps, peak analysis, Rabi curves, phonon fitting.

Sweep axes and their calibration conventions:

* ``amplitude`` -- values are effective emitter-frame areas in pi units;
  each member is recalibrated from one unit-amplitude solve (linear).
* ``pulse_width`` -- values are fwhm in ps at the base config's effective
  area (recalibrated per width).
* ``cavity_detuning`` -- values are Delta_c/(2 pi) in GHz; the effective
  area label is held fixed (recalibrated per detuning).
* ``laser_detuning`` -- values are the laser offset from the exciton in
  GHz; the cavity-exciton offset and the drive *envelope* stay fixed
  (fixed input power, as in the measurement).
"""

import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import curve_fit
from scipy.signal import find_peaks, peak_widths

from .correlations import CorrGridSpec, two_time_correlation
from .errors import ConfigError, NumericsError
from .model import ModelConfig, calibrate_amplitude
from .phonon import PhononParams
from .propagate import default_t_end
from .pulses import CW, gaussian_pulse
from .spectra import DEFAULT_BIN, DEFAULT_WINDOW, SpectrumResult, spectrum
from .units import ghz_to_angular

SWEEP_AXES = ("amplitude", "laser_detuning", "cavity_detuning", "pulse_width")


@dataclass(frozen=True)
class SweepSpec:
    axis: str
    values: tuple
    base: ModelConfig
    corr: CorrGridSpec | None = None
    window: float = DEFAULT_WINDOW
    bin_width: float = DEFAULT_BIN
    instrument_fwhm: float | None = None

    def __post_init__(self):
        if self.axis not in SWEEP_AXES:
            raise ConfigError(f"unknown sweep axis {self.axis!r}; choose from {SWEEP_AXES}")
        if not self.values:
            raise ConfigError("sweep values must be nonempty")
        diffs = np.diff(np.asarray(self.values, dtype=float))
        if not (np.all(diffs > 0) or np.all(diffs < 0)):
            raise ConfigError("sweep values must be strictly monotone")


def sweep_member(spec: SweepSpec, value: float) -> ModelConfig:
    """The ModelConfig for one sweep value."""
    base = spec.base
    if spec.axis == "amplitude":
        if base.pulse.kind == CW:
            raise ConfigError("amplitude sweep requires a pulsed base config")
        return calibrate_amplitude(base, float(value))
    if spec.axis == "pulse_width":
        area = _base_area(base)
        pulse = gaussian_pulse(area_pi=1.0, fwhm_ps=float(value),
                               center_ps=base.pulse.center_ps)
        return calibrate_amplitude(replace(base, pulse=pulse), area)
    if spec.axis == "cavity_detuning":
        area = _base_area(base)
        moved = replace(base, delta_c=ghz_to_angular(float(value)))
        return calibrate_amplitude(moved, area)
    # laser_detuning: shift the rotating frame, keep envelope and the
    # cavity-exciton offset fixed
    offset = base.delta_c - base.delta_x
    delta_x = -ghz_to_angular(float(value))
    return replace(base, delta_x=delta_x, delta_c=delta_x + offset)


def _base_area(base: ModelConfig) -> float:
    from .model import effective_pulse_area

    return effective_pulse_area(base)


def _run_member(args):
    spec, value = args
    cfg = sweep_member(spec, value)
    corr_spec = spec.corr or CorrGridSpec(t_end=default_t_end(cfg))
    corr = two_time_correlation(cfg, corr_spec)
    return spectrum(corr, window=spec.window, bin_width=spec.bin_width,
                    instrument_fwhm=spec.instrument_fwhm,
                    metadata={"sweep_axis": spec.axis, "sweep_value": float(value)})


def run_sweep(spec: SweepSpec, jobs: int = 1) -> list[SpectrumResult]:
    """One long-time spectrum per sweep value, identical grids, stable order."""
    tasks = [(spec, v) for v in spec.values]
    if jobs <= 1 or len(tasks) == 1:
        results = []
        for task in tasks:
            try:
                results.append(_run_member(task))
            except Exception as exc:
                raise NumericsError(
                    f"sweep member {spec.axis}={task[1]} failed: {exc}") from exc
        return results
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        try:
            return list(pool.map(_run_member, tasks))
        except Exception as exc:
            raise NumericsError(f"sweep failed: {exc}") from exc


# ---------------------------------------------------------------------------
# Peak analysis
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Peak:
    center_ghz: float
    height: float
    prominence: float
    fwhm_ghz: float


def detect_peaks(result: SpectrumResult, prominence_frac: float = 0.02,
                 reference_max: float | None = None) -> list[Peak]:
    """Local maxima with prominence >= prominence_frac * reference.

    Centers are refined by parabolic interpolation, widths taken at half
    prominence-free height.  The reference defaults to max(S).
    """
    s = result.intensity
    if not s.size or s.max() <= 0:
        return []
    ref = reference_max if reference_max is not None else float(s.max())
    idx, props = find_peaks(s, prominence=prominence_frac * ref)
    if idx.size == 0:
        return []
    widths = peak_widths(s, idx, rel_height=0.5)[0]
    freq = result.freq_ghz
    dfreq = freq[1] - freq[0]
    peaks = []
    for i, width, prom in zip(idx, widths, props["prominences"]):
        center = freq[i]
        if 0 < i < s.size - 1:
            denom = s[i - 1] - 2.0 * s[i] + s[i + 1]
            if denom != 0.0:
                center = center + 0.5 * dfreq * (s[i - 1] - s[i + 1]) / denom
        peaks.append(Peak(center_ghz=float(center), height=float(s[i]),
                          prominence=float(prom), fwhm_ghz=float(width * dfreq)))
    return sorted(peaks, key=lambda p: p.center_ghz)


def side_peaks(result: SpectrumResult, min_offset_ghz: float = 5.0,
               prominence_frac: float = 0.02) -> list[Peak]:
    """Peaks outside the central window, prominence referenced to the
    tallest *side* feature (the central line can dwarf them by 100x)."""
    freq = result.freq_ghz
    outside = np.abs(freq) >= min_offset_ghz
    if not outside.any():
        return []
    ref = float(result.intensity[outside].max())
    if ref <= 0:
        return []
    peaks = detect_peaks(result, prominence_frac, reference_max=ref)
    return [p for p in peaks if abs(p.center_ghz) >= min_offset_ghz]


def window_height(result: SpectrumResult, center_ghz: float,
                  half_width_ghz: float = 3.0) -> float:
    """max S inside a window; robust mirror-height probe when the mirror
    peak is suppressed below detection."""
    freq = result.freq_ghz
    sel = (freq >= center_ghz - half_width_ghz) & (freq <= center_ghz + half_width_ghz)
    if not sel.any():
        raise ConfigError("window outside the computed spectrum")
    return float(result.intensity[sel].max())


def outermost_side_peak(peaks: list[Peak], sign: int = 0) -> Peak | None:
    """Largest-|center| side peak, optionally restricted to one sign."""
    pool = [p for p in peaks if sign == 0 or np.sign(p.center_ghz) == sign]
    if not pool:
        return None
    return max(pool, key=lambda p: abs(p.center_ghz))


def mirror_ratio(result: SpectrumResult, peak: Peak,
                 half_width_ghz: float = 3.0) -> float:
    """height(peak) / height at the mirrored position."""
    return peak.height / window_height(result, -peak.center_ghz, half_width_ghz)


# ---------------------------------------------------------------------------
# Rabi curves and the phonon-coupling fit
# ---------------------------------------------------------------------------

@dataclass
class RabiCurve:
    amplitudes: np.ndarray         # effective areas, pi units
    intensities: np.ndarray
    maxima: np.ndarray = field(default_factory=lambda: np.array([]))
    minima: np.ndarray = field(default_factory=lambda: np.array([]))
    fit_params: dict = field(default_factory=dict)


def _damped_rabi(x, amp, period, x_damp, offset):
    return 0.5 * amp * (1.0 - np.exp(-x / x_damp) * np.cos(2.0 * np.pi * x / period)) + offset


def rabi_curve(base: ModelConfig, amplitudes, window_ghz: float = 5.0,
               corr: CorrGridSpec | None = None, jobs: int = 1,
               bin_ghz: float = 0.5) -> RabiCurve:
    """Central-peak integrated intensity vs effective pulse area."""
    amplitudes = np.asarray(amplitudes, dtype=float)
    spec = SweepSpec(axis="amplitude", values=tuple(amplitudes), base=base,
                     corr=corr, window=ghz_to_angular(4.0 * window_ghz),
                     bin_width=ghz_to_angular(bin_ghz))
    results = run_sweep(spec, jobs=jobs)
    freq = results[0].freq_ghz
    sel = np.abs(freq) <= window_ghz
    intensities = np.array([np.trapezoid(r.intensity[sel], freq[sel]) for r in results])

    strongest = results[-1]
    for p in side_peaks(strongest, min_offset_ghz=window_ghz * 0.5):
        if abs(p.center_ghz) <= window_ghz:
            warnings.warn(
                f"integration window +-{window_ghz} GHz overlaps a side peak "
                f"at {p.center_ghz:.1f} GHz", stacklevel=2)
            break

    idx_max, _ = find_peaks(intensities)
    idx_min, _ = find_peaks(-intensities)
    fit = {}
    if amplitudes.size >= 5 and intensities.max() > 0:
        try:
            p0 = (float(intensities.max()), 2.0, max(amplitudes.max(), 1.0), 0.0)
            popt, _ = curve_fit(_damped_rabi, amplitudes, intensities, p0=p0,
                                maxfev=20000)
            fit = {"amplitude": popt[0], "period": popt[1],
                   "damping_area": popt[2], "offset": popt[3]}
        except Exception:  # fit is advisory; the sampled curve stands alone
            fit = {}
    return RabiCurve(amplitudes=amplitudes, intensities=intensities,
                     maxima=amplitudes[idx_max], minima=amplitudes[idx_min],
                     fit_params=fit)


@dataclass
class PhononFit:
    params: PhononParams
    scale: float
    residual: float
    iterations: int
    at_bound: bool
    history: list


_INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


def fit_phonon_coupling(target: RabiCurve, base: ModelConfig,
                        alpha_max: float, alpha_min: float = 0.0,
                        rel_tol: float = 0.02, max_iter: int = 40,
                        corr: CorrGridSpec | None = None,
                        jobs: int = 1) -> PhononFit:
    """Golden-section fit of the phonon coupling to a Rabi curve.

    Residual: least squares between the target intensities and the
    simulated curve at the same amplitudes, with a closed-form overall
    scale.  Only alpha varies; the cutoff frequency stays fixed.
    """
    if base.tier != "C":
        raise ConfigError("phonon fit requires a tier C base config")
    if alpha_max <= alpha_min:
        raise ConfigError("alpha_max must exceed alpha_min")
    target_i = np.asarray(target.intensities, dtype=float)
    amps = np.asarray(target.amplitudes, dtype=float)
    if np.any(np.diff(amps) <= 0):
        raise ConfigError("target amplitudes must be strictly increasing")

    cache: dict[float, tuple[float, float]] = {}

    def residual(alpha: float):
        if alpha in cache:
            return cache[alpha]
        cfg = replace(base, phonon=replace(base.phonon, alpha_ps2=float(alpha)))
        sim = rabi_curve(cfg, amps, corr=corr, jobs=jobs).intensities
        denom = float(np.dot(sim, sim))
        scale = float(np.dot(target_i, sim) / denom) if denom > 0 else 0.0
        res = float(np.sum((target_i - scale * sim) ** 2))
        cache[alpha] = (res, scale)
        return cache[alpha]

    lo, hi = float(alpha_min), float(alpha_max)
    span0 = hi - lo
    c = hi - _INV_PHI * (hi - lo)
    d = lo + _INV_PHI * (hi - lo)
    fc, _ = residual(c)
    fd, _ = residual(d)
    history = [min(fc, fd)]
    iters = 2
    while (hi - lo) > rel_tol * span0 and iters < max_iter:
        if fc < fd:
            hi, d, fd = d, c, fc
            c = hi - _INV_PHI * (hi - lo)
            fc, _ = residual(c)
        else:
            lo, c, fc = c, d, fd
            d = lo + _INV_PHI * (hi - lo)
            fd, _ = residual(d)
        history.append(min(fc, fd))
        iters += 1
    if iters >= max_iter and (hi - lo) > rel_tol * span0:
        raise NumericsError("phonon fit did not converge within max_iter")
    best = c if fc < fd else d
    res, scale = residual(best)
    at_bound = (best - alpha_min) < 2 * rel_tol * span0 or \
               (alpha_max - best) < 2 * rel_tol * span0
    return PhononFit(params=replace(base.phonon, alpha_ps2=float(best)),
                     scale=scale, residual=res, iterations=iters,
                     at_bound=at_bound, history=history)


# ---------------------------------------------------------------------------
# Model-tier comparison
# ---------------------------------------------------------------------------

def tier_comparison(base: ModelConfig, areas, corr: CorrGridSpec | None = None,
                    window: float = DEFAULT_WINDOW, bin_width: float = DEFAULT_BIN,
                    jobs: int = 1) -> dict:
    """Run tiers A, B, C on the identical amplitude sweep.

    Returns {tier: {"spectra": [...], "asymmetry": [...]}} where the
    asymmetry is the mirrored height ratio of the outermost side peak on
    the cavity side (sign of Delta_c; falls back to the plain outermost
    peak when the cavity sits on resonance).
    """
    out = {}
    sign = int(np.sign(base.delta_c))
    for tier in ("A", "B", "C"):
        if tier == "C" and base.phonon is None:
            continue
        cfg = replace(base, tier=tier)
        spec = SweepSpec(axis="amplitude", values=tuple(areas), base=cfg,
                         corr=corr, window=window, bin_width=bin_width)
        results = run_sweep(spec, jobs=jobs)
        ratios = []
        for r in results:
            peaks = side_peaks(r)
            s1 = outermost_side_peak(peaks, sign=sign)
            ratios.append(mirror_ratio(r, s1) if s1 is not None else np.nan)
        out[tier] = {"spectra": results, "asymmetry": ratios}
    return out
