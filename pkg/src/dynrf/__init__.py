"""Pulsed resonance-fluorescence simulator for a cavity-coupled two-level emitter."""

__version__ = "0.1.0"

from .hilbert import HilbertConfig, build_operators, expectation, lindblad_rhs
from .model import (DeviceParams, ModelConfig, build_hamiltonian,
                    calibrate_amplitude, calibrate_cw_rabi, derive_rates,
                    displacement_trajectory, effective_pulse_area)
from .phonon import PhononParams, asymmetry_check, b_average, phonon_correlation, spectral_density
from .propagate import TimeGrid, Trajectory, evolve, evolve_with_insertion
from .correlations import (CorrGridSpec, CorrelationGrid, StationaryCorrelation,
                           stationary_correlation, two_time_correlation)
from .spectra import (FilterSpec, IrfSpec, SpectrumResult, filtered_time_trace,
                      frequency_integral, intensity_integral, spectrum)
from .experiments import (PhononFit, RabiCurve, SweepSpec, detect_peaks,
                          fit_phonon_coupling, rabi_curve, run_sweep,
                          side_peaks, tier_comparison)
from . import pulses, units

__all__ = [
    "HilbertConfig", "build_operators", "expectation", "lindblad_rhs",
    "DeviceParams", "ModelConfig", "build_hamiltonian", "calibrate_amplitude",
    "calibrate_cw_rabi", "derive_rates", "displacement_trajectory",
    "effective_pulse_area", "PhononParams", "asymmetry_check", "b_average",
    "phonon_correlation", "spectral_density", "TimeGrid", "Trajectory",
    "evolve", "evolve_with_insertion", "CorrGridSpec", "CorrelationGrid",
    "StationaryCorrelation", "stationary_correlation", "two_time_correlation",
    "FilterSpec", "IrfSpec", "SpectrumResult", "filtered_time_trace",
    "frequency_integral", "intensity_integral", "spectrum", "PhononFit",
    "RabiCurve", "SweepSpec", "detect_peaks", "fit_phonon_coupling",
    "rabi_curve", "run_sweep", "side_peaks", "tier_comparison",
    "pulses", "units",
]
