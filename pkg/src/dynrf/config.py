"""Config schema, validation and run manifests.

Configs are YAML with a strict schema: unknown fields are rejected with
their full path, because a silently ignored typo in a physics parameter
is the worst failure mode this tool can have.  All frequencies are
ordinary GHz, times ps; the rad/ps convention never leaks out.

A run manifest (JSON) contains the fully resolved config and can be fed
back in place of a config file; in fixed-step mode that reproduces the
outputs bit for bit.
"""

import hashlib
import json
from dataclasses import dataclass

import yaml

from . import __version__
from .correlations import CorrGridSpec
from .errors import ConfigError
from .hilbert import HilbertConfig
from .model import (DeviceParams, ModelConfig, calibrate_amplitude,
                    calibrate_cw_rabi, normalize_tier)
from .phonon import PhononParams, b_average, default_tau_cutoff
from .pulses import cw_pulse, gaussian_pulse, tabulated_pulse
from .units import angular_to_ghz, ghz_to_angular, thz_to_angular

_SCHEMA = {
    "device": {"q_factor", "purcell", "lifetime_ps", "wavelength_nm", "temperature_K"},
    "detunings_GHz": {"cavity", "exciton"},
    "pulse": {"kind", "area_pi", "fwhm_ps", "center_ps", "amplitude_GHz",
              "raw_area", "table"},
    "model": {"tier", "fock_cutoff", "displaced_frame", "pure_dephasing_GHz"},
    "phonon": {"alpha_ps2", "omega_b_THz", "tau_cutoff_ps"},
    "grid": {"t_start_ps", "t_end_ps", "dt_prime_ps", "dtau_ps", "tau_max_ps",
             "rtol", "atol"},
    "spectrum": {"window_GHz", "bin_GHz", "instrument_fwhm_GHz",
                 "map_step_ps", "cw_tau_max_ps", "cw_dtau_ps"},
}
_REQUIRED = ("device", "pulse", "model")


def _reject_unknown(section: str, data: dict, allowed: set):
    if not isinstance(data, dict):
        raise ConfigError(f"section '{section}' must be a mapping")
    for key in data:
        if key not in allowed:
            raise ConfigError(f"unknown field '{section}.{key}'")


def _need(data: dict, section: str, key: str):
    if key not in data or data[key] is None:
        raise ConfigError(f"missing required field '{section}.{key}'")
    return data[key]


def load_config_file(path: str) -> dict:
    """YAML config, or a manifest JSON (its resolved config is reused)."""
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path} does not contain a mapping")
    if "config" in data and "tool" in data:  # manifest round-trip
        data = data["config"]
    return data


@dataclass
class ResolvedRun:
    """A validated config plus derived grids, ready to execute."""

    model: ModelConfig
    raw: dict                  # resolved config (defaults expanded)
    grid: dict                 # CorrGridSpec kwargs (pulsed) / cw settings
    spectrum_opts: dict

    def corr_spec(self, t_end: float, fixed_step=None) -> CorrGridSpec:
        g = self.grid
        return CorrGridSpec(
            t_end=g.get("t_end_ps") or t_end,
            t_start=g.get("t_start_ps", 0.0),
            dt_prime=g.get("dt_prime_ps", 1.0),
            dtau=g.get("dtau_ps", 0.5),
            tau_max=g.get("tau_max_ps"),
            rtol=g.get("rtol", 1e-8),
            atol=g.get("atol", 1e-10),
            fixed_step=fixed_step,
        )


def build_run(data: dict, tier_override: str | None = None) -> ResolvedRun:
    for section in data:
        if section not in _SCHEMA:
            raise ConfigError(f"unknown section '{section}'")
    for section in _REQUIRED:
        if section not in data:
            raise ConfigError(f"missing required section '{section}'")
    for section, content in data.items():
        _reject_unknown(section, content, _SCHEMA[section])

    dev = data["device"]
    device = DeviceParams(
        q_factor=float(_need(dev, "device", "q_factor")),
        purcell=float(_need(dev, "device", "purcell")),
        lifetime_ps=float(_need(dev, "device", "lifetime_ps")),
        wavelength_nm=float(dev.get("wavelength_nm", 900.0)),
        temperature_k=float(dev.get("temperature_K", 4.0)),
    )

    det = data.get("detunings_GHz", {})
    delta_c = ghz_to_angular(float(det.get("cavity", 0.0)))
    delta_x = ghz_to_angular(float(det.get("exciton", 0.0)))

    mdl = data["model"]
    tier = normalize_tier(tier_override or _need(mdl, "model", "tier"))
    hilbert = HilbertConfig(int(mdl.get("fock_cutoff", 6)))
    displaced = bool(mdl.get("displaced_frame", True))
    dephasing = ghz_to_angular(float(mdl.get("pure_dephasing_GHz", 0.0)))

    phonon = None
    if "phonon" in data or tier == "C":
        ph = data.get("phonon", {})
        if tier == "C" and "alpha_ps2" not in ph:
            raise ConfigError("missing required field 'phonon.alpha_ps2' (tier C)")
        omega_b = thz_to_angular(float(ph.get("omega_b_THz", 1.0)))
        phonon = PhononParams(
            alpha_ps2=float(ph.get("alpha_ps2", 0.0)),
            omega_b=omega_b,
            temperature_k=device.temperature_k,
            tau_cutoff_ps=(float(ph["tau_cutoff_ps"])
                           if ph.get("tau_cutoff_ps") is not None
                           else default_tau_cutoff(omega_b)),
        )

    pls = data["pulse"]
    kind = str(_need(pls, "pulse", "kind")).lower()
    raw_area = bool(pls.get("raw_area", False))
    if kind == "gaussian":
        fwhm = float(_need(pls, "pulse", "fwhm_ps"))
        center = pls.get("center_ps")
        if pls.get("area_pi") is None and pls.get("amplitude_GHz") is None:
            raise ConfigError("pulse needs 'area_pi' or 'amplitude_GHz'")
        if pls.get("amplitude_GHz") is not None:
            pulse = gaussian_pulse(amplitude=ghz_to_angular(float(pls["amplitude_GHz"])),
                                   fwhm_ps=fwhm, center_ps=center)
            calibrate_to = None
        else:
            pulse = gaussian_pulse(area_pi=float(pls["area_pi"]), fwhm_ps=fwhm,
                                   center_ps=center)
            calibrate_to = None if raw_area else float(pls["area_pi"])
    elif kind == "cw":
        amp_ghz = float(_need(pls, "pulse", "amplitude_GHz"))
        pulse = cw_pulse(ghz_to_angular(amp_ghz))
        calibrate_to = None if raw_area else ghz_to_angular(amp_ghz)
    elif kind == "tabulated":
        table = _need(pls, "pulse", "table")
        pulse = tabulated_pulse([(float(t), ghz_to_angular(float(w)))
                                 for t, w in table])
        calibrate_to = (None if raw_area or pls.get("area_pi") is None
                        else float(pls["area_pi"]))
    else:
        raise ConfigError(f"unknown pulse.kind '{kind}'")

    cfg = ModelConfig(tier=tier, device=device, pulse=pulse, delta_c=delta_c,
                      delta_x=delta_x, hilbert=hilbert, displaced_frame=displaced,
                      phonon=phonon, pure_dephasing=dephasing)
    if calibrate_to is not None:
        if kind == "cw":
            cfg = calibrate_cw_rabi(cfg, calibrate_to)
        else:
            cfg = calibrate_amplitude(cfg, calibrate_to)

    resolved = _resolve_raw(data, cfg)
    return ResolvedRun(model=cfg, raw=resolved,
                       grid=dict(data.get("grid", {})),
                       spectrum_opts=dict(data.get("spectrum", {})))


def _resolve_raw(data: dict, cfg: ModelConfig) -> dict:
    """Config with all defaults expanded (for the manifest)."""
    out = {k: dict(v) for k, v in data.items()}
    out.setdefault("detunings_GHz", {})
    out["detunings_GHz"].setdefault("cavity", float(angular_to_ghz(cfg.delta_c)))
    out["detunings_GHz"].setdefault("exciton", float(angular_to_ghz(cfg.delta_x)))
    out["device"].setdefault("wavelength_nm", cfg.device.wavelength_nm)
    out["device"].setdefault("temperature_K", cfg.device.temperature_k)
    out["model"].setdefault("fock_cutoff", cfg.hilbert.fock_cutoff)
    out["model"].setdefault("displaced_frame", cfg.displaced_frame)
    out["model"].setdefault("pure_dephasing_GHz", float(angular_to_ghz(cfg.pure_dephasing)))
    out["model"]["tier"] = cfg.tier
    out["pulse"]["resolved_amplitude_GHz"] = float(angular_to_ghz(cfg.pulse.amplitude))
    if cfg.pulse.center_ps is None and cfg.pulse.kind == "gaussian":
        out["pulse"]["center_ps"] = cfg.pulse.center
    if cfg.phonon is not None:
        out["phonon"] = {
            "alpha_ps2": cfg.phonon.alpha_ps2,
            "omega_b_THz": float(cfg.phonon.omega_b / (2.0 * 3.141592653589793)),
            "tau_cutoff_ps": cfg.phonon.tau_cutoff_ps,
        }
    return out


def derived_rates_dict(cfg: ModelConfig) -> dict:
    kappa, gamma, g = cfg.device.rates()
    out = {
        "kappa_rad_per_ps": kappa,
        "gamma_per_ps": gamma,
        "g_rad_per_ps": g,
        "kappa_over_2pi_GHz": float(angular_to_ghz(kappa)),
        "g_over_2pi_GHz": float(angular_to_ghz(g)),
        "emitter_decay_per_ps": cfg.emitter_decay(),
    }
    if cfg.phonon is not None:
        out["b_average"] = b_average(cfg.phonon)
    return out


def config_hash(data: dict) -> str:
    blob = json.dumps(data, sort_keys=True, default=float).encode()
    return hashlib.sha256(blob).hexdigest()


def make_manifest(command: str, resolved: ResolvedRun, grid_used: dict,
                  outputs: list, duration_s: float, flags: dict) -> dict:
    return {
        "tool": "dynrf",
        "version": __version__,
        "command": command,
        "config": resolved.raw,
        "config_sha256": config_hash(resolved.raw),
        "derived": derived_rates_dict(resolved.model),
        "grid": grid_used,
        "flags": flags,
        "outputs": outputs,
        "duration_s": round(duration_s, 3),
    }


def write_manifest(path, manifest: dict):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True, default=float)
        fh.write("\n")
