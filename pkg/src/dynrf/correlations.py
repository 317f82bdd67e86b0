"""Two-time correlations of the emission-field fluctuations.

For the pulsed case the grid g(t', tau) = <b+_d(t') b_d(t'+tau)> (with
b the emission operator and b_d = b - <b>) is produced in a single pass
over absolute time: the density matrix and every regression matrix
Lambda_{t'} = rho(t') (b+ - <b+(t')>) evolve under the same generator, so
they are stacked and stepped together.  Each t' grid point appends one
matrix to the stack; each tau sample reads Tr[b Lambda] - <b(t)> Tr[Lambda].
This is algebraically identical to one insertion run per t' (the oracle
path in :func:`dynrf.propagate.evolve_with_insertion`) at a fraction of
the cost.

For cw drives the correlation is stationary; the steady state comes from
the null space of the (time-frozen) generator and a single tau run.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np

from . import pulses
from .errors import ConfigError, NumericsError
from .integrate import make_stepper
from .model import ModelConfig
from .propagate import MasterEquation, check_invariants, default_t_end


@dataclass(frozen=True)
class CorrGridSpec:
    """Sampling layout for the (t', tau) grid.

    dt_prime must be an integer multiple of dtau; tau_max defaults to the
    full triangle tau <= t_end - t'.
    """

    t_end: float
    dt_prime: float = 1.0
    dtau: float = 0.5
    t_start: float = 0.0
    tau_max: float | None = None
    rtol: float = 1e-8
    atol: float = 1e-10
    fixed_step: float | None = None

    def __post_init__(self):
        if self.t_end <= self.t_start:
            raise ConfigError("t_end must exceed t_start")
        if self.dtau <= 0 or self.dt_prime <= 0:
            raise ConfigError("grid steps must be positive")
        ratio = self.dt_prime / self.dtau
        if abs(ratio - round(ratio)) > 1e-9 or round(ratio) < 1:
            raise ConfigError("dt_prime must be an integer multiple of dtau")

    @property
    def stride(self) -> int:
        return int(round(self.dt_prime / self.dtau))


@dataclass
class CorrelationGrid:
    t_prime: np.ndarray        # (P,)
    tau: np.ndarray            # (Q,)
    values: np.ndarray         # (P, Q) complex; NaN outside the triangle
    times: np.ndarray          # absolute sample times, step dtau
    mean_field: np.ndarray     # <b>(times)
    incoherent_intensity: np.ndarray  # <b+b> - |<b>|^2 on times
    emitter_pop: np.ndarray
    cavity_pop: np.ndarray
    stationary: bool = False
    invariants: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    @property
    def dt_prime(self) -> float:
        return float(self.t_prime[1] - self.t_prime[0]) if self.t_prime.size > 1 else 0.0

    @property
    def dtau(self) -> float:
        return float(self.tau[1] - self.tau[0]) if self.tau.size > 1 else 0.0


@dataclass
class StationaryCorrelation:
    tau: np.ndarray
    values: np.ndarray         # (Q,)
    mean_field: complex
    incoherent_intensity: float
    invariants: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    @property
    def dtau(self) -> float:
        return float(self.tau[1] - self.tau[0])


def two_time_correlation(cfg: ModelConfig, spec: CorrGridSpec | None = None,
                         rho0=None) -> CorrelationGrid:
    """Pulsed-drive correlation grid via the stacked regression propagation."""
    if cfg.pulse.kind == pulses.CW:
        raise ConfigError("cw drive: use stationary_correlation")
    if spec is None:
        spec = CorrGridSpec(t_end=default_t_end(cfg))

    me = MasterEquation(cfg)
    dim = me.dim
    b_op = me.emission_op
    b_dag = b_op.conj().T

    span = spec.t_end - spec.t_start
    n_abs = int(round(span / spec.dtau))
    times = spec.t_start + spec.dtau * np.arange(n_abs + 1)
    stride = spec.stride
    p = n_abs // stride + 1
    t_prime = spec.t_start + spec.dt_prime * np.arange(p)
    tau_span = span if spec.tau_max is None else min(spec.tau_max, span)
    q = int(round(tau_span / spec.dtau)) + 1
    tau = spec.dtau * np.arange(q)

    values = np.full((p, q), np.nan + 0j, dtype=complex)
    mean_field = np.zeros(n_abs + 1, dtype=complex)
    intensity = np.zeros(n_abs + 1)
    emitter_pop = np.zeros(n_abs + 1)
    cavity_pop = np.zeros(n_abs + 1)
    worst = {"trace_dev": 0.0, "herm_dev": 0.0, "min_eig": 1.0}

    rho = np.asarray(rho0, dtype=complex) if rho0 is not None else me.ground_state()
    if rho.shape != (dim, dim):
        raise ConfigError(f"rho0 must be {dim}x{dim}")

    # member 0 is rho; rows/offsets track the t' identity of each Lambda
    member_rows: list[int] = []
    member_offsets = np.zeros(0, dtype=int)

    state = {"y": rho[None, :, :].copy()}

    def record(t, y):
        k = int(round((t - spec.t_start) / spec.dtau))
        tr, mean_b, pop_b, emit = me.expectations(y)
        mean_field[k] = mean_b[0]
        intensity[k] = (pop_b[0] - abs(mean_b[0]) ** 2).real
        emitter_pop[k] = emit[0].real
        cavity_pop[k] = pop_b[0].real
        m = check_invariants(y[0], t, "(correlation base state)")
        worst["trace_dev"] = max(worst["trace_dev"], m["trace_dev"])
        worst["herm_dev"] = max(worst["herm_dev"], m["herm_dev"])
        worst["min_eig"] = min(worst["min_eig"], m["min_eig"])
        if member_offsets.size:
            cols = k - member_offsets
            ok = (cols >= 0) & (cols < q)
            if np.any(ok):
                rows = np.asarray(member_rows)[ok]
                values[rows, cols[ok]] = mean_b[1:][ok] - mean_field[k] * tr[1:][ok]

    def append_member(t, k):
        nonlocal member_offsets
        rho_now = state["y"][0]
        lam = rho_now @ b_dag - np.conj(mean_field[k]) * rho_now
        member_rows.append(k // stride)
        member_offsets = np.append(member_offsets, k)
        state["y"] = np.concatenate([state["y"], lam[None]], axis=0)
        values[member_rows[-1], 0] = intensity[k]

    def prune_members(k):
        """Drop regression matrices past tau_max (only when the triangle is capped)."""
        nonlocal member_offsets
        if spec.tau_max is None or not member_offsets.size:
            return
        drop = (k - member_offsets) >= q
        if np.any(drop):
            keep = ~drop
            idx = np.concatenate(([True], keep))
            state["y"] = state["y"][idx]
            member_offsets = member_offsets[keep]
            keep_rows = [r for r, kv in zip(member_rows, keep) if kv]
            member_rows.clear()
            member_rows.extend(keep_rows)

    record(times[0], state["y"])
    append_member(times[0], 0)

    stepper = make_stepper(me.rhs, times[0], state["y"], rtol=spec.rtol,
                           atol=spec.atol, fixed_step=spec.fixed_step,
                           h_max=me.h_max())
    for seg in range(p - 1):
        t_b = t_prime[seg + 1]
        k_b = (seg + 1) * stride
        mids = times[seg * stride + 1: k_b + 1]
        stepper.advance_to(t_b, sample_times=mids, sample_fn=record)
        state["y"] = stepper.y
        prune_members(k_b)
        append_member(t_b, k_b)
        stepper.set_state(state["y"])

    return CorrelationGrid(
        t_prime=t_prime, tau=tau, values=values, times=times,
        mean_field=mean_field, incoherent_intensity=intensity,
        emitter_pop=emitter_pop, cavity_pop=cavity_pop,
        invariants=worst,
        meta={"tier": cfg.tier, "displaced_frame": cfg.displaced_frame,
              "t_end": spec.t_end, "dt_prime": spec.dt_prime,
              "dtau": spec.dtau, "tau_max": spec.tau_max},
    )


def steady_state(cfg: ModelConfig, me: MasterEquation | None = None):
    """Stationary state from the null space of the frozen generator."""
    if cfg.pulse.kind != pulses.CW:
        raise ConfigError("steady state defined for cw drive")
    me = me or MasterEquation(cfg)
    dim = me.dim
    t_freeze = 80.0 / cfg.device.kappa
    basis = np.zeros((dim * dim, dim, dim), dtype=complex)
    idx = np.arange(dim * dim)
    basis[idx, idx // dim, idx % dim] = 1.0
    liouville = me.rhs(t_freeze, basis).reshape(dim * dim, dim * dim).T
    _, svals, vh = np.linalg.svd(liouville)
    if svals[-2] < 1e-9 * svals[0]:
        raise NumericsError("degenerate steady state: null space not unique")
    rho = vh[-1].conj().reshape(dim, dim)
    rho = 0.5 * (rho + rho.conj().T)
    tr = np.trace(rho).real
    if abs(tr) < 1e-10:
        raise NumericsError("steady-state candidate has vanishing trace")
    rho = rho / tr
    return rho, t_freeze


def stationary_correlation(cfg: ModelConfig, tau_max: float, dtau: float = 0.5,
                           rtol: float = 1e-8, atol: float = 1e-10,
                           fixed_step: float | None = None) -> StationaryCorrelation:
    """g(tau) from the steady state of a cw drive (per unit time)."""
    me = MasterEquation(cfg)
    rho_ss, t_freeze = steady_state(cfg, me)
    inv = check_invariants(rho_ss, t_freeze, "(steady state)")

    b_op = me.emission_op
    _, mean_b, pop_b, _ = me.expectations(rho_ss)
    lam = rho_ss @ b_op.conj().T - np.conj(mean_b) * rho_ss

    n_tau = int(round(tau_max / dtau))
    tau = dtau * np.arange(n_tau + 1)
    g_vals = np.zeros(n_tau + 1, dtype=complex)
    g_vals[0] = (pop_b - abs(mean_b) ** 2).real

    def record(t, y):
        k = int(round((t - t_freeze) / dtau))
        tr = np.trace(y)
        g_vals[k] = np.sum(b_op.T * y) - mean_b * tr

    stepper = make_stepper(me.rhs, t_freeze, lam, rtol=rtol, atol=atol,
                           fixed_step=fixed_step)
    stepper.advance_to(t_freeze + tau_max, sample_times=t_freeze + tau[1:],
                       sample_fn=record)

    return StationaryCorrelation(
        tau=tau, values=g_vals, mean_field=complex(mean_b),
        incoherent_intensity=float((pop_b - abs(mean_b) ** 2).real),
        invariants=inv,
        meta={"tier": cfg.tier, "tau_max": tau_max, "dtau": dtau},
    )
