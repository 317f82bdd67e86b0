"""Deterministic propagation of the master equation with observable recording.

The right-hand side is applied matrix-free to stacks of D x D matrices:

    d rho = K rho + rho K^+  +  kappa a rho a^+  +  gamma s- rho s+  (+ ...)

with K = -i H(t) - (1/2) sum rate_k A_k^+ A_k.  The jump sandwiches use
structured slicing on the emitter/Fock index layout, so one RHS call costs
two batched GEMMs plus O(B D^2) bookkeeping.  Tier C adds the polaron
scattering term, whose frozen-Hamiltonian matrices are rebuilt only when
the drive amplitude moves by more than 1e-4 relative.

Propagating a whole stack at once under the common time-dependent
generator is what makes the two-time correlation grid affordable; see
:mod:`dynrf.correlations`.
"""

from dataclasses import dataclass, field

import numpy as np

from . import model as model_mod
from . import pulses
from .errors import ConfigError, InvariantViolation
from .hilbert import JumpTerms, batched_expectations, build_operators, ground_state, lmul, rmul
from .integrate import make_stepper
from .phonon import coupling_operators, polaron_kernel

TRACE_TOL = 1e-6
HERM_TOL = 1e-10
EIG_TOL = -1e-6


@dataclass(frozen=True)
class TimeGrid:
    t_start: float
    t_end: float
    output_step: float
    rtol: float = 1e-8
    atol: float = 1e-10
    fixed_step: float | None = None

    def __post_init__(self):
        if self.t_end <= self.t_start:
            raise ConfigError("t_end must exceed t_start")
        if self.output_step <= 0:
            raise ConfigError("output_step must be positive")

    def times(self) -> np.ndarray:
        n = int(round((self.t_end - self.t_start) / self.output_step))
        return self.t_start + self.output_step * np.arange(n + 1)


@dataclass
class Trajectory:
    times: np.ndarray
    observables: dict
    states: list | None = None
    invariants: dict = field(default_factory=dict)


def default_t_end(cfg: model_mod.ModelConfig) -> float:
    """Pulse support plus several effective emitter lifetimes."""
    return pulses.support_end(cfg.pulse) + 6.0 * cfg.device.lifetime_ps + 10.0


class MasterEquation:
    """Compiled right-hand side and observable extractors for one config."""

    def __init__(self, cfg: model_mod.ModelConfig):
        self.cfg = cfg
        self.dim = cfg.dim
        kappa, gamma, self.g = cfg.device.rates()
        self.b = cfg.b_renorm()

        if cfg.tier == model_mod.TIER_A:
            self.fock_dim = 1
            sm = np.array([[0.0, 1.0], [0.0, 0.0]], dtype=complex)
            self._sp, self._sm = sm.conj().T, sm
            self._emission = sm
            self.jumps = JumpTerms(1, 0.0, cfg.emitter_decay(), cfg.pure_dephasing)
            h_static = model_mod.static_hamiltonian(cfg)
            self._k_static = (-1j * h_static
                              - 0.5 * cfg.emitter_decay() * (self._sp @ self._sm)
                              - 0.5 * cfg.pure_dephasing * (self._sp @ self._sm))
            self._drive = model_mod.resolve_drive(cfg)
            self._drive_x = self._sp + self._sm
        else:
            self.fock_dim = cfg.hilbert.fock_dim
            ops = build_operators(cfg.hilbert)
            self._a, self._ad = ops["a"], ops["a_dagger"]
            self._sp, self._sm = ops["sigma_plus"], ops["sigma_minus"]
            self._emission = self._a
            self.jumps = JumpTerms(self.fock_dim, kappa, gamma, cfg.pure_dephasing)
            h_static = model_mod.static_hamiltonian(cfg)
            self._h_static = h_static
            self._k_static = (-1j * h_static
                              - 0.5 * kappa * (self._ad @ self._a)
                              - 0.5 * (gamma + cfg.pure_dephasing) * (self._sp @ self._sm))
            if cfg.displaced_frame:
                self._drive = model_mod.resolve_drive(cfg)
            else:
                self._drive = None
                self._drive_x = self._a + self._ad

        if cfg.tier == model_mod.TIER_C:
            self.kernel = polaron_kernel(cfg.phonon)
            self._eta_cached = None
            self._scat = None
            self._eta_floor = 1e-7 * max(self.g, 1e-6)
        else:
            self.kernel = None

    # -- drive lookup ------------------------------------------------------

    def drive_amp(self, t: float) -> complex:
        """Displaced-frame emitter drive eta(t) (tier A: Omega_eff(t)/2, real)."""
        if self.cfg.tier == model_mod.TIER_A:
            return 0.5 * self._drive.omega_eff(t)
        return self._drive.eta(t)

    def k_matrix(self, t: float) -> np.ndarray:
        cfg = self.cfg
        if cfg.tier == model_mod.TIER_A:
            return self._k_static - 1j * self.drive_amp(t) * self._drive_x
        if cfg.displaced_frame:
            eta = self.b * self.drive_amp(t)
            return self._k_static - 1j * (eta * self._sp + np.conj(eta) * self._sm)
        w = 0.5 * pulses.omega_of_t(cfg.pulse, t)
        return self._k_static - 1j * w * self._drive_x

    def hamiltonian(self, t: float) -> np.ndarray:
        """Dense H(t); for tier C this is the polaron-frame system Hamiltonian."""
        if self.cfg.tier != model_mod.TIER_A and self.cfg.displaced_frame:
            eta = self.b * self.drive_amp(t)
            return self._h_static + eta * self._sp + np.conj(eta) * self._sm
        return model_mod.build_hamiltonian(self.cfg, t)

    # -- right-hand side ---------------------------------------------------

    def rhs(self, t: float, batch: np.ndarray) -> np.ndarray:
        squeeze = batch.ndim == 2
        if squeeze:
            batch = batch[None]
        k = self.k_matrix(t)
        out = lmul(k, batch)
        out += rmul(batch, k.conj().T)
        m = self.fock_dim
        shape5 = (batch.shape[0], 2, m, 2, m)
        self.jumps.apply(batch.reshape(shape5), out.reshape(shape5))
        if self.kernel is not None:
            out += self._polaron_term(t, batch)
        return out[0] if squeeze else out

    def _polaron_term(self, t: float, batch: np.ndarray) -> np.ndarray:
        eta = self.drive_amp(t)
        cached = self._eta_cached
        if (self._scat is None
                or abs(eta - cached) > 1e-4 * abs(cached) + self._eta_floor):
            x_g, x_u = coupling_operators(eta, self.g, self.kernel.b,
                                          self._sp, self._sm, self._a, self._ad)
            eta_b = self.b * eta
            h_sys = self._h_static + eta_b * self._sp + np.conj(eta_b) * self._sm
            a_g, a_u = self.kernel.scattering_matrices(h_sys, x_g, x_u)
            self._scat = (x_g, x_u, a_g, a_u)
            self._eta_cached = eta
        return self.kernel.apply(batch, *self._scat)

    # -- observables -------------------------------------------------------

    def expectations(self, batch: np.ndarray):
        """(trace, <b>, <b+b>, <s+s->) with b the emission operator."""
        squeeze = batch.ndim == 2
        if squeeze:
            batch = batch[None]
        tr, mean_a, cav, emit = batched_expectations(batch, self.fock_dim)
        if self.cfg.tier == model_mod.TIER_A:
            mean_b = batch[:, 1, 0]
            pop_b = emit
        else:
            mean_b, pop_b = mean_a, cav
        if squeeze:
            return tr[0], mean_b[0], pop_b[0], emit[0]
        return tr, mean_b, pop_b, emit

    @property
    def emission_op(self) -> np.ndarray:
        return self._emission

    def ground_state(self) -> np.ndarray:
        if self.cfg.tier == model_mod.TIER_A:
            rho = np.zeros((2, 2), dtype=complex)
            rho[0, 0] = 1.0
            return rho
        return ground_state(self.cfg.hilbert)

    def h_max(self) -> float:
        """Step cap so an adaptive run cannot leap over a narrow pulse."""
        p = self.cfg.pulse
        if p.kind == pulses.GAUSSIAN:
            return 0.5 * p.sigma_ps
        if p.kind == pulses.TABULATED:
            ts = [row[0] for row in p.table]
            return max(min(b - a for a, b in zip(ts, ts[1:])), 0.1)
        return np.inf


def check_invariants(rho: np.ndarray, t: float, context: str = "") -> dict:
    """Trace/Hermiticity/positivity monitors; raises past tolerance."""
    tr_dev = abs(np.trace(rho) - 1.0)
    herm_dev = float(np.max(np.abs(rho - rho.conj().T)))
    min_eig = float(np.linalg.eigvalsh(0.5 * (rho + rho.conj().T)).min())
    if tr_dev > TRACE_TOL:
        raise InvariantViolation(f"trace drift {tr_dev:.2e} at t={t:g} ps {context}")
    if herm_dev > HERM_TOL:
        raise InvariantViolation(f"hermiticity drift {herm_dev:.2e} at t={t:g} ps {context}")
    if min_eig < EIG_TOL:
        raise InvariantViolation(f"negative population {min_eig:.2e} at t={t:g} ps {context}")
    return {"trace_dev": tr_dev, "herm_dev": herm_dev, "min_eig": min_eig}


def _empty_records():
    return {"trace": [], "mean_field": [], "cavity_pop": [], "emitter_pop": [],
            "incoherent_intensity": []}


def _record(me: MasterEquation, recs: dict, rho: np.ndarray):
    tr, mean_b, pop_b, emit = me.expectations(rho)
    recs["trace"].append(tr)
    recs["mean_field"].append(mean_b)
    recs["cavity_pop"].append(pop_b)
    recs["emitter_pop"].append(emit)
    recs["incoherent_intensity"].append((pop_b - abs(mean_b) ** 2).real)


def evolve(rho0, cfg, grid: TimeGrid, store_states: bool = False,
           monitor_invariants: bool = True) -> Trajectory:
    """Propagate rho0 over the grid, sampling observables at grid points."""
    me = MasterEquation(cfg)
    return _evolve_impl(me, rho0, grid, store_states, monitor_invariants)


def _evolve_impl(me, rho0, grid, store_states, monitor_invariants,
                 insertion=None) -> Trajectory:
    rho0 = np.asarray(rho0, dtype=complex)
    if rho0.shape != (me.dim, me.dim):
        raise ConfigError(f"rho0 must be {me.dim}x{me.dim}, got {rho0.shape}")
    times = grid.times()
    recs = _empty_records()
    states = [] if store_states else None
    worst = {"trace_dev": 0.0, "herm_dev": 0.0, "min_eig": 1.0}
    hermitian_phase = [True]

    def sample(t, y):
        rho = y
        _record(me, recs, rho)
        if states is not None:
            states.append(rho.copy())
        if monitor_invariants and hermitian_phase[0]:
            m = check_invariants(rho, t)
            worst["trace_dev"] = max(worst["trace_dev"], m["trace_dev"])
            worst["herm_dev"] = max(worst["herm_dev"], m["herm_dev"])
            worst["min_eig"] = min(worst["min_eig"], m["min_eig"])

    stepper = make_stepper(me.rhs, times[0], rho0, rtol=grid.rtol, atol=grid.atol,
                           fixed_step=grid.fixed_step, h_max=me.h_max())
    if insertion is None or insertion[0] > times[0] + 1e-9:
        sample(times[0], rho0)

    if insertion is None:
        stepper.advance_to(times[-1], sample_times=times[1:], sample_fn=sample)
    else:
        t_insert, left_op, right_op = insertion
        before = times[(times > times[0]) & (times < t_insert - 1e-9)]
        stepper.advance_to(t_insert, sample_times=before, sample_fn=sample)
        lam = stepper.y
        if right_op is not None:
            lam = right_op @ lam
        if left_op is not None:
            lam = lam @ left_op
        hermitian_phase[0] = False
        stepper.set_state(lam)
        after = times[times > t_insert - 1e-9]
        if after.size and abs(after[0] - t_insert) <= 1e-9:
            sample(after[0], lam)
            after = after[1:]
        stepper.advance_to(times[-1], sample_times=after, sample_fn=sample)

    obs = {k: np.array(v) for k, v in recs.items()}
    return Trajectory(times=times, observables=obs, states=states, invariants=worst)


def evolve_with_insertion(rho0, cfg, t_insert: float, left_op, right_op,
                          grid: TimeGrid, store_states: bool = False) -> Trajectory:
    """Evolve to t_insert, replace rho by right_op @ rho @ left_op, continue.

    Either operator may be None (identity).  The continued matrix is in
    general non-Hermitian with zero trace; invariant monitoring stops at
    the insertion.  This is the regression-theorem primitive and doubles
    as the brute-force oracle for the batched correlation driver.
    """
    if not (grid.t_start <= t_insert <= grid.t_end):
        raise ConfigError("t_insert outside the time grid")
    me = MasterEquation(cfg)
    return _evolve_impl(me, rho0, grid, store_states, True,
                        insertion=(t_insert, left_op, right_op))
