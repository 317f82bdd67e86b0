"""Embedded Runge-Kutta propagation for complex matrix-valued ODEs.

Dormand-Prince 5(4): fifth-order propagation with a fourth-order embedded
error estimate, FSAL, and the classic quartic dense-output interpolant.
The state is an arbitrary-shape complex ndarray (here: stacks of density
matrices), which keeps the master-equation right-hand side matrix-shaped
instead of flattening to a superoperator vector.

A fixed-step RK4 mode is provided for bit-reproducible runs.
"""

import numpy as np

from .errors import IntegrationError

# Butcher tableau (Dormand & Prince 1980)
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
    (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
]
_B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_E = np.array([71 / 57600, 0.0, -71 / 16695, 71 / 1920,
               -17253 / 339200, 22 / 525, -1 / 40])
# dense-output weights (Hairer, Norsett & Wanner, DOPRI5 rcont5)
_D = np.array([
    -12715105075 / 11282082432,
    0.0,
    87487479700 / 32700410799,
    -10690763975 / 1880347072,
    701980252875 / 199316789632,
    -1453857185 / 822651844,
    69997945 / 29380423,
])

_SAFETY = 0.9
_MIN_FACTOR = 0.2
_MAX_FACTOR = 5.0


class DenseSegment:
    """Quartic interpolant over one accepted step [t, t+h]."""

    def __init__(self, t, h, y0, y1, stages):
        self.t = t
        self.h = h
        dy = y1 - y0
        self._r1 = y0
        self._r2 = dy
        self._r3 = h * stages[0] - dy
        self._r4 = dy - h * stages[6] - self._r3
        self._r5 = h * sum(d * k for d, k in zip(_D, stages) if d != 0.0)

    def __call__(self, t_eval):
        theta = (t_eval - self.t) / self.h
        return self._r1 + theta * (
            self._r2 + (1.0 - theta) * (self._r3 + theta * (self._r4 + (1.0 - theta) * self._r5))
        )


def _error_norm(err, y0, y1, rtol, atol):
    scale = atol + rtol * np.maximum(np.abs(y0), np.abs(y1))
    return float(np.sqrt(np.mean((np.abs(err) / scale) ** 2)))


class AdaptiveStepper:
    """Resumable DP54 stepper.

    ``advance_to(t_target, sample_times, sample_fn)`` integrates forward,
    evaluating the dense interpolant at each requested interior time and
    landing exactly on ``t_target``.  The step size persists across calls,
    so segment boundaries (where the caller may resize the state) cost
    nothing beyond clipping the final step.
    """

    def __init__(self, rhs, t0, y0, rtol=1e-8, atol=1e-10, h_init=None, h_max=np.inf):
        self.rhs = rhs
        self.t = float(t0)
        self.y = np.array(y0, dtype=complex, copy=True)
        self.rtol = float(rtol)
        self.atol = float(atol)
        self.h_max = float(h_max)
        self.h = float(h_init) if h_init else 1e-3
        self._f0 = None  # FSAL cache, invalidated by set_state
        self.n_steps = 0
        self.n_rejected = 0

    def set_state(self, y):
        """Replace the state (e.g. append a batch member); invalidates FSAL."""
        self.y = np.array(y, dtype=complex, copy=True)
        self._f0 = None

    def _step(self, h):
        """Attempt one step of size h; returns (y1, err_norm, stages)."""
        t, y = self.t, self.y
        k = [self._f0 if self._f0 is not None else self.rhs(t, y)]
        y1 = None
        for i in range(1, 7):
            yi = y + h * sum(a * kk for a, kk in zip(_A[i], k) if a != 0.0)
            k.append(self.rhs(t + _C[i] * h, yi))
            if i == 6:
                # the 7th stage argument is the 5th-order solution (FSAL)
                y1 = yi
        err = h * sum(e * kk for e, kk in zip(_E, k) if e != 0.0)
        return y1, _error_norm(err, y, y1, self.rtol, self.atol), k

    def advance_to(self, t_target, sample_times=(), sample_fn=None):
        sample_iter = iter(sample_times)
        next_sample = next(sample_iter, None)
        while next_sample is not None and next_sample <= self.t + 1e-9:
            next_sample = next(sample_iter, None)
        while self.t < t_target - 1e-12:
            h = min(self.h, self.h_max, t_target - self.t)
            if h < 1e-14 * max(1.0, abs(self.t)):
                raise IntegrationError(f"step underflow at t={self.t:g} ps")
            y1, err, stages = self._step(h)
            if not np.isfinite(err):
                self.h = 0.5 * h
                self._f0 = stages[0]
                self.n_rejected += 1
                continue
            if err > 1.0:
                self.h = h * max(_MIN_FACTOR, _SAFETY * err ** -0.2)
                self._f0 = stages[0]
                self.n_rejected += 1
                continue
            # accepted
            if sample_fn is not None:
                t1 = self.t + h
                seg = None
                while next_sample is not None and next_sample <= t1 + 1e-9:
                    if abs(next_sample - t1) <= 1e-9:
                        sample_fn(next_sample, y1)
                    else:
                        if seg is None:
                            seg = DenseSegment(self.t, h, self.y, y1, stages)
                        sample_fn(next_sample, seg(next_sample))
                    next_sample = next(sample_iter, None)
            self.t += h
            self.y = y1
            self._f0 = stages[6]
            self.n_steps += 1
            factor = _MAX_FACTOR if err == 0.0 else min(_MAX_FACTOR, _SAFETY * err ** -0.2)
            self.h = min(h * max(factor, _MIN_FACTOR), self.h_max)
        self.t = t_target


class FixedStepper:
    """Classic RK4 with a fixed nominal step; lands exactly on sample times."""

    def __init__(self, rhs, t0, y0, step=0.05):
        if step <= 0:
            raise ValueError("fixed step must be positive")
        self.rhs = rhs
        self.t = float(t0)
        self.y = np.array(y0, dtype=complex, copy=True)
        self.step = float(step)
        self.n_steps = 0

    def set_state(self, y):
        self.y = np.array(y, dtype=complex, copy=True)

    def _rk4(self, t, y, h):
        f = self.rhs
        k1 = f(t, y)
        k2 = f(t + 0.5 * h, y + 0.5 * h * k1)
        k3 = f(t + 0.5 * h, y + 0.5 * h * k2)
        k4 = f(t + h, y + h * k3)
        return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)

    def _run_to(self, mark):
        span = mark - self.t
        if span <= 1e-12:
            return
        n = max(1, int(np.ceil(span / self.step - 1e-9)))
        h = span / n
        for _ in range(n):
            self.y = self._rk4(self.t, self.y, h)
            self.t += h
            self.n_steps += 1
        self.t = mark

    def advance_to(self, t_target, sample_times=(), sample_fn=None):
        for s in sample_times:
            if s <= self.t + 1e-9 or s > t_target + 1e-9:
                continue
            self._run_to(s)
            if sample_fn is not None:
                sample_fn(s, self.y)
        self._run_to(t_target)
        self.t = t_target


def make_stepper(rhs, t0, y0, rtol=1e-8, atol=1e-10, fixed_step=None, h_max=np.inf):
    if fixed_step:
        return FixedStepper(rhs, t0, y0, step=fixed_step)
    return AdaptiveStepper(rhs, t0, y0, rtol=rtol, atol=atol, h_max=h_max)
