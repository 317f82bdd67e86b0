"""Dense operators on a two-level emitter tensored with a truncated Fock space.

Basis ordering is fixed: ``index = s * (N + 1) + n`` with emitter flag
``s`` (0 = ground, 1 = excited) varying slowest and photon number ``n``
in 0..N fastest.  Total dimension D = 2 (N + 1).  Hamiltonian-like
operators carry rad/ps, ladder and Pauli operators are dimensionless.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError


@dataclass(frozen=True)
class HilbertConfig:
    """Truncated emitter (x) Fock space; ``fock_cutoff`` is the max photon number."""

    fock_cutoff: int = 6

    def __post_init__(self):
        if self.fock_cutoff < 0:
            raise ConfigError("fock_cutoff must be >= 0")

    @property
    def fock_dim(self) -> int:
        return self.fock_cutoff + 1

    @property
    def dim(self) -> int:
        return 2 * (self.fock_cutoff + 1)


def build_operators(cfg: HilbertConfig) -> dict:
    """Construct a, a_dagger, sigma_minus, sigma_plus and the identity.

    a acts as a|n> = sqrt(n)|n-1> on the Fock factor, sigma_minus as
    |g><e| on the emitter factor; both are extended by identity on the
    other factor.
    """
    m = cfg.fock_dim
    a_fock = np.diag(np.sqrt(np.arange(1, m, dtype=float)), k=1).astype(complex)
    id_fock = np.eye(m, dtype=complex)
    sm_emit = np.zeros((2, 2), dtype=complex)
    sm_emit[0, 1] = 1.0  # |g><e|
    id_emit = np.eye(2, dtype=complex)

    a = np.kron(id_emit, a_fock)
    sigma_minus = np.kron(sm_emit, id_fock)
    return {
        "a": a,
        "a_dagger": a.conj().T,
        "sigma_minus": sigma_minus,
        "sigma_plus": sigma_minus.conj().T,
        "identity": np.eye(cfg.dim, dtype=complex),
    }


def ground_state(cfg: HilbertConfig) -> np.ndarray:
    """Density matrix |g,0><g,0|."""
    rho = np.zeros((cfg.dim, cfg.dim), dtype=complex)
    rho[0, 0] = 1.0
    return rho


def expectation(rho: np.ndarray, op: np.ndarray) -> complex:
    """Tr(op @ rho); real to ~1e-12 when both arguments are Hermitian."""
    if rho.shape != op.shape:
        raise ValueError(f"dimension mismatch: rho {rho.shape} vs op {op.shape}")
    # trace of a product without forming it
    return complex(np.sum(op.T * rho))


def lindblad_rhs(rho, hamiltonian, collapse_terms):
    """Reference master-equation right-hand side (dense, unbatched).

    Returns -i[H, rho] + sum_k (rate_k/2) (2 A rho A+ - A+A rho - rho A+A)
    for collapse_terms = [(rate, A), ...].  Rates are in rad/ps and must be
    nonnegative.  The production propagator uses a structured fast path;
    this function is the plain-arithmetic oracle it is tested against.
    """
    out = -1j * (hamiltonian @ rho - rho @ hamiltonian)
    for rate, op in collapse_terms:
        if rate < 0:
            raise ValueError(f"negative collapse rate {rate}")
        op_dag = op.conj().T
        anti = op_dag @ op
        out = out + rate * (op @ rho @ op_dag) \
            - 0.5 * rate * (anti @ rho + rho @ anti)
    return out


# ---------------------------------------------------------------------------
# Fast batched primitives.  States are stacked as (B, D, D); the 5-D view
# (B, 2, M, 2, M) exposes the emitter/Fock structure so the jump terms cost
# O(B D^2) slicing instead of O(B D^3) matmuls.
# ---------------------------------------------------------------------------

def lmul(op: np.ndarray, batch: np.ndarray) -> np.ndarray:
    """op @ batch for a (D,D) operator against a (..., D, D) stack."""
    return np.matmul(op, batch)


def rmul(batch: np.ndarray, op: np.ndarray) -> np.ndarray:
    """batch @ op via one flat GEMM."""
    d = op.shape[0]
    return (batch.reshape(-1, d) @ op).reshape(batch.shape)


class JumpTerms:
    """Applies sum_k rate_k * A_k rho A_k+ for the fixed jump set {a, sigma-, dephasing}."""

    def __init__(self, fock_dim: int, kappa: float, gamma: float, dephasing: float = 0.0):
        self.m = fock_dim
        self.kappa = kappa
        self.gamma = gamma
        self.dephasing = dephasing
        w = np.sqrt(np.arange(1, fock_dim, dtype=float))
        # weight sqrt(n+1) sqrt(n'+1) for the photon-loss sandwich
        self._photon_w = w[:, None] * w[None, :]

    def apply(self, batch5: np.ndarray, out5: np.ndarray) -> None:
        """Accumulate jump sandwiches into out5; both are (B,2,M,2,M) views."""
        m = self.m
        if self.kappa != 0.0 and m > 1:
            out5[:, :, : m - 1, :, : m - 1] += (self.kappa * self._photon_w)[
                None, None, :, None, :
            ] * batch5[:, :, 1:, :, 1:]
        if self.gamma != 0.0:
            out5[:, 0, :, 0, :] += self.gamma * batch5[:, 1, :, 1, :]
        if self.dephasing != 0.0:
            out5[:, 1, :, 1, :] += self.dephasing * batch5[:, 1, :, 1, :]


def batched_expectations(batch: np.ndarray, fock_dim: int):
    """(tr, <a>, <a+a>, <s+s->) for each member of a (B, D, D) stack."""
    m = fock_dim
    b5 = batch.reshape(batch.shape[0], 2, m, 2, m)
    diag = np.einsum("bsnsn->bsn", b5)
    tr = diag.sum(axis=(1, 2))
    n_of = np.arange(m)
    cavity_pop = (diag * n_of[None, None, :]).sum(axis=(1, 2))
    emitter_pop = diag[:, 1, :].sum(axis=1)
    # <a> = sum_{s,n} sqrt(n+1) rho[s, n+1, s, n]
    if m > 1:
        sub = np.einsum("bsnsm->bsnm", b5)[:, :, 1:, : m - 1]
        w = np.sqrt(np.arange(1, m, dtype=float))
        mean_field = (np.einsum("bsnn->bsn", sub) * w[None, None, :]).sum(axis=(1, 2))
    else:
        mean_field = np.zeros(batch.shape[0], dtype=complex)
    return tr, mean_field, cavity_pop, emitter_pop
