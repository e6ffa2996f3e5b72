"""Dense complex linear algebra and the two state-distance functionals.

States are plain complex ndarrays. Anything returned as a density matrix can
be checked with `validate_density`, which enforces Hermiticity and unit trace
to 1e-10 and eigenvalues >= -1e-9; violations raise instead of being clipped.

Most functions broadcast over a leading batch axis, so a whole time series of
states can be processed in one call.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigError, StateValidationError

HERMITICITY_TOL = 1e-10
TRACE_TOL = 1e-10
PSD_TOL = -1e-9

SIGMA_X = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
SIGMA_Y = np.array([[0.0, -1.0j], [1.0j, 0.0]], dtype=complex)
SIGMA_Z = np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex)
IDENTITY_2 = np.eye(2, dtype=complex)

# Basis convention: index 0 = excited |e>, index 1 = ground |g>, so that the
# excited state is the +1 eigenstate of SIGMA_Z and rho[0, 0] is the excited
# population.
KET_E = np.array([1.0, 0.0], dtype=complex)
KET_G = np.array([0.0, 1.0], dtype=complex)
KET_PLUS = np.array([1.0, 1.0], dtype=complex) / np.sqrt(2.0)
KET_MINUS = np.array([1.0, -1.0], dtype=complex) / np.sqrt(2.0)

# (|ee> + |gg>)/sqrt(2) in the 4-dim ancilla (x) system space.
KET_BELL = np.array([1.0, 0.0, 0.0, 1.0], dtype=complex) / np.sqrt(2.0)

_SYSY = np.kron(SIGMA_Y, SIGMA_Y).real  # real matrix, entries in {0, +-1}


def dag(a: np.ndarray) -> np.ndarray:
    """Conjugate transpose, batch-aware."""
    return np.conj(np.swapaxes(a, -1, -2))


def ket2dm(psi: np.ndarray) -> np.ndarray:
    """Projector |psi><psi| from a normalized state vector."""
    psi = np.asarray(psi, dtype=complex)
    return np.outer(psi, psi.conj())


def tensor(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Kronecker product with shape (ra*rb, ca*cb)."""
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    if a.ndim != 2 or b.ndim != 2:
        raise ConfigError("tensor expects 2-D matrices")
    return np.kron(a, b)


def partial_trace(rho, dims, keep) -> np.ndarray:
    """Trace out all factors not listed in `keep` (indices into `dims`).

    Kept factors stay in their original order.  The product of `dims` must
    match the matrix dimension; anything else is an error, never a reshape.
    """
    rho = np.asarray(rho, dtype=complex)
    dims = [int(d) for d in dims]
    keep = sorted(set(int(k) for k in keep))
    n = len(dims)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise ConfigError("partial_trace expects a square matrix")
    if int(np.prod(dims)) != rho.shape[0]:
        raise ConfigError(
            f"factor dims {dims} do not multiply to matrix dim {rho.shape[0]}"
        )
    if not keep or any(k < 0 or k >= n for k in keep):
        raise ConfigError(f"keep={keep} is not a non-empty subset of 0..{n - 1}")

    resh = rho.reshape(dims + dims)
    row = [chr(ord("a") + i) for i in range(n)]
    col = [chr(ord("a") + n + i) if i in keep else row[i] for i in range(n)]
    out = [row[i] for i in keep] + [col[i] for i in keep]
    spec = "".join(row) + "".join(col) + "->" + "".join(out)
    d_keep = int(np.prod([dims[i] for i in keep]))
    return np.einsum(spec, resh).reshape(d_keep, d_keep)


def trace_distance(rho1: np.ndarray, rho2: np.ndarray) -> float | np.ndarray:
    """D = (1/2) Tr|rho1 - rho2| via eigenvalues of the Hermitian difference."""
    rho1 = np.asarray(rho1, dtype=complex)
    rho2 = np.asarray(rho2, dtype=complex)
    if rho1.shape != rho2.shape:
        raise ConfigError(f"dimension mismatch {rho1.shape} vs {rho2.shape}")
    w = np.linalg.eigvalsh(rho1 - rho2)
    d = 0.5 * np.abs(w).sum(axis=-1)
    return float(d) if d.ndim == 0 else d


def concurrence(rho: np.ndarray) -> float | np.ndarray:
    """Wootters concurrence of a two-qubit state.

    max(0, l1 - l2 - l3 - l4) with l_i the decreasing square roots of the
    eigenvalues of rho (sy x sy) rho* (sy x sy).
    """
    rho = np.asarray(rho, dtype=complex)
    if rho.shape[-2:] != (4, 4):
        raise ConfigError(f"concurrence needs a 4x4 state, got {rho.shape}")
    rho_tilde = _SYSY @ np.conj(rho) @ _SYSY
    w = np.linalg.eigvals(rho @ rho_tilde)
    # eigenvalues are real and non-negative up to round-off
    lam = np.sqrt(np.clip(w.real, 0.0, None))
    lam = np.sort(lam, axis=-1)
    c = lam[..., 3] - lam[..., 2] - lam[..., 1] - lam[..., 0]
    c = np.maximum(c, 0.0)
    return float(c) if c.ndim == 0 else c


def validate_density(rho: np.ndarray, context: str = "state") -> np.ndarray:
    """Check Hermiticity, unit trace, and positivity; raise on violation.

    Accepts a single matrix or a batch; returns the input untouched so it can
    be used inline.
    """
    rho = np.asarray(rho, dtype=complex)
    if rho.ndim < 2 or rho.shape[-1] != rho.shape[-2]:
        raise StateValidationError(f"{context}: not a square matrix {rho.shape}")
    herm = np.abs(rho - dag(rho)).max()
    if herm > HERMITICITY_TOL:
        raise StateValidationError(f"{context}: Hermiticity deviation {herm:.3e}")
    tr_dev = np.abs(np.trace(rho, axis1=-2, axis2=-1) - 1.0).max()
    if tr_dev > TRACE_TOL:
        raise StateValidationError(f"{context}: trace deviation {tr_dev:.3e}")
    w_min = np.linalg.eigvalsh(rho)[..., 0].min()
    if w_min < PSD_TOL:
        raise StateValidationError(f"{context}: negative eigenvalue {w_min:.3e}")
    return rho
