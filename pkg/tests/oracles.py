"""Independent oracle implementations used only by the tests.

Each routine deliberately takes a different computational route from the
package code it checks: concurrence via the square-root decomposition instead
of the eigenvalues of rho * rho_tilde, the SVR dual via projected gradient
instead of SMO, partial trace via explicit index loops instead of einsum, and
measure accumulation via a scalar loop instead of vectorized diffs.
"""

import numpy as np

SY2 = np.array(
    [
        [0, 0, 0, -1],
        [0, 0, 1, 0],
        [0, 1, 0, 0],
        [-1, 0, 0, 0],
    ],
    dtype=complex,
)


def sqrtm_psd(a):
    """Matrix square root of a PSD Hermitian matrix via eigendecomposition."""
    w, v = np.linalg.eigh(a)
    w = np.clip(w, 0.0, None)
    return (v * np.sqrt(w)) @ v.conj().T


def wootters_concurrence(rho):
    """Concurrence via R = sqrt(sqrt(rho) rho_tilde sqrt(rho))."""
    rho_tilde = SY2 @ rho.conj() @ SY2
    rt = sqrtm_psd(rho)
    inner = rt @ rho_tilde @ rt
    lam = np.sqrt(np.clip(np.linalg.eigvalsh(inner), 0.0, None))
    return max(0.0, 2.0 * lam.max() - lam.sum())


def loop_partial_trace(rho, dims, keep):
    """Partial trace by explicit index contraction loops."""
    dims = list(dims)
    keep = sorted(keep)
    traced = [i for i in range(len(dims)) if i not in keep]
    d_keep = int(np.prod([dims[i] for i in keep]))
    out = np.zeros((d_keep, d_keep), dtype=complex)

    def unravel(flat):
        idx = []
        for d in reversed(dims):
            idx.append(flat % d)
            flat //= d
        return list(reversed(idx))

    def ravel_keep(idx):
        flat = 0
        for i in keep:
            flat = flat * dims[i] + idx[i]
        return flat

    n = int(np.prod(dims))
    for r in range(n):
        ri = unravel(r)
        for c in range(n):
            ci = unravel(c)
            if all(ri[i] == ci[i] for i in traced):
                out[ravel_keep(ri), ravel_keep(ci)] += rho[r, c]
    return out


def positive_increment_sum(values):
    """Scalar brute-force accumulation of positive increments."""
    total = 0.0
    for prev, cur in zip(values[:-1], values[1:]):
        if cur > prev:
            total += cur - prev
    return total


def random_density(dim, rng):
    g = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    rho = g @ g.conj().T
    return rho / np.trace(rho).real


def ad_closed_form(rho0, t, lam, gamma0=1.0):
    """Undriven AD matrix map written out entry by entry."""
    d_sq = 2.0 * gamma0 * lam - lam**2
    if d_sq > 0:
        d = np.sqrt(d_sq)
        g = np.exp(-lam * t / 2) * (np.cos(d * t / 2) + (lam / d) * np.sin(d * t / 2))
    elif d_sq < 0:
        d = np.sqrt(-d_sq)
        g = np.exp(-lam * t / 2) * (np.cosh(d * t / 2) + (lam / d) * np.sinh(d * t / 2))
    else:
        g = np.exp(-lam * t / 2) * (1.0 + lam * t / 2)
    p = g * g
    out = np.empty((2, 2), dtype=complex)
    out[0, 0] = rho0[0, 0] * p
    out[0, 1] = rho0[0, 1] * g
    out[1, 0] = rho0[1, 0] * g
    out[1, 1] = rho0[1, 1] + rho0[0, 0] * (1.0 - p)
    return out


def projected_gradient_svr_dual(kern, y, c, eps, max_iter=200_000):
    """Dense brute-force solution of the epsilon-SVR dual (box QP over
    (alpha, alpha*)) by projected gradient, run to tight tolerance.

    Returns the optimal dual objective (the maximized form)."""
    l = len(y)
    q = np.block([[kern, -kern], [-kern, kern]])
    p = np.concatenate([eps - y, eps + y])
    z = np.concatenate([np.ones(l), -np.ones(l)])
    lip = float(np.linalg.eigvalsh(q).max()) + 1e-9

    def project(v):
        lo, hi = -(c + np.abs(v).max()), c + np.abs(v).max()
        for _ in range(100):
            theta = 0.5 * (lo + hi)
            if z @ np.clip(v - theta * z, 0.0, c) > 0:
                lo = theta
            else:
                hi = theta
        return np.clip(v - 0.5 * (lo + hi) * z, 0.0, c)

    a = np.zeros(2 * l)
    prev_obj = np.inf
    for it in range(max_iter):
        grad = q @ a + p
        a = project(a - grad / lip)
        if it % 500 == 499:
            obj = 0.5 * a @ q @ a + p @ a
            if abs(prev_obj - obj) < 1e-15 * max(1.0, abs(obj)):
                break
            prev_obj = obj
    return -float(0.5 * a @ q @ a + p @ a)
