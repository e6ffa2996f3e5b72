"""Time evolution under the three channel back-ends.

Phase damping is the colored-dephasing Kraus map with decoherence factor
Lambda(nu) = exp(-nu) [cos(mu nu) + sin(mu nu)/mu],  mu = sqrt((4 tau)^2 - 1),
applied at dimensionless time nu.  Undriven amplitude damping uses the closed
form with survival probability
P_t = exp(-lambda t) [cos(d t/2) + (lambda/d) sin(d t/2)]^2,
d = sqrt(2 gamma0 lambda - lambda^2).  The driven case has no closed form and
is integrated as a qubit coupled to a damped pseudomode oscillator,
d rho/dt = -i[H, rho] + lambda (2 b rho b+ - b+b rho - rho b+b),
H = Omega (s+ + s-) + sqrt(lambda gamma0 / 2) (s+ b + b+ s-),
with fixed-step 4th-order Runge-Kutta in a frame rotating with the drive.

Parameter regimes where mu or d would be imaginary are evaluated with the
hyperbolic rewrites so every output is manifestly real; the degenerate points
4 tau = 1 and lambda = 2 gamma0 use the analytic limits.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import qmath
from .errors import ConfigError, NumericError, TruncationLeakError

DEFAULT_RK4_STEP = 1e-3  # in units of 1/gamma0; two orders below max(lam, Omega, g)
DEFAULT_N_FOCK = 8
LEAK_TOL = 1e-6
TRACE_DRIFT_TOL = 1e-8
_DEGENERATE_TOL = 1e-6  # switch to series limit when |mu| or |d| falls below
_STRIDE = 16  # time streams advanced together so stepping runs as one GEMM


@dataclass(frozen=True)
class PhaseDamping:
    """Colored dephasing with memory parameter tau (> 0); time is nu = t/2tau."""

    tau: float

    def __post_init__(self):
        if not self.tau > 0:
            raise ConfigError(f"tau must be > 0, got {self.tau}")

    @property
    def mu_squared(self) -> float:
        return (4.0 * self.tau) ** 2 - 1.0


@dataclass(frozen=True)
class AmplitudeDamping:
    """Lorentzian-reservoir decay with width lam (> 0), in units of gamma0."""

    lam: float
    gamma0: float = 1.0

    def __post_init__(self):
        if not self.lam > 0:
            raise ConfigError(f"lambda must be > 0, got {self.lam}")
        if not self.gamma0 > 0:
            raise ConfigError(f"gamma0 must be > 0, got {self.gamma0}")

    @property
    def d_squared(self) -> float:
        return 2.0 * self.gamma0 * self.lam - self.lam**2


@dataclass(frozen=True)
class DrivenAmplitudeDamping:
    """Amplitude damping plus a resonant drive of strength omega (>= 0)."""

    lam: float
    omega: float
    gamma0: float = 1.0
    n_fock: int = DEFAULT_N_FOCK

    def __post_init__(self):
        if not self.lam > 0:
            raise ConfigError(f"lambda must be > 0, got {self.lam}")
        if self.omega < 0:
            raise ConfigError(f"omega must be >= 0, got {self.omega}")
        if not self.gamma0 > 0:
            raise ConfigError(f"gamma0 must be > 0, got {self.gamma0}")
        if int(self.n_fock) != self.n_fock or self.n_fock < 2:
            raise ConfigError(f"n_fock must be an integer >= 2, got {self.n_fock}")


Channel = PhaseDamping | AmplitudeDamping | DrivenAmplitudeDamping


@dataclass(frozen=True)
class TimeGrid:
    """Uniform samples 0 = t_0 < ... < t_max with n_steps intervals."""

    t_max: float
    n_steps: int

    def __post_init__(self):
        if self.t_max < 0:
            raise ConfigError(f"t_max must be >= 0, got {self.t_max}")
        if int(self.n_steps) != self.n_steps or self.n_steps < 1:
            raise ConfigError(f"n_steps must be an integer >= 1, got {self.n_steps}")

    @property
    def values(self) -> np.ndarray:
        return np.linspace(0.0, self.t_max, self.n_steps + 1)

    @property
    def spacing(self) -> float:
        return self.t_max / self.n_steps

    def doubled(self) -> "TimeGrid":
        return TimeGrid(self.t_max, 2 * self.n_steps)

    def index_of(self, t: float) -> int:
        """Index of a sample that coincides with time t (error if none does)."""
        if self.t_max == 0:
            if abs(t) > 1e-9:
                raise ConfigError(f"time {t} outside degenerate grid")
            return 0
        idx = int(round(t / self.spacing))
        if idx < 0 or idx > self.n_steps or abs(idx * self.spacing - t) > 1e-9:
            raise ConfigError(f"time {t} is not a sample of grid {self}")
        return idx


def pd_lambda(nu, tau: float):
    """Dephasing factor Lambda(nu) for memory parameter tau."""
    nu = np.asarray(nu, dtype=float)
    if np.any(nu < 0):
        raise ConfigError("nu must be >= 0")
    if not tau > 0:
        raise ConfigError(f"tau must be > 0, got {tau}")
    mu_sq = (4.0 * tau) ** 2 - 1.0
    env = np.exp(-nu)
    if abs(mu_sq) < _DEGENERATE_TOL**2:
        out = env * (1.0 + nu)
    elif mu_sq > 0:
        mu = math.sqrt(mu_sq)
        out = env * (np.cos(mu * nu) + np.sin(mu * nu) / mu)
    else:
        mu = math.sqrt(-mu_sq)
        out = env * (np.cosh(mu * nu) + np.sinh(mu * nu) / mu)
    return float(out) if out.ndim == 0 else out


def ad_amplitude(t, lam: float, gamma0: float = 1.0):
    """Signed excited-state amplitude G(t) of the undriven AD channel.

    G(t) = exp(-lam t/2) [cos(d t/2) + (lam/d) sin(d t/2)]; populations decay
    with P_t = G^2 and coherences scale with G itself, which goes negative
    past its zeros in the strong-coupling regime.
    """
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ConfigError("t must be >= 0")
    if not (lam > 0 and gamma0 > 0):
        raise ConfigError(f"need lambda > 0 and gamma0 > 0, got {lam}, {gamma0}")
    d_sq = 2.0 * gamma0 * lam - lam**2
    env = np.exp(-lam * t / 2.0)
    if abs(d_sq) < _DEGENERATE_TOL**2:
        amp = 1.0 + lam * t / 2.0
    elif d_sq > 0:
        d = math.sqrt(d_sq)
        amp = np.cos(d * t / 2.0) + (lam / d) * np.sin(d * t / 2.0)
    else:
        d = math.sqrt(-d_sq)
        amp = np.cosh(d * t / 2.0) + (lam / d) * np.sinh(d * t / 2.0)
    out = env * amp
    return float(out) if out.ndim == 0 else out


def ad_survival(t, lam: float, gamma0: float = 1.0):
    """Excited-state survival probability P_t = G(t)^2."""
    out = np.asarray(ad_amplitude(t, lam, gamma0)) ** 2
    return float(out) if out.ndim == 0 else out


def pd_apply(rho: np.ndarray, nu: float, tau: float) -> np.ndarray:
    """Kraus map of the dephasing channel: populations fixed, coherences
    scaled by Lambda(nu)."""
    rho = qmath.validate_density(rho, "pd_apply input")
    if rho.shape != (2, 2):
        raise ConfigError(f"pd_apply needs a single-qubit state, got {rho.shape}")
    lam_nu = pd_lambda(float(nu), tau)
    m1 = math.sqrt((1.0 + lam_nu) / 2.0) * qmath.IDENTITY_2
    m2 = math.sqrt(max(0.0, (1.0 - lam_nu) / 2.0)) * qmath.SIGMA_Z
    out = m1 @ rho @ qmath.dag(m1) + m2 @ rho @ qmath.dag(m2)
    return qmath.validate_density(out, "pd_apply output (internal)")


def ad_kraus(g: float) -> tuple[np.ndarray, np.ndarray]:
    """Kraus pair of amplitude damping at signed amplitude g (|g| <= 1)."""
    m1 = np.array([[g, 0.0], [0.0, 1.0]], dtype=complex)
    m2 = np.array([[0.0, 0.0], [math.sqrt(max(0.0, 1.0 - g * g)), 0.0]], dtype=complex)
    return m1, m2


def ad_apply(rho: np.ndarray, t: float, lam: float, gamma0: float = 1.0) -> np.ndarray:
    """Closed-form undriven AD map at time t (units of 1/gamma0).

    Populations scale with P_t, coherences with the signed amplitude G(t).
    """
    rho = qmath.validate_density(rho, "ad_apply input")
    if rho.shape != (2, 2):
        raise ConfigError(f"ad_apply needs a single-qubit state, got {rho.shape}")
    g = ad_amplitude(float(t), lam, gamma0)
    m1, m2 = ad_kraus(g)
    out = m1 @ rho @ qmath.dag(m1) + m2 @ rho @ qmath.dag(m2)
    return qmath.validate_density(out, "ad_apply output (internal)")


def _lowering(n: int) -> np.ndarray:
    b = np.zeros((n, n), dtype=complex)
    for i in range(n - 1):
        b[i, i + 1] = math.sqrt(i + 1)
    return b


class _PseudomodePropagator:
    """Precomputed RK4 step for the qubit + pseudomode master equation.

    The generator L is time independent, so one RK4 step is the fixed linear
    map I + hL + (hL)^2/2 + (hL)^3/6 + (hL)^4/24 acting on row-major
    vectorized operators; stepping then runs as matrix products, with
    _STRIDE interleaved time streams per physical column to keep the GEMMs
    wide on a single core.
    """

    def __init__(self, channel: DrivenAmplitudeDamping, h: float):
        n = channel.n_fock
        self.n_fock = n
        self.dim = 2 * n
        lam, g0, om = channel.lam, channel.gamma0, channel.omega
        sp = np.array([[0.0, 1.0], [0.0, 0.0]], dtype=complex)  # |e><g|
        b = _lowering(n)
        eye_n = np.eye(n, dtype=complex)
        g = math.sqrt(lam * g0 / 2.0)
        ham = om * np.kron(qmath.SIGMA_X, eye_n)
        ham = ham + g * (np.kron(sp, b) + np.kron(sp, b).conj().T)
        b_full = np.kron(qmath.IDENTITY_2, b)
        num = b_full.conj().T @ b_full
        drift = -1j * ham - lam * num  # RHS(X) = drift X + X drift+ + 2 lam B X B+
        d = self.dim
        eye_d = np.eye(d, dtype=complex)
        lsuper = (
            np.kron(drift, eye_d)
            + np.kron(eye_d, drift.conj())
            + 2.0 * lam * np.kron(b_full, b_full.conj())
        )
        hl = h * lsuper
        eye_s = np.eye(d * d, dtype=complex)
        phi = eye_s + 0.25 * hl
        phi = eye_s + (hl @ phi) / 3.0
        phi = eye_s + 0.5 * (hl @ phi)
        self.phi = eye_s + hl @ phi
        psi = self.phi
        for _ in range(4):  # phi^_STRIDE by repeated squaring
            psi = psi @ psi
        self.psi = psi
        rows = np.arange(d)
        self.diag_idx = rows * d + rows
        top_rows = np.array([n - 1, 2 * n - 1])
        self.top_idx = top_rows * d + top_rows

    def run(self, cols0: np.ndarray, n_steps: int, keep_stride: int = 1):
        """Advance k vectorized operators n_steps RK4 steps.

        Returns (reduced, tops, traces): qubit-reduced 2x2 operators at every
        keep_stride-th step including step 0, and the top-Fock-level diagonal
        sum and full trace of every step for the caller's physical checks.
        """
        d = self.dim
        d2, k = cols0.shape
        if d2 != d * d:
            raise ConfigError("column dimension mismatch")
        n_keep = n_steps // keep_stride
        n = self.n_fock
        reduced = np.empty((n_keep + 1, k, 2, 2), dtype=complex)
        tops = np.empty((n_steps + 1, k), dtype=complex)
        traces = np.empty((n_steps + 1, k), dtype=complex)

        def reduce_cols(w):
            # w: (d2, m) -> (m, 2, 2) qubit operators, pseudomode traced out
            view = w.reshape(2, n, 2, n, -1)
            return np.einsum("aibim->mab", view)

        reduced[0] = reduce_cols(cols0)
        tops[0] = cols0[self.top_idx].sum(axis=0)
        traces[0] = cols0[self.diag_idx].sum(axis=0)
        if n_steps == 0:
            return reduced, tops, traces

        stride = min(_STRIDE, n_steps)
        # seed the interleaved streams: block j holds the state at step j+1
        w = np.empty((d2, stride * k), dtype=complex)
        cur = cols0
        for j in range(stride):
            cur = self.phi @ cur
            w[:, j * k : (j + 1) * k] = cur
        psi = self.psi if stride == _STRIDE else np.linalg.matrix_power(
            self.phi, stride
        )

        kept = (1 + np.arange(n_keep)) * keep_stride  # steps >= 1 that are kept
        kept_pos = 1
        base = 0  # block holds steps base+1 .. base+stride
        while True:
            m = min(stride, n_steps - base)
            view = w.reshape(d2, stride, k)
            tops[base + 1 : base + 1 + m] = view[self.top_idx].sum(axis=0)[:m]
            traces[base + 1 : base + 1 + m] = view[self.diag_idx].sum(axis=0)[:m]
            red = reduce_cols(w.reshape(d2, stride * k)).reshape(stride, k, 2, 2)
            while kept_pos <= n_keep and kept[kept_pos - 1] <= base + m:
                reduced[kept_pos] = red[kept[kept_pos - 1] - base - 1]
                kept_pos += 1
            base += stride
            if base >= n_steps:
                break
            w = psi @ w
        return reduced, tops, traces


def _substeps(spacing: float, dt: float) -> int:
    return max(1, math.ceil(spacing / dt - 1e-9))


def _check_physical(top: np.ndarray, trace: np.ndarray, what: str) -> None:
    leak = float(top.real.max())
    if leak > LEAK_TOL:
        raise TruncationLeakError(
            f"{what}: top Fock level population {leak:.3e} exceeds {LEAK_TOL:g}; "
            "increase n_fock"
        )
    drift = float(np.abs(trace - 1.0).max())
    if drift > TRACE_DRIFT_TOL:
        raise NumericError(f"{what}: trace drift {drift:.3e} exceeds {TRACE_DRIFT_TOL:g}")


def _vacuum_projector(n: int) -> np.ndarray:
    vac = np.zeros((n, n), dtype=complex)
    vac[0, 0] = 1.0
    return vac


def driven_ad_evolve(
    rho0: np.ndarray,
    grid: TimeGrid,
    channel: DrivenAmplitudeDamping,
    system_dims: tuple[int, ...] = (2,),
    dt: float | None = None,
) -> np.ndarray:
    """Integrate the pseudomode master equation and trace out the pseudomode.

    rho0 lives on (system factors) x pseudomode with the pseudomode in the
    Fock vacuum; system_dims is (2,) for the open qubit alone or (2, 2) for an
    untouched ancilla qubit followed by the open qubit.  Returns the reduced
    system state at every grid sample, shape (n_steps + 1, d_sys, d_sys).
    """
    system_dims = tuple(int(d) for d in system_dims)
    if system_dims not in ((2,), (2, 2)):
        raise ConfigError(f"system_dims must be (2,) or (2, 2), got {system_dims}")
    n = channel.n_fock
    d_sys = int(np.prod(system_dims))
    qmath.validate_density(rho0, "driven_ad_evolve input")
    if rho0.shape != (d_sys * n, d_sys * n):
        raise ConfigError(
            f"rho0 has shape {rho0.shape}, expected {(d_sys * n, d_sys * n)}"
        )
    pm = qmath.partial_trace(rho0, [d_sys, n], keep=[1])
    if np.abs(pm - _vacuum_projector(n)).max() > 1e-9:
        raise ConfigError("pseudomode factor of rho0 is not the Fock vacuum")

    if grid.t_max == 0:
        red = qmath.partial_trace(rho0, list(system_dims) + [n], keep=list(range(len(system_dims))))
        return np.broadcast_to(red, (grid.n_steps + 1, d_sys, d_sys)).copy()

    if dt is None:
        dt = DEFAULT_RK4_STEP / channel.gamma0
    n_sub = _substeps(grid.spacing, dt)
    prop = _PseudomodePropagator(channel, grid.spacing / n_sub)
    d = 2 * n

    if system_dims == (2,):
        cols = rho0.reshape(d * d, 1)
        reduced, tops, traces = prop.run(cols, grid.n_steps * n_sub, n_sub)
        _check_physical(tops[:, 0], traces[:, 0], "driven_ad_evolve")
        out = reduced[:, 0]
    else:
        blocks = rho0.reshape(2, d, 2, d)
        cols = np.stack(
            [blocks[a, :, b, :].reshape(d * d) for a in range(2) for b in range(2)],
            axis=1,
        )
        reduced, tops, traces = prop.run(cols, grid.n_steps * n_sub, n_sub)
        _check_physical(
            tops[:, 0] + tops[:, 3], traces[:, 0] + traces[:, 3], "driven_ad_evolve"
        )
        m = reduced.shape[0]
        out = np.empty((m, 4, 4), dtype=complex)
        view = out.reshape(m, 2, 2, 2, 2)
        for a in range(2):
            for b in range(2):
                view[:, a, :, b, :] = reduced[:, 2 * a + b]
    out = 0.5 * (out + qmath.dag(out))  # scrub 1e-16 integrator asymmetry
    return qmath.validate_density(out, "driven_ad_evolve output")


def driven_bell_and_plus(
    channel: DrivenAmplitudeDamping, grid: TimeGrid, dt: float | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """One integration pass serving both dataset quantities.

    Returns (bell, plus): the reduced ancilla x qubit state of an evolved Bell
    pair, and the reduced qubit state evolved from |+>, at every grid sample.
    Both come from the same three operator trajectories |e><e|, |e><g|,
    |g><g| (x) vacuum by linearity of the master equation.
    """
    n = channel.n_fock
    if dt is None:
        dt = DEFAULT_RK4_STEP / channel.gamma0
    vac = _vacuum_projector(n)
    x_ee = np.kron(qmath.ket2dm(qmath.KET_E), vac)
    x_eg = np.kron(np.outer(qmath.KET_E, qmath.KET_G.conj()), vac)
    x_gg = np.kron(qmath.ket2dm(qmath.KET_G), vac)

    if grid.t_max == 0:
        m = grid.n_steps + 1
        bell0 = qmath.ket2dm(qmath.KET_BELL)
        plus0 = qmath.ket2dm(qmath.KET_PLUS)
        return (
            np.broadcast_to(bell0, (m, 4, 4)).copy(),
            np.broadcast_to(plus0, (m, 2, 2)).copy(),
        )

    n_sub = _substeps(grid.spacing, dt)
    prop = _PseudomodePropagator(channel, grid.spacing / n_sub)
    d = 2 * n
    cols = np.stack([x.reshape(d * d) for x in (x_ee, x_eg, x_gg)], axis=1)
    reduced, tops, traces = prop.run(cols, grid.n_steps * n_sub, n_sub)

    top_sym = tops[:, 0] + tops[:, 2]
    trace_sym = traces[:, 0] + traces[:, 2]
    _check_physical(0.5 * top_sym, 0.5 * trace_sym, "driven evolution (bell)")
    _check_physical(
        0.5 * (top_sym + 2.0 * tops[:, 1].real),
        0.5 * (trace_sym + 2.0 * traces[:, 1].real),
        "driven evolution (plus)",
    )

    r_ee, r_eg, r_gg = reduced[:, 0], reduced[:, 1], reduced[:, 2]
    r_ge = qmath.dag(r_eg)
    m = reduced.shape[0]
    bell = np.empty((m, 4, 4), dtype=complex)
    view = bell.reshape(m, 2, 2, 2, 2)
    view[:, 0, :, 0, :] = r_ee
    view[:, 0, :, 1, :] = r_eg
    view[:, 1, :, 0, :] = r_ge
    view[:, 1, :, 1, :] = r_gg
    bell *= 0.5
    plus = 0.5 * (r_ee + r_eg + r_ge + r_gg)
    bell = 0.5 * (bell + qmath.dag(bell))
    plus = 0.5 * (plus + qmath.dag(plus))
    qmath.validate_density(bell, "driven evolution (bell)")
    qmath.validate_density(plus, "driven evolution (plus)")
    return bell, plus
