"""Epsilon-insensitive support vector regression with an RBF kernel.

The dual problem in beta_i = alpha_i - alpha_i* is

    maximize  -1/2 sum_ij beta_i beta_j K_ij - eps sum_i |beta_i| + sum_i y_i beta_i
    s.t.      sum_i beta_i = 0,   -C <= beta_i <= C,

solved as the equivalent smooth box QP over a = (alpha, alpha*) by an
SMO-type two-variable decomposition with first-order maximal-violating-pair
selection and the standard m - M < tol stopping rule.  The full Gram matrix
is cached (paper-scale problems stay below ~7000 x 7000).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dataset import Scaler
from .errors import ConfigError, DataFormatError

DEFAULT_MAX_ITER = 10_000_000
SUPPORT_TOL = 1e-12  # dual coefficients at or below this are dropped
_MODEL_MAGIC = "nonmarkov-svr v1"
_FMT = "%.17g"


@dataclass(frozen=True)
class SvrConfig:
    """Hyperparameters: defaults are the published eps/C/tol settings."""

    C: float = 1.0
    epsilon: float = 1e-3
    tol: float = 1e-3
    kernel_gamma: float | str = "scale"
    max_iter: int = DEFAULT_MAX_ITER

    def __post_init__(self):
        if not self.C > 0:
            raise ConfigError(f"C must be > 0, got {self.C}")
        if self.epsilon < 0:
            raise ConfigError(f"epsilon must be >= 0, got {self.epsilon}")
        if not self.tol > 0:
            raise ConfigError(f"tol must be > 0, got {self.tol}")
        if isinstance(self.kernel_gamma, str):
            if self.kernel_gamma != "scale":
                raise ConfigError("kernel_gamma must be positive or 'scale'")
        elif not self.kernel_gamma > 0:
            raise ConfigError(f"kernel_gamma must be > 0, got {self.kernel_gamma}")
        if self.max_iter < 1:
            raise ConfigError("max_iter must be >= 1")


def resolve_gamma(config_gamma, features: np.ndarray) -> float:
    """'scale' resolves to 1 / (n_features * mean per-feature variance)."""
    if not isinstance(config_gamma, str):
        return float(config_gamma)
    var = float(features.var(axis=0).mean())
    if var <= 0:
        return 1.0
    return 1.0 / (features.shape[1] * var)


def rbf(x: np.ndarray, y: np.ndarray, gamma: float) -> float:
    """k(x, y) = exp(-gamma ||x - y||^2)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape:
        raise ConfigError(f"length mismatch {x.shape} vs {y.shape}")
    if not gamma > 0:
        raise ConfigError(f"gamma must be > 0, got {gamma}")
    return float(np.exp(-gamma * np.sum((x - y) ** 2)))


def rbf_gram(x: np.ndarray, y: np.ndarray, gamma: float) -> np.ndarray:
    """Kernel matrix k(x_i, y_j), shape (len(x), len(y))."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape[1] != y.shape[1]:
        raise ConfigError(f"feature length mismatch {x.shape} vs {y.shape}")
    sq = (
        (x**2).sum(axis=1)[:, None]
        + (y**2).sum(axis=1)[None, :]
        - 2.0 * (x @ y.T)
    )
    return np.exp(-gamma * np.clip(sq, 0.0, None))


@dataclass(frozen=True)
class SvrModel:
    """Fitted regressor: f(x) = sum_i beta_i k(sv_i, scale(x)) + b."""

    support_vectors: np.ndarray  # (m, d), in standardized feature space
    dual_coefs: np.ndarray  # (m,) beta_i
    intercept: float
    kernel_gamma: float
    scaler: Scaler
    converged: bool = True
    n_iter: int = 0
    objective_history: np.ndarray | None = field(default=None, compare=False)


def fit(
    x: np.ndarray,
    y: np.ndarray,
    config: SvrConfig = SvrConfig(),
    scaler: Scaler | None = None,
    record_objective: bool = False,
) -> SvrModel:
    """Train on (already standardized) features x and targets y.

    The scaler used to standardize x is stored on the model so predictions
    accept raw features; pass scaler=None for identity scaling.  A model that
    hits max_iter is returned with converged=False, never silently.
    """
    x = np.ascontiguousarray(x, dtype=float)
    y = np.ascontiguousarray(y, dtype=float)
    if x.ndim != 2 or y.shape != (x.shape[0],):
        raise ConfigError(f"bad training shapes {x.shape}, {y.shape}")
    l = x.shape[0]
    if l < 2:
        raise ConfigError("need at least 2 training rows")
    if scaler is None:
        scaler = Scaler.identity(x.shape[1])
    gamma = resolve_gamma(config.kernel_gamma, x)
    kern = rbf_gram(x, x, gamma)
    c, eps, tol = config.C, config.epsilon, config.tol

    # a = (alpha, alpha*) in [0, C]^{2l}; minimize 1/2 a^T Q a + p^T a with
    # Q = [[K, -K], [-K, K]], p = (eps - y, eps + y), subject to z^T a = 0.
    a = np.zeros(2 * l)
    grad = np.concatenate([eps - y, eps + y])
    p = grad.copy()
    z = np.ones(2 * l)
    z[l:] = -1.0
    neg_inf = np.full(2 * l, -np.inf)
    pos_inf = np.full(2 * l, np.inf)
    history = [] if record_objective else None

    n_iter = 0
    converged = False
    while n_iter < config.max_iter:
        crit = -z * grad
        up = ((z > 0) & (a < c)) | ((z < 0) & (a > 0))
        low = ((z > 0) & (a > 0)) | ((z < 0) & (a < c))
        i = int(np.argmax(np.where(up, crit, neg_inf)))
        j = int(np.argmin(np.where(low, crit, pos_inf)))
        m_up = crit[i] if up[i] else -np.inf
        m_low = crit[j] if low[j] else np.inf
        if m_up - m_low < tol:
            converged = True
            break

        ki = kern[i % l]
        kj = kern[j % l]
        quad = max(ki[i % l] + kj[j % l] - 2.0 * ki[j % l], 1e-12)
        if z[i] == z[j]:
            delta = -(grad[i] - grad[j]) / quad
            lo_bound = max(-a[i], a[j] - c)
            hi_bound = min(c - a[i], a[j])
            delta = min(max(delta, lo_bound), hi_bound)
            da_i, da_j = delta, -delta
        else:
            delta = -(grad[i] + grad[j]) / quad
            lo_bound = max(-a[i], -a[j])
            hi_bound = min(c - a[i], c - a[j])
            delta = min(max(delta, lo_bound), hi_bound)
            da_i, da_j = delta, delta
        a[i] += da_i
        a[j] += da_j
        # keep box bounds exact so the working-set masks stay crisp
        for t in (i, j):
            if a[t] < 1e-14:
                a[t] = 0.0
            elif a[t] > c - 1e-14:
                a[t] = c
        si = z[i] * da_i
        sj = z[j] * da_j
        grad[:l] += si * ki + sj * kj
        grad[l:] -= si * ki + sj * kj
        n_iter += 1
        if history is not None:
            # dual objective -f(a) with f = 1/2 a^T Q a + p^T a = (a.G + a.p)/2
            history.append(-0.5 * float(a @ grad + a @ p))

    beta = a[:l] - a[l:]
    f0 = kern @ beta
    intercept = _intercept(beta, y, f0, c, eps)
    keep = np.abs(beta) > SUPPORT_TOL
    model = SvrModel(
        support_vectors=x[keep].copy(),
        dual_coefs=beta[keep].copy(),
        intercept=intercept,
        kernel_gamma=gamma,
        scaler=scaler,
        converged=converged,
        n_iter=n_iter,
        objective_history=np.array(history) if history is not None else None,
    )
    return model


def _intercept(beta, y, f0, c, eps) -> float:
    """b from free support vectors, or the feasible-interval midpoint."""
    resid = y - f0
    free = (np.abs(beta) > SUPPORT_TOL) & (np.abs(beta) < c)
    if free.any():
        return float(np.mean(resid[free] - eps * np.sign(beta[free])))
    lower, upper = [], []
    zero = np.abs(beta) <= SUPPORT_TOL
    if zero.any():
        lower.append((resid[zero] - eps).max())
        upper.append((resid[zero] + eps).min())
    at_pos = beta >= c
    if at_pos.any():
        upper.append((resid[at_pos] - eps).min())
    at_neg = beta <= -c
    if at_neg.any():
        lower.append((resid[at_neg] + eps).max())
    lo = max(lower) if lower else -np.inf
    hi = min(upper) if upper else np.inf
    if not np.isfinite(lo):
        return float(hi)
    if not np.isfinite(hi):
        return float(lo)
    return float((lo + hi) / 2.0)


def decision_function(model: SvrModel, x_std: np.ndarray) -> np.ndarray:
    """Kernel expansion on already-standardized features."""
    x_std = np.atleast_2d(np.asarray(x_std, dtype=float))
    if len(model.dual_coefs) == 0:
        return np.full(x_std.shape[0], model.intercept)
    if x_std.shape[1] != model.support_vectors.shape[1]:
        raise ConfigError(
            f"feature length {x_std.shape[1]} does not match model "
            f"({model.support_vectors.shape[1]})"
        )
    return rbf_gram(x_std, model.support_vectors, model.kernel_gamma) @ model.dual_coefs + model.intercept


def predict(model: SvrModel, features: np.ndarray):
    """Apply the stored scaler, then the kernel expansion."""
    features = np.asarray(features, dtype=float)
    single = features.ndim == 1
    out = decision_function(model, model.scaler.transform(np.atleast_2d(features)))
    return float(out[0]) if single else out


def mae(predictions, truths) -> float:
    """Mean absolute error."""
    predictions = np.asarray(predictions, dtype=float)
    truths = np.asarray(truths, dtype=float)
    if predictions.shape != truths.shape:
        raise ConfigError(f"shape mismatch {predictions.shape} vs {truths.shape}")
    return float(np.mean(np.abs(predictions - truths)))


def dual_objective(model: SvrModel, x_std: np.ndarray, y: np.ndarray, config: SvrConfig) -> float:
    """Value of the beta-form dual objective at the fitted coefficients."""
    beta = np.zeros(len(y))
    if len(model.dual_coefs):
        sv_index = _match_rows(x_std, model.support_vectors)
        beta[sv_index] = model.dual_coefs
    kern = rbf_gram(x_std, x_std, model.kernel_gamma)
    return float(
        -0.5 * beta @ kern @ beta
        - config.epsilon * np.abs(beta).sum()
        + y @ beta
    )


def _match_rows(x: np.ndarray, rows: np.ndarray) -> np.ndarray:
    idx = []
    used = set()
    for r in rows:
        hits = [h for h in np.flatnonzero((x == r).all(axis=1)) if h not in used]
        if not hits:
            raise ConfigError("support vector not found among training rows")
        used.add(hits[0])
        idx.append(hits[0])
    return np.array(idx, dtype=int)


def kkt_violations(
    model: SvrModel, x_std: np.ndarray, y: np.ndarray, config: SvrConfig
) -> np.ndarray:
    """Per-point epsilon-KKT violation magnitudes of a fitted model.

    beta = 0 requires |r| <= eps; |beta| = C requires r sign(beta) >= eps;
    free requires r = eps sign(beta), with r = y - f(x).
    """
    beta = np.zeros(len(y))
    if len(model.dual_coefs):
        beta[_match_rows(x_std, model.support_vectors)] = model.dual_coefs
    resid = y - decision_function(model, x_std)
    eps, c = config.epsilon, config.C
    viol = np.empty(len(y))
    zero = np.abs(beta) <= SUPPORT_TOL
    bound = np.abs(beta) >= c - 1e-9
    free = ~zero & ~bound
    viol[zero] = np.clip(np.abs(resid[zero]) - eps, 0.0, None)
    viol[bound] = np.clip(eps - resid[bound] * np.sign(beta[bound]), 0.0, None)
    viol[free] = np.abs(resid[free] - eps * np.sign(beta[free]))
    return viol


def save_model(model: SvrModel, path) -> None:
    """Versioned plain-text serialization at 17 significant digits."""
    lines = [f"{_MODEL_MAGIC} gamma {_FMT % model.kernel_gamma}"]
    lines.append(f"scaler {len(model.scaler.mean)}")
    for u, s in zip(model.scaler.mean, model.scaler.scale):
        lines.append(f"{_FMT % u} {_FMT % s}")
    lines.append(f"intercept {_FMT % model.intercept}")
    lines.append(f"support_vectors {len(model.dual_coefs)}")
    for beta, sv in zip(model.dual_coefs, model.support_vectors):
        lines.append(" ".join([_FMT % beta] + [_FMT % v for v in sv]))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def load_model(path) -> SvrModel:
    with open(path, encoding="utf-8") as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if not lines:
        raise DataFormatError("empty model file")
    head = lines[0].rsplit(" gamma ", 1)
    if len(head) != 2 or head[0] != _MODEL_MAGIC:
        raise DataFormatError(f"not a model file of version '{_MODEL_MAGIC}'")
    try:
        gamma = float(head[1])
        pos = 1
        tag, count = lines[pos].split()
        if tag != "scaler":
            raise DataFormatError("expected scaler block")
        d = int(count)
        pairs = [tuple(float(v) for v in lines[pos + 1 + k].split()) for k in range(d)]
        scaler = Scaler(np.array([p[0] for p in pairs]), np.array([p[1] for p in pairs]))
        pos += 1 + d
        tag, val = lines[pos].split()
        if tag != "intercept":
            raise DataFormatError("expected intercept line")
        intercept = float(val)
        pos += 1
        tag, count = lines[pos].split()
        if tag != "support_vectors":
            raise DataFormatError("expected support_vectors block")
        m = int(count)
        rows = [
            np.array([float(v) for v in lines[pos + 1 + k].split()]) for k in range(m)
        ]
        if pos + 1 + m != len(lines):
            raise DataFormatError("trailing or missing lines in model file")
    except DataFormatError:
        raise
    except (ValueError, IndexError) as exc:
        raise DataFormatError(f"malformed model file: {exc}") from exc
    svs = (
        np.array([r[1:] for r in rows]) if m else np.zeros((0, d))
    )
    coefs = np.array([r[0] for r in rows]) if m else np.zeros(0)
    if m and svs.shape[1] != d:
        raise DataFormatError("support vector width does not match scaler width")
    if not (np.isfinite(coefs).all() and np.isfinite(svs).all()):
        raise DataFormatError("non-finite values in model file")
    if m and abs(coefs.sum()) > 1e-3 * max(1.0, np.abs(coefs).sum()):
        raise DataFormatError("dual coefficients violate the equality constraint")
    return SvrModel(svs, coefs, intercept, gamma, scaler)
