"""Self-contained numerical primitives.

Isotonic regression (pool-adjacent-violators, scalar and row-batched),
clipped symmetric eigendecomposition, upper Cholesky factors, ridge-regularized
SPD inversion, and derivative-free minimization (multistart Nelder-Mead plus a
bounded scalar search).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np
from numba import njit
from scipy.optimize import minimize_scalar

from .errors import BadObjective, EmptyInput, NotPositiveDefinite, NotSymmetric

__all__ = [
    "OptimizerOptions",
    "MinimizeResult",
    "isotonic_regression",
    "isotonic_rows",
    "sym_eig_clip",
    "cholesky_factor",
    "spd_inverse_ridge",
    "nelder_mead",
    "multistart_points",
    "brent_min",
]

_SYM_ATOL = 1e-10


# ---------------------------------------------------------------------------
# Isotonic regression
# ---------------------------------------------------------------------------

def isotonic_regression(values, weights=None) -> np.ndarray:
    """Nondecreasing vector minimizing sum_i w_i (out_i - values_i)^2.

    Pool-adjacent-violators with optional positive weights. With equal
    weights the output mean equals the input mean.
    """
    v = np.asarray(values, dtype=float).ravel()
    if v.size == 0:
        raise EmptyInput("isotonic_regression: empty input")
    if weights is None:
        w = np.ones_like(v)
    else:
        w = np.asarray(weights, dtype=float).ravel()
        if w.shape != v.shape:
            raise EmptyInput(
                f"isotonic_regression: {v.size} values but {w.size} weights"
            )
        if np.any(w <= 0):
            raise ValueError("isotonic_regression: weights must be positive")

    # Blocks kept as (mean, weight, last index); pool while out of order.
    means: list[float] = []
    wts: list[float] = []
    last: list[int] = []
    for i in range(v.size):
        m, ww = float(v[i]), float(w[i])
        while means and means[-1] > m:
            m = (means[-1] * wts[-1] + m * ww) / (wts[-1] + ww)
            ww += wts[-1]
            means.pop()
            wts.pop()
            last.pop()
        means.append(m)
        wts.append(ww)
        last.append(i)

    out = np.empty_like(v)
    start = 0
    for m, stop in zip(means, last):
        out[start : stop + 1] = m
        start = stop + 1
    return out


@njit(cache=True)
def isotonic_rows(rows):  # pragma: no cover - exercised via wrapper tests
    """Equal-weight PAVA applied independently to each row of a 2-D array."""
    n, m = rows.shape
    out = np.empty_like(rows)
    vals = np.empty(m)
    wts = np.empty(m)
    idx = np.empty(m, np.int64)
    for r in range(n):
        k = 0
        for i in range(m):
            v = rows[r, i]
            w = 1.0
            while k > 0 and vals[k - 1] > v:
                v = (vals[k - 1] * wts[k - 1] + v * w) / (wts[k - 1] + w)
                w += wts[k - 1]
                k -= 1
            vals[k] = v
            wts[k] = w
            idx[k] = i
            k += 1
        j = 0
        for b in range(k):
            while j <= idx[b]:
                out[r, j] = vals[b]
                j += 1
    return out


# ---------------------------------------------------------------------------
# Symmetric matrix helpers
# ---------------------------------------------------------------------------

def _check_symmetric(a: np.ndarray, what: str) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise NotSymmetric(f"{what}: expected a square matrix, got shape {a.shape}")
    scale = max(1.0, float(np.max(np.abs(a))) if a.size else 1.0)
    if np.max(np.abs(a - a.T)) > _SYM_ATOL * scale:
        raise NotSymmetric(f"{what}: matrix is not symmetric")
    return a


def sym_eig_clip(matrix, eps: float) -> np.ndarray:
    """Frobenius projection of a symmetric matrix onto {eigenvalues >= eps}."""
    a = _check_symmetric(matrix, "sym_eig_clip")
    if eps <= 0:
        raise ValueError("sym_eig_clip: eps must be positive")
    w, v = np.linalg.eigh(0.5 * (a + a.T))
    if w[0] >= eps:
        return a.copy()
    w = np.maximum(w, eps)
    out = (v * w) @ v.T
    return 0.5 * (out + out.T)


def cholesky_factor(matrix) -> np.ndarray:
    """Upper-triangular R with positive diagonal such that R^T R = matrix."""
    a = np.asarray(matrix, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise NotPositiveDefinite(
            f"cholesky_factor: expected a square matrix, got shape {a.shape}"
        )
    scale = max(1.0, float(np.max(np.abs(a))) if a.size else 1.0)
    if np.max(np.abs(a - a.T)) > _SYM_ATOL * scale:
        raise NotPositiveDefinite("cholesky_factor: matrix is not symmetric")
    try:
        lower = np.linalg.cholesky(a)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(f"cholesky_factor: {exc}") from exc
    return lower.T.copy()


def spd_inverse_ridge(matrix) -> np.ndarray:
    """(matrix + lambda*I)^-1 with lambda = 1e-10 * trace/p (1e-10 if trace is 0).

    Computed through the eigendecomposition so the output is exactly symmetric
    and finite even for singular PSD input.
    """
    a = np.asarray(matrix, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise NotSymmetric(f"spd_inverse_ridge: expected square matrix, got {a.shape}")
    a = 0.5 * (a + a.T)
    p = a.shape[0]
    tr = float(np.trace(a))
    lam = 1e-10 * tr / p if tr > 0 else 1e-10
    w, v = np.linalg.eigh(a)
    denom = np.maximum(w + lam, np.finfo(float).tiny)
    out = (v / denom) @ v.T
    return 0.5 * (out + out.T)


# ---------------------------------------------------------------------------
# Derivative-free minimization
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class OptimizerOptions:
    """Knobs for the multistart simplex search.

    max_iter of None means 500 * dimension. Restart points beyond the first
    are drawn uniformly from a box of half-width box_half_width around the
    initial guess.
    """

    tol: float = 1e-8
    max_iter: int | None = None
    multistarts: int = 8
    restart_seed: int = 0
    box_half_width: float = 3.0

    def __post_init__(self):
        if self.tol <= 0:
            raise ValueError("OptimizerOptions: tol must be positive")
        if self.max_iter is not None and self.max_iter < 1:
            raise ValueError("OptimizerOptions: max_iter must be >= 1")
        if self.multistarts < 1:
            raise ValueError("OptimizerOptions: multistarts must be >= 1")


class MinimizeResult(NamedTuple):
    x: np.ndarray
    fun: float
    converged: bool
    iterations: int


def multistart_points(init, half_width: float, count: int, seed: int) -> list[np.ndarray]:
    """Deterministic start points: the init itself plus uniform box draws."""
    x0 = np.atleast_1d(np.asarray(init, dtype=float))
    pts = [x0]
    if count > 1:
        rng = np.random.default_rng(seed)
        for _ in range(count - 1):
            pts.append(x0 + rng.uniform(-half_width, half_width, size=x0.size))
    return pts


def _nm_single(f, x0: np.ndarray, tol: float, max_iter: int):
    """One Nelder-Mead run. Returns (x, fun, converged, iterations)."""
    alpha, gamma, rho, shrink = 1.0, 2.0, 0.5, 0.5
    q = x0.size
    sim = [x0.copy()]
    for i in range(q):
        step = 0.1 * max(1.0, abs(x0[i]))
        vertex = x0.copy()
        vertex[i] += step
        sim.append(vertex)
    vals = [f(v) for v in sim]

    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        order = np.argsort(vals, kind="stable")
        sim = [sim[k] for k in order]
        vals = [vals[k] for k in order]

        diam = max(np.max(np.abs(v - sim[0])) for v in sim[1:])
        spread = vals[-1] - vals[0]
        if diam <= tol and spread <= tol:
            converged = True
            break

        centroid = np.mean(sim[:-1], axis=0)
        xr = centroid + alpha * (centroid - sim[-1])
        fr = f(xr)
        if vals[0] <= fr < vals[-2]:
            sim[-1], vals[-1] = xr, fr
            continue
        if fr < vals[0]:
            xe = centroid + gamma * (centroid - sim[-1])
            fe = f(xe)
            if fe < fr:
                sim[-1], vals[-1] = xe, fe
            else:
                sim[-1], vals[-1] = xr, fr
            continue
        xc = centroid + rho * (sim[-1] - centroid)
        fc = f(xc)
        if fc < vals[-1]:
            sim[-1], vals[-1] = xc, fc
            continue
        for k in range(1, q + 1):
            sim[k] = sim[0] + shrink * (sim[k] - sim[0])
            vals[k] = f(sim[k])

    best = int(np.argmin(vals))
    return sim[best].copy(), vals[best], converged, it


def nelder_mead(
    f: Callable[[np.ndarray], float],
    init,
    opts: OptimizerOptions | None = None,
) -> MinimizeResult:
    """Multistart Nelder-Mead simplex minimization.

    The returned value never exceeds f(init). NaN objective values are treated
    as +inf away from the start; a non-finite value at the initial point
    raises BadObjective.
    """
    opts = opts or OptimizerOptions()
    x0 = np.atleast_1d(np.asarray(init, dtype=float))
    q = x0.size
    max_iter = opts.max_iter if opts.max_iter is not None else 500 * q

    raw_f = f

    def safe_f(x):
        val = float(raw_f(x))
        return val if not np.isnan(val) else np.inf

    f_init = float(raw_f(x0))
    if not np.isfinite(f_init):
        raise BadObjective(f"nelder_mead: objective is {f_init} at the initial point")

    starts = multistart_points(x0, opts.box_half_width, opts.multistarts, opts.restart_seed)
    best_x, best_f, best_conv = x0.copy(), f_init, False
    total_iter = 0
    for start in starts:
        f_start = safe_f(start)
        if not np.isfinite(f_start):
            continue
        x, fun, conv, it = _nm_single(safe_f, start, opts.tol, max_iter)
        total_iter += it
        if fun < best_f:
            best_x, best_f, best_conv = x, fun, conv
        elif fun == best_f and conv and not best_conv:
            best_conv = conv
    return MinimizeResult(best_x, float(best_f), best_conv, total_iter)


def brent_min(f: Callable[[float], float], lo: float, hi: float, tol: float) -> float:
    """Bounded scalar minimizer (golden-section / parabolic bracketing)."""
    if not lo < hi:
        raise ValueError(f"brent_min: need lo < hi, got [{lo}, {hi}]")
    res = minimize_scalar(
        f, bounds=(float(lo), float(hi)), method="bounded",
        options={"xatol": float(tol), "maxiter": 1000},
    )
    return float(res.x)
