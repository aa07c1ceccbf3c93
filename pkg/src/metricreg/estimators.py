"""Model fitting and prediction for metric-space responses.

Three fits share one moment backbone (mu_hat, Sigma_hat, the object-valued
intercept beta0_hat = mean(Y_i), and the object-valued cross-moments
sigma_hat^(j) = mean(Y_i (X_i^(j) - mu_hat^(j)))):

* ``fit_lfr``          -- weights 1 + (X-mu)^T Sigma^-1 (x-mu), closed form.
* ``fit_nlfr_profile`` -- link functions f_j(x, beta) or f_j(beta^T(x-mu));
  beta found by an outer derivative-free search over the in-sample objective
  mean_i d^2(Y_i, prediction(X_i, beta)).
* ``fit_snlfr``        -- generalized-linear links evaluated at
  c_h sigma_h^T Sigma^-1 (x-mu); the scalar c_h picked from a finite grid
  (optionally refined) by the same in-sample objective. No profile iteration.

Predictions use the flat-coordinate representation
project(beta0 + sum_j f_j(.) sigma^(j)), which coincides with the weighted
Frechet mean of the training responses under the corresponding weights;
``predict_by_weights`` keeps that second route available as a cross-check.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from . import spaces, weights as wts
from .errors import (
    BadData,
    BadObjective,
    DimensionError,
    EmptyInput,
    FitFailed,
    SpecMismatch,
)
from .kernel import (
    MinimizeResult,
    OptimizerOptions,
    brent_min,
    multistart_points,
    nelder_mead,
    spd_inverse_ridge,
)
from .spaces import SpaceSpec

__all__ = [
    "Dataset",
    "MomentEstimates",
    "FitDiagnostics",
    "FittedModel",
    "BetaSearchSpace",
    "H_TRANSFORMS",
    "default_h_id",
    "apply_h",
    "estimate_moments",
    "estimate_object_moments",
    "estimate_sigma_h",
    "frechet_mean",
    "fit_lfr",
    "fit_nlfr_profile",
    "fit_snlfr",
    "predict",
    "predict_many",
    "predict_coords",
    "predict_by_weights",
    "weight_values",
    "default_c_grid",
]


@dataclass(frozen=True, eq=False)
class Dataset:
    """Paired Euclidean covariates and metric-space responses."""

    X: np.ndarray
    Y: list
    space: SpaceSpec

    def __post_init__(self):
        X = np.atleast_2d(np.asarray(self.X, dtype=float))
        if not np.all(np.isfinite(X)):
            raise BadData("Dataset: covariates contain non-finite entries")
        if X.shape[0] != len(self.Y):
            raise DimensionError(
                f"Dataset: {X.shape[0]} covariate rows but {len(self.Y)} responses"
            )
        if X.shape[0] < 1:
            raise BadData("Dataset: need at least one observation")
        for y in self.Y:
            spaces._check_object(self.space, y, "Dataset response")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "Y", list(self.Y))

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]


@dataclass(frozen=True, eq=False)
class MomentEstimates:
    """Empirical moments parameterizing every fitted model."""

    mu_hat: np.ndarray
    sigma_mat_hat: np.ndarray
    sigma_mat_inv: np.ndarray
    beta0_hat: object
    sigma_obj_hat: list
    sigma_h_hat: np.ndarray | None = None


@dataclass(frozen=True)
class FitDiagnostics:
    final_objective: float
    status: str
    iterations: int = 0
    message: str = ""


@dataclass(frozen=True, eq=False)
class FittedModel:
    """A prediction-ready fit: space, links, moments, and flavor parameters."""

    space: SpaceSpec
    links: wts.LinkSpec | None
    moments: MomentEstimates
    flavor: wts.WeightFlavor
    fit_diagnostics: FitDiagnostics

    @property
    def p(self) -> int:
        return self.moments.mu_hat.size


@dataclass(frozen=True)
class BetaSearchSpace:
    """Box for the profile search: init point and half-width (0 fixes beta)."""

    init: np.ndarray
    half_width: float = 3.0

    def __post_init__(self):
        object.__setattr__(self, "init", np.asarray(self.init, dtype=float).ravel())
        if not np.all(np.isfinite(self.init)):
            raise BadData("BetaSearchSpace: init must be finite")
        if self.half_width < 0:
            raise ValueError("BetaSearchSpace: half_width must be >= 0")


# ---------------------------------------------------------------------------
# Moments
# ---------------------------------------------------------------------------

def estimate_moments(X) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """mu_hat = mean(X_i), Sigma_hat = mean((X_i-mu)(X_i-mu)^T)  (1/n, not 1/(n-1))."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if not np.all(np.isfinite(X)):
        raise BadData("estimate_moments: non-finite covariates")
    n = X.shape[0]
    if n < 2:
        raise BadData("estimate_moments: need n >= 2")
    mu = X.mean(axis=0)
    Z = X - mu
    sigma = (Z.T @ Z) / n
    return mu, sigma, spd_inverse_ridge(sigma)


def estimate_object_moments(data: Dataset, mu_hat) -> tuple[object, list]:
    """Object mean beta0_hat (projected) and raw cross-moments sigma_hat^(j).

    Combinations are taken in the space's flat coordinates (Cholesky factors
    for the factor metric); the intercept is projected to feasibility while
    the sigma^(j) stay raw.
    """
    mu_hat = np.asarray(mu_hat, dtype=float).ravel()
    Yc = spaces.stack_coords(data.space, data.Y)
    n = data.n
    beta0 = spaces.ensure_member(data.space, np.mean(Yc, axis=0))
    Z = data.X - mu_hat
    sigma_obj = [
        spaces.RawObject(data.space.kind, np.tensordot(Z[:, j], Yc, axes=(0, 0)) / n)
        for j in range(data.p)
    ]
    return beta0, sigma_obj


#: Built-in scalarizers h(Y) used by the separable fit, keyed by id. Each maps
#: a stacked coordinate array to one real per response; values are centered by
#: the sample mean.
H_TRANSFORMS: dict[str, tuple[str, Callable[[np.ndarray], np.ndarray]]] = {
    # Grid mean of the quantile values, centered.
    "dist_mean_centered": (spaces.WASSERSTEIN, lambda Yc: Yc.mean(axis=1)),
    # trace(Y), centered.
    "spd_trace_centered": ("spd", lambda Yc: np.trace(Yc, axis1=-2, axis2=-1)),
}


def default_h_id(space: SpaceSpec) -> str:
    return "dist_mean_centered" if space.kind == spaces.WASSERSTEIN else "spd_trace_centered"


def apply_h(data: Dataset, h) -> np.ndarray:
    """Centered h(Y_i) values for a built-in id or a callable on objects."""
    if callable(h):
        vals = np.asarray([float(h(y)) for y in data.Y], dtype=float)
        return vals - vals.mean()
    if h not in H_TRANSFORMS:
        raise SpecMismatch(f"unknown h transform {h!r}")
    family, fn = H_TRANSFORMS[h]
    kind_family = spaces.WASSERSTEIN if data.space.kind == spaces.WASSERSTEIN else "spd"
    if family != kind_family:
        raise SpecMismatch(f"h transform {h!r} does not apply to a {data.space.kind} space")
    if data.space.kind == spaces.SPD_CHOLESKY:
        # h acts on the matrices themselves, not on factor coordinates.
        Yc = np.stack([y.entries for y in data.Y])
    else:
        Yc = spaces.stack_coords(data.space, data.Y)
    vals = np.asarray(fn(Yc), dtype=float)
    return vals - vals.mean()


def estimate_sigma_h(data: Dataset, mu_hat, h) -> np.ndarray:
    """sigma_h_hat = mean(h(Y_i) (X_i - mu_hat))."""
    hv = apply_h(data, h)
    Z = data.X - np.asarray(mu_hat, dtype=float).ravel()
    return (hv @ Z) / data.n


def frechet_mean(data: Dataset):
    """Unweighted sample Frechet mean of the responses."""
    return spaces.weighted_frechet_mean(data.space, data.Y, np.ones(data.n))


# ---------------------------------------------------------------------------
# Prediction
# ---------------------------------------------------------------------------

def _coefficient_parts(model: FittedModel):
    moments = model.moments
    B0 = spaces.to_coords(model.space, moments.beta0_hat)
    S = np.stack([r.payload for r in moments.sigma_obj_hat])
    return B0, S


def _links_at(model: FittedModel, X_query: np.ndarray) -> np.ndarray:
    """(k, p) matrix of effective link values f_j(.) at the query points."""
    moments = model.moments
    Xq = np.atleast_2d(np.asarray(X_query, dtype=float))
    if Xq.shape[1] != model.p:
        raise DimensionError(f"query dim {Xq.shape[1]} != model dim {model.p}")
    if isinstance(model.flavor, wts.LinearFlavor):
        return (Xq - moments.mu_hat) @ moments.sigma_mat_inv
    return wts.link_matrix(
        model.links, model.flavor, Xq, moments.mu_hat,
        sigma_h=moments.sigma_h_hat, sigma_inv=moments.sigma_mat_inv,
    )


def predict_coords(model: FittedModel, X_query, project: bool = True) -> np.ndarray:
    """Prediction coordinates for a batch of query points.

    project=False returns the raw coordinate combination before the
    feasibility projection (the flat-space representation itself).
    """
    B0, S = _coefficient_parts(model)
    F = _links_at(model, X_query)
    raw = B0 + np.tensordot(F, S, axes=(1, 0))
    if not project:
        return raw
    return spaces.project_coords(model.space, raw)


def predict(model: FittedModel, x):
    """Predicted response at a single covariate point."""
    coords = predict_coords(model, np.atleast_2d(np.asarray(x, dtype=float)))
    return spaces.coords_to_object(model.space, coords[0])


def predict_many(model: FittedModel, X_query) -> list:
    coords = predict_coords(model, X_query)
    return [spaces.coords_to_object(model.space, c) for c in coords]


def weight_values(model: FittedModel, data: Dataset, x) -> np.ndarray:
    """In-sample weights s(X_i, x) of the fitted model at a query point."""
    moments = model.moments
    if isinstance(model.flavor, wts.LinearFlavor):
        return wts.linear_weight(data.X, x, moments.mu_hat, moments.sigma_mat_inv)
    return wts.nonlinear_weight(
        data.X, x, moments.mu_hat, model.links, model.flavor,
        sigma_h=moments.sigma_h_hat, sigma_inv=moments.sigma_mat_inv,
    )


def predict_by_weights(model: FittedModel, data: Dataset, x):
    """Prediction as the weighted Frechet mean of the training responses.

    Algebraically identical to ``predict`` when ``data`` is the training set;
    kept as an independent route for cross-checks.
    """
    w = weight_values(model, data, x)
    return spaces.weighted_frechet_mean(data.space, data.Y, w)


# ---------------------------------------------------------------------------
# Fitting
# ---------------------------------------------------------------------------

def _base_moments(data: Dataset) -> MomentEstimates:
    if data.n < 2:
        raise BadData("fitting requires n >= 2")
    mu, sigma, sigma_inv = estimate_moments(data.X)
    beta0, sigma_obj = estimate_object_moments(data, mu)
    return MomentEstimates(mu, sigma, sigma_inv, beta0, sigma_obj)


def fit_lfr(data: Dataset) -> FittedModel:
    """Linear fit: moments only; prediction uses the bilinear weight."""
    moments = _base_moments(data)
    model = FittedModel(data.space, None, moments, wts.LinearFlavor(),
                        FitDiagnostics(float("nan"), "closed_form"))
    objective = _insample_objective(model, data)
    return replace(model, fit_diagnostics=FitDiagnostics(objective, "closed_form"))


def _insample_objective(model: FittedModel, data: Dataset) -> float:
    Yc = spaces.stack_coords(data.space, data.Y)
    pred = predict_coords(model, data.X)
    d = spaces.coords_distance(data.space, Yc, pred)
    return float(np.mean(d * d))


def _profile_objective(data: Dataset, links: wts.LinkSpec, moments: MomentEstimates):
    """Vectorized mean_i d^2(Y_i, prediction(X_i, beta)) for the outer search."""
    space = data.space
    Yc = spaces.stack_coords(space, data.Y)
    B0 = spaces.to_coords(space, moments.beta0_hat)
    S = np.stack([r.payload for r in moments.sigma_obj_hat])
    X = data.X
    mu = moments.mu_hat

    def objective(beta):
        with np.errstate(over="ignore", invalid="ignore"):
            if links.form == wts.GENERAL:
                F = links.eval_general(X, beta)
            else:
                F = links.eval_index((X - mu) @ np.asarray(beta, dtype=float).ravel())
            if not np.all(np.isfinite(F)):
                return np.inf
            raw = B0 + np.tensordot(F, S, axes=(1, 0))
            proj = spaces.project_coords(space, raw)
            d = spaces.coords_distance(space, Yc, proj)
            return float(np.mean(d * d))

    return objective


def _is_flat(objective, init: np.ndarray, half_width: float, seed: int) -> bool:
    """Detect an objective that ignores beta (e.g. all-zero links)."""
    f0 = objective(init)
    probes = multistart_points(init, max(half_width, 1.0), 4, seed)[1:]
    return all(abs(objective(pt) - f0) <= 1e-15 * (1.0 + abs(f0)) for pt in probes)


def fit_nlfr_profile(
    data: Dataset,
    links: wts.LinkSpec,
    beta_space: BetaSearchSpace | None = None,
    opts: OptimizerOptions | None = None,
) -> FittedModel:
    """Profile fit: moments first, then an outer simplex search over beta.

    The inner step is always the closed-form coordinate representation
    followed by projection. A zero-width search box fixes beta at the init.
    """
    moments = _base_moments(data)
    if links.p != data.p:
        raise SpecMismatch(f"links.p {links.p} != dataset p {data.p}")
    beta_space = beta_space or BetaSearchSpace(np.zeros(links.q))
    if beta_space.init.size != links.q:
        raise SpecMismatch(f"beta init dim {beta_space.init.size} != links.q {links.q}")
    opts = opts or OptimizerOptions()
    objective = _profile_objective(data, links, moments)

    if beta_space.half_width == 0.0:
        beta = beta_space.init
        diag = FitDiagnostics(objective(beta), "fixed_beta")
        return FittedModel(data.space, links, moments, wts.NonlinearFlavor(beta), diag)

    if _is_flat(objective, beta_space.init, beta_space.half_width, opts.restart_seed):
        beta = beta_space.init
        diag = FitDiagnostics(objective(beta), "flat_objective",
                              message="objective does not depend on beta; returning init")
        return FittedModel(data.space, links, moments, wts.NonlinearFlavor(beta), diag)

    opts = replace(opts, box_half_width=beta_space.half_width)
    if opts.max_iter is None:
        opts = replace(opts, max_iter=500 * links.q)
    try:
        res: MinimizeResult = nelder_mead(objective, beta_space.init, opts)
    except BadObjective as exc:
        raise FitFailed(f"profile search failed: {exc}") from exc
    if not np.all(np.isfinite(res.x)) or not np.isfinite(res.fun):
        raise FitFailed("profile search returned a non-finite optimum")
    status = "converged" if res.converged else "max_iter"
    model = FittedModel(data.space, links, moments, wts.NonlinearFlavor(res.x),
                        FitDiagnostics(res.fun, status, res.iterations))
    # Report the exact in-sample objective through the standard predict path.
    final = _insample_objective(model, data)
    return replace(model, fit_diagnostics=FitDiagnostics(final, status, res.iterations))


def default_c_grid(lo: float = -5.0, hi: float = 5.0, size: int = 201) -> np.ndarray:
    return np.linspace(lo, hi, size)


def fit_snlfr(
    data: Dataset,
    links: wts.LinkSpec,
    h=None,
    c_grid=None,
    refine: bool = True,
) -> FittedModel:
    """Separable fit: c_h picked from a finite grid by the in-sample objective.

    sigma_h is computed once; the index argument is c * sigma_h^T Sigma^-1
    (x - mu). Ties in the grid argmin break toward the smallest c. When
    ``refine`` is set, a bounded scalar search runs between the best grid
    point's neighbors and is kept only if it improves the objective.
    """
    if links.form != wts.GENERALIZED_LINEAR:
        raise SpecMismatch("fit_snlfr requires generalized-linear links")
    moments = _base_moments(data)
    if links.p != data.p:
        raise SpecMismatch(f"links.p {links.p} != dataset p {data.p}")
    h_id = h if h is not None else default_h_id(data.space)
    sigma_h = estimate_sigma_h(data, moments.mu_hat, h_id)
    moments = replace(moments, sigma_h_hat=sigma_h)

    grid = np.asarray(default_c_grid() if c_grid is None else c_grid, dtype=float).ravel()
    if grid.size == 0:
        raise EmptyInput("fit_snlfr: empty c grid")
    grid = np.sort(grid)

    space = data.space
    Yc = spaces.stack_coords(space, data.Y)
    B0 = spaces.to_coords(space, moments.beta0_hat)
    S = np.stack([r.payload for r in moments.sigma_obj_hat])
    direction = moments.sigma_mat_inv @ sigma_h
    base_index = (data.X - moments.mu_hat) @ direction

    def objective(c):
        with np.errstate(over="ignore", invalid="ignore"):
            F = links.eval_index(c * base_index)
            if not np.all(np.isfinite(F)):
                return np.inf
            raw = B0 + np.tensordot(F, S, axes=(1, 0))
            proj = spaces.project_coords(space, raw)
            d = spaces.coords_distance(space, Yc, proj)
            return float(np.mean(d * d))

    values = np.asarray([objective(c) for c in grid])
    best = int(np.argmin(values))  # first minimum = smallest c on ties
    c_best, val_best = float(grid[best]), float(values[best])

    if refine and grid.size > 1:
        lo = float(grid[max(best - 1, 0)])
        hi = float(grid[min(best + 1, grid.size - 1)])
        if lo < hi:
            c_ref = brent_min(objective, lo, hi, tol=1e-6)
            val_ref = objective(c_ref)
            if val_ref < val_best:
                c_best, val_best = float(c_ref), float(val_ref)

    h_name = h_id if isinstance(h_id, str) else getattr(h_id, "__name__", "custom")
    flavor = wts.SeparableFlavor(c_best, h_name)
    model = FittedModel(space, links, moments, flavor,
                        FitDiagnostics(val_best, "grid"))
    final = _insample_objective(model, data)
    status = "grid+refine" if refine else "grid"
    return replace(model, fit_diagnostics=FitDiagnostics(final, status))
