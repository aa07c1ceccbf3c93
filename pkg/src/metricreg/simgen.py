"""Simulation designs: covariates, true regression functions, noisy responses.

Six designs are built in, identified as "1.1".."1.3" (distribution responses
on a 20-point quantile grid) and "2.1".."2.3" (3x3 SPD responses). All share
the scalar structure a(x) = U0 + alpha^T g(x) and b(x) = V0 + alpha^T g(x)
with g(x) = (g1(x, beta), 0, ..., 0):

* models x.1 -- g1 = beta^T (x - mu)                      (linear)
* models x.2 -- g1 = (beta^T (x - mu) + 1)^2              (generalized linear)
* models x.3 -- g1 = sum_{j<=p1} (beta_j (x_j - mu_j) + 1)^2
                + sum_{j>p1} exp(beta_j (x_j - mu_j))      (nonlinear)

Distribution truth: a(x) + b(x) (PhiInv(t) + 1) on the midpoint grid; noise
replaces a by U ~ N(a, v1) and b by V ~ Gamma(b^2/v2, v2/b). SPD truth:
a(x) I + b(x) P with a fixed symmetric PSD P of spectrum {1..m}; noise is
U^2 I + V P with U ~ N(sqrt(a - v1), v1), so E[U^2] = a.

Models x.1 draw Gaussian-copula uniform covariates on (-1, 1); models
x.2/x.3 draw plain N_p(0, Sigma') covariates, Sigma' = (0.5^|i-j|). The
population mean mu = 0 is used inside g when generating; fits use mu_hat.

Link functions for the nonlinear fit are derived from the design by Monte
Carlo: with M = Cov(g(X), X) and c = E[g(X)] frozen at the true beta, the
family f(x, beta) solves M f = g(x, beta) - c in the ridge least-squares
sense. For models x.1/x.2 the same moments also yield the single-index form
f_j(u) = w_j (phi(u) - c1) used by the separable fit.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr, ndtri

from . import spaces, weights as wts
from .errors import InfeasibleSpec, SpecMismatch
from .estimators import Dataset
from .kernel import spd_inverse_ridge
from .spaces import SPD_FROBENIUS, WASSERSTEIN, QuantileFunction, SpaceSpec, grid_points

MODEL_IDS = ("1.1", "1.2", "1.3", "2.1", "2.2", "2.3")

_PROBE_SALT = 101
_LINKS_SALT = 202
_PROBE_SIZE = 10_000

__all__ = [
    "MODEL_IDS",
    "SimulationSpec",
    "TrueRegression",
    "gen_covariates",
    "g_eval",
    "true_regression",
    "sample_response",
    "sample_responses",
    "gen_Pm",
    "derive_links",
    "derive_separable_links",
    "make_dataset",
    "default_space",
]


def _covariance_ar(p: int) -> np.ndarray:
    idx = np.arange(p)
    return 0.5 ** np.abs(idx[:, None] - idx[None, :])


def _g1_values(model_id: str, p1: int, Z: np.ndarray, beta: np.ndarray) -> np.ndarray:
    """First (only nonzero) component of g at centered covariates Z = x - mu."""
    beta = np.asarray(beta, dtype=float).ravel()
    if model_id.endswith(".1"):
        return Z @ beta
    if model_id.endswith(".2"):
        return (Z @ beta + 1.0) ** 2
    if model_id.endswith(".3"):
        head = np.sum((Z[:, :p1] * beta[:p1] + 1.0) ** 2, axis=1)
        tail = np.sum(np.exp(Z[:, p1:] * beta[p1:]), axis=1)
        return head + tail
    raise SpecMismatch(f"unknown model id {model_id!r}")


# Paper constants keyed by (model_id, p): beta_true, U0, V0.
_BETA = {2: (1.0, -0.5), 5: (1.0, -0.5, 2.0, 1.5, -1.0)}
_CONSTANTS = {
    ("1.1", 2): (0.0, 2.0), ("1.1", 5): (0.0, 6.5),
    ("1.2", 2): (0.0, 0.5), ("1.2", 5): (0.0, 0.5),
    ("1.3", 2): (0.0, 0.5), ("1.3", 5): (0.0, 0.5),
    ("2.1", 2): (3.0, 2.0), ("2.1", 5): (8.0, 6.5),
    ("2.2", 2): (1.5, 0.5), ("2.2", 5): (1.5, 0.5),
    ("2.3", 2): (1.5, 0.5), ("2.3", 5): (1.5, 0.5),
}


@dataclass(frozen=True, eq=False)
class SimulationSpec:
    """One simulation configuration: design id, sizes, and scalar constants.

    Feasibility of the constants (b(x) > 0 everywhere, and a(x) >= v1 for the
    SPD designs) is checked by a seeded Monte Carlo probe at construction.
    """

    model_id: str
    p: int
    n: int
    beta_true: np.ndarray
    alpha: np.ndarray
    U0: float
    V0: float
    v1: float = 1.0
    v2: float = 0.5
    p1: int = 1
    m_obj: int = 20
    n_test: int = 500
    seed: int = 0

    def __post_init__(self):
        if self.model_id not in MODEL_IDS:
            raise SpecMismatch(f"unknown model id {self.model_id!r}")
        if self.p < 1 or self.n < 1 or self.n_test < 1 or self.m_obj < 2:
            raise InfeasibleSpec("SimulationSpec: sizes out of range")
        if self.v1 <= 0 or self.v2 <= 0:
            raise InfeasibleSpec("SimulationSpec: v1 and v2 must be positive")
        beta = np.asarray(self.beta_true, dtype=float).ravel()
        alpha = np.asarray(self.alpha, dtype=float).ravel()
        if beta.size != self.p or alpha.size != self.p:
            raise InfeasibleSpec("SimulationSpec: beta_true and alpha must have length p")
        if self.model_id.endswith(".3") and not 1 <= self.p1 <= self.p:
            raise InfeasibleSpec("SimulationSpec: p1 must be in 1..p")
        object.__setattr__(self, "beta_true", beta)
        object.__setattr__(self, "alpha", alpha)
        self._feasibility_probe()

    @property
    def is_spd(self) -> bool:
        return self.model_id.startswith("2")

    def _feasibility_probe(self):
        rng = np.random.default_rng(np.random.SeedSequence([self.seed, _PROBE_SALT]))
        X = gen_covariates(self, _PROBE_SIZE, rng)
        a, b = _ab_values(self, X)
        if np.any(b <= 0):
            raise InfeasibleSpec(
                f"SimulationSpec {self.model_id}: V0 + alpha^T g(x) <= 0 on the covariate support"
            )
        if self.is_spd and np.any(a - self.v1 < 0):
            raise InfeasibleSpec(
                f"SimulationSpec {self.model_id}: U0 + alpha^T g(x) < v1 on the covariate support"
            )

    @classmethod
    def paper(cls, model_id: str, p: int = 2, n: int = 100, seed: int = 0,
              n_test: int = 500) -> "SimulationSpec":
        """The configuration used in the reference experiments."""
        if p not in _BETA:
            raise SpecMismatch(f"no default constants for p={p}")
        U0, V0 = _CONSTANTS[(model_id, p)]
        alpha = np.zeros(p)
        alpha[0] = 1.0
        return cls(
            model_id=model_id, p=p, n=n,
            beta_true=np.asarray(_BETA[p]), alpha=alpha,
            U0=U0, V0=V0, v1=1.0, v2=0.5,
            p1=1 if p == 2 else 3,
            m_obj=3 if model_id.startswith("2") else 20,
            n_test=n_test, seed=seed,
        )


def default_space(spec: SimulationSpec, kind: str | None = None) -> SpaceSpec:
    """The response space of a design; SPD designs admit either matrix metric."""
    if not spec.is_spd:
        return SpaceSpec(WASSERSTEIN, spec.m_obj)
    return SpaceSpec(kind or SPD_FROBENIUS, spec.m_obj)


def _ab_values(spec: SimulationSpec, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    g1 = _g1_values(spec.model_id, spec.p1, X, spec.beta_true)
    shift = spec.alpha[0] * g1
    return spec.U0 + shift, spec.V0 + shift


# ---------------------------------------------------------------------------
# Covariates and responses
# ---------------------------------------------------------------------------

def gen_covariates(spec: SimulationSpec, count: int, rng: np.random.Generator) -> np.ndarray:
    """i.i.d. covariate rows: copula uniforms for models x.1, Gaussian otherwise."""
    if count < 1:
        raise InfeasibleSpec("gen_covariates: count must be >= 1")
    chol = np.linalg.cholesky(_covariance_ar(spec.p))
    Z = rng.standard_normal((count, spec.p)) @ chol.T
    if spec.model_id.endswith(".1"):
        return 2.0 * ndtr(Z) - 1.0
    return Z


def g_eval(spec: SimulationSpec, x) -> np.ndarray:
    """g(x) at the design's true beta; only the first component is nonzero."""
    x = np.asarray(x, dtype=float).ravel()
    if x.size != spec.p:
        raise SpecMismatch(f"g_eval: x has dim {x.size}, expected {spec.p}")
    out = np.zeros(spec.p)
    out[0] = float(_g1_values(spec.model_id, spec.p1, x[None, :], spec.beta_true)[0])
    return out


@dataclass(frozen=True, eq=False)
class TrueRegression:
    """The exact regression function of a design, as a callable on covariates."""

    spec: SimulationSpec
    p_matrix: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.spec.is_spd:
            if self.p_matrix is None:
                raise InfeasibleSpec("TrueRegression: SPD designs need the replication's P matrix")
            P = np.asarray(self.p_matrix, dtype=float)
            if P.shape != (self.spec.m_obj, self.spec.m_obj):
                raise InfeasibleSpec(f"TrueRegression: P has shape {P.shape}")
            object.__setattr__(self, "p_matrix", P)

    def stack(self, X) -> np.ndarray:
        """Natural coordinates of the truth at query rows: values or matrices."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        a, b = _ab_values(self.spec, X)
        if np.any(b <= 0):
            raise InfeasibleSpec("true_regression: V0 + alpha^T g(x) <= 0 at a query point")
        if not self.spec.is_spd:
            base = ndtri(grid_points(self.spec.m_obj)) + 1.0
            return a[:, None] + b[:, None] * base[None, :]
        eye = np.eye(self.spec.m_obj)
        return a[:, None, None] * eye + b[:, None, None] * self.p_matrix

    def at(self, x):
        coords = self.stack(np.asarray(x, dtype=float)[None, :])[0]
        if not self.spec.is_spd:
            return QuantileFunction(coords)
        return spaces.ensure_member(SpaceSpec(SPD_FROBENIUS, self.spec.m_obj), coords)

    def __call__(self, x):
        return self.at(x)


def true_regression(spec: SimulationSpec, p_matrix=None) -> TrueRegression:
    return TrueRegression(spec, p_matrix if spec.is_spd else None)


def sample_responses(spec: SimulationSpec, X, rng: np.random.Generator,
                     p_matrix=None) -> list:
    """Noisy responses at covariate rows X (U draws first, then V draws)."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    a, b = _ab_values(spec, X)
    if np.any(b <= 0):
        raise InfeasibleSpec("sample_responses: Gamma shape would be nonpositive")
    if not spec.is_spd:
        U = rng.normal(a, np.sqrt(spec.v1))
        V = rng.gamma(b * b / spec.v2, spec.v2 / b)
        base = ndtri(grid_points(spec.m_obj)) + 1.0
        vals = U[:, None] + V[:, None] * base[None, :]
        return [QuantileFunction(v) for v in vals]
    mean_sq = a - spec.v1
    if np.any(mean_sq < 0):
        raise InfeasibleSpec("sample_responses: U0 + alpha^T g(x) < v1 at a covariate row")
    U = rng.normal(np.sqrt(mean_sq), np.sqrt(spec.v1))
    V = rng.gamma(b * b / spec.v2, spec.v2 / b)
    P = np.asarray(p_matrix, dtype=float)
    eye = np.eye(spec.m_obj)
    mats = (U * U)[:, None, None] * eye + V[:, None, None] * P
    space = SpaceSpec(SPD_FROBENIUS, spec.m_obj)
    feasible = spaces.project_coords(space, mats)
    return [spaces.coords_to_object(space, m) for m in feasible]


def sample_response(spec: SimulationSpec, x, rng: np.random.Generator, p_matrix=None):
    """One noisy response at a single covariate point."""
    return sample_responses(spec, np.asarray(x, dtype=float)[None, :], rng, p_matrix)[0]


def gen_Pm(m: int, rng: np.random.Generator) -> np.ndarray:
    """Random symmetric PSD matrix Q^T D Q, D = diag{1..m}, Q orthonormal columns.

    With probability one the Gaussian seed matrix has full rank and the
    spectrum is exactly {1, ..., m}; rank-deficient draws get zero columns.
    """
    if m < 2:
        raise InfeasibleSpec("gen_Pm: m must be >= 2")
    Z = rng.standard_normal((m, m))
    D = np.diag(np.arange(1.0, m + 1.0))
    q, r = np.linalg.qr(Z)
    diag = np.abs(np.diag(r))
    if np.all(diag > 1e-12 * max(1.0, diag.max())):
        Q = q
    else:
        u, s, _ = np.linalg.svd(Z)
        rank = int(np.sum(s > 1e-12 * s.max()))
        Q = np.zeros((m, m))
        Q[:, :rank] = u[:, :rank]
    P = Q.T @ D @ Q
    return 0.5 * (P + P.T)


def make_dataset(spec: SimulationSpec, count: int, rng: np.random.Generator,
                 p_matrix=None, space: SpaceSpec | None = None) -> Dataset:
    """Covariates plus sampled responses, wrapped as a Dataset."""
    X = gen_covariates(spec, count, rng)
    Y = sample_responses(spec, X, rng, p_matrix=p_matrix)
    return Dataset(X, Y, space or default_space(spec))


# ---------------------------------------------------------------------------
# Link derivation
# ---------------------------------------------------------------------------

def _link_moments(spec: SimulationSpec, mc_size: int, seed,
                  sample_X=None) -> tuple[np.ndarray, np.ndarray]:
    """Estimates of Cov(g(X), X) (p x p) and E[g(X)] (p,).

    Moments come from a fresh Monte Carlo draw of mc_size covariates, or from
    the given sample when ``sample_X`` is supplied (the empirical-moment
    convention: the same covariates that also feed the fit).
    """
    if sample_X is not None:
        X = np.atleast_2d(np.asarray(sample_X, dtype=float))
    else:
        if mc_size < 10**5:
            raise SpecMismatch("link derivation needs mc_size >= 1e5")
        if seed is None:
            seed = np.random.SeedSequence([spec.seed, _LINKS_SALT])
        X = gen_covariates(spec, mc_size, np.random.default_rng(seed))
    g1 = _g1_values(spec.model_id, spec.p1, X, spec.beta_true)
    c = np.zeros(spec.p)
    c[0] = g1.mean()
    M = np.zeros((spec.p, spec.p))
    M[0] = (g1 - c[0]) @ (X - X.mean(axis=0)) / X.shape[0]
    return M, c


def _build_sim_links(descriptor: dict) -> wts.LinkSpec:
    model_id = descriptor["model_id"]
    p1 = int(descriptor["p1"])
    p = int(descriptor["p"])
    q = int(descriptor["q"])
    w = np.asarray(descriptor["w"], dtype=float)
    b = np.asarray(descriptor["b"], dtype=float)

    def make(j):
        def f(X, beta):
            Z = np.atleast_2d(np.asarray(X, dtype=float))
            return w[j] * _g1_values(model_id, p1, Z, beta) - b[j]

        return f

    return wts.LinkSpec(wts.GENERAL, p, q, tuple(make(j) for j in range(p)), descriptor)


wts.register_link_family("sim_general", _build_sim_links)


def derive_links(spec: SimulationSpec, mc_size: int = 10**6, seed=None,
                 sample_X=None) -> wts.LinkSpec:
    """General-form links f(x, beta) = ridge_solve(M) (g(x, beta) - c).

    M = Cov(g(X), X) and c = E[g(X)] are estimated once at the design's true
    beta and frozen; the candidate beta enters only through g. By default the
    moments come from an independent Monte Carlo draw of mc_size covariates;
    passing ``sample_X`` uses that sample's empirical moments instead, which
    lets the moment noise of a fit on the same sample cancel. The solve uses
    the ridge-regularized normal equations, so a rank-deficient M (the
    built-in designs have rank one) yields the minimum-norm solution. A
    residual check on M f = g - c beyond 1e-6 relative is flagged in the
    descriptor.
    """
    M, c = _link_moments(spec, mc_size, seed, sample_X=sample_X)
    W = spd_inverse_ridge(M.T @ M) @ M.T
    # f(x, beta) = W (g(x, beta) - c) = w g1(x, beta) - W c with w = W e1.
    w = W[:, 0]
    b = W @ c

    probe_rng = np.random.default_rng(np.random.SeedSequence([spec.seed, _LINKS_SALT, 1]))
    Xp = gen_covariates(spec, 50, probe_rng)
    g1 = _g1_values(spec.model_id, spec.p1, Xp, spec.beta_true)
    rhs = np.outer(g1 - c[0], np.eye(spec.p)[0])
    F = np.outer(g1, w) - b
    resid = float(np.max(np.abs(F @ M.T - rhs)))
    scale = max(float(np.max(np.abs(rhs))), 1e-12)
    flagged = resid > 1e-6 * scale

    descriptor = {
        "family": "sim_general",
        "model_id": spec.model_id,
        "p1": spec.p1,
        "p": spec.p,
        "q": spec.p,
        "w": w.tolist(),
        "b": b.tolist(),
        "cov_gx": M.tolist(),
        "center": c.tolist(),
        "max_rel_residual": resid / scale,
        "residual_flag": bool(flagged),
    }
    return _build_sim_links(descriptor)


def derive_separable_links(spec: SimulationSpec, mc_size: int = 10**6, seed=None,
                           sample_X=None) -> wts.LinkSpec:
    """Single-index links f_j(u) = w_j (phi(u) - c1) for the separable fit.

    phi is the identity for models x.1 and u -> (u+1)^2 for models x.2; the
    x.3 designs have no single-index representation. Moment source as in
    ``derive_links``.
    """
    if spec.model_id.endswith(".3"):
        raise SpecMismatch(f"model {spec.model_id} has no single-index link form")
    base = "identity" if spec.model_id.endswith(".1") else "square_shift"
    M, c = _link_moments(spec, mc_size, seed, sample_X=sample_X)
    W = spd_inverse_ridge(M.T @ M) @ M.T
    w = W[:, 0]
    entries = [{"base": base, "scale": float(w[j]), "offset": float(-w[j] * c[0])}
               for j in range(spec.p)]
    return wts.generalized_linear_links(entries)
