"""Weight families: linear, nonlinear, generalized linear, and separable.

A fit's prediction at x is a weighted average of the training responses with
weights of the form 1 + sum_j (X_i^(j) - mu^(j)) f_j(arg), where the argument
of the known link functions f_j depends on the flavor:

* linear         -- no links; the weight is 1 + (X_i-mu)^T Sigma^-1 (x-mu)
* general        -- f_j(x, beta)
* generalized linear -- f_j(beta^T (x-mu))
* separable      -- f_j(c_h sigma_h^T Sigma^-1 (x-mu))

Because sum_i (X_i - mu_hat) = 0 when mu_hat is the sample mean, the
in-sample average of every weight family is exactly 1.

Link functions are carried as callables plus an optional JSON-able
descriptor; descriptor-backed specs can be serialized and rebuilt, arbitrary
closures work in-process only.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Union

import numpy as np

from .errors import DegenerateSigma, DimensionError, SpecMismatch

__all__ = [
    "LINK_BASES",
    "LinkSpec",
    "LinearFlavor",
    "NonlinearFlavor",
    "SeparableFlavor",
    "WeightFlavor",
    "register_link_family",
    "link_spec_from_descriptor",
    "generalized_linear_links",
    "linear_weight",
    "nonlinear_weight",
    "lfr_reducing_links",
]

GENERAL = "general"
GENERALIZED_LINEAR = "generalized_linear"

#: Scalar base links for the generalized-linear form, vectorized over numpy
#: arrays. "square_shift" is u -> (u+1)^2.
LINK_BASES: dict[str, Callable[[np.ndarray], np.ndarray]] = {
    "identity": lambda u: np.asarray(u, dtype=float),
    "square_shift": lambda u: (np.asarray(u, dtype=float) + 1.0) ** 2,
    "exp": lambda u: np.exp(np.asarray(u, dtype=float)),
    "zero": lambda u: np.zeros_like(np.asarray(u, dtype=float)),
}


@dataclass(frozen=True, eq=False)
class LinkSpec:
    """p known link functions plus the form of their argument.

    For the general form each func maps (X, beta) -> values, where X is an
    (n, p) covariate block; for the generalized-linear form each func maps an
    index vector u of shape (n,) to values.
    """

    form: str
    p: int
    q: int
    funcs: tuple
    descriptor: dict | None = None

    def __post_init__(self):
        if self.form not in (GENERAL, GENERALIZED_LINEAR):
            raise SpecMismatch(f"LinkSpec: unknown form {self.form!r}")
        if len(self.funcs) != self.p:
            raise SpecMismatch(
                f"LinkSpec: expected {self.p} component functions, got {len(self.funcs)}"
            )

    def eval_general(self, X: np.ndarray, beta: np.ndarray) -> np.ndarray:
        """(n, p) link matrix [f_j(x_i, beta)] for general-form links."""
        if self.form != GENERAL:
            raise SpecMismatch("eval_general requires a general-form LinkSpec")
        X = np.atleast_2d(np.asarray(X, dtype=float))
        beta = np.asarray(beta, dtype=float).ravel()
        cols = [np.broadcast_to(np.asarray(f(X, beta), dtype=float), (X.shape[0],))
                for f in self.funcs]
        return np.column_stack(cols)

    def eval_index(self, u: np.ndarray) -> np.ndarray:
        """(n, p) link matrix [f_j(u_i)] for generalized-linear links."""
        if self.form != GENERALIZED_LINEAR:
            raise SpecMismatch("eval_index requires a generalized-linear LinkSpec")
        u = np.atleast_1d(np.asarray(u, dtype=float))
        cols = [np.broadcast_to(np.asarray(f(u), dtype=float), u.shape) for f in self.funcs]
        return np.column_stack(cols)

    def __reduce__(self):
        if self.descriptor is None:
            raise TypeError(
                "LinkSpec without a descriptor cannot be pickled; "
                "build it from a registered family"
            )
        return (link_spec_from_descriptor, (self.descriptor,))


# A weight flavor tags how the fitted model turns covariates into weights.

@dataclass(frozen=True)
class LinearFlavor:
    kind: str = "linear"


@dataclass(frozen=True, eq=False)
class NonlinearFlavor:
    beta: np.ndarray
    kind: str = "nonlinear"

    def __post_init__(self):
        object.__setattr__(self, "beta", np.asarray(self.beta, dtype=float).ravel())


@dataclass(frozen=True)
class SeparableFlavor:
    c_h: float
    h_id: str
    kind: str = "separable"


WeightFlavor = Union[LinearFlavor, NonlinearFlavor, SeparableFlavor]


# ---------------------------------------------------------------------------
# Descriptor registry
# ---------------------------------------------------------------------------

_LINK_FAMILY_BUILDERS: dict[str, Callable[[dict], LinkSpec]] = {}


def register_link_family(name: str, builder: Callable[[dict], LinkSpec]) -> None:
    """Register a builder turning a descriptor dict into a LinkSpec."""
    _LINK_FAMILY_BUILDERS[name] = builder


def link_spec_from_descriptor(descriptor: dict) -> LinkSpec:
    family = descriptor.get("family")
    builder = _LINK_FAMILY_BUILDERS.get(family)
    if builder is None:
        raise SpecMismatch(f"unknown link family {family!r}")
    return builder(descriptor)


def generalized_linear_links(entries: list[dict]) -> LinkSpec:
    """Generalized-linear links f_j(u) = scale_j * base_j(u) + offset_j.

    Each entry is {"base": <LINK_BASES name>, "scale": s, "offset": o}
    (scale defaults to 1, offset to 0).
    """
    funcs = []
    norm_entries = []
    for entry in entries:
        base = entry["base"]
        if base not in LINK_BASES:
            raise SpecMismatch(f"unknown link base {base!r}")
        scale = float(entry.get("scale", 1.0))
        offset = float(entry.get("offset", 0.0))
        phi = LINK_BASES[base]
        funcs.append(lambda u, phi=phi, s=scale, o=offset: s * phi(u) + o)
        norm_entries.append({"base": base, "scale": scale, "offset": offset})
    p = len(funcs)
    descriptor = {"family": "glin_affine", "entries": norm_entries, "q": p}
    return LinkSpec(GENERALIZED_LINEAR, p, p, tuple(funcs), descriptor)


register_link_family(
    "glin_affine", lambda d: generalized_linear_links(d["entries"])
)


def _build_lfr_reduction(descriptor: dict) -> LinkSpec:
    return lfr_reducing_links(
        np.asarray(descriptor["mu"], dtype=float),
        np.asarray(descriptor["sigma_inv"], dtype=float),
        np.asarray(descriptor["sigma"], dtype=float),
    )


register_link_family("lfr_reduction", _build_lfr_reduction)


# ---------------------------------------------------------------------------
# Weight evaluation
# ---------------------------------------------------------------------------

def _centered(X, mu) -> tuple[np.ndarray, bool]:
    X = np.asarray(X, dtype=float)
    mu = np.asarray(mu, dtype=float).ravel()
    single = X.ndim == 1
    X2 = np.atleast_2d(X)
    if X2.shape[1] != mu.size:
        raise DimensionError(f"covariate dim {X2.shape[1]} != mu dim {mu.size}")
    return X2 - mu, single


def linear_weight(X_i, x, mu, sigma_inv):
    """s(X, x) = 1 + (X-mu)^T Sigma^-1 (x-mu); X_i may be one row or a batch."""
    Z, single = _centered(X_i, mu)
    xq = np.asarray(x, dtype=float).ravel()
    if xq.size != Z.shape[1]:
        raise DimensionError(f"query dim {xq.size} != covariate dim {Z.shape[1]}")
    zx = xq - np.asarray(mu, dtype=float).ravel()
    sigma_inv = np.asarray(sigma_inv, dtype=float)
    if sigma_inv.shape != (zx.size, zx.size):
        raise DimensionError(f"sigma_inv shape {sigma_inv.shape} incompatible with p={zx.size}")
    w = 1.0 + Z @ (sigma_inv @ zx)
    return float(w[0]) if single else w


def link_matrix(links: LinkSpec, flavor: WeightFlavor, X_query, mu,
                sigma_h=None, sigma_inv=None) -> np.ndarray:
    """(n, p) matrix of link values at query points, per flavor.

    This is both the weight's inner factor and the coefficient matrix of the
    moment representation beta0 + sum_j sigma_j f_j(.).
    """
    Xq = np.atleast_2d(np.asarray(X_query, dtype=float))
    mu = np.asarray(mu, dtype=float).ravel()
    if isinstance(flavor, NonlinearFlavor):
        if links.form == GENERAL:
            return links.eval_general(Xq, flavor.beta)
        if flavor.beta.size != mu.size:
            raise DimensionError(
                f"beta dim {flavor.beta.size} != covariate dim {mu.size}"
            )
        u = (Xq - mu) @ flavor.beta
        return links.eval_index(u)
    if isinstance(flavor, SeparableFlavor):
        if links.form != GENERALIZED_LINEAR:
            raise SpecMismatch("separable flavor requires generalized-linear links")
        if sigma_h is None or sigma_inv is None:
            raise SpecMismatch("separable flavor requires sigma_h and sigma_inv")
        direction = np.asarray(sigma_inv, dtype=float) @ np.asarray(sigma_h, dtype=float).ravel()
        u = flavor.c_h * ((Xq - mu) @ direction)
        return links.eval_index(u)
    raise SpecMismatch(f"link_matrix: unsupported flavor {flavor!r}")


def nonlinear_weight(X_i, x, mu, links: LinkSpec, flavor: WeightFlavor,
                     sigma_h=None, sigma_inv=None):
    """1 + sum_j (X_i^(j) - mu^(j)) f_j(arg); X_i may be one row or a batch."""
    Z, single = _centered(X_i, mu)
    if Z.shape[1] != links.p:
        raise DimensionError(f"covariate dim {Z.shape[1]} != links.p {links.p}")
    F = link_matrix(links, flavor, np.asarray(x, dtype=float), mu,
                    sigma_h=sigma_h, sigma_inv=sigma_inv)  # (1, p)
    w = 1.0 + Z @ F[0]
    return float(w[0]) if single else w


def lfr_reducing_links(mu, sigma_inv, sigma) -> LinkSpec:
    """General-form links that collapse the nonlinear weight to the linear one.

    With beta = Sigma^-1 sigma the resulting f_j(x, beta) equals the j-th
    component of Sigma^-1 (x - mu), so the weight reduces to
    1 + (X-mu)^T Sigma^-1 (x-mu) exactly. Requires every sigma^(j) != 0.
    """
    mu = np.asarray(mu, dtype=float).ravel()
    sigma_inv = np.asarray(sigma_inv, dtype=float)
    sigma = np.asarray(sigma, dtype=float).ravel()
    p = mu.size
    if sigma.size != p or sigma_inv.shape != (p, p):
        raise DimensionError("lfr_reducing_links: inconsistent dimensions")
    if np.any(sigma == 0.0):
        raise DegenerateSigma("lfr_reducing_links: sigma has a zero component")

    def make(j):
        def f(X, beta):
            Z = np.atleast_2d(np.asarray(X, dtype=float)) - mu
            t = Z @ sigma_inv
            u = Z @ np.asarray(beta, dtype=float).ravel()
            cross = t @ sigma - sigma[j] * t[:, j]
            return (u - cross) / sigma[j]

        return f

    descriptor = {
        "family": "lfr_reduction",
        "mu": mu.tolist(),
        "sigma_inv": sigma_inv.tolist(),
        "sigma": sigma.tolist(),
    }
    return LinkSpec(GENERAL, p, p, tuple(make(j) for j in range(p)), descriptor)
