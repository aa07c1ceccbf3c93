"""Object spaces: quantile functions and SPD matrices.

Two response families are supported, each under a flat geometry:

* ``wasserstein`` -- distributions represented by m nondecreasing quantile
  values on the fixed midpoint grid t_i = (2i-1)/(2m); the distance is the
  root mean square difference of quantile values (a discrete 2-Wasserstein
  distance).
* ``spd_frobenius`` -- SPD matrices under the Frobenius distance.
* ``spd_cholesky`` -- SPD matrices under the Frobenius distance between
  upper-triangular Cholesky factors.

Every space is an (affine slice of a) Hilbert space in suitable coordinates:
quantile values, matrix entries, or Cholesky factors. Linear combinations
are taken in those coordinates and may leave the feasible set; ``project``
restores feasibility (isotonic regression, eigenvalue clipping, or factor
diagonal clipping) and is the exact metric projection. Because the weighted
squared-distance objective is strictly convex in coordinates whenever the
total weight is positive, ``weighted_frechet_mean`` is computed exactly as
project(weighted coordinate average), including for negative individual
weights.

All objects are immutable values; every operation is a pure function.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernel
from .errors import DimensionError, EmptyInput, IllPosedObjective, NotPositiveDefinite

WASSERSTEIN = "wasserstein"
SPD_FROBENIUS = "spd_frobenius"
SPD_CHOLESKY = "spd_cholesky"
SPACE_KINDS = (WASSERSTEIN, SPD_FROBENIUS, SPD_CHOLESKY)

DEFAULT_EPS = 1e-8

__all__ = [
    "WASSERSTEIN",
    "SPD_FROBENIUS",
    "SPD_CHOLESKY",
    "SPACE_KINDS",
    "DEFAULT_EPS",
    "SpaceSpec",
    "QuantileFunction",
    "SPDMatrix",
    "RawObject",
    "grid_points",
    "distance",
    "combine",
    "project",
    "weighted_frechet_mean",
    "to_coords",
    "stack_coords",
    "coords_distance",
    "project_coords",
    "coords_to_object",
    "ensure_member",
]


def grid_points(m: int) -> np.ndarray:
    """Midpoint evaluation grid (2i-1)/(2m), i = 1..m, shared by all quantile objects."""
    return (2.0 * np.arange(1, m + 1) - 1.0) / (2.0 * m)


@dataclass(frozen=True, eq=False)
class SpaceSpec:
    """A response space: kind, object dimension, and projection epsilon."""

    kind: str
    dims: int
    eps: float = DEFAULT_EPS

    def __post_init__(self):
        if self.kind not in SPACE_KINDS:
            raise ValueError(f"SpaceSpec: unknown kind {self.kind!r}")
        if self.dims < 2:
            raise ValueError("SpaceSpec: dims must be >= 2")
        if self.eps <= 0:
            raise ValueError("SpaceSpec: eps must be positive")

    @property
    def is_spd(self) -> bool:
        return self.kind in (SPD_FROBENIUS, SPD_CHOLESKY)


@dataclass(frozen=True, eq=False)
class QuantileFunction:
    """A distribution response: m nondecreasing quantile values on the midpoint grid."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 1 or v.size < 2:
            raise DimensionError(f"QuantileFunction: need a vector of length >= 2, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("QuantileFunction: non-finite values")
        scale = max(1.0, float(np.max(np.abs(v))))
        if np.any(np.diff(v) < -1e-12 * scale):
            raise ValueError("QuantileFunction: values must be nondecreasing")
        object.__setattr__(self, "values", v)

    @property
    def grid_size(self) -> int:
        return self.values.size

    @property
    def grid(self) -> np.ndarray:
        return grid_points(self.grid_size)


@dataclass(frozen=True, eq=False)
class SPDMatrix:
    """A symmetric positive-definite matrix response.

    Construction checks symmetry and strict positive definiteness (a Cholesky
    factorization must exist). The projection epsilon floors are enforced by
    ``project`` in each space's own coordinates: eigenvalues >= eps under the
    Frobenius geometry, factor diagonal >= eps under the factor geometry (the
    reconstructed matrix then has eigenvalues that may be as small as ~eps^2).
    """

    entries: np.ndarray
    eps: float = DEFAULT_EPS
    factor_upper: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        a = np.asarray(self.entries, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 2:
            raise DimensionError(f"SPDMatrix: need a square matrix of dim >= 2, got shape {a.shape}")
        if not np.all(np.isfinite(a)):
            raise ValueError("SPDMatrix: non-finite entries")
        scale = max(1.0, float(np.max(np.abs(a))))
        if np.max(np.abs(a - a.T)) > 1e-12 * scale:
            raise ValueError("SPDMatrix: entries are not symmetric")
        if self.factor_upper is not None:
            # Built from factor coordinates: the factor certifies definiteness
            # even when the product is numerically near singular.
            r = np.asarray(self.factor_upper, dtype=float)
            if r.shape != a.shape or np.any(np.tril(r, -1) != 0) or np.any(np.diag(r) <= 0):
                raise NotPositiveDefinite("SPDMatrix: invalid upper factor")
            object.__setattr__(self, "factor_upper", r)
        else:
            try:
                np.linalg.cholesky(a)
            except np.linalg.LinAlgError as exc:
                raise NotPositiveDefinite(f"SPDMatrix: not positive definite ({exc})") from exc
        object.__setattr__(self, "entries", a)

    @property
    def dim(self) -> int:
        return self.entries.shape[0]


MetricObject = QuantileFunction | SPDMatrix


@dataclass(frozen=True, eq=False)
class RawObject:
    """A pre-projection intermediate in a space's flat coordinates.

    For ``wasserstein`` the payload is a (possibly non-monotone) value vector,
    for ``spd_frobenius`` a symmetric (possibly indefinite) matrix, and for
    ``spd_cholesky`` an upper-triangular factor whose diagonal may be
    nonpositive.
    """

    kind: str
    payload: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.kind not in SPACE_KINDS:
            raise ValueError(f"RawObject: unknown kind {self.kind!r}")
        object.__setattr__(self, "payload", np.asarray(self.payload, dtype=float))


# ---------------------------------------------------------------------------
# Coordinate helpers (batched backbone used by the estimators)
# ---------------------------------------------------------------------------

def _check_object(space: SpaceSpec, obj, what: str = "object"):
    if space.kind == WASSERSTEIN:
        if not isinstance(obj, QuantileFunction):
            raise DimensionError(f"{what}: expected QuantileFunction in a {space.kind} space")
        if obj.grid_size != space.dims:
            raise DimensionError(f"{what}: grid size {obj.grid_size} != space dims {space.dims}")
    else:
        if not isinstance(obj, SPDMatrix):
            raise DimensionError(f"{what}: expected SPDMatrix in a {space.kind} space")
        if obj.dim != space.dims:
            raise DimensionError(f"{what}: matrix dim {obj.dim} != space dims {space.dims}")


def to_coords(space: SpaceSpec, obj) -> np.ndarray:
    """Flat coordinates of an object (or raw object) in this space."""
    if isinstance(obj, RawObject):
        if obj.kind != space.kind:
            raise DimensionError(f"raw object kind {obj.kind} != space kind {space.kind}")
        return obj.payload
    _check_object(space, obj)
    if space.kind == WASSERSTEIN:
        return obj.values
    if space.kind == SPD_FROBENIUS:
        return obj.entries
    if obj.factor_upper is not None:
        return obj.factor_upper
    return kernel.cholesky_factor(obj.entries)


def stack_coords(space: SpaceSpec, objects) -> np.ndarray:
    """Coordinates of a homogeneous object list, stacked on a leading axis."""
    objects = list(objects)
    if not objects:
        raise EmptyInput("stack_coords: empty object list")
    for obj in objects:
        if not isinstance(obj, RawObject):
            _check_object(space, obj)
    if space.kind == WASSERSTEIN:
        return np.stack([o.payload if isinstance(o, RawObject) else o.values for o in objects])
    if space.kind == SPD_FROBENIUS:
        return np.stack([o.payload if isinstance(o, RawObject) else o.entries
                         for o in objects])
    if all(isinstance(o, RawObject) or o.factor_upper is not None for o in objects):
        return np.stack([o.payload if isinstance(o, RawObject) else o.factor_upper
                         for o in objects])
    mats = np.stack([o.entries for o in objects])
    # Batched upper factors: numpy's cholesky returns lower factors L with
    # A = L L^T, so R = L^T per slice.
    try:
        lower = np.linalg.cholesky(mats)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(f"stack_coords: {exc}") from exc
    return np.swapaxes(lower, -1, -2)


def coords_distance(space: SpaceSpec, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Distances between coordinate arrays; broadcasts over leading axes."""
    diff = np.asarray(a, dtype=float) - np.asarray(b, dtype=float)
    if space.kind == WASSERSTEIN:
        return np.sqrt(np.mean(diff * diff, axis=-1))
    return np.sqrt(np.sum(diff * diff, axis=(-2, -1)))


def project_coords(space: SpaceSpec, coords: np.ndarray) -> np.ndarray:
    """Feasible coordinates nearest to the given ones, batched over leading axis.

    Accepts a single coordinate block or a stack of them. Feasible input is
    returned unchanged (up to the eigenvalue-clip reconstruction in the
    Frobenius case when some slice in the batch is infeasible).
    """
    arr = np.asarray(coords, dtype=float)
    if space.kind == WASSERSTEIN:
        single = arr.ndim == 1
        rows = np.ascontiguousarray(np.atleast_2d(arr))
        if np.all(np.diff(rows, axis=1) >= 0.0):
            out = rows
        else:
            out = kernel.isotonic_rows(rows)
        return out[0] if single else out

    single = arr.ndim == 2
    mats = arr[None] if single else arr

    if space.kind == SPD_CHOLESKY:
        out = mats.copy()
        m = space.dims
        diag = out[:, np.arange(m), np.arange(m)]
        out[:, np.arange(m), np.arange(m)] = np.maximum(diag, space.eps)
        return out[0] if single else out

    # Frobenius: fast positive-definiteness pretest, eigenvalue clip on demand.
    shifted = mats - (space.eps * (1.0 - 1e-6)) * np.eye(space.dims)
    try:
        np.linalg.cholesky(shifted)
        return arr
    except np.linalg.LinAlgError:
        pass
    w, v = np.linalg.eigh(0.5 * (mats + np.swapaxes(mats, -1, -2)))
    w = np.maximum(w, space.eps)
    out = np.einsum("...ij,...j,...kj->...ik", v, w, v)
    out = 0.5 * (out + np.swapaxes(out, -1, -2))
    return out[0] if single else out


def coords_to_object(space: SpaceSpec, coords: np.ndarray):
    """Wrap feasible coordinates as a metric object."""
    coords = np.asarray(coords, dtype=float)
    if space.kind == WASSERSTEIN:
        return QuantileFunction(coords)
    if space.kind == SPD_FROBENIUS:
        return SPDMatrix(coords, eps=space.eps)
    product = coords.T @ coords
    return SPDMatrix(0.5 * (product + product.T), eps=space.eps, factor_upper=coords)


def ensure_member(space: SpaceSpec, coords: np.ndarray):
    """Coordinates to object, projecting first if they are infeasible."""
    return coords_to_object(space, project_coords(space, coords))


# ---------------------------------------------------------------------------
# Public operations
# ---------------------------------------------------------------------------

def distance(space: SpaceSpec, a, b) -> float:
    """Metric distance between two objects of this space."""
    ca = to_coords(space, a)
    cb = to_coords(space, b)
    if ca.shape != cb.shape:
        raise DimensionError(f"distance: shape mismatch {ca.shape} vs {cb.shape}")
    return float(coords_distance(space, ca, cb))


def combine(space: SpaceSpec, coefficients, objects) -> RawObject:
    """Linear combination in the space's flat coordinates.

    Pointwise for quantile values, entrywise for Frobenius matrices; for
    ``spd_cholesky`` the combination is taken between upper Cholesky factors
    and the factor-space raw object is returned.
    """
    objects = list(objects)
    if not objects:
        raise EmptyInput("combine: empty object list")
    coeffs = np.asarray(coefficients, dtype=float).ravel()
    if coeffs.size != len(objects):
        raise DimensionError(
            f"combine: {coeffs.size} coefficients for {len(objects)} objects"
        )
    coords = stack_coords(space, objects)
    out = np.tensordot(coeffs, coords, axes=(0, 0))
    return RawObject(space.kind, out)


def project(space: SpaceSpec, raw: RawObject):
    """Nearest feasible object to a raw intermediate; identity on feasible input."""
    coords = to_coords(space, raw)
    expected = (space.dims,) if space.kind == WASSERSTEIN else (space.dims, space.dims)
    if coords.shape != expected:
        raise DimensionError(f"project: payload shape {coords.shape} != {expected}")
    return coords_to_object(space, project_coords(space, coords))


def weighted_frechet_mean(space: SpaceSpec, objects, weights):
    """Exact minimizer of sum_i w_i d^2(Y_i, omega) over the feasible set.

    Requires positive total weight; individual weights may be negative.
    """
    objects = list(objects)
    if not objects:
        raise EmptyInput("weighted_frechet_mean: empty object list")
    w = np.asarray(weights, dtype=float).ravel()
    if w.size != len(objects):
        raise DimensionError(
            f"weighted_frechet_mean: {w.size} weights for {len(objects)} objects"
        )
    total = float(np.sum(w))
    if total <= 0:
        raise IllPosedObjective(
            f"weighted_frechet_mean: total weight {total} is not positive"
        )
    return project(space, combine(space, w / total, objects))
