"""A priori and a posteriori adjustment diagnostics.

Before observing, the belief transform of an adjustment describes expected
changes in belief; after observing, the realised change is summarised by
its size (squared norm of the bearing) and compared with the expected size
through the size ratio.  The observed-transform machinery generalises both
to adjustments whose realised values live in a multi-dimensional constant
space, such as matrix adjustments.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._linalg import TOL_RANK, psd_pinv
from .core import BeliefStore, Subspace, adjust
from .mspace import MatrixSpace

__all__ = [
    "ScalarDiagnostics",
    "ObservedTransform",
    "scalar_diagnose",
    "subspace_bearing",
    "observed_transform",
    "observed_transform_matrix",
    "shading_transform",
    "NOT_APPLICABLE",
]

# Size ratio of a degenerate (0/0) adjustment.
NOT_APPLICABLE = float("nan")


def _orthonormal_rows(comb: np.ndarray, cov: np.ndarray, rcond: float = TOL_RANK):
    """Orthonormal basis rows for the span of `comb` under the covariance inner product."""
    gram = comb @ cov @ comb.T
    w, v = np.linalg.eigh((gram + gram.T) / 2.0)
    cutoff = rcond * max(float(np.abs(w).max(initial=0.0)), np.finfo(float).tiny)
    keep = w > cutoff
    basis = (v[:, keep] / np.sqrt(w[keep])).T @ comb
    return basis


@dataclass(frozen=True)
class ScalarDiagnostics:
    """Observed-change summary for a scalar Bayes linear adjustment.

    `bearing_coefficients` are over the orthonormal `basis` rows (store
    coordinates); `bearing` is the induced combination row, the direction of
    maximal standardized change.  size = Var(bearing), expected_size is the
    trace of the belief transform, and size_ratio their quotient (NaN when
    0/0, inf when only the expectation vanishes).
    """

    basis: np.ndarray
    bearing_coefficients: np.ndarray
    bearing: np.ndarray
    size: float
    expected_size: float
    size_ratio: float


def scalar_diagnose(
    store: BeliefStore, target: Subspace, data: Subspace, d_obs
) -> ScalarDiagnostics:
    """Size, bearing and size ratio of adjusting `target` by `data` observed at `d_obs`."""
    basis = _orthonormal_rows(target.combinations, store.covariance)
    if basis.shape[0] == 0:
        raise ValueError("target span has no variance; no diagnostics exist")
    cov_ud = basis @ store.covariance @ data.combinations.T
    var_d = data.variance()
    shift = np.asarray(d_obs, dtype=float).reshape(-1) - data.expectation()
    changes = cov_ud @ psd_pinv(var_d) @ shift
    size = float(changes @ changes)
    expected = _expected_size(basis, data, store)
    if expected > 0:
        ratio = size / expected
    else:
        ratio = NOT_APPLICABLE if size == 0 else float("inf")
    bearing_row = changes @ basis
    return ScalarDiagnostics(basis, changes, bearing_row, size, expected, ratio)


def _expected_size(basis: np.ndarray, data: Subspace, store: BeliefStore) -> float:
    cov_ud = basis @ store.covariance @ data.combinations.T
    transform = cov_ud @ psd_pinv(data.variance()) @ cov_ud.T
    return float(np.trace(transform))


def subspace_bearing(
    space: MatrixSpace,
    target_collection: list[str],
    data_collection: list[str],
    observed: dict[str, np.ndarray],
    direction: np.ndarray | None = None,
) -> np.ndarray:
    """Coefficients of the matrix-space bearing over the target collection.

    Each target member is adjusted by the data collection at the observed
    values; the bearing is the element Z of the centred target span solving
    the Riesz equation (A - E(A), Z) = <E_d(A) - E(A), G> for every member
    A.  `direction` is the constant matrix G, defaulting to the all-ones
    matrix, the choice that matches scalar diagnostics when every object has
    a single component.
    """
    g = np.ones((space.r, space.r)) if direction is None else np.asarray(direction, dtype=float)
    idx = [space._names.index(nm) for nm in target_collection]
    gram = space._cov_gram[np.ix_(idx, idx)]
    rhs = np.empty(len(target_collection))
    for k, nm in enumerate(target_collection):
        adj = space.adjust(nm, data_collection, observed=observed)
        change = adj.realized - space.expectation(nm)
        rhs[k] = space.constant_inner(change, g)
    return psd_pinv(gram) @ rhs


@dataclass(frozen=True)
class ObservedTransform:
    """Matrix representation of an observed adjustment and its eigenstructure.

    `operator` is the coefficient matrix of the observed adjusted-expectation
    map over orthonormal bases of the target span (columns) and the realised
    constant space (rows); `squared` is its self-adjoint square, whose
    eigenvalues are the sizes of the bearings.  `prior_squared` is the same
    construction for the a priori map (the belief transform).
    """

    operator: np.ndarray
    squared: np.ndarray
    prior_squared: np.ndarray
    sizes: np.ndarray
    bearings: np.ndarray
    size: float
    expected_size: float
    size_ratio: float

    @property
    def trace(self) -> float:
        return float(np.trace(self.squared))


def _ratio(size: float, expected: float) -> float:
    if expected > 0:
        return size / expected
    return NOT_APPLICABLE if size == 0 else float("inf")


def observed_transform(
    store: BeliefStore, target: Subspace, data: Subspace, d_obs
) -> ObservedTransform:
    """Observed belief transform for a scalar adjustment (1-D constant space)."""
    basis = _orthonormal_rows(target.combinations, store.covariance)
    data_basis = _orthonormal_rows(data.combinations, store.covariance)
    prior_op = data_basis @ store.covariance @ basis.T
    shift = np.asarray(d_obs, dtype=float).reshape(-1) - data.expectation()
    changes = basis @ store.covariance @ data.combinations.T @ psd_pinv(data.variance()) @ shift
    operator = changes[None, :]
    return _finish_transform(operator, prior_op.T @ prior_op)


def observed_transform_matrix(
    space: MatrixSpace,
    target_collection: list[str],
    data_collection: list[str],
    observed: dict[str, np.ndarray],
) -> ObservedTransform:
    """Observed belief transform for a matrix adjustment.

    Target and data collections are orthonormalised under the constant-
    adjusted inner product; the realised adjusted expectations of the target
    basis live in the constant space, whose inner product is the weighted
    entry sum.  The matrix representation is built over an orthonormal basis
    of the realised values themselves.
    """
    t_idx = [space._names.index(nm) for nm in target_collection]
    d_idx = [space._names.index(nm) for nm in data_collection]
    g_t = space._cov_gram[np.ix_(t_idx, t_idx)]
    g_d = space._cov_gram[np.ix_(d_idx, d_idx)]
    cross = space._cov_gram[np.ix_(d_idx, t_idx)]

    bt = _orthonormal_coeffs(g_t)
    bd = _orthonormal_coeffs(g_d)
    prior_op = bd @ cross @ bt.T

    # Realised centred values of the orthonormal target basis elements.
    coeff = psd_pinv(g_d) @ cross  # data coefficients of each raw target member
    centred = {}
    for nm in data_collection:
        exp = space.expectation(nm)
        centred[nm] = np.asarray(observed[nm], dtype=float) - exp
    raw_changes = []
    for col in range(len(target_collection)):
        m = np.zeros((space.r, space.r))
        for k, nm in enumerate(data_collection):
            m += coeff[k, col] * centred[nm]
        raw_changes.append(m)
    ortho_changes = [
        sum(bt[i, k] * raw_changes[k] for k in range(len(target_collection)))
        for i in range(bt.shape[0])
    ]
    gram_c = np.array(
        [[space.constant_inner(a, b) for b in ortho_changes] for a in ortho_changes]
    )
    operator = _constant_space_coords(gram_c)
    return _finish_transform(operator, prior_op.T @ prior_op)


def _orthonormal_coeffs(gram: np.ndarray, rcond: float = TOL_RANK) -> np.ndarray:
    w, v = np.linalg.eigh((gram + gram.T) / 2.0)
    cutoff = rcond * max(float(np.abs(w).max(initial=0.0)), np.finfo(float).tiny)
    keep = w > cutoff
    return (v[:, keep] / np.sqrt(w[keep])).T


def _constant_space_coords(gram: np.ndarray) -> np.ndarray:
    """Coordinates of vectors over an orthonormal basis of their own span."""
    w, v = np.linalg.eigh((gram + gram.T) / 2.0)
    cutoff = TOL_RANK * max(float(np.abs(w).max(initial=0.0)), np.finfo(float).tiny)
    keep = w > cutoff
    # rows: orthonormal constant-space directions; columns: original vectors
    return (np.sqrt(w[keep])[:, None]) * v[:, keep].T


def _finish_transform(operator, prior_squared) -> ObservedTransform:
    squared = operator.T @ operator
    w, v = np.linalg.eigh((squared + squared.T) / 2.0)
    order = np.argsort(w)[::-1]
    sizes = w[order]
    bearings = v[:, order].T
    size = float(np.trace(squared))
    expected = float(np.trace(prior_squared))
    return ObservedTransform(
        operator=operator,
        squared=squared,
        prior_squared=prior_squared,
        sizes=sizes,
        bearings=bearings,
        size=size,
        expected_size=expected,
        size_ratio=_ratio(size, expected),
    )


def shading_transform(size_ratio: float, k: float = 10.0) -> float:
    """Map a size ratio to a [0, 1] diagnostic shading.

    Zero for a ratio of one, saturating at ratios of k or 1/k; a zero ratio
    is the maximal too-small-change warning.  NaN ratios (0/0 adjustments)
    shade to zero.
    """
    if k <= 1:
        raise ValueError("saturation constant must exceed 1")
    if isinstance(size_ratio, float) and math.isnan(size_ratio):
        return 0.0
    if size_ratio < 0:
        raise ValueError("size ratio must be non-negative")
    if size_ratio == 0:
        return 1.0
    if math.isinf(size_ratio):
        return 1.0
    return min(1.0, abs(math.log(size_ratio)) / math.log(k))
