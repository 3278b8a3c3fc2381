"""Scalar Bayes linear machinery.

A :class:`BeliefStore` holds every quantity under consideration together
with a full expectation vector and covariance matrix.  Subspaces of the
store are adjusted by other subspaces through orthogonal projection; the
remaining operations (Cholesky elicitation, belief-transform eigenstructure,
inverse-covariance zero patterns, generalised conditional independence)
support elicitation and interpretation of such adjustments.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from ._linalg import (
    TOL_OBS,
    TOL_PD,
    TOL_PSD,
    TOL_RANK,
    TOL_SYM,
    DimensionMismatchError,
    IncoherentSpecificationError,
    check_nnd,
    psd_pinv,
    symmetrized,
)

__all__ = [
    "BeliefStore",
    "Subspace",
    "ScalarAdjustment",
    "EigenReport",
    "adjust",
    "cov_from_cholesky",
    "belief_transform_matrix",
    "belief_transform_eigen",
    "precision_zero_pattern",
    "gci_check",
]


@dataclass(frozen=True)
class BeliefStore:
    """Labelled quantities with an expectation vector and an NND covariance.

    The covariance is symmetrised on construction; labels must be unique.
    """

    labels: tuple[str, ...]
    expectation: np.ndarray
    covariance: np.ndarray

    def __init__(self, labels, expectation, covariance):
        labels = tuple(str(x) for x in labels)
        if len(set(labels)) != len(labels):
            raise ValueError("store labels must be unique")
        e = np.asarray(expectation, dtype=float).reshape(-1)
        c = symmetrized(covariance, TOL_SYM, "store covariance")
        if e.shape[0] != len(labels) or c.shape[0] != len(labels):
            raise DimensionMismatchError(
                f"store has {len(labels)} labels, expectation {e.shape}, covariance {c.shape}"
            )
        check_nnd(c, TOL_PSD, "store covariance")
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "expectation", e)
        object.__setattr__(self, "covariance", c)

    @property
    def size(self) -> int:
        return len(self.labels)

    def index(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise KeyError(f"unknown quantity {label!r}") from None

    def span(self, labels) -> "Subspace":
        """Subspace spanned by the named quantities (in the given order)."""
        idx = [self.index(l) for l in labels]
        comb = np.zeros((len(idx), self.size))
        for row, j in enumerate(idx):
            comb[row, j] = 1.0
        return Subspace(self, comb, np.zeros(len(idx)))


@dataclass(frozen=True)
class Subspace:
    """Affine combinations of store quantities: rows of `combinations` plus offsets."""

    base: BeliefStore
    combinations: np.ndarray
    constant_offsets: np.ndarray

    def __init__(self, base, combinations, constant_offsets=None):
        comb = np.atleast_2d(np.asarray(combinations, dtype=float))
        if comb.shape[1] != base.size:
            raise DimensionMismatchError(
                f"combination rows have {comb.shape[1]} coefficients for a store of size {base.size}"
            )
        off = (
            np.zeros(comb.shape[0])
            if constant_offsets is None
            else np.asarray(constant_offsets, dtype=float).reshape(-1)
        )
        if off.shape[0] != comb.shape[0]:
            raise DimensionMismatchError("one constant offset per combination row required")
        _check_row_independence(comb, off, base.covariance)
        object.__setattr__(self, "base", base)
        object.__setattr__(self, "combinations", comb)
        object.__setattr__(self, "constant_offsets", off)

    @property
    def dim(self) -> int:
        return self.combinations.shape[0]

    def expectation(self) -> np.ndarray:
        return self.combinations @ self.base.expectation + self.constant_offsets

    def variance(self) -> np.ndarray:
        return self.combinations @ self.base.covariance @ self.combinations.T

    def covariance_with(self, other: "Subspace") -> np.ndarray:
        if other.base is not self.base:
            raise ValueError("subspaces must share the same base store")
        return self.combinations @ self.base.covariance @ other.combinations.T

    def stack(self, other: "Subspace") -> "Subspace":
        """Concatenate two subspaces of the same store (C + D style joins)."""
        if other.base is not self.base:
            raise ValueError("subspaces must share the same base store")
        return Subspace(
            self.base,
            np.vstack([self.combinations, other.combinations]),
            np.concatenate([self.constant_offsets, other.constant_offsets]),
        )


def _check_row_independence(comb: np.ndarray, off: np.ndarray, cov: np.ndarray) -> None:
    # Rows that are zero elements of the space (no coefficients, no offset)
    # are ignored; the remaining rows must be linearly independent.
    live = [i for i in range(comb.shape[0]) if np.any(comb[i] != 0.0) or off[i] != 0.0]
    if not live:
        return
    rows = np.hstack([comb[live], off[live, None]])
    s = np.linalg.svd(rows, compute_uv=False)
    cutoff = TOL_RANK * max(s[0], np.finfo(float).tiny) * max(rows.shape)
    if int(np.sum(s > cutoff)) < len(live):
        raise ValueError("subspace combination rows are linearly dependent")


@dataclass(frozen=True)
class ScalarAdjustment:
    """Result of adjusting the subspace `target` by the subspace `data`.

    `coeff` and `intercept` define the affine rule; `realize` evaluates it at
    an observed data vector after checking consistency of any degenerate
    (zero-variance) directions.
    """

    target: Subspace
    data: Subspace
    coeff: np.ndarray
    intercept: np.ndarray
    adjusted_cov: np.ndarray
    resolution_transform: np.ndarray

    def realize(self, d_obs, tol_obs: float = TOL_OBS) -> np.ndarray:
        d = np.asarray(d_obs, dtype=float).reshape(-1)
        if d.shape[0] != self.data.dim:
            raise DimensionMismatchError(
                f"observed vector has length {d.shape[0]}, data space has dimension {self.data.dim}"
            )
        var_d = self.data.variance()
        resid = d - self.data.expectation()
        # Components of the observation along zero-variance directions must
        # agree with the stated expectation.
        null_resid = resid - var_d @ psd_pinv(var_d) @ resid
        scale = 1.0 + float(np.abs(d).max(initial=0.0))
        if np.abs(null_resid).max(initial=0.0) > tol_obs * scale:
            raise ValueError(
                "observation inconsistent with a known (zero-variance) combination "
                f"by {np.abs(null_resid).max():g}"
            )
        return self.intercept + self.coeff @ d


def adjust(store: BeliefStore, target: Subspace, data: Subspace) -> ScalarAdjustment:
    """Bayes linear adjustment of `target` by `data` (orthogonal projection).

    Uses the Moore-Penrose inverse of Var(data), so degenerate data spaces
    are handled by excluding null directions from the fit.
    """
    if target.base is not store or data.base is not store:
        raise ValueError("target and data must be subspaces of the given store")
    cov_bd = target.covariance_with(data)
    var_d = data.variance()
    var_b = target.variance()
    vd_inv = psd_pinv(var_d)
    coeff = cov_bd @ vd_inv
    intercept = target.expectation() - coeff @ data.expectation()
    adjusted_cov = var_b - coeff @ cov_bd.T
    adjusted_cov = (adjusted_cov + adjusted_cov.T) / 2.0
    transform = psd_pinv(var_b) @ cov_bd @ vd_inv @ cov_bd.T
    return ScalarAdjustment(target, data, coeff, intercept, adjusted_cov, transform)


def cov_from_cholesky(lam) -> np.ndarray:
    """Covariance matrix implied by a lower-triangular elicitation triangle."""
    m = np.asarray(lam, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DimensionMismatchError(f"triangle must be square, got shape {m.shape}")
    if np.any(np.triu(m, k=1) != 0.0):
        raise ValueError("entries above the diagonal must all be zero")
    return m @ m.T


def belief_transform_matrix(prior: np.ndarray, adjusted: np.ndarray) -> np.ndarray:
    """The linear map T with T @ prior = adjusted, i.e. adjusted @ inv(prior)."""
    r = symmetrized(prior, name="prior matrix")
    s = symmetrized(adjusted, name="adjusted matrix")
    return s @ np.linalg.inv(r)


@dataclass(frozen=True)
class EigenReport:
    """Eigenstructure of a covariance-to-covariance transform.

    Eigenvalues are sorted descending.  `eigenvectors[i]` is the eigenvector
    for `eigenvalues[i]`, scaled so v' S v = 1 (S the second matrix) with the
    largest-magnitude entry positive.  `notable[i]` flags eigenvalues whose
    ratio deviates from one by more than `flag_tol`.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    notable: np.ndarray
    flag_tol: float


def belief_transform_eigen(
    prior, adjusted, *, tol_pd: float = TOL_PD, flag_tol: float = 0.1
) -> EigenReport:
    """Eigenstructure of the transform mapping `prior` to `adjusted`.

    The eigenvalues are those of adjusted @ inv(prior); they are real because
    the transform is similar to a symmetric matrix.  `prior` must be strictly
    positive definite.
    """
    r = symmetrized(prior, name="prior matrix")
    s = symmetrized(adjusted, name="adjusted matrix")
    if r.shape != s.shape:
        raise DimensionMismatchError("matrices must have equal dimensions")
    w_r, v_r = np.linalg.eigh(r)
    floor = tol_pd * max(1.0, float(np.trace(r)))
    if w_r[0] <= floor:
        null_dir = v_r[:, 0]
        raise IncoherentSpecificationError(
            f"prior matrix is singular along direction {np.round(null_dir, 6).tolist()}"
        )
    w, v = scipy.linalg.eigh(s, r)
    order = np.argsort(w)[::-1]
    w = w[order]
    v = v[:, order]
    vectors = np.empty_like(v.T)
    for i in range(len(w)):
        vec = v[:, i]
        quad = float(vec @ s @ vec)
        if quad > tol_pd * max(1.0, float(np.trace(np.abs(s)))):
            vec = vec / np.sqrt(quad)
        k = int(np.argmax(np.abs(vec)))
        if vec[k] < 0:
            vec = -vec
        vectors[i] = vec
    notable = np.abs(w - 1.0) > flag_tol
    return EigenReport(w, vectors, notable, flag_tol)


def precision_zero_pattern(m, tol: float) -> np.ndarray:
    """Boolean matrix flagging standardized zeros of the inverse covariance.

    Entry (i, j) is True when |P_ij| / sqrt(P_ii P_jj) < tol for P = inv(M).
    Zeros of the standardized inverse correspond to conditional orthogonality
    of the pair given all remaining quantities.
    """
    mm = symmetrized(m, name="covariance matrix")
    w = np.linalg.eigvalsh(mm)
    if w[0] <= TOL_PD * max(1.0, float(np.trace(mm))):
        raise IncoherentSpecificationError("matrix is singular; no inverse zero pattern")
    p = np.linalg.inv(mm)
    d = np.sqrt(np.outer(np.diag(p), np.diag(p)))
    z = np.abs(p) / d
    out = z < tol
    np.fill_diagonal(out, False)
    return out


def gci_check(
    store: BeliefStore, target: Subspace, middle: Subspace, data: Subspace, tol: float
) -> bool:
    """Generalised conditional independence of `target` from `middle` given `data`.

    True when adjusting by `middle + data` gives the same affine rule as
    adjusting by `data` alone, compared in coefficient norm within `tol`.
    """
    joint = middle.stack(data)
    adj_joint = adjust(store, target, joint)
    adj_data = adjust(store, target, data)
    k = middle.dim
    coeff_mid = adj_joint.coeff[:, :k]
    coeff_rest = adj_joint.coeff[:, k:]
    diff = max(
        float(np.abs(coeff_mid).max(initial=0.0)),
        float(np.abs(coeff_rest - adj_data.coeff).max(initial=0.0)),
        float(np.abs(adj_joint.intercept - adj_data.intercept).max(initial=0.0)),
    )
    return diff <= tol
