"""Second-order exchangeability for vectors and their quadratic products.

Covers the vec / direct-product / star-product algebra, automatic
fourth-moment specification from a multivariate-normal assumption, beliefs
over sample covariance matrices formed from exchangeable residuals, and the
scalar-level quadratic adjustment of an unknown covariance matrix.

Quadratic beliefs are stored over the d = r(r+1)/2 distinct elements of a
symmetric matrix (half-vectorisation, upper triangle in row-major order);
the duplicated full-vec covariance is singular, so the distinct form is the
working representation and the full form is expanded on demand.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._linalg import (
    TOL_PSD,
    DimensionMismatchError,
    IncoherentSpecificationError,
    check_nnd,
    symmetrized,
)
from .core import BeliefStore, ScalarAdjustment, Subspace, adjust

__all__ = [
    "vec",
    "unvec",
    "vec_index",
    "direct_product",
    "star_product",
    "vec_permutation",
    "mvn_fourth_moments",
    "DistinctIndex",
    "ExchangeableModel",
    "QuadraticModel",
    "exchangeable_decompose",
    "sample_cov_beliefs",
    "QuadraticAdjustment",
    "quadratic_adjust",
]


def vec(a) -> np.ndarray:
    """Column-stacking vectorisation of a matrix."""
    return np.asarray(a, dtype=float).reshape(-1, order="F")


def unvec(v, r: int, c: int | None = None) -> np.ndarray:
    c = r if c is None else c
    return np.asarray(v, dtype=float).reshape((r, c), order="F")


def vec_index(i: int, j: int, r: int) -> int:
    """Position of element (i, j) (zero-based) in the column-stacked vector."""
    return j * r + i


def _square_pair(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionMismatchError(f"first operand must be square, got {a.shape}")
    if b.shape != a.shape:
        raise DimensionMismatchError(f"operands must have equal shapes, got {a.shape} and {b.shape}")
    return a, b


def direct_product(a, b) -> np.ndarray:
    """Left direct product: element a_jk b_lm in row r(l-1)+j, column r(m-1)+k.

    Equivalent to the Kronecker product with block structure b_lm * A.
    """
    a, b = _square_pair(a, b)
    return np.kron(b, a)


def star_product(a, b) -> np.ndarray:
    """Star product: element a_jk b_lm in row r(k-1)+m, column r(l-1)+j."""
    a, b = _square_pair(a, b)
    r = a.shape[0]
    out = np.empty((r * r, r * r))
    for j in range(r):
        for k in range(r):
            for l in range(r):
                for m in range(r):
                    out[r * k + m, r * l + j] = a[j, k] * b[l, m]
    return out


def vec_permutation(r: int) -> np.ndarray:
    """The (r, r) vec-permutation matrix: I_{r,r} vec(A) = vec(A^T)."""
    out = np.zeros((r * r, r * r))
    for i in range(r):
        for j in range(r):
            out[vec_index(i, j, r), vec_index(j, i, r)] = 1.0
    return out


def mvn_fourth_moments(var_r) -> np.ndarray:
    """Var(vec(X X^T)) for a zero-mean multivariate normal X with Var(X) = var_r.

    The result is the direct product plus the star product of var_r with
    itself; entrywise it is the pair-sum Cov((XX')_ij, (XX')_kl) =
    V_ik V_jl + V_il V_jk.  This is offered as one optional strategy for
    filling in a residual quadratic specification, never applied silently.
    """
    v = symmetrized(var_r, name="residual variance")
    check_nnd(v, TOL_PSD, "residual variance")
    return direct_product(v, v) + star_product(v, v)


@dataclass(frozen=True)
class DistinctIndex:
    """Bookkeeping between an r x r symmetric matrix and its distinct elements.

    Distinct coordinates are the upper triangle in row-major order:
    (0,0), (0,1), ..., (0,r-1), (1,1), ...
    """

    r: int

    @property
    def pairs(self) -> list[tuple[int, int]]:
        return [(i, j) for i in range(self.r) for j in range(i, self.r)]

    @property
    def d(self) -> int:
        return self.r * (self.r + 1) // 2

    def labels(self, prefix: str) -> list[str]:
        return [f"{prefix}[{i},{j}]" for i, j in self.pairs]

    def extract(self, m) -> np.ndarray:
        """Distinct-element vector of a symmetric matrix."""
        m = symmetrized(m)
        return np.array([m[i, j] for i, j in self.pairs])

    def expand(self, v) -> np.ndarray:
        """Symmetric matrix from a distinct-element vector."""
        v = np.asarray(v, dtype=float).reshape(-1)
        if v.shape[0] != self.d:
            raise DimensionMismatchError(f"expected {self.d} distinct elements, got {v.shape[0]}")
        out = np.zeros((self.r, self.r))
        for k, (i, j) in enumerate(self.pairs):
            out[i, j] = v[k]
            out[j, i] = v[k]
        return out

    def compress_cov(self, full) -> np.ndarray:
        """d x d covariance over distinct elements from an r^2 x r^2 vec covariance.

        Off-diagonal distinct coordinates correspond to both (i,j) and (j,i)
        vec slots, which carry identical quantities; a representative slot is
        read and the duplicates are checked for consistency.
        """
        full = np.asarray(full, dtype=float)
        r = self.r
        if full.shape != (r * r, r * r):
            raise DimensionMismatchError(f"expected {r * r} x {r * r} vec covariance")
        out = np.empty((self.d, self.d))
        for a, (i, j) in enumerate(self.pairs):
            for b, (k, l) in enumerate(self.pairs):
                v = full[vec_index(i, j, r), vec_index(k, l, r)]
                v2 = full[vec_index(j, i, r), vec_index(l, k, r)]
                if not np.isclose(v, v2, rtol=1e-8, atol=1e-12):
                    raise IncoherentSpecificationError(
                        f"vec covariance is not symmetric under transposition at ({i},{j}),({k},{l})"
                    )
                out[a, b] = v
        return out

    def expand_cov(self, dist) -> np.ndarray:
        """r^2 x r^2 vec covariance from a d x d distinct-element covariance."""
        dist = np.asarray(dist, dtype=float)
        r = self.r
        out = np.empty((r * r, r * r))
        where = {}
        for a, (i, j) in enumerate(self.pairs):
            where[(i, j)] = a
            where[(j, i)] = a
        for i in range(r):
            for j in range(r):
                for k in range(r):
                    for l in range(r):
                        out[vec_index(i, j, r), vec_index(k, l, r)] = dist[where[(i, j)], where[(k, l)]]
        return out


@dataclass(frozen=True)
class ExchangeableModel:
    """Second-order exchangeable vector sequence: Var within, Cov across indices."""

    sigma: np.ndarray
    delta: np.ndarray

    def __init__(self, sigma, delta):
        s = symmetrized(sigma, name="sigma")
        d = symmetrized(delta, name="delta")
        if s.shape != d.shape:
            raise DimensionMismatchError("sigma and delta must have equal shapes")
        exchangeable_decompose(s, d)  # coherence check
        object.__setattr__(self, "sigma", s)
        object.__setattr__(self, "delta", d)

    @property
    def r(self) -> int:
        return self.sigma.shape[0]

    @property
    def mean_var(self) -> np.ndarray:
        return self.delta

    @property
    def residual_var(self) -> np.ndarray:
        return self.sigma - self.delta


def exchangeable_decompose(sigma, delta) -> tuple[np.ndarray, np.ndarray]:
    """Split Var(X) into mean and residual components, checking coherence.

    Returns (mean_var, residual_var) = (delta, sigma - delta).  Both parts
    must be NND for the exchangeable representation to exist; an incoherent
    pair is rejected naming the offending eigenvalue.
    """
    s = symmetrized(sigma, name="sigma")
    d = symmetrized(delta, name="delta")
    if s.shape != d.shape:
        raise DimensionMismatchError("sigma and delta must have equal shapes")
    for part, name in ((d, "mean component delta"), (s - d, "residual component sigma - delta")):
        eigs = np.linalg.eigvalsh(part)
        if eigs[0] < -TOL_PSD * max(1.0, abs(float(np.trace(part)))):
            raise IncoherentSpecificationError(
                f"incoherent exchangeable specification: {name} has eigenvalue {eigs[0]:g}"
            )
    return d, s - d


@dataclass(frozen=True)
class QuadraticModel:
    """Second-order beliefs over the quadratic products of exchangeable residuals.

    `var_vecV` is the covariance over the distinct elements of the underlying
    matrix, `var_vecU` the covariance over the distinct elements of a single
    residual quadratic, and `expectation_V` the prior for the matrix itself.
    """

    r: int
    var_vecV: np.ndarray
    var_vecU: np.ndarray
    expectation_V: np.ndarray

    def __init__(self, r, var_vecV, var_vecU, expectation_V):
        d = r * (r + 1) // 2
        vv = symmetrized(var_vecV, name="var_vecV")
        vu = symmetrized(var_vecU, name="var_vecU")
        ev = symmetrized(expectation_V, name="expectation_V")
        if vv.shape != (d, d) or vu.shape != (d, d):
            raise DimensionMismatchError(f"quadratic beliefs must be {d} x {d} for r = {r}")
        if ev.shape != (r, r):
            raise DimensionMismatchError(f"expectation_V must be {r} x {r}")
        check_nnd(vv, TOL_PSD, "var_vecV")
        check_nnd(vu, TOL_PSD, "var_vecU")
        check_nnd(ev, TOL_PSD, "expectation_V")
        object.__setattr__(self, "r", int(r))
        object.__setattr__(self, "var_vecV", vv)
        object.__setattr__(self, "var_vecU", vu)
        object.__setattr__(self, "expectation_V", ev)

    @property
    def index(self) -> DistinctIndex:
        return DistinctIndex(self.r)

    @classmethod
    def mvn_auto(cls, r, var_vecV, expectation_V) -> "QuadraticModel":
        """Fill var_vecU from the MVN fourth moments of expectation_V."""
        idx = DistinctIndex(r)
        vu = idx.compress_cov(mvn_fourth_moments(expectation_V))
        return cls(r, var_vecV, vu, expectation_V)


def sample_cov_beliefs(q: QuadraticModel, n: int, *, samples: int = 1) -> BeliefStore:
    """Joint beliefs over the underlying matrix and sample covariance matrices.

    For each sample covariance matrix from `n` observations:
    Cov(V, S) = Var(V), Var(S) = Var(V) + Var(U)/n, E(S) = E(V); distinct
    sample matrices from disjoint samples covary through Var(V) alone.
    """
    if n < 2:
        raise ValueError("sample size must be at least 2")
    if samples < 1:
        raise ValueError("at least one sample covariance matrix is required")
    idx = q.index
    d = idx.d
    labels = idx.labels("V")
    for k in range(samples):
        prefix = "S" if samples == 1 else f"S{k + 1}"
        labels += idx.labels(prefix)
    dim = d * (samples + 1)
    cov = np.empty((dim, dim))
    var_s = q.var_vecV + q.var_vecU / n
    for a in range(samples + 1):
        for b in range(samples + 1):
            block = q.var_vecV
            if a == b and a > 0:
                block = var_s
            cov[a * d : (a + 1) * d, b * d : (b + 1) * d] = block
    ev = idx.extract(q.expectation_V)
    expectation = np.tile(ev, samples + 1)
    return BeliefStore(labels, expectation, cov)


@dataclass(frozen=True)
class QuadraticAdjustment:
    """Adjusted beliefs about the underlying matrix given an observed sample matrix."""

    matrix: np.ndarray
    adjusted_cov: np.ndarray
    adjustment: ScalarAdjustment


def quadratic_adjust(q: QuadraticModel, s_obs, n: int) -> QuadraticAdjustment:
    """Bayes linear adjustment of the underlying matrix by a sample covariance.

    Works over the distinct coordinates and re-expands the adjusted
    expectation to a symmetric matrix.
    """
    idx = q.index
    s = symmetrized(s_obs, name="observed sample covariance")
    if s.shape != (q.r, q.r):
        raise DimensionMismatchError(f"observed matrix must be {q.r} x {q.r}")
    store = sample_cov_beliefs(q, n)
    d = idx.d
    v_space = Subspace(store, np.hstack([np.eye(d), np.zeros((d, d))]), np.zeros(d))
    s_space = Subspace(store, np.hstack([np.zeros((d, d)), np.eye(d)]), np.zeros(d))
    res = adjust(store, v_space, s_space)
    realized = res.realize(idx.extract(s))
    return QuadraticAdjustment(idx.expand(realized), res.adjusted_cov, res)
