"""Inner-product spaces of random matrices.

A random symmetric matrix is treated as a single element of a space with
inner product (A, B) = E(Tr(A B^T)) = sum over entries of
Cov(A_jk, B_jk) + E(A_jk) E(B_jk).  Adjustment of a matrix by a collection
of observable matrices is orthogonal projection in this space; resolutions
measure the fraction of constant-adjusted (covariance) norm removed.

Two weightings of the entry sum are supported: `full-trace` counts every
ordered entry pair (the literal trace form) and `distinct` counts each
unordered pair once.  Both appear in practice and lead to different
single-object projection coefficients, so the choice is explicit
configuration on the space.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._linalg import (
    TOL_PSD,
    TOL_RANK,
    DimensionMismatchError,
    IncoherentSpecificationError,
    psd_pinv,
    symmetrized,
)
from .core import BeliefStore

__all__ = [
    "MatrixObject",
    "MatrixSpace",
    "MatrixAdjustment",
    "RepairResult",
    "build_collections",
    "nnd_repair",
    "symmetric_basis",
    "full_basis",
]

WEIGHTINGS = ("full-trace", "distinct")


@dataclass(frozen=True)
class MatrixObject:
    """One element of a random-matrix space.

    kind "derived": entries are affine combinations of store quantities,
    held as a (r, r, q) coefficient array plus an (r, r) constant part.
    kind "primitive": only the expectation matrix is carried here; second
    moments against other primitives are declared on the space.
    kind "constant": a plain numeric matrix.
    """

    name: str
    r: int
    kind: str
    coeffs: np.ndarray | None = None
    const: np.ndarray | None = None
    expect: np.ndarray | None = None
    symmetric: bool = False

    @staticmethod
    def constant(name: str, value) -> "MatrixObject":
        v = np.asarray(value, dtype=float)
        return MatrixObject(name, v.shape[0], "constant", None, v.copy(), v.copy())

    @staticmethod
    def primitive(name: str, expectation) -> "MatrixObject":
        e = symmetrized(expectation, name=f"expectation of {name}")
        return MatrixObject(name, e.shape[0], "primitive", None, None, e)

    @staticmethod
    def derived(name: str, store: BeliefStore, grid, *, symmetric: bool | None = None) -> "MatrixObject":
        """Build from an r x r grid of quantity labels, affine rows or None.

        A grid cell may be a quantity label, a number (constant entry), or a
        (coefficient-vector, offset) pair over the store quantities.
        """
        r = len(grid)
        q = store.size
        coeffs = np.zeros((r, r, q))
        const = np.zeros((r, r))
        for i in range(r):
            if len(grid[i]) != r:
                raise DimensionMismatchError("grid must be square")
            for j in range(r):
                cell = grid[i][j]
                if cell is None:
                    continue
                if isinstance(cell, str):
                    coeffs[i, j, store.index(cell)] = 1.0
                elif isinstance(cell, (int, float)):
                    const[i, j] = float(cell)
                else:
                    vec, off = cell
                    coeffs[i, j] = np.asarray(vec, dtype=float)
                    const[i, j] = float(off)
        obj = MatrixObject(name, r, "derived", coeffs, const, None)
        if symmetric is None:
            symmetric = obj._entries_symmetric()
        if symmetric and not obj._entries_symmetric():
            raise IncoherentSpecificationError(f"object {name} marked symmetric but entries differ")
        object.__setattr__(obj, "symmetric", symmetric)
        return obj

    def _entries_symmetric(self) -> bool:
        return bool(
            np.allclose(self.coeffs, np.swapaxes(self.coeffs, 0, 1))
            and np.allclose(self.const, self.const.T)
        )

    def expectation(self, store: BeliefStore | None = None) -> np.ndarray:
        if self.kind == "derived":
            if store is None:
                raise ValueError("derived objects need their base store for expectations")
            return self.coeffs @ store.expectation + self.const
        return self.expect.copy()

    def realize(self, observation=None) -> np.ndarray:
        """Numeric value given an observed vector of store quantities.

        Constant objects realise to themselves; primitive objects must be
        supplied through the `observed` mapping of an adjustment instead.
        """
        if self.kind == "constant":
            return self.const.copy()
        if self.kind == "derived":
            if observation is None:
                raise ValueError("derived objects realise from a store observation vector")
            obs = np.asarray(observation, dtype=float).reshape(-1)
            return self.coeffs @ obs + self.const
        raise ValueError(f"primitive object {self.name} has no intrinsic realisation")


def _slot_weights(r: int, weighting: str) -> np.ndarray:
    if weighting not in WEIGHTINGS:
        raise ValueError(f"weighting must be one of {WEIGHTINGS}")
    w = np.ones((r, r))
    if weighting == "distinct":
        w = np.triu(w)
    return w


class MatrixSpace:
    """A collection of matrix objects with a cached pairwise Gram.

    Derived objects compute their covariances from the base store; primitive
    pairs take them from `primitive_cov`, either as an (r, r) array of
    entrywise covariances Cov(A_jk, B_jk) or as a single number already
    aggregated under this space's weighting.  The Gram is built eagerly so
    all reads afterwards are lock-free.
    """

    def __init__(
        self,
        objects,
        *,
        weighting: str = "full-trace",
        store: BeliefStore | None = None,
        primitive_cov: dict[tuple[str, str], object] | None = None,
        check_coherence: bool = True,
    ):
        objs = list(objects)
        if not objs:
            raise ValueError("a matrix space needs at least one object")
        r = objs[0].r
        if any(o.r != r for o in objs):
            raise DimensionMismatchError("all objects must share one dimension")
        names = [o.name for o in objs]
        if len(set(names)) != len(names):
            raise ValueError("object names must be unique")
        self.r = r
        self.weighting = weighting
        self.store = store
        self.objects: dict[str, MatrixObject] = {o.name: o for o in objs}
        self._weights = _slot_weights(r, weighting)
        self._prim_cov = dict(primitive_cov or {})
        self._names = names
        self._cov_gram = self._build_cov_gram()
        if check_coherence:
            eigs = np.linalg.eigvalsh(self._cov_gram)
            floor = -TOL_PSD * max(1.0, abs(float(np.trace(self._cov_gram))))
            if eigs[0] < floor:
                raise IncoherentSpecificationError(
                    f"declared matrix-space Gram is not NND (eigenvalue {eigs[0]:g})"
                )

    # -- Gram construction -------------------------------------------------

    def _prim_pair(self, a: str, b: str) -> float:
        # Cov(A_jk, B_jk) is symmetric in the pair, so either key order works.
        for key in ((a, b), (b, a)):
            if key in self._prim_cov:
                arr = np.asarray(self._prim_cov[key], dtype=float)
                if arr.ndim == 0:
                    return float(arr)
                if arr.shape != (self.r, self.r):
                    raise DimensionMismatchError(
                        f"entrywise covariance for {key} must be {self.r} x {self.r}"
                    )
                return float((self._weights * arr).sum())
        raise KeyError(f"missing primitive Gram entry for pair ({a}, {b})")

    def _cov_pair(self, a: MatrixObject, b: MatrixObject) -> float:
        if a.kind == "constant" or b.kind == "constant":
            return 0.0
        if a.kind == "derived" and b.kind == "derived":
            if self.store is None:
                raise ValueError("derived objects need a base store")
            sigma = self.store.covariance
            total = 0.0
            w = self._weights
            for i in range(self.r):
                for j in range(self.r):
                    if w[i, j]:
                        total += w[i, j] * float(a.coeffs[i, j] @ sigma @ b.coeffs[i, j])
            return total
        return self._prim_pair(a.name, b.name)

    def _build_cov_gram(self) -> np.ndarray:
        n = len(self._names)
        g = np.zeros((n, n))
        for i, na in enumerate(self._names):
            for j in range(i, n):
                v = self._cov_pair(self.objects[na], self.objects[self._names[j]])
                g[i, j] = v
                g[j, i] = v
        return g

    # -- inner products -----------------------------------------------------

    def expectation(self, name: str) -> np.ndarray:
        return self.objects[name].expectation(self.store)

    def matrix_covariance(self, a: str, b: str) -> float:
        """Constant-adjusted inner product: the covariance part alone."""
        i, j = self._names.index(a), self._names.index(b)
        return float(self._cov_gram[i, j])

    def inner_product(self, a: str, b: str) -> float:
        """Full inner product: covariance part plus weighted E(A) E(B) sum."""
        ea = self.expectation(a)
        eb = self.expectation(b)
        return self.matrix_covariance(a, b) + float((self._weights * ea * eb).sum())

    def norm(self, a: str) -> float:
        return float(np.sqrt(self.inner_product(a, a)))

    def constant_inner(self, a: np.ndarray, b: np.ndarray) -> float:
        """Inner product between constant matrices under this weighting."""
        return float((self._weights * a * b).sum())

    # -- adjustment ----------------------------------------------------------

    def adjust(
        self,
        target: str,
        collection: list[str],
        observed: dict[str, np.ndarray] | None = None,
        observation_vector=None,
    ) -> "MatrixAdjustment":
        """Orthogonal projection of `target` onto span{constants, collection}.

        Expectations are removed through the constant space, so the
        coefficients solve the normal equations of the covariance Gram; the
        constant component restores the target expectation.  `observed`
        supplies realised matrices for primitive collection members;
        `observation_vector` realises derived members from the store.
        """
        idx = [self._names.index(c) for c in collection]
        t = self._names.index(target)
        g = self._cov_gram[np.ix_(idx, idx)]
        rhs = self._cov_gram[idx, t]
        coeff = psd_pinv(g, TOL_RANK) @ rhs
        e_target = self.expectation(target)
        const = e_target.copy()
        for c, nm in zip(coeff, collection):
            const -= c * self.expectation(nm)
        target_var = self._cov_gram[t, t]
        explained = float(rhs @ coeff)
        resolution = explained / target_var if target_var > 0 else 0.0

        realized = None
        if observed is not None or observation_vector is not None:
            realized = const.copy()
            for c, nm in zip(coeff, collection):
                obj = self.objects[nm]
                if observed is not None and nm in observed:
                    value = np.asarray(observed[nm], dtype=float)
                else:
                    value = obj.realize(observation_vector)
                realized += c * value
        return MatrixAdjustment(
            target=target,
            collection=tuple(collection),
            coefficients=coeff,
            constant_component=const,
            realized=realized,
            resolution=float(resolution),
            explained_covariance=explained,
            target_covariance=float(target_var),
        )

    def resolution(self, target: str, collection: list[str]) -> float:
        """Fraction of constant-adjusted variance of `target` removed by the collection."""
        t = self._names.index(target)
        if self._cov_gram[t, t] <= 0:
            raise ValueError(f"target {target} has zero constant-adjusted norm")
        return self.adjust(target, collection).resolution


@dataclass(frozen=True)
class MatrixAdjustment:
    """Projection coefficients, constant component and realised value."""

    target: str
    collection: tuple[str, ...]
    coefficients: np.ndarray
    constant_component: np.ndarray
    realized: np.ndarray | None
    resolution: float
    explained_covariance: float
    target_covariance: float

    def constant_coefficients(self, basis: list[np.ndarray]) -> np.ndarray:
        """Coefficients of the constant component over a constant basis."""
        mats = [np.asarray(b, dtype=float) for b in basis]
        a = np.stack([m.reshape(-1) for m in mats], axis=1)
        sol, residual, *_ = np.linalg.lstsq(a, self.constant_component.reshape(-1), rcond=None)
        recon = a @ sol
        if not np.allclose(recon, self.constant_component.reshape(-1), atol=1e-8):
            raise ValueError("constant component is not representable in the given basis")
        return sol


def symmetric_basis(r: int) -> list[np.ndarray]:
    """The r(r+1)/2 elementary symmetric constant matrices."""
    out = []
    for i in range(r):
        for j in range(i, r):
            m = np.zeros((r, r))
            m[i, j] = 1.0
            m[j, i] = 1.0
            out.append(m)
    return out


def full_basis(r: int) -> list[np.ndarray]:
    """All r^2 elementary constant matrices."""
    out = []
    for i in range(r):
        for j in range(r):
            m = np.zeros((r, r))
            m[i, j] = 1.0
            out.append(m)
    return out


def build_collections(store: BeliefStore, value_labels: list[str], r: int, prefix: str = "D"):
    """Sample, individual and full variance collections over a belief store.

    `value_labels` name the distinct elements of the observable matrix in
    upper-triangle row-major order.  The sample collection is the single
    whole matrix; the individual collection places each distinct element in
    its own symmetric pattern; the full collection places every distinct
    element in every distinct symmetric pattern.
    """
    pairs = [(i, j) for i in range(r) for j in range(i, r)]
    d = len(pairs)
    if len(value_labels) != d:
        raise DimensionMismatchError(f"expected {d} value labels for r = {r}")

    def pattern_grid(value_label: str, pat: tuple[int, int]):
        grid = [[None] * r for _ in range(r)]
        i, j = pat
        grid[i][j] = value_label
        grid[j][i] = value_label
        return grid

    whole = [[value_labels[pairs.index((min(i, j), max(i, j)))] for j in range(r)] for i in range(r)]
    sample = MatrixObject.derived(f"{prefix}_S", store, whole, symmetric=True)
    individual = [
        MatrixObject.derived(f"{prefix}_I[{i},{j}]", store, pattern_grid(value_labels[k], (i, j)), symmetric=True)
        for k, (i, j) in enumerate(pairs)
    ]
    full = [
        MatrixObject.derived(
            f"{prefix}_F[{iv},{jv}->{ip},{jp}]",
            store,
            pattern_grid(value_labels[kv], (ip, jp)),
            symmetric=True,
        )
        for kv, (iv, jv) in enumerate(pairs)
        for (ip, jp) in pairs
    ]
    return {"sample": [sample], "individual": individual, "full": full}


@dataclass(frozen=True)
class RepairResult:
    matrix: np.ndarray
    clipped: tuple[tuple[int, float], ...]

    @property
    def changed(self) -> bool:
        return bool(self.clipped)


def nnd_repair(x) -> RepairResult:
    """Project a symmetric matrix onto the NND cone by eigenvalue truncation.

    Clamping any eigenvalue is reported: negative eigenvalues in an adjusted
    matrix are a diagnostic warning of conflict between prior beliefs and
    data, so the repair never happens silently.
    """
    m = symmetrized(x, name="matrix")
    w, v = np.linalg.eigh(m)
    clipped = tuple((int(i), float(val)) for i, val in enumerate(w) if val < 0)
    if not clipped:
        return RepairResult(m, ())
    w = np.clip(w, 0.0, None)
    repaired = (v * w) @ v.T
    return RepairResult((repaired + repaired.T) / 2.0, clipped)
