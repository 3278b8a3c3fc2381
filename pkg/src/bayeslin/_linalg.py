"""Shared numerical-linear-algebra helpers and tolerance conventions.

All symmetric matrices are symmetrised on ingestion.  Pseudo-inverses are
computed from a symmetric eigendecomposition with a relative eigenvalue
cutoff so that repeated runs give bit-identical results.
"""

from __future__ import annotations

import numpy as np

# Relative asymmetry allowed before a matrix is rejected as non-symmetric.
TOL_SYM = 1e-9
# NND slack: minimum eigenvalue >= -TOL_PSD * trace.
TOL_PSD = 1e-8
# Strict positive-definiteness floor: minimum eigenvalue > TOL_PD * trace.
TOL_PD = 1e-12
# Pseudo-inverse cutoff relative to the largest eigenvalue magnitude.
TOL_RANK = 1e-10
# Allowed inconsistency when observing a zero-variance quantity.
TOL_OBS = 1e-6


class IncoherentSpecificationError(ValueError):
    """A belief specification violates a coherence (NND) requirement."""


class DimensionMismatchError(ValueError):
    pass


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    m = np.asarray(a, dtype=float)
    if m.ndim != 2:
        raise DimensionMismatchError(f"{name} must be two-dimensional, got shape {m.shape}")
    return m


def symmetrized(a, tol: float = TOL_SYM, name: str = "matrix") -> np.ndarray:
    """Return (A + A^T)/2 after checking A is symmetric within `tol` (relative)."""
    m = as_matrix(a, name)
    if m.shape[0] != m.shape[1]:
        raise DimensionMismatchError(f"{name} must be square, got shape {m.shape}")
    scale = max(1.0, float(np.abs(m).max()))
    skew = float(np.abs(m - m.T).max())
    if skew > tol * scale:
        raise IncoherentSpecificationError(
            f"{name} is not symmetric: max |A - A^T| = {skew:g} exceeds {tol:g} x scale"
        )
    return (m + m.T) / 2.0


def check_nnd(a: np.ndarray, tol: float = TOL_PSD, name: str = "matrix") -> None:
    """Raise if the symmetric matrix has an eigenvalue below -tol * trace."""
    if a.size == 0:
        return
    eigs = np.linalg.eigvalsh(a)
    floor = -tol * max(1.0, float(np.trace(a)))
    if eigs[0] < floor:
        raise IncoherentSpecificationError(
            f"{name} is not non-negative definite: minimum eigenvalue {eigs[0]:g}"
        )


def is_nnd(a: np.ndarray, tol: float = TOL_PSD) -> bool:
    if a.size == 0:
        return True
    eigs = np.linalg.eigvalsh(a)
    return bool(eigs[0] >= -tol * max(1.0, float(np.trace(a))))


def psd_pinv(a: np.ndarray, rcond: float = TOL_RANK) -> np.ndarray:
    """Moore-Penrose inverse of a symmetric NND matrix via eigendecomposition.

    Eigenvalues below `rcond` times the largest one are treated as zero, so
    degenerate directions are excluded rather than amplified.
    """
    a = np.asarray(a, dtype=float)
    if a.size == 0:
        return a.copy()
    w, v = np.linalg.eigh((a + a.T) / 2.0)
    cutoff = rcond * max(float(np.abs(w).max()), np.finfo(float).tiny)
    inv = np.where(np.abs(w) > cutoff, 1.0 / np.where(w == 0.0, 1.0, w), 0.0)
    return (v * inv) @ v.T


def psd_null_projector(a: np.ndarray, rcond: float = TOL_RANK) -> np.ndarray:
    """Projector onto the (numerical) null space of a symmetric matrix."""
    a = np.asarray(a, dtype=float)
    w, v = np.linalg.eigh((a + a.T) / 2.0)
    cutoff = rcond * max(float(np.abs(w).max()), np.finfo(float).tiny)
    null = np.abs(w) <= cutoff
    return (v[:, null]) @ (v[:, null]).T


def matrix_rank_sym(gram: np.ndarray, rcond: float = TOL_RANK) -> int:
    if gram.size == 0:
        return 0
    w = np.linalg.eigvalsh((gram + gram.T) / 2.0)
    cutoff = rcond * max(float(np.abs(w).max()), np.finfo(float).tiny)
    return int(np.sum(np.abs(w) > cutoff))
