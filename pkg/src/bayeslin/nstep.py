"""Generalised second-order n-step exchangeability.

An ordered collection whose Gram structure depends only on the index lag,
and is constant from lag n onwards, splits into a mean component (the tail
Gram) plus a residual collection whose lag structure vanishes beyond n.
Everything here is computed purely at the Gram (inner-product) level; no
values are ever sampled.
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

__all__ = [
    "NStepModel",
    "NStepRepresentation",
    "classify_nstep",
    "nstep_represent",
    "running_mean_gram",
    "running_mean_cross_gram",
    "window_gram",
]


def _as_gram_list(grams) -> list[np.ndarray]:
    out = []
    for g in grams:
        m = np.atleast_2d(np.asarray(g, dtype=float))
        out.append(m)
    if not out:
        raise ValueError("at least one lag Gram is required")
    q = out[0].shape[0]
    for m in out:
        if m.shape != (q, q):
            raise DimensionMismatchError("all lag Grams must share one shape")
    return out


@dataclass(frozen=True)
class NStepModel:
    """Lag-Gram description of an n-step exchangeable collection.

    `within` holds the Grams for lags 0..n-1 and `tail` the common Gram for
    every lag >= n.  `expectations` are the (lag-free) expectations of the
    per-step entities.
    """

    n: int
    within: tuple[np.ndarray, ...]
    tail: np.ndarray
    expectations: np.ndarray

    def __init__(self, n, within, tail, expectations=None):
        if n < 1:
            raise ValueError("n must be at least 1")
        grams = _as_gram_list(within)
        if len(grams) != n:
            raise ValueError(f"expected {n} within-lag Grams, got {len(grams)}")
        t = np.atleast_2d(np.asarray(tail, dtype=float))
        q = grams[0].shape[0]
        if t.shape != (q, q):
            raise DimensionMismatchError("tail Gram shape must match the lag Grams")
        # Translation plus reflection invariance makes every lag Gram symmetric.
        grams = [symmetrized(g, name=f"lag-{k} Gram") for k, g in enumerate(grams)]
        t = symmetrized(t, name="tail Gram")
        e = np.zeros(q) if expectations is None else np.asarray(expectations, dtype=float).reshape(-1)
        if e.shape[0] != q:
            raise DimensionMismatchError("one expectation per entity required")
        check_nnd(t, TOL_PSD, "tail Gram")
        object.__setattr__(self, "n", int(n))
        object.__setattr__(self, "within", tuple(grams))
        object.__setattr__(self, "tail", t)
        object.__setattr__(self, "expectations", e)
        check_nnd(window_gram(self, max(2 * n, 4)), TOL_PSD, "windowed Gram")

    @property
    def q(self) -> int:
        return self.tail.shape[0]

    def lag_gram(self, lag: int) -> np.ndarray:
        lag = abs(int(lag))
        if lag < self.n:
            return self.within[lag]
        return self.tail


def window_gram(model: NStepModel, m: int) -> np.ndarray:
    """Joint Gram of the first m steps (block Toeplitz in the lag structure)."""
    q = model.q
    out = np.empty((m * q, m * q))
    for a in range(m):
        for b in range(m):
            g = model.lag_gram(a - b)
            out[a * q : (a + 1) * q, b * q : (b + 1) * q] = g
    return out


def classify_nstep(lag_grams, tol: float) -> int | None:
    """Smallest n for which the supplied lag Grams are constant from lag n on.

    Requires at least two consecutive equal trailing entries beyond the
    candidate n before declaring a stable tail; returns None when the window
    never stabilises.
    """
    grams = _as_gram_list(lag_grams)
    scale = max(1.0, float(np.abs(grams[0]).max()))
    for n in range(1, len(grams) - 1):
        tail = grams[n:]
        if all(float(np.abs(g - tail[0]).max()) <= tol * scale for g in tail[1:]):
            return n
    return None


@dataclass(frozen=True)
class NStepRepresentation:
    """Mean/residual split of an n-step exchangeable collection.

    The mean components carry the tail Gram; the residual collection is
    itself n-step exchangeable with a zero tail and lag Grams d_k - c.
    """

    mean_gram: np.ndarray
    residual_within: tuple[np.ndarray, ...]
    mean_expectations: np.ndarray

    def residual_lag_gram(self, lag: int) -> np.ndarray:
        lag = abs(int(lag))
        if lag < len(self.residual_within):
            return self.residual_within[lag]
        return np.zeros_like(self.mean_gram)


def nstep_represent(model: NStepModel) -> NStepRepresentation:
    c = model.tail
    eigs = np.linalg.eigvalsh(c)
    if eigs[0] < -TOL_PSD * max(1.0, abs(float(np.trace(c)))):
        raise IncoherentSpecificationError(
            f"tail Gram is not NND (eigenvalue {eigs[0]:g}); no mean component exists"
        )
    residual = tuple(g - c for g in model.within)
    return NStepRepresentation(c.copy(), residual, model.expectations.copy())


def _lag_pair_counts(k: int, l: int, n: int) -> tuple[np.ndarray, int]:
    """Counts of index pairs (i <= k, j <= l) at each lag below n, plus the rest."""
    lags = np.arange(n)
    counts = np.zeros(n, dtype=np.int64)
    for lag in lags:
        if lag == 0:
            counts[0] = min(k, l)
        else:
            counts[lag] = max(0, min(k, l - lag)) + max(0, min(l, k - lag))
    return counts, k * l - int(counts.sum())


def running_mean_gram(model: NStepModel, m: int) -> np.ndarray:
    """Gram of the m-term arithmetic means of the collection.

    Exact from the lag structure; converges to the tail Gram as m grows.
    """
    return running_mean_cross_gram(model, m, m)


def running_mean_cross_gram(model: NStepModel, k: int, l: int) -> np.ndarray:
    """Gram between the k-term and l-term arithmetic means."""
    if k < 1 or l < 1:
        raise ValueError("mean lengths must be at least 1")
    counts, tail_count = _lag_pair_counts(k, l, model.n)
    total = np.zeros((model.q, model.q))
    for lag in range(model.n):
        if counts[lag]:
            total += counts[lag] * model.within[lag]
    total += tail_count * model.tail
    return total / (k * l)
