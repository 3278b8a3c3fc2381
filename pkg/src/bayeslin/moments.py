"""Symbolic expectation/covariance engine for quadratic residual structures.

Expressions are polynomials in zero-mean residual symbols (state and
observation residuals indexed by component and time) and in the elements of
their exchangeable decompositions: a mean matrix per kind plus a residual
matrix per kind and time.  Multiplication eagerly rewrites every same-kind
same-time residual pair into mean-plus-residual-matrix form, so canonical
monomials never contain such a pair and equal expressions share one
canonical representation.

Expectation reduces an expression to mean and residual second-moment
symbols; evaluation substitutes numbers for those symbols by index pattern.
All arithmetic is exact rational; floats appear only when the caller
renders results.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Protocol

import numpy as np

__all__ = [
    "Expr",
    "MomentDegreeError",
    "UnspecifiedMomentError",
    "state_residual",
    "obs_residual",
    "mean_element",
    "residual_element",
    "const",
    "expectation",
    "covariance",
    "evaluate",
    "render",
    "PatternMomentSpec",
    "TableMomentSpec",
    "lag_moment",
    "DlmGramConstants",
    "derive_dlm_gram",
    "one_step_product",
    "two_step_product",
]

STATE = "state"
OBS = "obs"
_KINDS = (STATE, OBS)


class MomentDegreeError(ValueError):
    """Residual degree above four is outside the quadratic-covariance calculus."""


class UnspecifiedMomentError(KeyError):
    """Evaluation hit an index pattern with no specified moment."""


def _fr(x) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, float):
        return Fraction(x).limit_denominator(10**12) if not x.is_integer() else Fraction(int(x))
    return Fraction(x)


def _idx_key(v):
    return (0, v) if isinstance(v, int) else (1, str(v))


def _sorted_pair(i, j):
    return (i, j) if _idx_key(i) <= _idx_key(j) else (j, i)


def _factor_key(f):
    tag = f[0]
    rest = tuple(
        _idx_key(x) if not isinstance(x, tuple) else tuple(_idx_key(y) for y in x) for x in f[1:]
    )
    return (tag, rest)


def _canon(factors) -> tuple:
    return tuple(sorted(factors, key=_factor_key))


class Expr:
    """Immutable rational-coefficient polynomial over moment symbols."""

    __slots__ = ("terms",)

    def __init__(self, terms: dict[tuple, Fraction] | None = None):
        clean = {}
        for mono, c in (terms or {}).items():
            if c != 0:
                clean[mono] = c
        self.terms = clean

    def __add__(self, other):
        other = _as_expr(other)
        out = dict(self.terms)
        for mono, c in other.terms.items():
            out[mono] = out.get(mono, Fraction(0)) + c
        return Expr(out)

    __radd__ = __add__

    def __neg__(self):
        return Expr({m: -c for m, c in self.terms.items()})

    def __sub__(self, other):
        return self + (-_as_expr(other))

    def __rsub__(self, other):
        return _as_expr(other) + (-self)

    def __mul__(self, other):
        other = _as_expr(other)
        out: dict[tuple, Fraction] = {}
        for m1, c1 in self.terms.items():
            for m2, c2 in other.terms.items():
                for mono, branch in _combine(m1, m2).items():
                    out[mono] = out.get(mono, Fraction(0)) + c1 * c2 * branch
        return Expr(out)

    __rmul__ = __mul__

    def __eq__(self, other):
        return isinstance(other, Expr) and self.terms == other.terms

    def __hash__(self):
        return hash(frozenset(self.terms.items()))

    def is_zero(self) -> bool:
        return not self.terms

    def __repr__(self):
        return f"Expr({render(self)})"


def _as_expr(x) -> Expr:
    if isinstance(x, Expr):
        return x
    return const(x)


def const(c) -> Expr:
    c = _fr(c)
    return Expr({(): c} if c != 0 else {})


def state_residual(i, t: int) -> Expr:
    return Expr({(("res", STATE, i, int(t)),): Fraction(1)})


def obs_residual(i, t: int) -> Expr:
    return Expr({(("res", OBS, i, int(t)),): Fraction(1)})


def mean_element(kind: str, i, j) -> Expr:
    if kind not in _KINDS:
        raise ValueError(f"kind must be one of {_KINDS}")
    i, j = _sorted_pair(i, j)
    return Expr({(("mean", kind, i, j),): Fraction(1)})


def residual_element(kind: str, i, j, t: int) -> Expr:
    if kind not in _KINDS:
        raise ValueError(f"kind must be one of {_KINDS}")
    i, j = _sorted_pair(i, j)
    return Expr({(("rmat", kind, i, j, int(t)),): Fraction(1)})


def _combine(m1: tuple, m2: tuple) -> dict[tuple, Fraction]:
    """Product of two canonical monomials with eager residual-pair rewriting."""
    factors = list(m1) + list(m2)
    if sum(1 for f in factors if f[0] == "res") > 4:
        raise MomentDegreeError("monomial residual degree above four")
    slots: dict[tuple, list[int]] = {}
    for pos, f in enumerate(factors):
        if f[0] == "res":
            slots.setdefault((f[1], f[3]), []).append(pos)
    pairs = []
    for (kind, t), positions in slots.items():
        if len(positions) > 2:
            # Each operand is pair-free, so at most one residual per slot
            # arrives from each side.
            raise MomentDegreeError("more than two residuals share one (kind, time) slot")
        if len(positions) == 2:
            i = factors[positions[0]][2]
            j = factors[positions[1]][2]
            pairs.append((positions, kind, t, _sorted_pair(i, j)))
    paired = {p for positions, *_ in pairs for p in positions}
    base = [f for pos, f in enumerate(factors) if pos not in paired]
    out: dict[tuple, Fraction] = {_canon(base): Fraction(1)}
    for _, kind, t, (i, j) in pairs:
        mean = ("mean", kind, i, j)
        rmat = ("rmat", kind, i, j, t)
        nxt: dict[tuple, Fraction] = {}
        for mono, c in out.items():
            for extra in (mean, rmat):
                key = _canon(mono + (extra,))
                nxt[key] = nxt.get(key, Fraction(0)) + c
        out = nxt
    return out


def expectation(expr: Expr) -> Expr:
    """Reduce to mean/residual second-moment symbols.

    Monomial rules: any surviving residual symbol kills the term (residual
    pairs were rewritten at multiplication time, so what remains is unpaired
    and has zero mean); single residual-matrix elements have zero mean;
    same-kind mean products stay as second-moment symbols; cross-kind mean
    products factorise; mean-by-residual-matrix and cross-time or cross-kind
    residual-matrix products vanish.
    """
    out: dict[tuple, Fraction] = {}

    def put(mono, c):
        out[mono] = out.get(mono, Fraction(0)) + c

    for mono, c in expr.terms.items():
        if any(f[0] == "res" for f in mono):
            continue
        means = [f for f in mono if f[0] == "mean"]
        rmats = [f for f in mono if f[0] == "rmat"]
        if any(f[0] in ("E1", "E2", "ES2") for f in mono):
            raise ValueError("expectation expects a residual-algebra expression")
        deg = len(means) + len(rmats)
        if deg == 0:
            put((), c)
        elif deg == 1:
            if means:
                _, kind, i, j = means[0]
                put((("E1", kind, i, j),), c)
            # a lone residual-matrix element has zero expectation
        elif deg == 2:
            if len(means) == 2:
                (_, k1, i1, j1), (_, k2, i2, j2) = means
                if k1 == k2:
                    pa, pb = sorted(((i1, j1), (i2, j2)), key=lambda p: tuple(map(_idx_key, p)))
                    put((("E2", k1, pa, pb),), c)
                else:
                    put(_canon((("E1", k1, i1, j1), ("E1", k2, i2, j2))), c)
            elif len(rmats) == 2:
                (_, k1, i1, j1, t1), (_, k2, i2, j2, t2) = rmats
                if k1 == k2 and t1 == t2:
                    pa, pb = sorted(((i1, j1), (i2, j2)), key=lambda p: tuple(map(_idx_key, p)))
                    put((("ES2", k1, pa, pb),), c)
                # different kinds or times are uncorrelated with zero means
            # one mean by one residual-matrix element vanishes (any kinds)
        else:
            raise MomentDegreeError("moment symbols of degree above two are not supported")
    return Expr(out)


def covariance(e1: Expr, e2: Expr) -> Expr:
    """expectation(e1 * e2) - expectation(e1) * expectation(e2), canonicalised."""
    return expectation(e1 * e2) - expectation(e1) * expectation(e2)


class MomentSpec(Protocol):
    """Numeric tables backing the evaluation of expectation symbols."""

    def mean_value(self, kind: str, i: int, j: int) -> Fraction: ...

    def mean_second_moment(
        self, kind: str, a: tuple[int, int], b: tuple[int, int]
    ) -> Fraction: ...

    def resmat_second_moment(
        self, kind: str, a: tuple[int, int], b: tuple[int, int]
    ) -> Fraction: ...


@dataclass(frozen=True)
class PatternMomentSpec:
    """Moment tables keyed by index pattern, exploiting exchangeable symmetry.

    Mean-product covariances are supplied for the matched-diagonal (iiii),
    matched off-diagonal (ijij) and distinct-diagonal (iijj) patterns;
    residual-matrix variances for the matched patterns.  Any other pattern
    is an error unless `zero_fill` is set, in which case missing covariances
    are taken as zero.
    """

    mean_diag: dict[str, Fraction]
    mean_off: dict[str, Fraction]
    cov_diag: dict[str, Fraction]
    cov_offmatch: dict[str, Fraction]
    cov_crossdiag: dict[str, Fraction]
    res_diag: dict[str, Fraction]
    res_offmatch: dict[str, Fraction]
    zero_fill: bool = False

    @classmethod
    def from_values(
        cls,
        *,
        state_mean=(0, 0),
        obs_mean=(0, 0),
        state_cov=(0, 0, 0),
        obs_cov=(0, 0, 0),
        state_res=(0, 0),
        obs_res=(0, 0),
        zero_fill: bool = False,
    ) -> "PatternMomentSpec":
        """Build from (diag, off[, crossdiag]) tuples per kind."""
        return cls(
            mean_diag={STATE: _fr(state_mean[0]), OBS: _fr(obs_mean[0])},
            mean_off={STATE: _fr(state_mean[1]), OBS: _fr(obs_mean[1])},
            cov_diag={STATE: _fr(state_cov[0]), OBS: _fr(obs_cov[0])},
            cov_offmatch={STATE: _fr(state_cov[1]), OBS: _fr(obs_cov[1])},
            cov_crossdiag={STATE: _fr(state_cov[2]), OBS: _fr(obs_cov[2])},
            res_diag={STATE: _fr(state_res[0]), OBS: _fr(obs_res[0])},
            res_offmatch={STATE: _fr(state_res[1]), OBS: _fr(obs_res[1])},
            zero_fill=zero_fill,
        )

    def mean_value(self, kind, i, j) -> Fraction:
        return self.mean_diag[kind] if i == j else self.mean_off[kind]

    def _cov(self, kind, a, b) -> Fraction:
        a, b = tuple(sorted(a)), tuple(sorted(b))
        if a == b:
            return self.cov_diag[kind] if a[0] == a[1] else self.cov_offmatch[kind]
        if a[0] == a[1] and b[0] == b[1]:
            return self.cov_crossdiag[kind]
        if self.zero_fill:
            return Fraction(0)
        raise UnspecifiedMomentError(f"no mean-product moment for {kind} pattern {a} x {b}")

    def mean_second_moment(self, kind, a, b) -> Fraction:
        cov = self._cov(kind, a, b)
        return cov + self.mean_value(kind, *a) * self.mean_value(kind, *b)

    def resmat_second_moment(self, kind, a, b) -> Fraction:
        a, b = tuple(sorted(a)), tuple(sorted(b))
        if a == b:
            return self.res_diag[kind] if a[0] == a[1] else self.res_offmatch[kind]
        if self.zero_fill:
            return Fraction(0)
        raise UnspecifiedMomentError(f"no residual-matrix moment for {kind} pattern {a} x {b}")


class TableMomentSpec:
    """Moment tables backed by explicit matrices over distinct coordinates."""

    def __init__(self, *, state_mean, obs_mean, state_cov, obs_cov, state_res, obs_res):
        self._mean = {STATE: np.asarray(state_mean, float), OBS: np.asarray(obs_mean, float)}
        self._cov = {STATE: np.asarray(state_cov, float), OBS: np.asarray(obs_cov, float)}
        self._res = {STATE: np.asarray(state_res, float), OBS: np.asarray(obs_res, float)}
        self._pairs = {}
        for kind in _KINDS:
            r = self._mean[kind].shape[0]
            pairs = [(i, j) for i in range(r) for j in range(i, r)]
            d = len(pairs)
            if self._cov[kind].shape != (d, d) or self._res[kind].shape != (d, d):
                raise ValueError(f"{kind} tables must be {d} x {d} for dimension {r}")
            self._pairs[kind] = {p: k for k, p in enumerate(pairs)}

    def _slot(self, kind, pair):
        key = tuple(sorted(pair))
        try:
            return self._pairs[kind][key]
        except KeyError:
            raise UnspecifiedMomentError(f"index pair {key} outside the {kind} tables") from None

    def mean_value(self, kind, i, j) -> Fraction:
        return _fr(float(self._mean[kind][i, j]))

    def mean_second_moment(self, kind, a, b) -> Fraction:
        cov = _fr(float(self._cov[kind][self._slot(kind, a), self._slot(kind, b)]))
        return cov + self.mean_value(kind, *a) * self.mean_value(kind, *b)

    def resmat_second_moment(self, kind, a, b) -> Fraction:
        return _fr(float(self._res[kind][self._slot(kind, a), self._slot(kind, b)]))


def evaluate(expr: Expr, spec: MomentSpec, assignment: dict | None = None) -> Fraction:
    """Exact numeric value of an expectation expression under a moment spec.

    `assignment` maps symbolic index labels to concrete integers; integer
    indices pass through unchanged.
    """
    assignment = assignment or {}

    def res_idx(v):
        if isinstance(v, int):
            return v
        try:
            return int(assignment[v])
        except KeyError:
            raise UnspecifiedMomentError(f"no assignment for index {v!r}") from None

    total = Fraction(0)
    for mono, c in expr.terms.items():
        val = c
        for f in mono:
            tag = f[0]
            if tag == "E1":
                _, kind, i, j = f
                val *= spec.mean_value(kind, res_idx(i), res_idx(j))
            elif tag == "E2":
                _, kind, a, b = f
                val *= spec.mean_second_moment(
                    kind, (res_idx(a[0]), res_idx(a[1])), (res_idx(b[0]), res_idx(b[1]))
                )
            elif tag == "ES2":
                _, kind, a, b = f
                val *= spec.resmat_second_moment(
                    kind, (res_idx(a[0]), res_idx(a[1])), (res_idx(b[0]), res_idx(b[1]))
                )
            else:
                raise ValueError(f"cannot evaluate residual-algebra symbol {f}")
        total += val
    return total


def _fmt_atom(f) -> str:
    tag = f[0]
    if tag == "res":
        sym = "w" if f[1] == STATE else "v"
        return f"{sym}({f[2]},{f[3]})"
    if tag == "mean":
        sym = "Vw" if f[1] == STATE else "Vv"
        return f"{sym}({f[2]},{f[3]})"
    if tag == "rmat":
        sym = "Sw" if f[1] == STATE else "Sv"
        return f"{sym}({f[2]},{f[3]};{f[4]})"
    if tag == "E1":
        sym = "Vw" if f[1] == STATE else "Vv"
        return f"E[{sym}({f[2]},{f[3]})]"
    if tag == "E2":
        sym = "Vw" if f[1] == STATE else "Vv"
        return f"E[{sym}({f[2][0]},{f[2][1]})*{sym}({f[3][0]},{f[3][1]})]"
    if tag == "ES2":
        sym = "Sw" if f[1] == STATE else "Sv"
        return f"E[{sym}({f[2][0]},{f[2][1]})*{sym}({f[3][0]},{f[3][1]})]"
    return repr(f)


def render(expr: Expr) -> str:
    """Deterministic text form of a canonical expression."""
    if not expr.terms:
        return "0"
    parts = []
    for mono in sorted(expr.terms, key=lambda m: tuple(_factor_key(f) for f in m)):
        c = expr.terms[mono]
        body = "*".join(_fmt_atom(f) for f in mono)
        if not body:
            parts.append(str(c))
        elif c == 1:
            parts.append(body)
        elif c == -1:
            parts.append(f"-{body}")
        else:
            parts.append(f"{c}*{body}")
    return " + ".join(parts).replace("+ -", "- ")


# ---------------------------------------------------------------------------
# Difference observables for the locally constant model and the derived
# matrix-level Gram constants.
# ---------------------------------------------------------------------------


def one_step_diff(i, t: int) -> Expr:
    """One-step difference entry for the identity-structure model."""
    return state_residual(i, t) + obs_residual(i, t) - obs_residual(i, t - 1)


def two_step_diff(i, t: int) -> Expr:
    states = state_residual(i, t) + state_residual(i, t - 1)
    return states + obs_residual(i, t) - obs_residual(i, t - 2)


def one_step_product(i, j, t: int) -> Expr:
    return one_step_diff(i, t) * one_step_diff(j, t)


def two_step_product(i, j, t: int) -> Expr:
    return two_step_diff(i, t) * two_step_diff(j, t)


_BASE_T = 10  # any time far enough from the sequence start
_J, _K, _L, _M = "j", "k", "l", "m"
_DIAG = {"j": 0, "k": 0, "l": 0, "m": 0}
_OFF = {"j": 0, "k": 1, "l": 0, "m": 1}

_PAIR_BUILDERS = {
    "vv": lambda lag: (mean_element(OBS, _J, _K), mean_element(OBS, _L, _M)),
    "ww": lambda lag: (mean_element(STATE, _J, _K), mean_element(STATE, _L, _M)),
    "wv": lambda lag: (mean_element(STATE, _J, _K), mean_element(OBS, _L, _M)),
    "w.x1x1": lambda lag: (mean_element(STATE, _J, _K), one_step_product(_L, _M, _BASE_T)),
    "v.x1x1": lambda lag: (mean_element(OBS, _J, _K), one_step_product(_L, _M, _BASE_T)),
    "w.x2x2": lambda lag: (mean_element(STATE, _J, _K), two_step_product(_L, _M, _BASE_T)),
    "v.x2x2": lambda lag: (mean_element(OBS, _J, _K), two_step_product(_L, _M, _BASE_T)),
    "x1x1.x1x1": lambda lag: (
        one_step_product(_J, _K, _BASE_T),
        one_step_product(_L, _M, _BASE_T - lag),
    ),
    "x2x2.x2x2": lambda lag: (
        two_step_product(_J, _K, _BASE_T),
        two_step_product(_L, _M, _BASE_T - lag),
    ),
    "x1x1.x2x2": lambda lag: (
        one_step_product(_J, _K, _BASE_T),
        two_step_product(_L, _M, _BASE_T + lag),
    ),
}


def lag_moment(spec: MomentSpec, pair: str, lag: int, pattern: str) -> Fraction:
    """Covariance between two quadratic observables at a given lag and pattern.

    `pair` names the two sides (see `_PAIR_BUILDERS`); for "x1x1.x2x2" the
    lag is the time of the two-step side minus the time of the one-step
    side.  `pattern` is "diag" (all component indices equal) or "offmatch"
    (the matched off-diagonal pattern).
    """
    e1, e2 = _PAIR_BUILDERS[pair](lag)
    expr = covariance(e1, e2)
    assignment = _DIAG if pattern == "diag" else _OFF
    return evaluate(expr, spec, assignment)


@dataclass(frozen=True)
class DlmGramConstants:
    """Matrix-level constant-adjusted Gram constants and expectation sums.

    Values are exact rationals; `table()` lists them under their customary
    C01..C20 / CCC1..CCC4 names.
    """

    r: int
    values: dict[str, Fraction]

    _ORDER = [
        ("C01", "(Vv, Vv)"),
        ("C02", "(Vw, Vw)"),
        ("C03", "(Vw, Vv)"),
        ("C04", "(X1X1', X1X1') lag 0"),
        ("C05", "(X1X1', X1X1') lag 1"),
        ("C06", "(X1X1', X1X1') lag >= 2"),
        ("C07", "(Vv, X1X1')"),
        ("C08", "(Vw, X1X1')"),
        ("C09", "(X2X2', X2X2') lag 0"),
        ("C10", "(X2X2', X2X2') lag 1"),
        ("C11", "(X2X2', X2X2') lag 2"),
        ("C12", "(X2X2', X2X2') lag >= 3"),
        ("C13", "(Vv, X2X2')"),
        ("C14", "(Vw, X2X2')"),
        ("C15", "(X1X1'_t, X2X2'_t)"),
        ("C16", "(X2X2'_t, X1X1'_{t-1})"),
        ("C17", "(X1X1'_t, X2X2'_{t-1})"),
        ("C18", "(X2X2'_t, X1X1'_{t-2})"),
        ("C19", "(X1X1'_t, X2X2'_{t-2})"),
        ("C20", "(X1X1'_t, X2X2'_{t-3})"),
        ("CCC1", "sum E(Vw)"),
        ("CCC2", "sum E(Vv)"),
        ("CCC3", "sum E(X1X1')"),
        ("CCC4", "sum E(X2X2')"),
    ]

    def table(self) -> list[tuple[str, str, Fraction]]:
        return [(name, desc, self.values[name]) for name, desc in self._ORDER]

    def __getitem__(self, name: str) -> Fraction:
        return self.values[name]


def derive_dlm_gram(spec: MomentSpec, r: int) -> DlmGramConstants:
    """Full-trace constant-adjusted Gram constants for the identity-structure model.

    Each structural covariance aggregates over component indices as
    r * (diagonal value) + r(r-1) * (matched off-diagonal value); the
    expectation sums aggregate the mean tables the same way.
    """

    def agg(pair, lag=0) -> Fraction:
        return r * lag_moment(spec, pair, lag, "diag") + r * (r - 1) * lag_moment(
            spec, pair, lag, "offmatch"
        )

    values: dict[str, Fraction] = {
        "C01": agg("vv"),
        "C02": agg("ww"),
        "C03": agg("wv"),
        "C04": agg("x1x1.x1x1", 0),
        "C05": agg("x1x1.x1x1", 1),
        "C06": agg("x1x1.x1x1", 2),
        "C07": agg("v.x1x1"),
        "C08": agg("w.x1x1"),
        "C09": agg("x2x2.x2x2", 0),
        "C10": agg("x2x2.x2x2", 1),
        "C11": agg("x2x2.x2x2", 2),
        "C12": agg("x2x2.x2x2", 3),
        "C13": agg("v.x2x2"),
        "C14": agg("w.x2x2"),
        "C15": agg("x1x1.x2x2", 0),
        "C16": agg("x1x1.x2x2", 1),
        "C17": agg("x1x1.x2x2", -1),
        "C18": agg("x1x1.x2x2", 2),
        "C19": agg("x1x1.x2x2", -2),
        "C20": agg("x1x1.x2x2", -3),
    }

    def mean_sum(kind) -> Fraction:
        return r * spec.mean_value(kind, 0, 0) + r * (r - 1) * spec.mean_value(kind, 0, 1)

    def product_mean_sum(builder) -> Fraction:
        diag = evaluate(expectation(builder(_J, _K, _BASE_T)), spec, _DIAG)
        off = evaluate(expectation(builder(_J, _K, _BASE_T)), spec, _OFF)
        return r * diag + r * (r - 1) * off

    values["CCC1"] = mean_sum(STATE)
    values["CCC2"] = mean_sum(OBS)
    values["CCC3"] = product_mean_sum(one_step_product)
    values["CCC4"] = product_mean_sum(two_step_product)
    return DlmGramConstants(r, values)
