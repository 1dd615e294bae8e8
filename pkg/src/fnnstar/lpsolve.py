"""Linear feasibility with exact Farkas certificates.

A :class:`LinearSystem` asks for ``x >= 0`` with ``A_eq x = b_eq`` and
``A_ineq x >= b_ineq``. Constraint matrices are integer (rows with rational
coefficients are scaled on construction); right-hand sides are ``Fraction``.

Infeasibility is proven by a :class:`FarkasCertificate` ``(y_eq, y_ineq)`` with
``y_ineq >= 0``, ``y_eq A_eq + y_ineq A_ineq <= 0`` componentwise and
``y_eq . b_eq + y_ineq . b_ineq > 0``. Every certificate and feasible point
handed out by :func:`feasibility` has been checked in exact arithmetic.

Two routes are available. ``method="exact"`` runs a dense phase-1 simplex over
``Fraction`` with Bland's rule. ``method="float"`` solves in double precision
with HiGHS, then rationalizes the answer and re-verifies it exactly; failed
rationalizations raise :class:`SolverError`. ``method="auto"`` uses the exact
simplex for small systems and the float route otherwise, falling back to the
exact simplex when rationalization fails.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog

log = logging.getLogger(__name__)

AUTO_EXACT_LIMIT = 40_000  # rows * columns handled by the exact simplex in auto mode
FLOAT_TOL = 1e-9


class DimensionError(ValueError):
    pass


class SolverError(RuntimeError):
    pass


def _as_fraction(v) -> Fraction:
    if isinstance(v, Fraction):
        return v
    if isinstance(v, (int, np.integer)):
        return Fraction(int(v))
    if isinstance(v, str):
        return Fraction(v)
    return Fraction(float(v))


def _empty(n: int) -> sp.csr_array:
    return sp.csr_array((0, n), dtype=np.int64)


@dataclass(frozen=True, eq=False)
class LinearSystem:
    A_eq: sp.csr_array
    b_eq: tuple[Fraction, ...]
    A_ineq: sp.csr_array
    b_ineq: tuple[Fraction, ...]
    columns: tuple = ()
    eq_labels: tuple = ()
    ineq_labels: tuple = ()

    def __post_init__(self):
        a_eq = sp.csr_array(self.A_eq, dtype=np.int64)
        a_in = sp.csr_array(self.A_ineq, dtype=np.int64)
        if a_eq.shape[1] != a_in.shape[1]:
            raise DimensionError("equality and inequality blocks have different column counts")
        if a_eq.shape[0] != len(self.b_eq) or a_in.shape[0] != len(self.b_ineq):
            raise DimensionError("right-hand side length does not match row count")
        if self.columns and len(self.columns) != a_eq.shape[1]:
            raise DimensionError("column labels do not match column count")
        a_eq.sort_indices()
        a_in.sort_indices()
        object.__setattr__(self, "A_eq", a_eq)
        object.__setattr__(self, "A_ineq", a_in)
        object.__setattr__(self, "b_eq", tuple(_as_fraction(v) for v in self.b_eq))
        object.__setattr__(self, "b_ineq", tuple(_as_fraction(v) for v in self.b_ineq))

    @property
    def n_vars(self) -> int:
        return self.A_eq.shape[1]

    @property
    def shape(self) -> tuple[int, int, int]:
        """(equality rows, inequality rows, variables)"""
        return self.A_eq.shape[0], self.A_ineq.shape[0], self.n_vars

    @classmethod
    def from_rows(cls, n_vars: int, eq: Iterable = (), ineq: Iterable = (), **labels) -> LinearSystem:
        """Build from ``(coefficients, rhs)`` pairs.

        ``coefficients`` is a dense sequence or a ``{column: value}`` mapping.
        Rows with non-integer coefficients are multiplied by the least common
        denominator, so certificates refer to the scaled rows.
        """
        def block(rows):
            data, ind, ptr, rhs = [], [], [0], []
            for coeffs, b in rows:
                items = coeffs.items() if isinstance(coeffs, dict) else enumerate(coeffs)
                items = sorted((int(j), _as_fraction(v)) for j, v in items if v != 0)
                if any(not 0 <= j < n_vars for j, _ in items):
                    raise DimensionError("column index out of range")
                scale = math.lcm(1, *(v.denominator for _, v in items))
                for j, v in items:
                    ind.append(j)
                    data.append(int(v * scale))
                ptr.append(len(ind))
                rhs.append(_as_fraction(b) * scale)
            mat = sp.csr_array((np.array(data, dtype=np.int64), np.array(ind, dtype=np.int64),
                                np.array(ptr, dtype=np.int64)), shape=(len(rhs), n_vars))
            return mat, rhs
        a_eq, b_eq = block(eq)
        a_in, b_in = block(ineq)
        return cls(a_eq, tuple(b_eq), a_in, tuple(b_in), **labels)

    def with_rhs(self, b_eq=None, b_ineq=None) -> LinearSystem:
        return LinearSystem(self.A_eq, self.b_eq if b_eq is None else tuple(b_eq),
                            self.A_ineq, self.b_ineq if b_ineq is None else tuple(b_ineq),
                            self.columns, self.eq_labels, self.ineq_labels)


@dataclass(frozen=True)
class FarkasCertificate:
    y_eq: tuple[Fraction, ...]
    y_ineq: tuple[Fraction, ...] = ()

    def integerized(self) -> FarkasCertificate:
        """Positive rescaling to coprime integers; validity is unchanged."""
        vals = self.y_eq + self.y_ineq
        den = math.lcm(1, *(v.denominator for v in vals))
        ints = [int(v * den) for v in vals]
        g = math.gcd(*ints) or 1
        ints = [Fraction(v // g) for v in ints]
        k = len(self.y_eq)
        return FarkasCertificate(tuple(ints[:k]), tuple(ints[k:]))

    def to_json(self) -> str:
        c = self.integerized()
        return json.dumps({"y_eq": [str(v.numerator) for v in c.y_eq],
                           "y_ineq": [str(v.numerator) for v in c.y_ineq]}, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> FarkasCertificate:
        data = json.loads(text)
        return cls(tuple(Fraction(int(v)) for v in data["y_eq"]),
                   tuple(Fraction(int(v)) for v in data.get("y_ineq", [])))


@dataclass(frozen=True)
class FeasibilityResult:
    feasible: bool
    point: tuple[Fraction, ...] | None = None
    certificate: FarkasCertificate | None = None
    method: str = ""
    info: dict = field(default_factory=dict)


# ------------------------------------------------------------ exact checks

def _rows(mat: sp.csr_array) -> list[list[tuple[int, int]]]:
    out = []
    for i in range(mat.shape[0]):
        lo, hi = mat.indptr[i], mat.indptr[i + 1]
        out.append(list(zip(mat.indices[lo:hi].tolist(), mat.data[lo:hi].tolist())))
    return out


def _common_denominator(vals: Sequence[Fraction]) -> tuple[int, list[int]]:
    den = math.lcm(1, *(v.denominator for v in vals))
    return den, [v.numerator * (den // v.denominator) for v in vals]


def certificate_slack(ls: LinearSystem, cert: FarkasCertificate) -> tuple[list[Fraction], Fraction]:
    """Return ``(y A, y . b)`` computed exactly."""
    if len(cert.y_eq) != ls.A_eq.shape[0] or len(cert.y_ineq) != ls.A_ineq.shape[0]:
        raise DimensionError("certificate length does not match the system")
    den, ints = _common_denominator(cert.y_eq + cert.y_ineq)
    acc = [0] * ls.n_vars
    k = 0
    for mat in (ls.A_eq, ls.A_ineq):
        ptr, idx, dat = mat.indptr, mat.indices.tolist(), mat.data.tolist()
        for i in range(mat.shape[0]):
            yi = ints[k]
            k += 1
            if yi:
                for p in range(ptr[i], ptr[i + 1]):
                    acc[idx[p]] += dat[p] * yi
    yb = sum(y * b for y, b in zip(cert.y_eq + cert.y_ineq, ls.b_eq + ls.b_ineq))
    return [Fraction(a, den) for a in acc], Fraction(yb)


def verify_certificate(ls: LinearSystem, cert: FarkasCertificate) -> bool:
    """Exact check of the Farkas conditions; no tolerance."""
    if any(v < 0 for v in cert.y_ineq):
        return False
    slack, yb = certificate_slack(ls, cert)
    return yb > 0 and all(s <= 0 for s in slack)


def check_point(ls: LinearSystem, x: Sequence[Fraction]) -> bool:
    """Exact check that ``x`` satisfies every constraint."""
    if len(x) != ls.n_vars or any(v < 0 for v in x):
        return False
    den, ints = _common_denominator(list(x))
    for mat, rhs, eq in ((ls.A_eq, ls.b_eq, True), (ls.A_ineq, ls.b_ineq, False)):
        ptr, idx, dat = mat.indptr, mat.indices.tolist(), mat.data.tolist()
        for i in range(mat.shape[0]):
            s = Fraction(sum(dat[p] * ints[idx[p]] for p in range(ptr[i], ptr[i + 1])), den)
            if (s != rhs[i]) if eq else (s < rhs[i]):
                return False
    return True


# ---------------------------------------------------------------- presolve

def _trivial_certificate(ls: LinearSystem) -> FarkasCertificate | None:
    """Certificate from a single empty (or sign-impossible) row, if one exists."""
    m_eq, m_in, _ = ls.shape
    for i in range(m_eq):
        lo, hi = ls.A_eq.indptr[i], ls.A_eq.indptr[i + 1]
        coeffs = ls.A_eq.data[lo:hi]
        b = ls.b_eq[i]
        if b > 0 and np.all(coeffs <= 0) or b < 0 and np.all(coeffs >= 0):
            y = [Fraction(0)] * m_eq
            y[i] = Fraction(1 if b > 0 else -1)
            return FarkasCertificate(tuple(y), (Fraction(0),) * m_in)
    for i in range(m_in):
        lo, hi = ls.A_ineq.indptr[i], ls.A_ineq.indptr[i + 1]
        if ls.b_ineq[i] > 0 and np.all(ls.A_ineq.data[lo:hi] <= 0):
            y = [Fraction(0)] * m_in
            y[i] = Fraction(1)
            return FarkasCertificate((Fraction(0),) * m_eq, tuple(y))
    return None


def _implied_ineq_rows(ls: LinearSystem) -> np.ndarray:
    """Inequality rows already implied by x >= 0 (nonnegative row, rhs <= 0)."""
    keep = np.ones(ls.A_ineq.shape[0], dtype=bool)
    for i in range(ls.A_ineq.shape[0]):
        lo, hi = ls.A_ineq.indptr[i], ls.A_ineq.indptr[i + 1]
        if ls.b_ineq[i] <= 0 and np.all(ls.A_ineq.data[lo:hi] >= 0):
            keep[i] = False
    return keep


# ------------------------------------------------------------ exact simplex

def _exact_simplex(ls: LinearSystem, max_iter: int) -> FeasibilityResult:
    """Phase-1 simplex over Fractions with Bland's rule (dense tableau)."""
    m_eq, m_in, n = ls.shape
    keep = _implied_ineq_rows(ls)
    ineq_idx = [i for i in range(m_in) if keep[i]]
    eq_rows = _rows(ls.A_eq)
    in_rows = _rows(ls.A_ineq)
    m2 = len(ineq_idx)
    m = m_eq + m2
    ncol = n + m2 + m  # originals, surplus, artificials
    tab: list[list[Fraction]] = []
    sign: list[int] = []
    for r in range(m):
        row = [Fraction(0)] * (ncol + 1)
        if r < m_eq:
            for j, a in eq_rows[r]:
                row[j] = Fraction(a)
            b = ls.b_eq[r]
        else:
            i = ineq_idx[r - m_eq]
            for j, a in in_rows[i]:
                row[j] = Fraction(a)
            row[n + r - m_eq] = Fraction(-1)
            b = ls.b_ineq[i]
        s = -1 if b < 0 else 1
        if s < 0:
            row = [-v for v in row]
            b = -b
        row[n + m2 + r] = Fraction(1)
        row[ncol] = b
        tab.append(row)
        sign.append(s)
    basis = [n + m2 + r for r in range(m)]
    cost = [Fraction(0)] * (ncol + 1)
    for r in range(m):
        for j in range(n + m2):
            cost[j] -= tab[r][j]
        cost[ncol] -= tab[r][ncol]
    it = 0
    while True:
        enter = next((j for j in range(ncol) if cost[j] < 0), None)
        if enter is None:
            break
        it += 1
        if it > max_iter:
            raise SolverError(f"exact simplex exceeded {max_iter} pivots")
        leave, best = None, None
        for r in range(m):
            a = tab[r][enter]
            if a > 0:
                ratio = tab[r][ncol] / a
                if best is None or ratio < best or ratio == best and basis[r] < basis[leave]:
                    leave, best = r, ratio
        if leave is None:
            raise SolverError("phase-1 objective unbounded (cannot happen for a valid tableau)")
        prow = tab[leave]
        piv = prow[enter]
        if piv != 1:
            prow = [v / piv for v in prow]
            tab[leave] = prow
        nz = [j for j, v in enumerate(prow) if v]
        for r in range(m):
            if r != leave:
                f = tab[r][enter]
                if f:
                    row = tab[r]
                    for j in nz:
                        row[j] -= f * prow[j]
        f = cost[enter]
        for j in nz:
            cost[j] -= f * prow[j]
        basis[leave] = enter
    w = -cost[ncol]
    info = {"pivots": it, "method": "exact"}
    if w == 0:
        x = [Fraction(0)] * n
        for r, j in enumerate(basis):
            if j < n:
                x[j] = tab[r][ncol]
        return FeasibilityResult(True, point=tuple(x), method="exact", info=info)
    u = [1 - cost[n + m2 + r] for r in range(m)]
    y_eq = tuple(sign[r] * u[r] for r in range(m_eq))
    y_in = [Fraction(0)] * m_in
    for k, i in enumerate(ineq_idx):
        y_in[i] = sign[m_eq + k] * u[m_eq + k]
    return FeasibilityResult(False, certificate=FarkasCertificate(y_eq, tuple(y_in)),
                             method="exact", info=info)


# ---------------------------------------------------------- float fast path

def _float_blocks(ls: LinearSystem, keep_ineq: np.ndarray):
    a_eq = ls.A_eq.astype(float)
    a_in = ls.A_ineq[keep_ineq].astype(float)
    b_eq = np.array([float(v) for v in ls.b_eq])
    b_in = np.array([float(v) for i, v in enumerate(ls.b_ineq) if keep_ineq[i]])
    return a_eq, b_eq, a_in, b_in


def _highs(method: str = "highs", **kw):
    return linprog(method=method, **kw)


def _rationalize(v: float, den: int) -> Fraction:
    if abs(v) < 1e-12:
        return Fraction(0)
    return Fraction(v).limit_denominator(den)


def _solve_support(ls: LinearSystem, support: Sequence[int], active_ineq: Sequence[int]):
    """Exact solution of the equality rows (and active inequalities) on ``support``.

    Sparse Gaussian elimination over Fractions; free columns are set to zero.
    Returns None when the restricted system is inconsistent.
    """
    pos = {j: k for k, j in enumerate(support)}
    rows = []
    for mat, rhs, which in ((ls.A_eq, ls.b_eq, range(ls.A_eq.shape[0])),
                            (ls.A_ineq, ls.b_ineq, active_ineq)):
        ptr, idx, dat = mat.indptr, mat.indices, mat.data
        for i in which:
            row = {}
            for p in range(ptr[i], ptr[i + 1]):
                j = int(idx[p])
                if j in pos:
                    row[pos[j]] = Fraction(int(dat[p]))
            rows.append((row, rhs[i]))
    pivots: dict[int, tuple[dict, Fraction]] = {}
    for row, b in rows:
        row = dict(row)
        while True:
            hits = [c for c in row if c in pivots]
            if not hits:
                break
            c = min(hits)
            f = row[c]
            prow, pb = pivots[c]
            for j, v in prow.items():
                nv = row.get(j, 0) - f * v
                if nv:
                    row[j] = nv
                else:
                    row.pop(j, None)
            b = b - f * pb
        if not row:
            if b != 0:
                return None
            continue
        c = min(row)
        f = row[c]
        pivots[c] = ({j: v / f for j, v in row.items()}, b / f)
    x = [Fraction(0)] * len(support)
    for c in sorted(pivots, reverse=True):
        prow, pb = pivots[c]
        x[c] = pb - sum(v * x[j] for j, v in prow.items() if j != c)
    return x


def _restricted_rows(ls: LinearSystem, support: Sequence[int], active_ineq: Sequence[int]):
    """Integer rows of the equalities and active inequalities restricted to ``support``."""
    pos = {j: k for k, j in enumerate(support)}
    rows, rhs = [], []
    for mat, b, which in ((ls.A_eq, ls.b_eq, range(ls.A_eq.shape[0])), (ls.A_ineq, ls.b_ineq, active_ineq)):
        ptr, idx, dat = mat.indptr, mat.indices, mat.data
        for i in which:
            rows.append([(pos[int(idx[p])], int(dat[p])) for p in range(ptr[i], ptr[i + 1])
                         if int(idx[p]) in pos])
            rhs.append(b[i])
    return rows, rhs


def _refine_support(ls: LinearSystem, support: Sequence[int], active_ineq: Sequence[int],
                    xf: np.ndarray, max_iter: int = 60) -> list[Fraction] | None:
    """Exact solution on ``support`` by iterative refinement and rational reconstruction.

    ``x = X / 2^K`` is kept as integers; each step computes the residual
    exactly, corrects with a float least-squares solve (normal equations,
    factored once) and stops when the residual vanishes or stalls. The
    fixed-point values are then reconstructed as fractions with denominators
    below ``2^(K/2)``. Requires the support columns to be independent.
    """
    rows, rhs = _restricted_rows(ls, support, active_ineq)
    k = len(support)
    den = math.lcm(1, *(v.denominator for v in rhs))
    bits = 2 * den.bit_length() + 192
    scale = 1 << bits
    b_int = [int(v * den) * scale for v in rhs]  # D Q b
    r_idx = np.concatenate([[0], np.cumsum([len(r) for r in rows])]).astype(np.int64)
    cols = np.array([c for r in rows for c, _ in r], dtype=np.int64)
    vals = np.array([v for r in rows for _, v in r], dtype=float)
    m = sp.csr_array((vals, cols, r_idx), shape=(len(rows), k))
    gram = (m.T @ m).toarray()
    try:
        from scipy.linalg import cho_factor, cho_solve
        fac = cho_factor(gram)
    except np.linalg.LinAlgError:
        return None
    x = [int(round(v * 2 ** 60)) << (bits - 60) for v in xf[list(support)]]
    dq = den * scale
    for _ in range(max_iter):
        res = [bq - den * sum(v * x[c] for c, v in r) for r, bq in zip(rows, b_int)]
        if not any(res):
            break
        rf = np.array([q / dq for q in res])
        delta = cho_solve(fac, m.T @ rf)
        top = float(np.abs(delta).max())
        if top == 0.0:
            break
        _, e = math.frexp(top)
        shift = bits - 60 + e
        if shift < 0:
            break
        x = [xi + (int(round(math.ldexp(d, 60 - e))) << shift) for xi, d in zip(x, delta)]
    limit = 1 << ((bits - 2) // 2)
    return [Fraction(xi, scale).limit_denominator(limit) for xi in x]


def _exact_point_from_float(ls: LinearSystem, xf: np.ndarray) -> tuple[Fraction, ...] | None:
    for den in (10 ** 3, 10 ** 6):
        x = tuple(_rationalize(max(v, 0.0), den) for v in xf)
        if check_point(ls, x):
            return x
    support = [j for j, v in enumerate(xf) if v > FLOAT_TOL]
    active = []
    if ls.A_ineq.shape[0]:
        lhs = ls.A_ineq.astype(float) @ xf
        active = [i for i in range(ls.A_ineq.shape[0])
                  if abs(lhs[i] - float(ls.b_ineq[i])) <= 1e-7 and ls.A_ineq.indptr[i + 1] > ls.A_ineq.indptr[i]]
    for solver in (_refine_support, _solve_support):
        sol = (solver(ls, support, active, xf) if solver is _refine_support
               else solver(ls, support, active))
        if sol is None:
            continue
        x = [Fraction(0)] * ls.n_vars
        for k, j in enumerate(support):
            x[j] = sol[k]
        x = tuple(x)
        if check_point(ls, x):
            return x
        log.debug("%s did not give an exact point", solver.__name__)
    return None


def _repair_certificate(ls: LinearSystem, cert: FarkasCertificate) -> FarkasCertificate:
    """Push ``y A`` below zero by lowering multipliers of positive, positive-rhs rows.

    Rows whose coefficients are all positive (normalization rows) can absorb
    small positive entries of ``y A`` left by rounding, at a cost of
    ``delta * b_r`` in ``y . b``.
    """
    slack, _ = certificate_slack(ls, cert)
    bad = [j for j, s in enumerate(slack) if s > 0]
    if not bad:
        return cert
    cover: dict[int, int] = {}
    a = ls.A_eq
    for i in range(a.shape[0]):
        lo, hi = a.indptr[i], a.indptr[i + 1]
        if hi > lo and ls.b_eq[i] > 0 and np.all(a.data[lo:hi] > 0):
            for j in a.indices[lo:hi].tolist():
                cover.setdefault(j, i)
    delta: dict[int, Fraction] = {}
    for j in bad:
        if j not in cover:
            return cert
        i = cover[j]
        lo, hi = a.indptr[i], a.indptr[i + 1]
        coef = int(a.data[lo:hi][np.searchsorted(a.indices[lo:hi], j)])
        delta[i] = max(delta.get(i, Fraction(0)), slack[j] / coef)
    y = list(cert.y_eq)
    for i, d in delta.items():
        y[i] -= d
    return FarkasCertificate(tuple(y), cert.y_ineq)


def _certificate_from_float(ls: LinearSystem, keep_ineq: np.ndarray, reference=None) -> FarkasCertificate | None:
    """Solve the alternative system in floats, then rationalize and repair."""
    a_eq, b_eq, a_in, b_in = _float_blocks(ls, keep_ineq)
    m_eq, m_in = a_eq.shape[0], a_in.shape[0]
    at = sp.hstack([a_eq.T, a_in.T]).tocsr()
    b = np.concatenate([b_eq, b_in])
    attempts = []
    if reference is not None:
        ref_eq, ref_in = reference
        ref = np.concatenate([np.array([float(v) for v in ref_eq]),
                              np.array([float(v) for i, v in enumerate(ref_in) if keep_ineq[i]])])
        bounds = [(None, None)] * m_eq + [(0, None)] * m_in
        attempts.append(dict(A_eq=ref[None, :], b_eq=[-0.5], bounds=bounds))
    attempts.append(dict(bounds=[(-1, 1)] * m_eq + [(0, 1)] * m_in))
    for extra in attempts:
        res = _highs(c=-b, A_ub=at, b_ub=np.zeros(ls.n_vars), **extra)
        if res.status != 0 or -res.fun <= FLOAT_TOL:
            continue
        yf = res.x
        for den in (10 ** 3, 10 ** 6, 10 ** 9):
            y_eq = tuple(_rationalize(v, den) for v in yf[:m_eq])
            y_in_kept = iter(max(Fraction(0), _rationalize(v, den)) for v in yf[m_eq:])
            y_in = tuple(next(y_in_kept) if keep_ineq[i] else Fraction(0) for i in range(len(keep_ineq)))
            cert = _repair_certificate(ls, FarkasCertificate(y_eq, y_in))
            if verify_certificate(ls, cert):
                return cert
    return None


def _float_route(ls: LinearSystem, reference=None) -> FeasibilityResult:
    keep = _implied_ineq_rows(ls)
    a_eq, b_eq, a_in, b_in = _float_blocks(ls, keep)
    kw = {}
    if a_eq.shape[0]:
        kw.update(A_eq=a_eq, b_eq=b_eq)
    if a_in.shape[0]:
        kw.update(A_ub=-a_in, b_ub=-b_in)
    res = _highs("highs-ds", c=np.zeros(ls.n_vars), bounds=(0, None), **kw)
    info = {"method": "float", "highs_status": int(res.status)}
    if res.status == 0:
        x = _exact_point_from_float(ls, res.x)
        if x is None:
            raise SolverError("float solution could not be made exact")
        return FeasibilityResult(True, point=x, method="float", info=info)
    if res.status == 2:
        cert = _certificate_from_float(ls, keep, reference)
        if cert is None:
            raise SolverError("float infeasibility could not be turned into an exact certificate")
        return FeasibilityResult(False, certificate=cert, method="float", info=info)
    raise SolverError(f"HiGHS failed: {res.message}")


def feasibility(ls: LinearSystem, method: str = "auto", reference=None,
                max_iter: int = 1_000_000) -> FeasibilityResult:
    """Decide feasibility of ``ls`` with an exactly verified witness either way.

    Parameters
    ----------
    method : "auto", "exact" or "float".
    reference : optional ``(b_eq, b_ineq)`` of a right-hand side known to be
        feasible. The float route then prefers the certificate maximizing
        ``y . b`` subject to ``y . b_ref = -1/2``, i.e. the one that separates
        ``b`` from the reference by the widest margin.
    """
    if method not in ("auto", "exact", "float"):
        raise ValueError(f"unknown method {method!r}")
    trivial = _trivial_certificate(ls)
    if trivial is not None:
        return FeasibilityResult(False, certificate=trivial, method="presolve")
    m_eq, m_in, n = ls.shape
    if method == "exact" or method == "auto" and (m_eq + m_in) * n <= AUTO_EXACT_LIMIT:
        res = _exact_simplex(ls, max_iter)
    elif method == "float":
        res = _float_route(ls, reference)
    else:
        try:
            res = _float_route(ls, reference)
        except SolverError as exc:
            log.warning("float route failed (%s); falling back to exact simplex", exc)
            res = _exact_simplex(ls, max_iter)
    if res.feasible:
        assert check_point(ls, res.point)
    else:
        assert verify_certificate(ls, res.certificate)
    return res


# ------------------------------------------------------------------ export

def _fmt(v: Fraction) -> str:
    return str(v.numerator) if v.denominator == 1 else f"{v.numerator}/{v.denominator}"


def write_lp(ls: LinearSystem, fh) -> None:
    """Write ``ls`` in CPLEX LP layout with coefficients as exact rationals ``p/q``."""
    fh.write("\\ feasibility problem; coefficients are exact rationals\n")
    fh.write("Minimize\n obj: 0 x0\nSubject To\n")
    for tag, mat, rhs, op in (("e", ls.A_eq, ls.b_eq, "="), ("g", ls.A_ineq, ls.b_ineq, ">=")):
        for i in range(mat.shape[0]):
            lo, hi = mat.indptr[i], mat.indptr[i + 1]
            terms = []
            for j, a in zip(mat.indices[lo:hi], mat.data[lo:hi]):
                terms.append(f"{'-' if a < 0 else '+'} {abs(int(a))} x{int(j)}")
            body = " ".join(terms) if terms else "0 x0"
            fh.write(f" {tag}{i}: {body} {op} {_fmt(rhs[i])}\n")
    fh.write("Bounds\n")
    for j in range(ls.n_vars):
        fh.write(f" x{j} >= 0\n")
    fh.write("End\n")
