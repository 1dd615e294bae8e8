"""Hybrid inflation of the three-branch star and the FNN certification driver.

One source is assumed classical. Its hidden variable can be copied, so the
inflated network has three copies ``A11, A12, A13`` of the branch party it
feeds, each with its own input, next to the untouched ``A2, A3`` and ``B``.
Internally the suspected classical source always feeds branch 1: placement
``k`` relabels the branch parties cyclically as ``(A_k, A_k+1, A_k+2)``.

LP columns are ``p_inf(a11, a12, a13, a2, a3, b | x11, x12, x13, x2, x3)``,
indexed ``64 * setting + outcome`` with both tuples read as binary numbers
(first entry most significant). Constraints:

* positivity (2048 inequality rows) and normalization (32 rows);
* no-signaling: for each of the five input-carrying parties, each setting of
  the other inputs and each outcome of the other parties, the marginal does
  not depend on that party's input;
* invariance under the 5 nontrivial permutations of the three copies;
* marginals: summing out ``a12, a13`` reproduces ``p(a1, a2, a3, b | x11, x2, x3)``
  for every value of the spectator inputs ``x12, x13``.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Iterator

import numpy as np
import scipy.sparse as sp

from . import lpsolve
from .dist import ConditionalDistribution, DomainError, ScenarioError, star_scenario, validate
from .lpsolve import FarkasCertificate, FeasibilityResult, LinearSystem

log = logging.getLogger(__name__)

N_OUT = 6  # a11 a12 a13 a2 a3 b
N_IN = 5  # x11 x12 x13 x2 x3
N_VARS = 2 ** (N_OUT + N_IN)
COPY_PERMUTATIONS = ((1, 0, 2), (2, 1, 0), (0, 2, 1), (1, 2, 0), (2, 0, 1))
DEFAULT_DENOMINATOR = 10 ** 6
EXACT_TOL = 1e-13  # float correlators this close to a small-denominator fraction are taken as exact

_BRANCHES = ("A1", "A2", "A3")


def placement_order(classical_source: int) -> tuple[str, str, str, str]:
    """Party order that moves the branch of ``classical_source`` to position 1."""
    if classical_source not in (1, 2, 3):
        raise DomainError(f"classical source must be 1, 2 or 3, got {classical_source}")
    k = classical_source - 1
    return tuple(_BRANCHES[(k + i) % 3] for i in range(3)) + ("B",)


def column(outcomes, settings) -> int:
    """LP column of ``(a11, a12, a13, a2, a3, b | x11, x12, x13, x2, x3)``."""
    ai = 0
    for v in outcomes:
        ai = 2 * ai + int(v)
    xi = 0
    for v in settings:
        xi = 2 * xi + int(v)
    return 64 * xi + ai


def column_label(j: int) -> str:
    xi, ai = divmod(j, 64)
    return f"p({ai:06b}|{xi:05b})"


@dataclass(frozen=True)
class _Template:
    A_eq: sp.csr_array
    kinds: dict  # row kind -> (start, stop)
    marginal_keys: np.ndarray  # (512, 9): x11 x12 x13 x2 x3 a1 a2 a3 b per marginal row


@lru_cache(maxsize=1)
def _template() -> _Template:
    """Constraint matrix shared by all placements (vectorized assembly)."""
    bits_a = np.array(list(itertools.product((0, 1), repeat=N_OUT)))  # (64, 6)
    bits_x = np.array(list(itertools.product((0, 1), repeat=N_IN)))  # (32, 5)
    wa = 2 ** np.arange(N_OUT - 1, -1, -1)
    wx = 2 ** np.arange(N_IN - 1, -1, -1)

    def col(a, x):
        return 64 * (x @ wx) + a @ wa

    rows, cols, vals = [], [], []
    kinds = {}
    n = 0

    def add(r, c, v, kind):
        nonlocal n
        rows.append(r.ravel() + n)
        cols.append(c.ravel())
        vals.append(np.broadcast_to(v, c.shape).ravel())
        m = int(r.max()) + 1
        kinds[kind] = (n, n + m)
        n += m

    # normalization: one row per setting
    r = np.repeat(np.arange(32), 64)
    c = (64 * np.arange(32)[:, None] + np.arange(64)[None, :]).ravel()
    add(r, c, 1, "normalization")

    # no-signaling
    for party in range(N_IN):
        xo = np.array(list(itertools.product((0, 1), repeat=N_IN - 1)))
        ao = np.array(list(itertools.product((0, 1), repeat=N_OUT - 1)))
        r_list, c_list, v_list = [], [], []
        row = 0
        for xi, xrest in enumerate(xo):
            for ai, arest in enumerate(ao):
                for xv, sgn in ((0, 1), (1, -1)):
                    x = np.insert(xrest, party, xv)
                    for av in (0, 1):
                        a = np.insert(arest, party, av)
                        r_list.append(row)
                        c_list.append(col(a, x))
                        v_list.append(sgn)
                row += 1
        add(np.array(r_list), np.array(c_list), np.array(v_list), f"no_signaling_{party}")

    # copy-permutation symmetry
    grid_a = np.repeat(bits_a[None, :, :], 32, axis=0)  # (32, 64, 6)
    grid_x = np.repeat(bits_x[:, None, :], 64, axis=1)  # (32, 64, 5)
    j = col(grid_a, grid_x).ravel()
    for pi in COPY_PERMUTATIONS:
        perm_a = np.concatenate([grid_a[..., list(pi)], grid_a[..., 3:]], axis=-1)
        perm_x = np.concatenate([grid_x[..., list(pi)], grid_x[..., 3:]], axis=-1)
        k = col(perm_a, perm_x).ravel()
        keep = j != k
        m = int(keep.sum())
        r = np.repeat(np.arange(m), 2)
        c = np.stack([j[keep], k[keep]], axis=1).ravel()
        v = np.tile([1, -1], m)
        add(r, c, v, f"symmetry_{''.join(map(str, pi))}")

    # marginals: rows indexed by (x11, x12, x13, x2, x3, a1, a2, a3, b)
    keys = np.array(list(itertools.product((0, 1), repeat=N_IN + 4)))  # (512, 9)
    r_list, c_list = [], []
    for row, key in enumerate(keys):
        x = key[:5]
        a1, a2, a3, b = key[5:]
        for u, w in itertools.product((0, 1), repeat=2):
            r_list.append(row)
            c_list.append(col(np.array([a1, u, w, a2, a3, b]), x))
    add(np.array(r_list), np.array(c_list), 1, "marginal")

    a_eq = sp.csr_array((np.concatenate(vals).astype(np.int64),
                         (np.concatenate(rows), np.concatenate(cols))), shape=(n, N_VARS))
    a_eq.sum_duplicates()
    a_eq.eliminate_zeros()
    return _Template(a_eq, kinds, keys)


# ------------------------------------------------------------ rationals

def _subset_signs(n: int) -> np.ndarray:
    """``(-1)^{a.S}`` as an array indexed ``[S, a]`` over binary tuples."""
    subsets = np.array(list(itertools.product((0, 1), repeat=n)))
    return (-1) ** (subsets @ subsets.T % 2)


def _to_fraction(v: float, bound: int) -> Fraction:
    f = Fraction(v).limit_denominator(bound)
    if abs(float(f) - v) <= EXACT_TOL:
        return f
    return Fraction(round(v * bound), bound)


def rationalize(d: ConditionalDistribution, denominator_bound: int = DEFAULT_DENOMINATOR) -> np.ndarray:
    """Exact no-signaling rational approximation of a star distribution.

    Every correlator ``<S>`` is projected to depend only on the inputs of
    ``S`` (absent inputs averaged) and mapped to a fraction with denominator
    at most ``denominator_bound``: the continued-fraction approximation when
    it reproduces the float (genuinely rational data), otherwise the nearest
    multiple of ``1 / denominator_bound``. The shared grid keeps the exact
    right-hand side on one small lattice, which keeps exact feasible points
    cheap to recover. The result is an object array of ``Fraction`` in table
    layout, exactly normalized and no-signaling.
    """
    sc = d.scenario
    if sc != star_scenario():
        raise ScenarioError("rationalize expects the star scenario")
    n = sc.n
    h = _subset_signs(n)
    t = np.asarray(d.table).reshape(2, 2, 2, 16)  # B has a single input
    corr = np.einsum("xyzo,so->xyzs", t, h)  # correlators per setting and subset
    subsets = np.array(list(itertools.product((0, 1), repeat=n)))
    out = np.empty((2, 2, 2, 16), dtype=object)
    for s_idx, s in enumerate(subsets):
        c = corr[..., s_idx]
        for ax in range(3):
            if not s[ax]:
                c = np.repeat(c.mean(axis=ax, keepdims=True), 2, axis=ax)
        corr[..., s_idx] = c
    for x in itertools.product((0, 1), repeat=3):
        cs = [_to_fraction(float(v), denominator_bound) for v in corr[x]]
        cs[0] = Fraction(1)
        for o in range(16):
            out[x + (o,)] = sum((c if h[s, o] > 0 else -c) for s, c in enumerate(cs)) / 16
    if min(out.ravel()) < 0:
        raise DomainError("rationalized table has negative entries; increase the denominator bound")
    return out.reshape(sc.shape)


def white_noise_table() -> np.ndarray:
    """Exact table of the star with fully depolarized sources (``p(b=0) = 1/8``)."""
    sc = star_scenario()
    out = np.empty(sc.shape, dtype=object)
    for idx in np.ndindex(*sc.shape):
        out[idx] = Fraction(1, 8) * (Fraction(1, 8) if idx[-1] == 0 else Fraction(7, 8))
    return out


def exact_table(d: ConditionalDistribution) -> np.ndarray:
    """Entries of ``d`` as Fractions (exact binary values of the floats)."""
    out = np.empty(d.table.shape, dtype=object)
    for idx, v in np.ndenumerate(d.table):
        out[idx] = Fraction(float(v))
    return out


# -------------------------------------------------------------- problem

@dataclass(frozen=True, eq=False)
class InflationProblem:
    """The inflation LP of one classical-source placement for one target table.

    ``marginal_rows`` pairs each marginal row with the entry of the
    *original* (unrelabeled) table on its right-hand side.
    """

    classical_source: int
    system: LinearSystem
    target: np.ndarray  # Fraction table in the original labeling
    marginal_rows: tuple[tuple[int, tuple[int, ...]], ...] = field(repr=False)
    row_kinds: dict = field(repr=False, default_factory=dict)

    @property
    def order(self) -> tuple[str, ...]:
        return placement_order(self.classical_source)

    @property
    def copy_count(self) -> int:
        return 3

    def with_target(self, table: np.ndarray) -> InflationProblem:
        """Same constraint matrix, right-hand side taken from another exact table."""
        b = list(self.system.b_eq)
        for row, key in self.marginal_rows:
            b[row] = Fraction(table[key])
        return InflationProblem(self.classical_source, self.system.with_rhs(b_eq=b), table,
                                self.marginal_rows, self.row_kinds)


def _marginal_rows(classical_source: int, start: int) -> tuple:
    order = placement_order(classical_source)
    pos = [_BRANCHES.index(p) for p in order[:3]]  # relabeled slot -> original branch index
    out = []
    for i, key in enumerate(_template().marginal_keys):
        x11, _, _, x2, x3, a1, a2, a3, b = (int(v) for v in key)
        xs, as_ = [0, 0, 0], [0, 0, 0]
        for slot, (xv, av) in enumerate(((x11, a1), (x2, a2), (x3, a3))):
            xs[pos[slot]] = xv
            as_[pos[slot]] = av
        out.append((start + i, tuple(xs) + (0,) + tuple(as_) + (b,)))
    return tuple(out)


def inflation_problem(d: ConditionalDistribution | np.ndarray, classical_source: int,
                      denominator_bound: int = DEFAULT_DENOMINATOR) -> InflationProblem:
    """Compile the LP for ``d`` (a distribution, or an exact Fraction table)."""
    if isinstance(d, ConditionalDistribution):
        if d.scenario != star_scenario():
            raise ScenarioError("inflation is defined for the star scenario")
        if not validate(d).valid:
            raise DomainError("distribution fails validation; refusing to build the inflation LP")
        table = rationalize(d, denominator_bound)
    else:
        table = np.asarray(d, dtype=object)
        if table.shape != star_scenario().shape:
            raise ScenarioError("exact table has the wrong shape")
    tpl = _template()
    start, stop = tpl.kinds["marginal"]
    rows = _marginal_rows(classical_source, start)
    b_eq = [Fraction(0)] * tpl.A_eq.shape[0]
    n0, n1 = tpl.kinds["normalization"]
    for r in range(n0, n1):
        b_eq[r] = Fraction(1)
    for row, key in rows:
        b_eq[row] = Fraction(table[key])
    a_in = sp.identity(N_VARS, dtype=np.int64, format="csr")
    ls = LinearSystem(tpl.A_eq, tuple(b_eq), sp.csr_array(a_in), (Fraction(0),) * N_VARS,
                      columns=tuple(column_label(j) for j in range(N_VARS)))
    return InflationProblem(classical_source, ls, table, rows, dict(tpl.kinds))


def build_inflation_lp(d: ConditionalDistribution, classical_source: int,
                       denominator_bound: int = DEFAULT_DENOMINATOR) -> LinearSystem:
    """Feasibility system whose solvability is necessary for a classical ``classical_source``."""
    return inflation_problem(d, classical_source, denominator_bound).system


def white_noise_reference(problem: InflationProblem) -> tuple:
    """Right-hand side of the white-noise star for the same placement (always feasible)."""
    ls = problem.with_target(white_noise_table()).system
    return ls.b_eq, ls.b_ineq


# --------------------------------------------------------- certification

@dataclass(frozen=True)
class PlacementResult:
    classical_source: int
    feasible: bool
    certificate: FarkasCertificate | None
    result: FeasibilityResult = field(repr=False)
    problem: InflationProblem = field(repr=False)


@dataclass(frozen=True)
class FnnReport:
    placements: tuple[PlacementResult, ...]

    @property
    def fnn(self) -> bool:
        """True when no source admits a classical description (every placement infeasible)."""
        return len(self.placements) == 3 and all(not p.feasible for p in self.placements)


def solve_placement(problem: InflationProblem, method: str = "auto") -> PlacementResult:
    try:
        res = lpsolve.feasibility(problem.system, method=method, reference=white_noise_reference(problem))
    except lpsolve.SolverError as exc:
        raise lpsolve.SolverError(f"placement {problem.classical_source}: {exc}") from exc
    return PlacementResult(problem.classical_source, res.feasible, res.certificate, res, problem)


def certify_fnn(d: ConditionalDistribution, method: str = "auto",
                denominator_bound: int = DEFAULT_DENOMINATOR, placements=(1, 2, 3)) -> FnnReport:
    """Solve the inflation LP for every classical-source placement."""
    out = []
    for k in placements:
        res = solve_placement(inflation_problem(d, k, denominator_bound), method)
        log.info("placement %d: %s", k, "feasible" if res.feasible else "infeasible")
        out.append(res)
    return FnnReport(tuple(out))


# ---------------------------------------------- classical and hybrid models

def deterministic_strategies() -> Iterator[tuple[tuple, ConditionalDistribution]]:
    """All 128 deterministic star strategies: a response x -> a per branch, and a fixed b."""
    sc = star_scenario()
    funcs = list(itertools.product((0, 1), repeat=2))  # (f(0), f(1))
    for f1, f2, f3 in itertools.product(funcs, repeat=3):
        for b in (0, 1):
            table = np.zeros(sc.shape)
            for x in itertools.product((0, 1), repeat=3):
                table[x + (0, f1[x[0]], f2[x[1]], f3[x[2]], b)] = 1.0
            yield (f1, f2, f3, b), ConditionalDistribution(sc, table)


@dataclass(frozen=True, eq=False)
class HybridModel:
    """Classical source at ``classical_source``, arbitrary resources elsewhere.

    ``weights[l]`` is ``p(lambda)``; ``response[l, x, a]`` the classical
    branch's ``p(a | x, lambda)``; ``rest[l, y, z, c, e, b]`` the other two
    branches (in placement order) and the centre, ``p_lambda(c, e, b | y, z)``.
    Arrays hold floats or Fractions.
    """

    classical_source: int
    weights: np.ndarray
    response: np.ndarray
    rest: np.ndarray

    def _combine(self) -> np.ndarray:
        # relabeled table [x1, x2, x3, a1, a2, a3, b]
        return np.einsum("l,lpa,lqrcdb->pqracdb", self.weights, self.response, self.rest)

    def table(self) -> np.ndarray:
        """Table in the original labeling, shape (2, 2, 2, 1, 2, 2, 2, 2)."""
        rel = self._combine()
        pos = [_BRANCHES.index(p) for p in placement_order(self.classical_source)[:3]]
        inv = [pos.index(q) for q in range(3)]
        out = rel.transpose(inv + [3 + i for i in inv] + [6])
        return out[:, :, :, None]

    def distribution(self) -> ConditionalDistribution:
        return ConditionalDistribution(star_scenario(), self.table().astype(float))

    def inflation_point(self) -> np.ndarray:
        """Explicit ``p_inf`` (LP column order): every copy reads the same hidden variable."""
        r, q, w = self.response, self.rest, self.weights
        full = np.einsum("l,lpa,lsu,ltv,lyzceb->pstyzauvceb", w, r, r, r, q)
        return full.reshape(32, 64).ravel()


def _haar_unitary(rng: np.random.Generator, n: int) -> np.ndarray:
    z = (rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    return q * (np.diag(r) / np.abs(np.diag(r)))


def sample_hybrid_model(rng: np.random.Generator, classical_source: int, kind: str = "quantum",
                        n_lambda: int | None = None, theta=(-1.865, -0.415)) -> HybridModel:
    """Random member of the hybrid model class with at most 8 hidden-variable values.

    ``kind="quantum"``: the two other sources emit phi+ pairs measured with
    the branch observables at ``theta``, and the centre applies a random
    two-outcome projective measurement on its two qubits chosen by lambda.
    ``kind="rational"``: exact Fraction weights; the remaining parties share
    a mixture of a PR-type box ``b = a2 + a3 + x2 x3 (mod 2)`` and
    deterministic boxes, all chosen by lambda.
    """
    from .qsim import branch_observable, make_entangled_pair, outcome_projector, kron

    placement_order(classical_source)
    n = int(n_lambda or rng.integers(1, 9))
    if not 1 <= n <= 8:
        raise DomainError("n_lambda must lie in 1..8")
    if kind == "quantum":
        w = rng.dirichlet(np.ones(n))
        resp = np.zeros((n, 2, 2))
        for lam in range(n):
            if rng.random() < 0.5:
                for x in (0, 1):
                    resp[lam, x, rng.integers(2)] = 1.0
            else:
                p = rng.random(2)
                resp[lam, :, 0], resp[lam, :, 1] = p, 1 - p
        obs = [branch_observable(t) for t in theta]
        rho = kron(make_entangled_pair("phi_plus"), make_entangled_pair("phi_plus"))
        # reorder (A, B, A', B') -> (A, A', B, B')
        rho = rho.reshape([2] * 8).transpose(0, 2, 1, 3, 4, 6, 5, 7).reshape(16, 16)
        rest = np.zeros((n, 2, 2, 2, 2, 2))
        for lam in range(n):
            u = _haar_unitary(rng, 4)
            rank = int(rng.integers(1, 4))
            proj = u[:, :rank] @ u[:, :rank].conj().T
            central = (proj, np.eye(4) - proj)
            for y, z, c, e, b in itertools.product((0, 1), repeat=5):
                op = kron(outcome_projector(obs[y], c), outcome_projector(obs[z], e), central[b])
                rest[lam, y, z, c, e, b] = np.einsum("ij,ji->", op, rho).real
        rest = np.maximum(rest, 0.0)
        return HybridModel(classical_source, w, resp, rest)
    if kind == "rational":
        raw = rng.integers(1, 10, size=n)
        w = np.array([Fraction(int(v), int(raw.sum())) for v in raw], dtype=object)
        resp = np.empty((n, 2, 2), dtype=object)
        resp[...] = Fraction(0)
        for lam in range(n):
            for x in (0, 1):
                resp[lam, x, int(rng.integers(2))] = Fraction(1)
        rest = np.empty((n, 2, 2, 2, 2, 2), dtype=object)
        rest[...] = Fraction(0)
        for lam in range(n):
            mix = Fraction(int(rng.integers(0, 5)), 4)
            s = int(rng.integers(2))
            det = [int(v) for v in rng.integers(2, size=5)]  # c(y), e(z), b offsets
            for y, z, c, e in itertools.product((0, 1), repeat=4):
                b = (c + e + y * z + s) % 2
                rest[lam, y, z, c, e, b] += mix / 4
            for y, z in itertools.product((0, 1), repeat=2):
                c = det[0] ^ (det[1] & y)
                e = det[2] ^ (det[3] & z)
                rest[lam, y, z, c, e, det[4]] += 1 - mix
        return HybridModel(classical_source, w, resp, rest)
    raise DomainError(f"unknown hybrid model kind {kind!r}")
