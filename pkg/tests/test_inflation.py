import itertools
from fractions import Fraction

import numpy as np
import pytest

from fnnstar import dist, inflation, lpsolve, qsim
from fnnstar.dist import DomainError, ScenarioError
from fnnstar.inflation import HybridModel

from test_dist import CYCLE, SC


def feasible(d, k, bound=10 ** 6):
    return inflation.solve_placement(inflation.inflation_problem(d, k, bound)).feasible


def deterministic_as_hybrid(f, b, k):
    """Deterministic strategy as a one-valued hybrid model with classical source ``k``."""
    order = [k - 1, k % 3, (k + 1) % 3]  # placement order of the branch responses
    resp = np.zeros((1, 2, 2), dtype=object)
    resp[...] = Fraction(0)
    for x in (0, 1):
        resp[0, x, f[order[0]][x]] = Fraction(1)
    rest = np.zeros((1, 2, 2, 2, 2, 2), dtype=object)
    rest[...] = Fraction(0)
    for y, z in itertools.product((0, 1), repeat=2):
        rest[0, y, z, f[order[1]][y], f[order[2]][z], b] = Fraction(1)
    return HybridModel(k, np.array([Fraction(1)], dtype=object), resp, rest)


# ------------------------------------------------------------- structure

def test_layout():
    assert inflation.placement_order(1) == ("A1", "A2", "A3", "B")
    assert inflation.placement_order(2) == ("A2", "A3", "A1", "B")
    assert inflation.placement_order(3) == ("A3", "A1", "A2", "B")
    with pytest.raises(DomainError):
        inflation.placement_order(4)
    labels = {inflation.column_label(j) for j in range(inflation.N_VARS)}
    assert inflation.N_VARS == 2048 == len(labels)
    cols = {inflation.column(a, x) for a in itertools.product((0, 1), repeat=6)
            for x in itertools.product((0, 1), repeat=5)}
    assert cols == set(range(2048))


def test_system_shape(ideal_star):
    p = inflation.inflation_problem(ideal_star, 1)
    m_eq, m_in, n = p.system.shape
    assert n == 2048 and m_in == 2048
    kinds = p.row_kinds
    assert kinds["normalization"] == (0, 32)
    # symmetry rows for all five nontrivial permutations of the three copies
    assert sum(1 for k in kinds if k.startswith("symmetry")) == 5
    start, stop = kinds["marginal"]
    # Eq.-10-style marginals: (x11, x2, x3) x (a1, a2, a3, b) for all four spectator settings
    assert stop - start == 8 * 16 * 4 == len(p.marginal_rows)
    assert stop == m_eq


def test_rejects_invalid_input():
    bad = np.zeros(SC.shape)
    for x1, x2, x3 in itertools.product((0, 1), repeat=3):
        bad[x1, x2, x3, 0, x2, 0, 0, 0] = 1
    with pytest.raises(DomainError):
        inflation.inflation_problem(dist.ConditionalDistribution(SC, bad), 1)
    with pytest.raises(ScenarioError):
        inflation.inflation_problem(qsim.simulate_bilocal(), 1)


# ------------------------------------------------------------- rationalization

def test_rationalize_exactly_normalized_and_no_signaling(ideal_star):
    for bound in (10 ** 4, 10 ** 6):
        r = inflation.rationalize(ideal_star, bound)
        assert np.abs(r.astype(float) - ideal_star.table).max() < 20 / bound
        sums = r.reshape(8, 16).sum(axis=1)
        assert all(s == 1 for s in sums)
        for party in range(3):
            marg = r.sum(axis=4 + party)  # drop one branch's outcome
            for x in itertools.product((0, 1), repeat=3):
                y = list(x)
                y[party] ^= 1
                assert np.array_equal(marg[x], marg[tuple(y)])


def test_rationalize_recovers_small_denominators(rng):
    for _ in range(5):
        m = inflation.sample_hybrid_model(rng, int(rng.integers(1, 4)), kind="rational")
        exact = m.table()
        assert np.array_equal(inflation.rationalize(m.distribution(), 10 ** 4), exact)


def test_white_noise_table_matches_simulation():
    v0 = qsim.simulate_star(qsim.StarStrategy(0.3, 1.1, visibility=0))
    assert np.abs(inflation.white_noise_table().astype(float) - v0.table).max() < 1e-15


# ------------------------------------------------------------- feasibility

@pytest.mark.parametrize("k", [1, 2, 3])
def test_uniform_feasible(k):
    assert feasible(dist.uniform(SC), k)


def test_deterministic_explicit_inflation_points():
    # every deterministic strategy is feasible: cloning the classical response gives p_inf exactly
    problems = {k: inflation.inflation_problem(dist.uniform(SC), k) for k in (1, 2, 3)}
    funcs = list(itertools.product((0, 1), repeat=2))
    for f in itertools.product(funcs, repeat=3):
        for b in (0, 1):
            for k, base in problems.items():
                m = deterministic_as_hybrid(f, b, k)
                table = m.table()
                det = dist.deterministic(SC, lambda x: (f[0][x[0]], f[1][x[1]], f[2][x[2]], b))
                assert np.array_equal(table.astype(float), det.table)
                prob = base.with_target(table)
                assert lpsolve.check_point(prob.system, list(m.inflation_point()))


def test_shared_bit_hybrid_model_feasible():
    # classical source 1: uniform shared bit copied by A1; sources 2, 3 quantum at the optimal angles
    rng = np.random.default_rng(5)
    q = inflation.sample_hybrid_model(rng, 1, kind="quantum", n_lambda=2)
    resp = np.zeros((2, 2, 2))
    resp[0, :, 0] = resp[1, :, 1] = 1
    m = HybridModel(1, np.array([0.5, 0.5]), resp, q.rest)
    d = m.distribution()
    assert dist.validate(d).valid
    assert feasible(d, 1)


def test_hybrid_models_feasible_at_their_placement():
    rng = np.random.default_rng(11)
    n = 0
    for k in (1, 2, 3):
        for _ in range(34):
            m = inflation.sample_hybrid_model(rng, k, kind="quantum")
            assert feasible(m.distribution(), k), (k, n)
            n += 1
    assert n >= 100


def test_rational_hybrid_models_stay_feasible_after_rationalizing():
    rng = np.random.default_rng(12)
    for k in (1, 2, 3):
        for _ in range(4):
            m = inflation.sample_hybrid_model(rng, k, kind="rational")
            exact = inflation.inflation_problem(m.table(), k)
            assert lpsolve.check_point(exact.system, list(m.inflation_point()))
            assert feasible(m.distribution(), k, bound=10 ** 4)


def test_equivariance_under_relabeling():
    d = qsim.simulate_star(qsim.StarStrategy(-1.865, -0.415, visibility=(1.0, 0.97, 0.9)))
    cycled = dist.permute_parties(d, CYCLE)  # new A_j is old A_{j+1}; old A1 sits at A3
    moved = {1: 3, 2: 1, 3: 2}
    for k in (1, 2, 3):
        assert feasible(d, k, 10 ** 4) == feasible(cycled, moved[k], 10 ** 4)


# ------------------------------------------------------------- certification

def test_ideal_star_certified(certification):
    results, _ = certification
    report = inflation.FnnReport(tuple(results[k] for k in (1, 2, 3)))
    assert report.fnn
    for r in report.placements:
        assert lpsolve.verify_certificate(r.problem.system, r.certificate)


def test_placements_agree_with_symmetry(certification, extracted, ideal_star):
    # the ideal star is invariant under cycling the branches, so each placement's
    # certificate transported by the cycle also certifies the next placement
    results, _ = certification
    assert all(not results[k].feasible for k in (1, 2, 3))
    cycled = dist.permute_parties(ideal_star, CYCLE)
    assert np.abs(cycled.table - ideal_star.table).max() < 1e-12
    for k, pw in extracted.items():
        assert pw.evaluate(cycled) == pytest.approx(pw.evaluate(ideal_star), abs=1e-9)


def test_certify_fnn_on_deterministic_is_not_fnn():
    _, d = next(inflation.deterministic_strategies())
    report = inflation.certify_fnn(d)
    assert not report.fnn
    assert all(p.feasible for p in report.placements)


def test_extracted_witness_sound_on_hybrid_models(extracted):
    rng = np.random.default_rng(99)
    for k, pw in extracted.items():
        for _ in range(40):
            m = inflation.sample_hybrid_model(rng, k, kind="quantum")
            assert pw.evaluate(m.distribution()) <= 1e-9
            r = inflation.sample_hybrid_model(rng, k, kind="rational")
            assert pw.evaluate_exact(r.table()) <= 0
