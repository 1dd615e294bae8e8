import io
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings, strategies as st

from fnnstar import inflation, lpsolve
from fnnstar.lpsolve import FarkasCertificate, LinearSystem

import oracles

coef = st.integers(-3, 3)


@st.composite
def small_systems(draw):
    n = draw(st.integers(1, 5))
    row = st.tuples(st.lists(coef, min_size=n, max_size=n), st.integers(-3, 3))
    eq = draw(st.lists(row, max_size=3))
    ineq = draw(st.lists(row, max_size=3))
    return n, eq, ineq


# ------------------------------------------------------------- examples

def test_one_variable_examples():
    ls = LinearSystem.from_rows(1, eq=[([1], 1)])
    res = lpsolve.feasibility(ls)
    assert res.feasible and res.point == (Fraction(1),)
    ls = LinearSystem.from_rows(1, eq=[([1], -1)])
    res = lpsolve.feasibility(ls)
    assert not res.feasible
    assert res.certificate.integerized().y_eq == (Fraction(-1),)
    assert lpsolve.verify_certificate(ls, res.certificate)


def test_dimension_errors():
    with pytest.raises(lpsolve.DimensionError):
        LinearSystem.from_rows(2, eq=[({3: 1}, 0)])
    ls = LinearSystem.from_rows(2, eq=[([1, 1], 1)])
    with pytest.raises(lpsolve.DimensionError):
        ls.with_rhs(b_eq=[1, 2])


def test_fractional_rows_are_scaled():
    ls = LinearSystem.from_rows(2, eq=[([Fraction(1, 2), Fraction(1, 3)], 1)])
    assert ls.A_eq.toarray().tolist() == [[3, 2]]
    assert ls.b_eq == (Fraction(6),)


# ------------------------------------------------------------- properties

@settings(max_examples=300, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(small_systems(), st.sampled_from(["exact", "float"]))
def test_agrees_with_vertex_enumeration(system, method):
    n, eq, ineq = system
    ls = LinearSystem.from_rows(n, eq=eq, ineq=ineq)
    res = lpsolve.feasibility(ls, method=method)
    assert res.feasible == oracles.vertex_feasible(n, eq, ineq)
    if res.feasible:
        assert lpsolve.check_point(ls, res.point)
    else:
        assert lpsolve.verify_certificate(ls, res.certificate)


@settings(max_examples=100, deadline=None)
@given(small_systems())
def test_deterministic(system):
    n, eq, ineq = system
    ls = LinearSystem.from_rows(n, eq=eq, ineq=ineq)
    a, b = lpsolve.feasibility(ls), lpsolve.feasibility(ls)
    assert a.feasible == b.feasible and a.point == b.point and a.certificate == b.certificate


@settings(max_examples=100, deadline=None)
@given(small_systems())
def test_certificate_json_round_trip_and_scaling(system):
    n, eq, ineq = system
    ls = LinearSystem.from_rows(n, eq=eq, ineq=ineq)
    res = lpsolve.feasibility(ls)
    if res.feasible:
        return
    c = res.certificate.integerized()
    assert all(v.denominator == 1 for v in c.y_eq + c.y_ineq)
    assert FarkasCertificate.from_json(c.to_json()) == c
    assert lpsolve.verify_certificate(ls, c)
    assert all(v >= 0 for v in c.y_ineq)


def test_soundness_on_random_points():
    # a verified certificate excludes every nonnegative point; spot-check on random rationals
    ls = LinearSystem.from_rows(3, eq=[([1, 1, 1], 1)], ineq=[([1, 0, 0], 2)])
    res = lpsolve.feasibility(ls)
    assert not res.feasible
    rng = np.random.default_rng(0)
    for _ in range(200):
        x = [Fraction(int(v), 7) for v in rng.integers(0, 30, size=3)]
        assert not lpsolve.check_point(ls, x)


def test_large_identity_system_uses_float_route():
    n = 300
    ls = LinearSystem.from_rows(n, eq=[([1] * n, 1)] + [({j: 1, j + 1: -1}, 0) for j in range(n - 1)])
    res = lpsolve.feasibility(ls)
    assert res.feasible and res.point[0] == Fraction(1, n)
    assert lpsolve.check_point(ls, res.point)


# ------------------------------------------------------------- inflation instance

def test_ideal_star_certificate(certification):
    results, _ = certification
    for k, res in results.items():
        assert not res.feasible
        ls = res.problem.system
        cert = res.certificate
        assert lpsolve.verify_certificate(ls, cert)
        # perturbing one nonzero entry by 1e-6 breaks the dual inequalities
        y = list(cert.y_eq)
        j = next(i for i, v in enumerate(y) if v != 0)
        y[j] += Fraction(1, 10 ** 6)
        assert not lpsolve.verify_certificate(ls, FarkasCertificate(tuple(y), cert.y_ineq))
        assert res.result.method.startswith("float") or res.result.method


def test_certificate_independent_of_marginal_rhs(certification):
    results, _ = certification
    res = results[2]
    slack_before, _ = lpsolve.certificate_slack(res.problem.system, res.certificate)
    other = res.problem.with_target(inflation.white_noise_table())
    slack_after, value = lpsolve.certificate_slack(other.system, res.certificate)
    assert slack_before == slack_after and all(s <= 0 for s in slack_after)
    assert value < 0  # a feasible target cannot be separated


def test_write_lp_exact_rationals(ideal_star):
    problem = inflation.inflation_problem(ideal_star, 1, denominator_bound=100)
    buf = io.StringIO()
    lpsolve.write_lp(problem.system, buf)
    text = buf.getvalue()
    assert "Subject To" in text and text.rstrip().endswith("End")
    eq_lines = [line for line in text.splitlines() if line.startswith(" e")]
    assert len(eq_lines) == problem.system.shape[0]
    rhs = [Fraction(line.rsplit("=", 1)[1].strip()) for line in eq_lines]
    assert tuple(rhs) == problem.system.b_eq
    assert any("/" in line.rsplit("=", 1)[1] for line in eq_lines)
