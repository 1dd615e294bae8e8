import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fnnstar import dist, qsim, witness
from fnnstar.dist import DomainError

import oracles

angles = st.floats(-math.pi, math.pi, allow_nan=False)
vis = st.floats(0.0, 1.0, allow_nan=False)


# ------------------------------------------------------------- primitives

def test_entangled_pair_examples():
    phi = np.array([1, 0, 0, 1]) / math.sqrt(2)
    assert np.allclose(qsim.make_entangled_pair("phi_plus", 1), np.outer(phi, phi), atol=1e-15)
    assert np.allclose(qsim.make_entangled_pair("phi_plus", 0), np.eye(4) / 4, atol=1e-15)
    psi = np.array([0, 1, -1, 0]) / math.sqrt(2)
    assert np.allclose(qsim.make_entangled_pair("singlet", 1), np.outer(psi, psi), atol=1e-15)


@pytest.mark.parametrize("v", [-0.1, 1.2])
def test_entangled_pair_rejects_bad_visibility(v):
    with pytest.raises(DomainError):
        qsim.make_entangled_pair("phi_plus", v)


@given(vis)
def test_entangled_pair_is_density_operator(v):
    rho = qsim.make_entangled_pair("phi_plus", v)
    assert qsim.is_density_operator(rho)
    assert np.allclose(rho, oracles.isotropic(v, [math.sqrt(0.5), 0, 0, math.sqrt(0.5)]), atol=1e-14)


def test_branch_observable_axes():
    assert np.allclose(qsim.branch_observable(0, 0), oracles.PAULI["Z"], atol=1e-15)
    assert np.allclose(qsim.branch_observable(math.pi / 2, 0), oracles.PAULI["X"], atol=1e-15)
    assert np.allclose(qsim.branch_observable(math.pi / 2, math.pi / 2), oracles.PAULI["Y"], atol=1e-15)


@settings(max_examples=100)
@given(angles, angles)
def test_branch_observable_squares_to_identity(theta, phi):
    obs = qsim.branch_observable(theta, phi)
    assert np.abs(obs @ obs - np.eye(2)).max() <= 1e-12
    assert qsim.is_observable(obs)


def test_ghz_projector_examples():
    p = qsim.ghz_projector(3)
    assert abs(np.trace(p) - 1) < 1e-15
    assert abs(p[0, 0] - 0.5) < 1e-15
    minus = np.zeros(8)
    minus[0], minus[7] = math.sqrt(0.5), -math.sqrt(0.5)
    assert np.abs(p @ minus).max() < 1e-15
    assert qsim.is_projector(p)


def test_ghz_projector_needs_two_qubits():
    with pytest.raises(DomainError):
        qsim.ghz_projector(1)


def test_strategy_validates_visibility():
    with pytest.raises(DomainError):
        qsim.StarStrategy(0, 0, visibility=(1, 1, 1.5))
    assert qsim.StarStrategy(0, 0, visibility=0.5).visibility == (0.5, 0.5, 0.5)


# ------------------------------------------------------------- star network

def test_star_matches_independent_born_oracle():
    for theta0, theta1, phi0, phi1, v in [(-1.865, -0.415, 0, 0, (1, 1, 1)),
                                           (0.3, 2.1, 0.7, -1.2, (0.9, 0.6, 0.3)),
                                           (math.pi / 2, math.pi / 2, math.pi / 4, 3 * math.pi / 4, (1, 1, 1))]:
        d = qsim.simulate_star(qsim.StarStrategy(theta0, theta1, phi0, phi1, v))
        ref = oracles.born_star(theta0, theta1, phi0, phi1, v)
        assert np.abs(d.table[:, :, :, 0] - ref).max() <= 1e-12


@settings(max_examples=25, deadline=None)
@given(angles, angles, angles, angles, st.tuples(vis, vis, vis))
def test_born_and_steering_agree(t0, t1, p0, p1, v):
    s = qsim.StarStrategy(t0, t1, p0, p1, v)
    a = qsim.simulate_star(s, "born").table
    b = qsim.simulate_star(s, "steering").table
    assert np.abs(a - b).max() <= 1e-12


@settings(max_examples=25, deadline=None)
@given(angles, angles, st.tuples(vis, vis, vis))
def test_star_output_is_valid(t0, t1, v):
    d = qsim.simulate_star(qsim.StarStrategy(t0, t1, visibility=v))
    rep = dist.validate(d)
    assert rep.valid
    assert rep.normalization <= 1e-12
    assert max(rep.signaling_from.values()) <= 1e-12


@settings(max_examples=25, deadline=None)
@given(angles, angles)
def test_ghz_success_is_one_eighth(t0, t1):
    d = qsim.simulate_star(qsim.StarStrategy(t0, t1))
    pb = d.table.sum(axis=(3, 4, 5, 6))[..., 0]
    assert np.abs(pb - 0.125).max() <= 1e-12


@settings(max_examples=25, deadline=None)
@given(angles, angles, angles, angles)
def test_branch_marginals_uniform(t0, t1, p0, p1):
    d = qsim.simulate_star(qsim.StarStrategy(t0, t1, p0, p1))
    for party in ("A1", "A2", "A3"):
        for x in np.ndindex(2, 2, 2):
            assert abs(dist.correlator(d, x + (0,), [party])) <= 1e-12


@settings(max_examples=20, deadline=None)
@given(angles, angles, st.tuples(vis, vis, vis))
def test_cyclic_relabeling_equivariance(t0, t1, v):
    # moving source i to slot i+1 and simulating == simulating and relabeling A_i -> A_{i+1}
    shifted = (v[2], v[0], v[1])
    lhs = qsim.simulate_star(qsim.StarStrategy(t0, t1, visibility=shifted))
    rhs = dist.permute_parties(qsim.simulate_star(qsim.StarStrategy(t0, t1, visibility=v)),
                               ("A3", "A1", "A2", "B"))
    assert np.abs(lhs.table - rhs.table).max() <= 1e-12


def test_ideal_star_value(ideal_star):
    for i in (1, 2, 3):
        assert abs(witness.evaluate(witness.builtin_fnn_star(i), ideal_star).value - 0.1859) <= 5e-4


# ------------------------------------------------------------- bilocal

def test_bilocal_matches_born_oracle():
    d = qsim.simulate_bilocal()
    ref = oracles.born_bilocal()
    assert np.abs(d.table[:, 0] - ref).max() <= 1e-12
    assert dist.validate(d).valid


def test_bilocal_unresolved_outcome_half():
    d = qsim.simulate_bilocal()
    pb = d.table.sum(axis=(3, 5))[:, 0, :, 2]
    assert np.abs(pb - 0.5).max() <= 1e-12


def test_bilocal_witness_values():
    d = qsim.simulate_bilocal()
    for kind in ("C-NS", "NS-C"):
        assert abs(witness.evaluate(witness.builtin_fnn_bilocal(kind), d).value - 5 / math.sqrt(2)) <= 1e-9
