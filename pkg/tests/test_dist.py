import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fnnstar import dist, qsim
from fnnstar.dist import ConditionalDistribution, DomainError, ScenarioError

import oracles

SC = dist.star_scenario()
CYCLE = ("A2", "A3", "A1", "B")


def random_table(seed, shape=SC.shape, n_inputs=4):
    """Arbitrary (possibly signaling) normalized table."""
    r = np.random.default_rng(seed).random(shape)
    return r / r.sum(axis=tuple(range(n_inputs, len(shape)), ), keepdims=True)


def local_mixture(seed, n=5):
    """Random convex mixture of deterministic star strategies: valid and no-signaling."""
    rng = np.random.default_rng(seed)
    w = rng.dirichlet(np.ones(n))
    t = np.zeros(SC.shape)
    for k in range(n):
        f = rng.integers(0, 2, size=(3, 2))
        b = rng.integers(0, 2)
        for x in itertools.product((0, 1), repeat=3):
            t[x + (0, f[0, x[0]], f[1, x[1]], f[2, x[2]], b)] += w[k]
    return ConditionalDistribution(SC, t)


seeds = st.integers(0, 2 ** 32 - 1)


# ------------------------------------------------------------- construction

def test_shape_mismatch_is_structural_error():
    with pytest.raises(ScenarioError):
        ConditionalDistribution(SC, np.ones((2, 2)))


def test_unnormalized_rejected_and_tiny_negatives_clamped():
    t = dist.uniform(SC).table.copy()
    t[0, 0, 0, 0, 0, 0, 0, 0] *= 2
    with pytest.raises(DomainError):
        ConditionalDistribution(SC, t)
    t = dist.uniform(SC).table.copy()
    t[0, 0, 0, 0, 0, 0, 0, 1] += t[0, 0, 0, 0, 0, 0, 0, 0] + 1e-13
    t[0, 0, 0, 0, 0, 0, 0, 0] = -1e-13
    with pytest.warns(UserWarning):
        d = ConditionalDistribution(SC, t)
    assert d.table.min() >= 0


def test_duplicate_names_rejected():
    with pytest.raises(ScenarioError):
        dist.Scenario.from_spec([("A", 2, 2), ("A", 2, 2)])


# ------------------------------------------------------------- validate

def test_uniform_valid_with_zero_residuals():
    rep = dist.validate(dist.uniform(SC))
    assert rep.valid
    assert rep.nonnegativity == 0 and rep.normalization == 0
    assert max(rep.no_signaling.values()) == 0


def test_negative_entry_reported():
    t = dist.uniform(SC).table.copy()
    t[0, 0, 0, 0, 0, 0, 0, 1] += t[0, 0, 0, 0, 0, 0, 0, 0] + 0.01
    t[0, 0, 0, 0, 0, 0, 0, 0] = -0.01
    rep = dist.validate(ConditionalDistribution(SC, t, check=False))
    assert abs(rep.nonnegativity - 0.01) < 1e-15
    assert not rep.valid


def test_copying_input_is_signaling():
    # a1 = x2, everything else fixed at 0
    t = np.zeros(SC.shape)
    for x1, x2, x3 in itertools.product((0, 1), repeat=3):
        t[x1, x2, x3, 0, x2, 0, 0, 0] = 1
    rep = dist.validate(ConditionalDistribution(SC, t))
    # p(a1=0 | x2=0) - p(a1=0 | x2=1) = 1 by hand
    assert rep.signaling_to["A1"] >= 1
    assert rep.signaling_from["A2"] >= 1
    assert not rep.valid


@settings(max_examples=30, deadline=None)
@given(seeds)
def test_local_mixtures_are_valid(seed):
    assert dist.validate(local_mixture(seed)).valid


# ------------------------------------------------------------- correlators

def test_correlator_examples(ideal_star):
    zeros = dist.deterministic(SC, lambda x: (0, 0, 0, 0))
    uni = dist.uniform(SC)
    for r in range(1, 5):
        for subset in itertools.combinations(SC.names, r):
            assert dist.correlator(zeros, (1, 0, 1, 0), subset) == 1
            assert abs(dist.correlator(uni, (1, 0, 1, 0), subset)) < 1e-15
    assert abs(dist.correlator(ideal_star, (0, 1, 0, 0), ["B"]) + 0.75) < 1e-12


def test_correlator_rejects_non_binary_party():
    d = qsim.simulate_bilocal()
    with pytest.raises(DomainError):
        dist.correlator(d, (0, 0, 0), ["B"])


@settings(max_examples=30, deadline=None)
@given(seeds, st.sets(st.sampled_from(SC.names)), st.tuples(*[st.integers(0, 1)] * 3))
def test_correlator_matches_loop_oracle_and_range(seed, subset, x):
    t = random_table(seed)
    d = ConditionalDistribution(SC, t)
    val = dist.correlator(d, x + (0,), subset)
    idx = sorted(SC.index(p) for p in subset)
    assert abs(val - oracles.loop_correlator(t, x, idx)) <= 1e-12
    assert -1 - 1e-12 <= val <= 1 + 1e-12
    assert dist.correlator(d, x + (0,), []) == pytest.approx(1, abs=1e-12)


@settings(max_examples=30, deadline=None)
@given(seeds, st.permutations(["A1", "A2", "A3"]), st.sets(st.sampled_from(SC.names)),
       st.tuples(*[st.integers(0, 1)] * 3))
def test_correlator_permutation_covariance(seed, perm, subset, x):
    d = ConditionalDistribution(SC, random_table(seed))
    order = tuple(perm) + ("B",)
    pd = dist.permute_parties(d, order)
    # position k of pd holds old party order[k]
    old_inputs = [0, 0, 0, 0]
    for k in range(3):
        old_inputs[SC.index(order[k])] = x[k]
    old_subset = [order[SC.index(p)] for p in subset]
    assert dist.correlator(pd, x + (0,), subset) == pytest.approx(
        dist.correlator(d, tuple(old_inputs), old_subset), abs=1e-12)


def test_bilocal_correlator_examples():
    sc = dist.bilocal_scenario()
    t = np.zeros(sc.shape)
    t[:, :, :, 0, 2, 0] = 1
    d = ConditionalDistribution(sc, t)
    for x, z in itertools.product((0, 1), repeat=2):
        assert dist.bilocal_correlator(d, x, z, "B0") == -1
        assert dist.bilocal_correlator(d, x, z, "B1") == 0
    u = np.zeros(sc.shape)
    u[...] = 1 / 12
    d = ConditionalDistribution(sc, u)
    assert abs(dist.bilocal_correlator(d, 1, 0, "B0")) < 1e-15
    assert abs(dist.bilocal_correlator(d, 1, 0, "B1")) < 1e-15


def test_bilocal_correlator_against_born_oracle():
    d = qsim.simulate_bilocal()
    ref = oracles.born_bilocal()
    s1 = {0: 1, 1: -1, 2: 0}
    want = sum((-1) ** (a + c) * s1[b] * ref[0, 0, a, b, c]
               for a, b, c in itertools.product((0, 1), range(3), (0, 1)))
    assert abs(dist.bilocal_correlator(d, 0, 0, "B1") - want) <= 1e-12


def test_bilocal_correlator_wrong_scenario():
    with pytest.raises(ScenarioError):
        dist.bilocal_correlator(dist.uniform(SC), 0, 0, "B0")


# ------------------------------------------------------------- marginals

def test_marginal_of_product_is_factor():
    sc = dist.Scenario.from_spec([("A", 2, 2), ("C", 2, 3)])
    pa = np.array([[0.2, 0.8], [0.6, 0.4]])
    pc = np.array([[0.1, 0.2, 0.7], [0.5, 0.25, 0.25]])
    d = ConditionalDistribution(sc, np.einsum("xa,zc->xzac", pa, pc))
    assert np.allclose(dist.marginal(d, ["A"]).table, pa, atol=1e-15)
    assert np.allclose(dist.marginal(d, ["C"]).table, pc, atol=1e-15)


@settings(max_examples=30, deadline=None)
@given(seeds, st.sets(st.sampled_from(SC.names), min_size=1))
def test_marginal_normalized_and_consistent(seed, keep):
    d = local_mixture(seed)
    m = dist.marginal(d, keep)
    assert dist.normalization_residual(m.table, m.scenario) <= 1e-12
    # correlators of kept parties agree (no-signaling makes absent inputs irrelevant)
    x = (1, 0, 1, 0)
    mx = tuple(x[SC.index(p)] for p in m.scenario.names)
    assert dist.correlator(m, mx, keep) == pytest.approx(dist.correlator(d, x, keep), abs=1e-12)


def test_ideal_star_branch_marginal_factorizes(ideal_star):
    m = dist.marginal(ideal_star, ["A2", "A3"])
    for x2, x3 in itertools.product((0, 1), repeat=2):
        pair = m.table[x2, x3]
        assert np.abs(pair - np.outer(pair.sum(1), pair.sum(0))).max() <= 1e-12
        assert np.abs(pair - oracles.born_pair_marginal(*(-1.865, -0.415), x2, x3)).max() <= 1e-12


def test_conditional_marginal(ideal_star):
    m = dist.marginal(ideal_star, ["A1", "A2", "A3"], condition=("B", 0))
    assert m.table.shape == (2, 2, 2, 2, 2, 2)
    assert np.allclose(m.table.sum(axis=(3, 4, 5)), 1, atol=1e-12)
    zero_b = dist.deterministic(SC, lambda x: (0, 0, 0, 1))
    with pytest.raises(DomainError):
        dist.marginal(zero_b, ["A1"], condition=("B", 0))


# ------------------------------------------------------------- permutation

def test_permutation_identity_and_cycle_order(ideal_star):
    d = ConditionalDistribution(SC, random_table(3))
    assert dist.permute_parties(d, SC.names) == d
    c = d
    for _ in range(3):
        c = dist.permute_parties(c, CYCLE)
    assert c == d


def test_permutation_cardinality_mismatch():
    sc = dist.Scenario.from_spec([("A", 2, 2), ("C", 2, 3)])
    d = dist.uniform(sc)
    with pytest.raises(ScenarioError):
        dist.permute_parties(d, ("C", "A"))


# ------------------------------------------------------------- mutual information

def test_mutual_information_examples():
    sc = dist.Scenario.from_spec([("A", 1, 2), ("C", 1, 2)])
    prod = ConditionalDistribution(sc, np.outer([0.3, 0.7], [0.9, 0.1])[None, None])
    assert abs(dist.mutual_information(prod, "A", "C", 0, 0)) <= 1e-12
    corr = ConditionalDistribution(sc, np.array([[0.5, 0], [0, 0.5]])[None, None])
    assert dist.mutual_information(corr, "A", "C", 0, 0) == pytest.approx(1.0, abs=1e-15)
    j = np.array([[3, 1], [1, 3]]) / 8
    d = ConditionalDistribution(sc, j[None, None])
    h_joint = oracles.entropy_bits([3 / 8, 1 / 8, 1 / 8, 3 / 8])
    assert dist.mutual_information(d, "A", "C", 0, 0) == pytest.approx(2 - h_joint, abs=1e-14)
    # natural-log variant rescales
    assert dist.mutual_information(d, "A", "C", 0, 0, base=math.e) == pytest.approx(
        (2 - h_joint) * math.log(2), abs=1e-14)


@settings(max_examples=30, deadline=None)
@given(seeds, st.integers(0, 1), st.integers(0, 1))
def test_mutual_information_nonnegative_and_symmetric(seed, xi, xj):
    d = local_mixture(seed)
    mi = dist.mutual_information(d, "A1", "A3", xi, xj)
    assert mi >= -1e-12
    assert mi == pytest.approx(dist.mutual_information(d, "A3", "A1", xj, xi), abs=1e-12)


def test_ideal_star_branches_independent(ideal_star):
    for i, j in itertools.combinations(("A1", "A2", "A3"), 2):
        for xi, xj in itertools.product((0, 1), repeat=2):
            assert abs(dist.mutual_information(ideal_star, i, j, xi, xj)) <= 1e-12


# ------------------------------------------------------------- serialization

@settings(max_examples=20, deadline=None)
@given(seeds)
def test_json_round_trip(seed):
    d = ConditionalDistribution(SC, random_table(seed))
    text = dist.dumps(d)
    assert dist.loads(text) == d
    assert dist.dumps(dist.loads(text)) == text


def test_json_missing_rows_rejected():
    data = dist.to_dict(dist.uniform(SC))
    data["table"].pop()
    with pytest.raises(ScenarioError):
        dist.from_dict(data)
