"""Conditional probability tables ``p(outputs | inputs)`` for few-party scenarios.

A table is stored densely as an ``ndarray`` whose first axes are the parties'
inputs and whose last axes are the parties' outputs, both in scenario order.
Parties with a fixed measurement (such as the central node) have input
cardinality 1.
"""

from __future__ import annotations

import itertools
import json
import math
import warnings
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

NEGATIVE_CLAMP = 1e-12
NORMALIZATION_TOL = 1e-9
NO_SIGNALING_TOL = 1e-9

# Outcome sign vectors for correlators. "std" is (-1)^output for a binary
# party; B0/B1 are the three-outcome sign assignments of the bilocal node.
SIGNS = {
    "std": (1, -1),
    "B0": (1, 1, -1),
    "B1": (1, -1, 0),
}


class ScenarioError(ValueError):
    """Table shape or party structure does not match the scenario."""


class DomainError(ValueError):
    """Argument outside the mathematical domain of an operation."""


@dataclass(frozen=True)
class Party:
    name: str
    inputs: int
    outputs: int

    def __post_init__(self):
        if self.inputs < 1 or self.outputs < 1:
            raise ScenarioError(f"party {self.name!r}: cardinalities must be >= 1")


@dataclass(frozen=True)
class Scenario:
    parties: tuple[Party, ...]

    def __post_init__(self):
        object.__setattr__(self, "parties", tuple(self.parties))
        names = [p.name for p in self.parties]
        if len(set(names)) != len(names):
            raise ScenarioError(f"duplicate party names in {names}")

    @classmethod
    def from_spec(cls, spec: Iterable[tuple[str, int, int]]) -> Scenario:
        return cls(tuple(Party(n, i, o) for n, i, o in spec))

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(p.name for p in self.parties)

    @property
    def n(self) -> int:
        return len(self.parties)

    @property
    def input_shape(self) -> tuple[int, ...]:
        return tuple(p.inputs for p in self.parties)

    @property
    def output_shape(self) -> tuple[int, ...]:
        return tuple(p.outputs for p in self.parties)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.input_shape + self.output_shape

    def index(self, party: str | int) -> int:
        if isinstance(party, (int, np.integer)):
            if not 0 <= party < self.n:
                raise ScenarioError(f"party index {party} out of range")
            return int(party)
        try:
            return self.names.index(party)
        except ValueError:
            raise ScenarioError(f"no party named {party!r} in {self.names}") from None

    def __getitem__(self, party: str | int) -> Party:
        return self.parties[self.index(party)]

    def joint_inputs(self) -> Iterable[tuple[int, ...]]:
        return itertools.product(*(range(k) for k in self.input_shape))

    def joint_outputs(self) -> Iterable[tuple[int, ...]]:
        return itertools.product(*(range(k) for k in self.output_shape))


def star_scenario() -> Scenario:
    """Three binary branch parties A1..A3 and a binary central party B."""
    return Scenario.from_spec([("A1", 2, 2), ("A2", 2, 2), ("A3", 2, 2), ("B", 1, 2)])


def bilocal_scenario() -> Scenario:
    """Line network A - B - C with a three-outcome central party."""
    return Scenario.from_spec([("A", 2, 2), ("B", 1, 3), ("C", 2, 2)])


@dataclass(frozen=True, eq=False)
class ConditionalDistribution:
    """Immutable conditional distribution over a scenario.

    Construction clamps entries in ``[-1e-12, 0)`` to zero (with a warning)
    and rejects anything more negative or any setting whose total is off by
    more than 1e-9. Pass ``check=False`` to hold an arbitrary table, e.g. to
    run :func:`validate` on it.
    """

    scenario: Scenario
    table: np.ndarray
    check: bool = field(default=True, repr=False)

    def __post_init__(self):
        table = np.array(self.table, dtype=float)
        if table.shape != self.scenario.shape:
            raise ScenarioError(
                f"table shape {table.shape} does not match scenario shape {self.scenario.shape}")
        if self.check:
            if not np.all(np.isfinite(table)):
                raise DomainError("table has non-finite entries")
            low = table.min()
            if low < -NEGATIVE_CLAMP:
                raise DomainError(f"negative probability {low:.3g}")
            if low < 0:
                warnings.warn(f"clamping negative entries down to {low:.3g} to zero", stacklevel=3)
                table = np.where(table < 0, 0.0, table)
            resid = normalization_residual(table, self.scenario)
            if resid > NORMALIZATION_TOL:
                raise DomainError(f"table not normalized (residual {resid:.3g})")
        table.setflags(write=False)
        object.__setattr__(self, "table", table)

    def __eq__(self, other):
        if not isinstance(other, ConditionalDistribution):
            return NotImplemented
        return self.scenario == other.scenario and np.array_equal(self.table, other.table)

    def __hash__(self):
        return hash((self.scenario, self.table.tobytes()))

    def p(self, outputs: Sequence[int], inputs: Sequence[int]) -> float:
        return float(self.table[tuple(inputs) + tuple(outputs)])

    def to_json(self) -> str:
        return json.dumps(to_dict(self), sort_keys=True, indent=1)


def normalization_residual(table: np.ndarray, scenario: Scenario) -> float:
    n = scenario.n
    sums = table.reshape(table.shape[:n] + (-1,)).sum(axis=-1)
    return float(np.max(np.abs(sums - 1.0)))


def uniform(scenario: Scenario) -> ConditionalDistribution:
    total = math.prod(scenario.output_shape)
    return ConditionalDistribution(scenario, np.full(scenario.shape, 1.0 / total))


def deterministic(scenario: Scenario, response) -> ConditionalDistribution:
    """Distribution putting all weight on ``response(inputs) -> outputs``."""
    table = np.zeros(scenario.shape)
    for x in scenario.joint_inputs():
        table[x + tuple(response(x))] = 1.0
    return ConditionalDistribution(scenario, table)


# ---------------------------------------------------------------- validation

@dataclass(frozen=True)
class ValidationReport:
    nonnegativity: float
    normalization: float
    signaling_from: dict[str, float]
    signaling_to: dict[str, float]

    @property
    def no_signaling(self) -> dict[str, float]:
        """Worst signaling involving each party, sent or received."""
        return {k: max(self.signaling_from[k], self.signaling_to[k]) for k in self.signaling_from}

    @property
    def valid(self) -> bool:
        return (self.nonnegativity <= NEGATIVE_CLAMP
                and self.normalization <= NORMALIZATION_TOL
                and max(self.no_signaling.values(), default=0.0) <= NO_SIGNALING_TOL)


def _input_spread(arr: np.ndarray, axes: Sequence[int]) -> float:
    """Largest change of ``arr`` when the inputs on ``axes`` vary."""
    if not axes:
        return 0.0
    axes = tuple(axes)
    return float(np.max(arr.max(axis=axes) - arr.min(axis=axes)))


def validate(d: ConditionalDistribution) -> ValidationReport:
    """Report the worst violation of positivity, normalization and no-signaling.

    ``signaling_from[P]`` measures how much the joint distribution of all other
    parties depends on P's input; ``signaling_to[P]`` measures how much P's
    own marginal depends on the other parties' inputs.
    """
    sc = d.scenario
    n = sc.n
    t = np.asarray(d.table)
    if t.shape != sc.shape:
        raise ScenarioError(f"table shape {t.shape} does not match {sc.shape}")
    neg = float(max(0.0, -t.min()))
    norm = normalization_residual(t, sc)
    sent, received = {}, {}
    for i, party in enumerate(sc.parties):
        rest = t.sum(axis=n + i)
        sent[party.name] = _input_spread(rest, [i]) if party.inputs > 1 else 0.0
        own = t.sum(axis=tuple(n + j for j in range(n) if j != i))
        others = [j for j in range(n) if j != i and sc.parties[j].inputs > 1]
        received[party.name] = _input_spread(own, others)
    return ValidationReport(neg, norm, sent, received)


# ------------------------------------------------------------ correlators

def _sign_vector(party: Party, kind: str | None) -> np.ndarray:
    if kind is None:
        if party.outputs != 2:
            raise DomainError(
                f"party {party.name!r} has {party.outputs} outcomes; a sign kind is required")
        kind = "std"
    try:
        signs = SIGNS[kind]
    except KeyError:
        raise DomainError(f"unknown sign kind {kind!r}") from None
    if len(signs) != party.outputs:
        raise DomainError(f"sign kind {kind!r} does not fit party {party.name!r}")
    return np.asarray(signs, dtype=float)


def correlator(d: ConditionalDistribution, inputs: Sequence[int], parties: Iterable[str | int],
               signs: Mapping[str, str] | None = None) -> float:
    """Expectation of the product of the parties' outcome signs at one joint input.

    Parameters
    ----------
    inputs : joint input, one entry per party of the scenario.
    parties : subset whose signs enter the product; the empty subset gives 1.
    signs : optional sign kind per party name (required for non-binary parties).
    """
    sc = d.scenario
    signs = signs or {}
    inputs = tuple(int(x) for x in inputs)
    if len(inputs) != sc.n:
        raise ScenarioError(f"expected {sc.n} inputs, got {len(inputs)}")
    for x, party in zip(inputs, sc.parties):
        if not 0 <= x < party.inputs:
            raise ScenarioError(f"input {x} out of range for party {party.name!r}")
    weight = np.ones(sc.output_shape)
    for q in {sc.index(p) for p in parties}:
        party = sc.parties[q]
        vec = _sign_vector(party, signs.get(party.name))
        shape = [1] * sc.n
        shape[q] = party.outputs
        weight = weight * vec.reshape(shape)
    return float(np.sum(d.table[inputs] * weight))


def bilocal_correlator(d: ConditionalDistribution, x: int, z: int, kind: str) -> float:
    """``<A_x B_kind C_z>`` with ``kind`` in {"B0", "B1"}."""
    if d.scenario.names != ("A", "B", "C") or d.scenario.output_shape != (2, 3, 2):
        raise ScenarioError("bilocal correlator needs the (A, B, C) bilocal scenario")
    if kind not in ("B0", "B1"):
        raise DomainError(f"kind must be B0 or B1, got {kind!r}")
    return correlator(d, (x, 0, z), ("A", "B", "C"), {"B": kind})


# ------------------------------------------------------- marginals & relabels

def marginal(d: ConditionalDistribution, keep: Iterable[str | int],
             condition: tuple[str | int, int] | None = None) -> ConditionalDistribution:
    """Distribution of the ``keep`` parties.

    Inputs of discarded parties are averaged uniformly, which is exact for
    no-signaling tables. With ``condition=(party, outcome)`` the result is
    conditioned on that outcome, per joint input of the kept parties.
    """
    sc = d.scenario
    keep_idx = sorted({sc.index(p) for p in keep})
    cond_idx = None
    if condition is not None:
        cond_idx = sc.index(condition[0])
        if cond_idx in keep_idx:
            raise DomainError("cannot condition on a kept party")
        if not 0 <= condition[1] < sc.parties[cond_idx].outputs:
            raise DomainError(f"outcome {condition[1]} out of range")
    n = sc.n
    t = np.asarray(d.table)
    drop_out = [n + j for j in range(n) if j not in keep_idx and j != cond_idx]
    t = t.sum(axis=tuple(drop_out), keepdims=True)
    drop_in = [j for j in range(n) if j not in keep_idx]
    t = t.mean(axis=tuple(drop_in), keepdims=True)
    if cond_idx is not None:
        sl = [slice(None)] * t.ndim
        sl[n + cond_idx] = slice(condition[1], condition[1] + 1)
        joint = t[tuple(sl)]
        denom = joint.sum(axis=tuple(n + j for j in keep_idx), keepdims=True)
        if np.any(denom <= 0):
            raise DomainError("conditioning on a zero-probability outcome")
        t = joint / denom
    squeeze = [j for j in range(n) if j not in keep_idx] + [n + j for j in range(n) if j not in keep_idx]
    t = t.squeeze(axis=tuple(squeeze))
    new = Scenario(tuple(sc.parties[j] for j in keep_idx))
    return ConditionalDistribution(new, t, check=False)


def permute_parties(d: ConditionalDistribution, order: Sequence[str | int]) -> ConditionalDistribution:
    """Relabel parties: position ``k`` of the result holds old party ``order[k]``.

    Party names stay attached to positions, so ``order=("A2", "A3", "A1", "B")``
    makes the result's A1 behave like the original A2 (the cycle
    A1 -> A2 -> A3 -> A1 applied to the labels of a witness). Parties omitted
    from ``order`` keep their position.
    """
    sc = d.scenario
    idx = [sc.index(p) for p in order]
    if len(idx) < sc.n:
        moved = set(idx)
        if any(i in moved for i in range(len(idx), sc.n)):
            raise ScenarioError("partial permutation must leave trailing parties fixed")
        idx += list(range(len(idx), sc.n))
    if sorted(idx) != list(range(sc.n)):
        raise ScenarioError(f"{order} is not a permutation of the parties")
    for k, j in enumerate(idx):
        a, b = sc.parties[k], sc.parties[j]
        if (a.inputs, a.outputs) != (b.inputs, b.outputs):
            raise ScenarioError(f"cannot swap {a.name!r} and {b.name!r}: cardinalities differ")
    axes = idx + [sc.n + j for j in idx]
    t = np.ascontiguousarray(np.transpose(d.table, axes))
    return ConditionalDistribution(sc, t, check=False)


# --------------------------------------------------------------- information

def _entropy(p: np.ndarray, base: float) -> float:
    p = p[p > 0]
    return float(-np.sum(p * np.log(p)) / math.log(base))


def mutual_information(d: ConditionalDistribution, party_i: str | int, party_j: str | int,
                       input_i: int, input_j: int, base: float = 2.0) -> float:
    """``H(A_i) + H(A_j) - H(A_i, A_j)`` at the given inputs (bits by default)."""
    sc = d.scenario
    i, j = sc.index(party_i), sc.index(party_j)
    if i == j:
        raise DomainError("mutual information needs two distinct parties")
    m = marginal(d, [i, j])
    pair = np.asarray(m.table[(input_i, input_j) if i < j else (input_j, input_i)])
    if i > j:
        pair = pair.T
    return _entropy(pair.sum(axis=1), base) + _entropy(pair.sum(axis=0), base) - _entropy(pair.ravel(), base)


# ------------------------------------------------------------ serialization

def to_dict(d: ConditionalDistribution) -> dict:
    sc = d.scenario
    rows = []
    for x in sc.joint_inputs():
        for a in sc.joint_outputs():
            rows.append({"input": list(x), "output": list(a), "p": float(d.table[x + a])})
    return {"scenario": [{"name": p.name, "inputs": p.inputs, "outputs": p.outputs} for p in sc.parties],
            "table": rows}


def from_dict(data: Mapping, check: bool = True) -> ConditionalDistribution:
    try:
        sc = Scenario.from_spec((p["name"], int(p["inputs"]), int(p["outputs"])) for p in data["scenario"])
        table = np.full(sc.shape, np.nan)
        for row in data["table"]:
            key = tuple(int(v) for v in row["input"]) + tuple(int(v) for v in row["output"])
            if len(key) != 2 * sc.n:
                raise ScenarioError(f"row {row} does not match scenario")
            if not np.isnan(table[key]):
                raise ScenarioError(f"duplicate row {row}")
            table[key] = float(row["p"])
    except (KeyError, TypeError, IndexError) as exc:
        raise ScenarioError(f"malformed distribution document: {exc}") from None
    if np.isnan(table).any():
        raise ScenarioError("distribution document is missing table rows")
    return ConditionalDistribution(sc, table, check=check)


def dumps(d: ConditionalDistribution) -> str:
    return json.dumps(to_dict(d), sort_keys=True, indent=1)


def loads(text: str, check: bool = True) -> ConditionalDistribution:
    return from_dict(json.loads(text), check=check)
