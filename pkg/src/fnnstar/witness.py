"""Witness inequalities over correlators and over probabilities.

A correlator symbol is written as a string of space-separated factors,
``"A1_0 A3_1 B"`` or ``"A_1 B[B0] C_0"``: a factor is ``party_input`` with an
optional ``[kind]`` naming the sign vector of a non-binary party (see
:data:`fnnstar.dist.SIGNS`). A party without ``_input`` uses input 0.

Inputs of parties absent from a symbol are averaged uniformly. For
no-signaling distributions this is immaterial; for measured data, which
signals slightly, it is the natural estimator that uses every setting. A
symbol may instead pin absent inputs through a ``context``, which is how
witnesses extracted from LP certificates are expressed exactly.
"""

from __future__ import annotations

import itertools
import json
import math
import re
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping

import numpy as np

from .dist import (ConditionalDistribution, DomainError, Scenario, ScenarioError,
                   _sign_vector, star_scenario)

Number = float | Fraction | int

_FACTOR_RE = re.compile(r"^([A-Za-z]\w*?)(?:_(\d+))?(?:\[(\w+)\])?$")


@dataclass(frozen=True, order=True)
class Factor:
    party: str
    input: int = 0
    kind: str | None = None

    def __str__(self):
        s = f"{self.party}_{self.input}"
        return s + (f"[{self.kind}]" if self.kind else "")


@dataclass(frozen=True, order=True)
class Correlator:
    """Expectation of the product of the factors' outcome signs."""

    factors: tuple[Factor, ...] = ()
    context: tuple[tuple[str, int], ...] = ()

    def __post_init__(self):
        factors = tuple(sorted(self.factors))
        names = [f.party for f in factors]
        if len(set(names)) != len(names):
            raise ScenarioError(f"party repeated in correlator: {names}")
        context = tuple(sorted((str(p), int(x)) for p, x in self.context))
        if set(names) & {p for p, _ in context}:
            raise ScenarioError("context overlaps the correlator's parties")
        object.__setattr__(self, "factors", factors)
        object.__setattr__(self, "context", context)

    @classmethod
    def parse(cls, text: str, context: Mapping[str, int] | None = None) -> Correlator:
        factors = []
        for tok in text.split():
            m = _FACTOR_RE.match(tok)
            if not m:
                raise ValueError(f"cannot parse correlator factor {tok!r}")
            factors.append(Factor(m.group(1), int(m.group(2) or 0), m.group(3)))
        return cls(tuple(factors), tuple((context or {}).items()))

    @property
    def parties(self) -> tuple[str, ...]:
        return tuple(f.party for f in self.factors)

    def relabel(self, mapping: Mapping[str, str]) -> Correlator:
        return Correlator(tuple(Factor(mapping.get(f.party, f.party), f.input, f.kind) for f in self.factors),
                          tuple((mapping.get(p, p), x) for p, x in self.context))

    def __str__(self):
        body = " ".join(str(f) for f in self.factors) or "1"
        if self.context:
            body += " | " + " ".join(f"{p}_{x}" for p, x in self.context)
        return f"<{body}>"

    def to_dict(self) -> dict:
        out = {"parties": list(self.parties), "inputs": [f.input for f in self.factors]}
        if any(f.kind for f in self.factors):
            out["kinds"] = [f.kind for f in self.factors]
        if self.context:
            out["context"] = {p: x for p, x in self.context}
        return out

    @classmethod
    def from_dict(cls, data: Mapping) -> Correlator:
        kinds = data.get("kinds") or [None] * len(data["parties"])
        if not len(data["parties"]) == len(data["inputs"]) == len(kinds):
            raise ValueError("parties, inputs and kinds must have equal length")
        factors = tuple(Factor(p, int(x), k) for p, x, k in zip(data["parties"], data["inputs"], kinds))
        return cls(factors, tuple((data.get("context") or {}).items()))


def correlator_value(d: ConditionalDistribution, sym: Correlator) -> float:
    """Value of ``sym`` on ``d``, averaging over inputs of parties it does not pin."""
    sc = d.scenario
    fixed: dict[int, int] = {}
    for name, x in [(f.party, f.input) for f in sym.factors] + list(sym.context):
        q = sc.index(name)
        if not 0 <= x < sc.parties[q].inputs:
            raise ScenarioError(f"input {x} out of range for party {name!r}")
        fixed[q] = x
    index = tuple(fixed.get(q, slice(None)) for q in range(sc.n))
    t = d.table[index]
    free = [q for q in range(sc.n) if q not in fixed]
    if free:
        t = t.mean(axis=tuple(range(len(free))))
    weight = np.ones(sc.output_shape)
    for f in sym.factors:
        q = sc.index(f.party)
        shape = [1] * sc.n
        shape[q] = sc.parties[q].outputs
        weight = weight * _sign_vector(sc.parties[q], f.kind).reshape(shape)
    return float(np.sum(t * weight))


Monomial = tuple[Correlator, ...]


@dataclass(frozen=True)
class CorrelatorPolynomial:
    """``constant + sum_k coeff_k * prod(monomial_k)``, violated when the value exceeds ``bound``."""

    constant: Number = 0
    terms: tuple[tuple[Number, Monomial], ...] = ()
    bound: Number = 0
    name: str = ""

    def __post_init__(self):
        terms = tuple((c, tuple(m)) for c, m in self.terms)
        object.__setattr__(self, "terms", terms)

    def canonical(self) -> CorrelatorPolynomial:
        """Sorted factors, merged duplicate monomials, zero terms dropped."""
        acc: dict[Monomial, Number] = {}
        const = self.constant
        for c, mono in self.terms:
            key = tuple(sorted(s for s in mono if s.factors))
            if not key:
                const = const + c
                continue
            acc[key] = acc.get(key, 0) + c
        terms = tuple((c, m) for m, c in sorted(acc.items()) if c != 0)
        return CorrelatorPolynomial(const, terms, self.bound, self.name)

    @property
    def degree(self) -> int:
        return max((len(m) for _, m in self.terms), default=0)

    def relabel(self, mapping: Mapping[str, str], name: str | None = None) -> CorrelatorPolynomial:
        terms = tuple((c, tuple(s.relabel(mapping) for s in m)) for c, m in self.terms)
        return CorrelatorPolynomial(self.constant, terms, self.bound, self.name if name is None else name)

    def scaled(self, k: Number) -> CorrelatorPolynomial:
        return CorrelatorPolynomial(self.constant * k, tuple((c * k, m) for c, m in self.terms),
                                    self.bound * k, self.name)

    def __str__(self):
        parts = [_fmt_number(self.constant)] if self.constant else []
        for c, m in self.terms:
            parts.append(f"{_fmt_number(c)}*" + "".join(str(s) for s in m))
        return (" + ".join(parts) or "0") + f" <= {_fmt_number(self.bound)}"

    # JSON -------------------------------------------------------------
    def to_dict(self) -> dict:
        return {"name": self.name, "constant": _num_out(self.constant), "bound": _num_out(self.bound),
                "terms": [{"coeff": _num_out(c), "monomial": [s.to_dict() for s in m]} for c, m in self.terms]}

    @classmethod
    def from_dict(cls, data: Mapping) -> CorrelatorPolynomial:
        terms = tuple((_num_in(t["coeff"]), tuple(Correlator.from_dict(s) for s in t["monomial"]))
                      for t in data.get("terms", []))
        return cls(_num_in(data.get("constant", 0)), terms, _num_in(data.get("bound", 0)), data.get("name", ""))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1)

    @classmethod
    def from_json(cls, text: str) -> CorrelatorPolynomial:
        return cls.from_dict(json.loads(text))


def _fmt_number(v: Number) -> str:
    if isinstance(v, Fraction):
        return str(v.numerator) if v.denominator == 1 else f"{v.numerator}/{v.denominator}"
    return f"{v:.12g}" if isinstance(v, float) else str(v)


def _num_out(v: Number):
    if isinstance(v, Fraction):
        return _fmt_number(v)
    return v


def _num_in(v) -> Number:
    if isinstance(v, str):
        return Fraction(v)
    return v


@dataclass(frozen=True)
class TermValue:
    coeff: Number
    monomial: Monomial
    factors: tuple[float, ...]
    contribution: float


@dataclass(frozen=True)
class Evaluation:
    value: float
    bound: float
    terms: tuple[TermValue, ...] = field(default=(), repr=False)

    @property
    def violated(self) -> bool:
        return self.value > self.bound


def evaluate(w: CorrelatorPolynomial, d: ConditionalDistribution) -> Evaluation:
    """Value of ``w`` on ``d`` with a per-term breakdown."""
    cache: dict[Correlator, float] = {}
    rows = []
    total = float(w.constant)
    for c, mono in w.terms:
        vals = []
        for s in mono:
            if s not in cache:
                cache[s] = correlator_value(d, s)
            vals.append(cache[s])
        contrib = float(c) * math.prod(vals)
        total += contrib
        rows.append(TermValue(c, mono, tuple(vals), contrib))
    return Evaluation(total, float(w.bound), tuple(rows))


# ------------------------------------------------------------ built-ins

_STAR_CYCLES = {
    1: {},
    2: {"A1": "A2", "A2": "A3", "A3": "A1"},
    3: {"A1": "A3", "A3": "A2", "A2": "A1"},
}


def _star_i1() -> CorrelatorPolynomial:
    sign = {(0, 0): -1, (1, 0): -1, (0, 1): -1, (1, 1): 1}
    terms = []
    for pattern in ("A1_{0} A2_0 A3_{1} B", "A1_{0} A2_0 A3_{1}", "A1_{0} A3_{1} B", "A1_{0} A3_{1}"):
        for (x1, x3), s in sign.items():
            terms.append((s, (Correlator.parse(pattern.format(x1, x3)),)))
    for text in ("A2_0 B", "A2_0", "B"):
        terms.append((-2, (Correlator.parse(text),)))
    return CorrelatorPolynomial(-2, tuple(terms), 0, "I1")


def builtin_fnn_star(i: int) -> CorrelatorPolynomial:
    """``I_i``: the star witness with the classical source suspected on branch ``i``.

    ``I_2`` and ``I_3`` are ``I_1`` with the branch parties relabeled by the
    cyclic permutations A1->A2->A3->A1 and its inverse. Bound 0.
    """
    if i not in _STAR_CYCLES:
        raise DomainError(f"star witness index must be 1, 2 or 3, got {i}")
    return _star_i1().relabel(_STAR_CYCLES[i], name=f"I{i}")


def builtin_fnn_bilocal(kind: str) -> CorrelatorPolynomial:
    """Bilocal witnesses ``R_C-NS`` and ``R_NS-C`` (bound 3), including their quadratic terms."""
    p = Correlator.parse
    common = [(2, (p("A_0 B[B1] C_0"),)), (-2, (p("A_0 B[B1] C_1"),))]
    if kind == "C-NS":
        terms = common + [
            (2, (p("A_1 B[B0] C_0"),)), (1, (p("A_1 B[B0] C_1"),)), (-1, (p("B[B0]"),)),
            (1, (p("A_1 B[B0]"), p("C_1"))), (1, (p("B[B0] C_0"), p("C_1"))), (-1, (p("C_0"), p("C_1"))),
        ]
    elif kind == "NS-C":
        terms = common + [
            (1, (p("A_1 B[B0] C_0"),)), (2, (p("A_1 B[B0] C_1"),)), (-1, (p("B[B0]"),)),
            (1, (p("A_1"), p("A_1 B[B0]"))), (1, (p("A_1"), p("B[B0] C_1"))),
            (1, (p("A_1"), p("C_0"))), (-1, (p("A_1"), p("C_1"))), (-1, (p("A_1"), p("A_1"))),
        ]
    else:
        raise DomainError(f"bilocal witness kind must be 'C-NS' or 'NS-C', got {kind!r}")
    return CorrelatorPolynomial(0, tuple(terms), 3, f"R_{kind}")


def builtin(name: str) -> CorrelatorPolynomial:
    """Look up a built-in witness by name: I1, I2, I3, R_C-NS, R_NS-C."""
    key = name.upper().replace("_", "-")
    if key in ("I1", "I2", "I3"):
        return builtin_fnn_star(int(key[1]))
    if key in ("R-C-NS", "C-NS", "RC-NS"):
        return builtin_fnn_bilocal("C-NS")
    if key in ("R-NS-C", "NS-C", "RNS-C"):
        return builtin_fnn_bilocal("NS-C")
    raise DomainError(f"unknown built-in witness {name!r}")


# ----------------------------------------------------- b = 0 reduction

def _branch_scenario() -> Scenario:
    return Scenario(star_scenario().parties[:3])


def evaluate_from_b0_data(i: int, b0_table, p_b0: float, w: CorrelatorPolynomial | None = None) -> float:
    """``I_i`` from GHZ-success-conditioned data ``p(a1,a2,a3 | b=0, x)`` and ``p(b=0)``.

    Every symbol ``X`` without the central party is paired with ``X B``
    (the constant with ``<B>``); the two carry the same coefficient ``c``, and
    ``c(<X B> + <X>) = 2 c p(b=0) <X>_{b=0}``. Only this information enters.

    Parameters
    ----------
    b0_table : ConditionalDistribution over (A1, A2, A3) or an array of shape
        (2, 2, 2, 2, 2, 2) indexed ``[x1, x2, x3, a1, a2, a3]``.
    """
    if not 0.0 <= float(p_b0) <= 1.0:
        raise DomainError(f"p_b0 must lie in [0, 1], got {p_b0}")
    if isinstance(b0_table, ConditionalDistribution):
        q = b0_table
        if q.scenario.names != ("A1", "A2", "A3"):
            raise ScenarioError("b=0 table must be over (A1, A2, A3)")
    else:
        arr = np.asarray(b0_table, dtype=float)
        if arr.shape != (2,) * 6:
            raise ScenarioError(f"b=0 table must have shape (2,)*6, got {arr.shape}")
        sums = arr.reshape(8, 8).sum(axis=1)
        if np.max(np.abs(sums - 1)) > 1e-9 or arr.min() < -1e-12:
            raise DomainError("b=0 table is not normalized per setting")
        q = ConditionalDistribution(_branch_scenario(), arr)
    w = (w or builtin_fnn_star(i)).canonical()
    coeffs: dict[Correlator, Number] = {}
    for c, mono in w.terms:
        if len(mono) != 1:
            raise DomainError("b=0 reduction needs a linear witness")
        coeffs[mono[0]] = c
    central = [s for s in coeffs if "B" in s.parties]
    partner = {Correlator(tuple(f for f in s.factors if f.party != "B"), s.context): s for s in central}
    if {s for s in coeffs if "B" not in s.parties} != {x for x in partner if x.factors}:
        raise DomainError("witness terms do not pair up as <X> with <X B>")
    total = 0.0
    for x, s in partner.items():
        cx = w.constant if not x.factors else coeffs.get(x)
        if cx is None or cx != coeffs[s]:
            raise DomainError(f"coefficients of {x} and {s} differ; b=0 reduction does not apply")
        total += 2 * float(cx) * float(p_b0) * (correlator_value(q, x) if x.factors else 1.0)
    return total


# ---------------------------------------------------- probability form

@dataclass(frozen=True, eq=False)
class ProbabilityWitness:
    """``constant + sum coefficients[x, a] p(a|x)``; violated when the value exceeds ``bound``.

    ``coefficients`` has the scenario's table shape (inputs then outputs)
    and holds ``Fraction`` objects when the witness is exact.
    """

    scenario: Scenario
    coefficients: np.ndarray
    constant: Number = 0
    bound: Number = 0
    name: str = ""

    def __post_init__(self):
        coef = np.asarray(self.coefficients)
        if coef.shape != self.scenario.shape:
            raise ScenarioError(f"coefficient shape {coef.shape} does not match {self.scenario.shape}")
        if coef.dtype != object and not np.all(np.isfinite(coef)):
            raise DomainError("witness coefficients must be finite")
        coef = coef.copy()
        coef.flags.writeable = False
        object.__setattr__(self, "coefficients", coef)

    @property
    def exact(self) -> bool:
        return self.coefficients.dtype == object

    def evaluate(self, d: ConditionalDistribution) -> float:
        if d.scenario != self.scenario:
            raise ScenarioError("distribution scenario does not match the witness")
        coef = self.coefficients.astype(float)
        return float(self.constant) + float(np.sum(coef * d.table))

    def evaluate_exact(self, table: np.ndarray) -> Fraction:
        """Exact value on a table of Fractions (object array)."""
        if table.shape != self.scenario.shape:
            raise ScenarioError("table shape does not match the witness")
        total = Fraction(self.constant)
        for c, p in zip(self.coefficients.ravel(), np.asarray(table).ravel()):
            if c and p:
                total += Fraction(c) * Fraction(p)
        return total

    def to_polynomial(self) -> CorrelatorPolynomial:
        """Exact change of basis from probabilities to full-context correlators.

        For binary outcomes ``p(a|x) = 2^-n sum_S (-1)^{a.S} <S>_x``, so the
        coefficient of ``<S>_x`` is ``2^-n sum_a c(x, a) (-1)^{a.S}``.
        """
        sc = self.scenario
        if any(p.outputs != 2 for p in sc.parties):
            raise DomainError("correlator form needs binary outcomes")
        n = sc.n
        exact = self.exact
        scale = Fraction(1, 2 ** n) if exact else 2.0 ** -n
        const = Fraction(self.constant) if exact else float(self.constant)
        terms = []
        outs = list(itertools.product((0, 1), repeat=n))
        for x in sc.joint_inputs():
            block = self.coefficients[x]
            for subset in itertools.product((0, 1), repeat=n):
                acc = 0
                for a in outs:
                    c = block[a]
                    if c:
                        acc = acc + (-c if sum(ai * si for ai, si in zip(a, subset)) % 2 else c)
                if not acc:
                    continue
                acc = acc * scale
                if not any(subset):
                    const = const + acc
                    continue
                factors = tuple(Factor(p.name, x[q]) for q, p in enumerate(sc.parties) if subset[q])
                context = tuple((p.name, x[q]) for q, p in enumerate(sc.parties)
                                if not subset[q] and p.inputs > 1)
                terms.append((acc, (Correlator(factors, context),)))
        return CorrelatorPolynomial(const, tuple(terms), self.bound, self.name)

    def to_dict(self) -> dict:
        entries = []
        for x in self.scenario.joint_inputs():
            for a in self.scenario.joint_outputs():
                c = self.coefficients[x + a]
                if c:
                    entries.append({"input": list(x), "output": list(a), "coeff": _num_out(c)})
        return {"name": self.name, "scenario": [{"name": p.name, "inputs": p.inputs, "outputs": p.outputs}
                                                for p in self.scenario.parties],
                "constant": _num_out(self.constant), "bound": _num_out(self.bound), "coefficients": entries}

    @classmethod
    def from_dict(cls, data: Mapping) -> ProbabilityWitness:
        sc = Scenario.from_spec((p["name"], p["inputs"], p["outputs"]) for p in data["scenario"])
        values = [_num_in(e["coeff"]) for e in data["coefficients"]]
        exact = all(isinstance(v, (Fraction, int)) for v in values)
        coef = np.zeros(sc.shape, dtype=object if exact else float)
        if exact:
            coef[...] = Fraction(0)
        for e, v in zip(data["coefficients"], values):
            coef[tuple(e["input"]) + tuple(e["output"])] = Fraction(v) if exact else v
        return cls(sc, coef, _num_in(data.get("constant", 0)), _num_in(data.get("bound", 0)), data.get("name", ""))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1)

    @classmethod
    def from_json(cls, text: str) -> ProbabilityWitness:
        return cls.from_dict(json.loads(text))


class CertificateError(ValueError):
    pass


def from_certificate(cert, problem, normalize: bool = True) -> ProbabilityWitness:
    """Witness read off a verified Farkas certificate of an inflation LP.

    The certificate's multipliers on the marginal rows, summed over spectator
    settings, become coefficients on ``p(a, b | x)``; multipliers on all other
    rows contribute ``y_r b_r`` to the constant. With ``normalize`` the result
    is scaled so the white-noise star scores exactly -1/2. No sign change is needed: feasible
    right-hand sides give ``y.b <= y.A x <= 0`` while the target has ``y.b > 0``.
    """
    from . import inflation, lpsolve

    ls = problem.system
    if not lpsolve.verify_certificate(ls, cert):
        raise CertificateError("certificate does not verify against the problem's linear system")
    sc = star_scenario()
    coef = np.empty(sc.shape, dtype=object)
    coef[...] = Fraction(0)
    marginal_rows = set()
    for row, key in problem.marginal_rows:
        coef[key] += cert.y_eq[row]
        marginal_rows.add(row)
    const = sum((y * b for r, (y, b) in enumerate(zip(cert.y_eq, ls.b_eq)) if r not in marginal_rows),
                Fraction(0))
    const += sum((y * b for y, b in zip(cert.y_ineq, ls.b_ineq)), Fraction(0))
    # y.A <= 0 and x >= 0 give y.b <= 0 for every feasible right-hand side, while
    # the target has y.b > 0: y.b read as a function of d is already the witness
    w = ProbabilityWitness(sc, coef, const, 0, f"W{problem.classical_source}")
    if normalize:
        noise = w.evaluate_exact(inflation.white_noise_table())
        if noise < 0:
            k = Fraction(-1, 2) / noise
            w = ProbabilityWitness(sc, w.coefficients * k, w.constant * k, 0, w.name)
    return w
