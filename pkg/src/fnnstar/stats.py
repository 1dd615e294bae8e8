"""Coincidence-count ingestion, witness estimates, bootstrap errors and p-values.

Star data is conditioned on a successful GHZ projection: one count table per
setting ``(x1, x2, x3)`` over ``(a1, a2, a3)``, plus a projection record
(``ghz_events`` out of ``successful_runs``) estimating ``p(b=0)``. Bilocal
data counts ``(a, b, c)`` per setting ``(x, z)``; events with ``b = 2``
are doubled before normalization, following the data's post-processing.
"""

from __future__ import annotations

import csv
import hashlib
import itertools
import math
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable

import numpy as np
from scipy.special import erfc

from .dist import ConditionalDistribution, DomainError, bilocal_scenario
from .witness import builtin_fnn_bilocal, builtin_fnn_star, evaluate, evaluate_from_b0_data

HEADERS = {
    "star-b0": ("x1", "x2", "x3", "a1", "a2", "a3", "count"),
    "bilocal": ("x", "z", "a", "b", "c", "count"),
}
# (input cardinalities, output cardinalities) per tag
SHAPES = {
    "star-b0": ((2, 2, 2), (2, 2, 2)),
    "bilocal": ((2, 2), (2, 3, 2)),
}
STAR_WITNESSES = ("I1", "I2", "I3")
BILOCAL_WITNESSES = ("R_C-NS", "R_NS-C")
DEFAULT_RESAMPLES = 1000


class ParseError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class CountTable:
    """Integer counts indexed ``[inputs..., outputs...]`` with a scenario tag."""

    tag: str
    counts: np.ndarray
    sources: tuple[str, ...] = ()

    def __post_init__(self):
        if self.tag not in SHAPES:
            raise ParseError(f"unknown count table tag {self.tag!r}")
        ins, outs = SHAPES[self.tag]
        arr = np.asarray(self.counts, dtype=np.int64)
        if arr.shape != ins + outs:
            raise ParseError(f"count array shape {arr.shape} does not match {ins + outs}")
        if arr.min(initial=0) < 0:
            raise ParseError("counts must be nonnegative")
        arr = arr.copy()
        arr.flags.writeable = False
        object.__setattr__(self, "counts", arr)

    @property
    def n_inputs(self) -> int:
        return len(SHAPES[self.tag][0])

    def totals(self) -> np.ndarray:
        """Per-setting totals, indexed by the inputs."""
        return self.counts.reshape(self.counts.shape[:self.n_inputs] + (-1,)).sum(axis=-1)

    def scaled(self, k: int) -> CountTable:
        return CountTable(self.tag, self.counts * k, self.sources)

    def frequencies(self) -> np.ndarray:
        tot = self.totals()
        if np.any(tot == 0):
            raise DomainError("a setting has no counts")
        return self.counts / tot.reshape(tot.shape + (1,) * (self.counts.ndim - self.n_inputs))


@dataclass(frozen=True)
class ProjectionRecord:
    successful_runs: int
    ghz_events: int

    def __post_init__(self):
        if self.successful_runs < 0 or not 0 <= self.ghz_events <= self.successful_runs:
            raise DomainError("need 0 <= ghz_events <= successful_runs")

    @classmethod
    def parse(cls, text: str) -> ProjectionRecord:
        """From ``"ghz/runs"``, e.g. ``"2019/15562"``."""
        m = re.fullmatch(r"\s*(\d+)\s*/\s*(\d+)\s*", text)
        if not m:
            raise ParseError(f"projection record must look like 'events/runs', got {text!r}")
        return cls(int(m.group(2)), int(m.group(1)))


@dataclass(frozen=True)
class MeasurementResult:
    value: float
    sigma: float
    p_value: float | None = None
    method: dict = field(default_factory=dict)


# ------------------------------------------------------------------ parse

def parse_counts(paths: str | Path | Iterable[str | Path], tag: str | None = None,
                 allow_missing: bool = False) -> CountTable:
    """Read one or more count CSV files into a single table.

    The header selects the tag unless given. Malformed rows, negative counts
    and duplicate keys are errors; so are missing rows and settings, unless
    ``allow_missing`` treats them as zero counts.
    """
    if isinstance(paths, (str, Path)):
        paths = [paths]
    paths = [Path(p) for p in paths]
    if not paths:
        raise ParseError("no count files given")
    counts = None
    seen: set[tuple[int, ...]] = set()
    for path in paths:
        with open(path, newline="") as fh:
            rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
        if not rows:
            raise ParseError(f"{path}: empty file")
        header = tuple(c.strip() for c in rows[0])
        file_tag = next((t for t, h in HEADERS.items() if h == header), None)
        if file_tag is None:
            raise ParseError(f"{path}: unrecognized header {','.join(header)}")
        if tag is None:
            tag = file_tag
        elif tag != file_tag:
            raise ParseError(f"{path}: header is for {file_tag!r}, expected {tag!r}")
        ins, outs = SHAPES[tag]
        if counts is None:
            counts = np.zeros(ins + outs, dtype=np.int64)
        for lineno, row in enumerate(rows[1:], start=2):
            if len(row) != len(header):
                raise ParseError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            try:
                vals = [int(c) for c in row]
            except ValueError:
                raise ParseError(f"{path}:{lineno}: non-integer field in {row}") from None
            key, n = tuple(vals[:-1]), vals[-1]
            if any(not 0 <= k < card for k, card in zip(key, ins + outs)):
                raise ParseError(f"{path}:{lineno}: index out of range in {row}")
            if n < 0:
                raise ParseError(f"{path}:{lineno}: negative count")
            if key in seen:
                raise ParseError(f"{path}:{lineno}: duplicate row for {key}")
            seen.add(key)
            counts[key] = n
    expected = set(itertools.product(*(range(c) for c in ins + outs)))
    missing = expected - seen
    if missing and not allow_missing:
        settings = sorted({k[:len(ins)] for k in missing})
        raise ParseError(f"{len(missing)} count rows missing (settings {settings}); "
                         "pass allow_missing to treat them as zero")
    return CountTable(tag, counts, tuple(str(p) for p in paths))


def fixture_paths(kind: str) -> list[Path]:
    """Shipped supplementary count tables: ``kind`` is "star" or "bilocal"."""
    if kind not in ("star", "bilocal"):
        raise DomainError(f"fixture kind must be 'star' or 'bilocal', got {kind!r}")
    base = resources.files("fnnstar") / "fixtures" / kind
    return sorted(Path(str(p)) for p in base.iterdir() if p.name.endswith(".csv"))


def sha256(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


# ------------------------------------------------------------- estimates

def estimate_p_b0(rec: ProjectionRecord) -> MeasurementResult:
    """Binomial estimate of the GHZ success probability."""
    if rec.successful_runs == 0:
        raise DomainError("projection record has no successful runs")
    p = rec.ghz_events / rec.successful_runs
    return MeasurementResult(p, math.sqrt(p * (1 - p) / rec.successful_runs),
                             method={"estimator": "binomial", "runs": rec.successful_runs,
                                     "events": rec.ghz_events})


def _require_settings(counts: CountTable, tag: str) -> None:
    if counts.tag != tag:
        raise DomainError(f"expected a {tag!r} count table, got {counts.tag!r}")
    tot = counts.totals()
    if np.any(tot == 0):
        missing = [tuple(int(v) for v in i) for i in np.argwhere(tot == 0)]
        raise DomainError(f"settings without counts: {missing}")


@dataclass(frozen=True)
class StarEstimate:
    conditional: np.ndarray  # p(a1, a2, a3 | b=0, x), indexed [x1, x2, x3, a1, a2, a3]
    joint: np.ndarray  # p(a1, a2, a3, b=0 | x)
    p_b0: float
    values: dict


def _star_values(q: np.ndarray, p_b0: float) -> dict:
    return {f"I{i}": evaluate_from_b0_data(i, q, p_b0) for i in (1, 2, 3)}


def ingest_star(counts: CountTable, p_b0: MeasurementResult | float) -> StarEstimate:
    """Per-setting frequencies times ``p(b=0)``, and ``I_1, I_2, I_3`` by the b=0 reduction."""
    _require_settings(counts, "star-b0")
    p = float(p_b0.value if isinstance(p_b0, MeasurementResult) else p_b0)
    q = counts.frequencies()
    return StarEstimate(q, q * p, p, _star_values(q, p))


@dataclass(frozen=True)
class BilocalEstimate:
    distribution: ConditionalDistribution
    values: dict
    metadata: dict = field(default_factory=dict)


def _bilocal_distribution(counts: np.ndarray) -> ConditionalDistribution:
    c = counts.astype(float).copy()
    c[:, :, :, 2, :] *= 2
    tot = c.sum(axis=(2, 3, 4), keepdims=True)
    table = (c / tot)[:, None]  # (x, B input, z, a, b, c)
    return ConditionalDistribution(bilocal_scenario(), table)


def _bilocal_values(d: ConditionalDistribution) -> dict:
    return {f"R_{k}": evaluate(builtin_fnn_bilocal(k), d).value for k in ("C-NS", "NS-C")}


def ingest_bilocal(counts: CountTable) -> BilocalEstimate:
    """Double the ``b = 2`` counts, normalize per setting and evaluate both bilocal witnesses."""
    _require_settings(counts, "bilocal")
    d = _bilocal_distribution(counts.counts)
    return BilocalEstimate(d, _bilocal_values(d), {"b2_doubled": True})


# -------------------------------------------------------------- bootstrap

def bootstrap_samples(counts: CountTable, witness: str, n_resamples: int = DEFAULT_RESAMPLES,
                      seed: int = 0, projection: ProjectionRecord | None = None,
                      p_b0: float | None = None) -> np.ndarray:
    """Witness values on ``n_resamples`` multinomial resamples of the data.

    Resample ``i`` draws from ``numpy.random.default_rng([seed, i])``, so the
    result does not depend on evaluation order. Star data also resamples
    ``p(b=0)`` binomially from ``projection``, or holds it at ``p_b0``.
    """
    if n_resamples < 100:
        raise DomainError("need at least 100 resamples")
    flat = counts.counts.reshape(counts.totals().size, -1)
    tot = flat.sum(axis=1)
    probs = flat / np.maximum(tot, 1)[:, None]
    out = np.empty(n_resamples)
    if counts.tag == "star-b0":
        if witness not in STAR_WITNESSES:
            raise DomainError(f"star data supports {STAR_WITNESSES}, got {witness!r}")
        i = int(witness[1])
        w = builtin_fnn_star(i)
        if projection is not None:
            p_hat = estimate_p_b0(projection).value
        elif p_b0 is None:
            raise DomainError("star bootstrap needs a projection record or a fixed p_b0")
        for r in range(n_resamples):
            rng = np.random.default_rng([seed, r])
            sample = np.stack([rng.multinomial(n, p) for n, p in zip(tot, probs)])
            q = (sample / tot[:, None]).reshape(counts.counts.shape)
            pb = (rng.binomial(projection.successful_runs, p_hat) / projection.successful_runs
                  if projection is not None else float(p_b0))
            out[r] = evaluate_from_b0_data(i, q, pb, w)
    elif counts.tag == "bilocal":
        if witness not in BILOCAL_WITNESSES:
            raise DomainError(f"bilocal data supports {BILOCAL_WITNESSES}, got {witness!r}")
        w = builtin_fnn_bilocal(witness[2:])
        for r in range(n_resamples):
            rng = np.random.default_rng([seed, r])
            sample = np.stack([rng.multinomial(n, p) for n, p in zip(tot, probs)])
            out[r] = evaluate(w, _bilocal_distribution(sample.reshape(counts.counts.shape))).value
    else:
        raise DomainError(f"unsupported tag {counts.tag!r}")
    return out


def bootstrap_uncertainty(counts: CountTable, witness: str, n_resamples: int = DEFAULT_RESAMPLES,
                          seed: int = 0, projection: ProjectionRecord | None = None,
                          p_b0: float | None = None) -> float:
    """Sample standard deviation of the bootstrapped witness values."""
    return float(np.std(bootstrap_samples(counts, witness, n_resamples, seed, projection, p_b0), ddof=1))


def p_value(value: float, sigma: float, bound: float) -> float:
    """One-sided Gaussian probability of a result at or below ``bound``.

    ``P(X <= bound)`` for ``X ~ N(value, sigma^2)``, i.e.
    ``erfc((value - bound) / (sigma sqrt 2)) / 2``.
    """
    if not sigma > 0:
        raise DomainError(f"sigma must be positive, got {sigma}")
    return float(0.5 * erfc((value - bound) / (sigma * math.sqrt(2))))


# ------------------------------------------------------------ full reports

def _bounds(name: str) -> float:
    return 0.0 if name.startswith("I") else 3.0


def measure(counts: CountTable, projection: ProjectionRecord | None = None,
            n_resamples: int = DEFAULT_RESAMPLES, seed: int = 0) -> dict[str, MeasurementResult]:
    """Central values, bootstrap sigmas and p-values for every witness the data supports."""
    if counts.tag == "star-b0":
        if projection is None:
            raise DomainError("star data needs a projection record for p(b=0)")
        values = ingest_star(counts, estimate_p_b0(projection)).values
    else:
        values = ingest_bilocal(counts).values
    out = {}
    for name, value in values.items():
        sigma = bootstrap_uncertainty(counts, name, n_resamples, seed, projection)
        pv = p_value(value, sigma, _bounds(name)) if sigma > 0 else (0.0 if value > _bounds(name) else 1.0)
        out[name] = MeasurementResult(value, sigma, pv, {"bootstrap_n": n_resamples, "seed": seed})
    return out
