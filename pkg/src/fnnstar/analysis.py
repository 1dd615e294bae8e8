"""Closed-form star value, angle optimization, critical visibilities and sweeps.

All angles are in radians. Every branch uses the same pair of measurements
(``theta0, phi0`` for input 0, ``theta1, phi1`` for input 1).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .dist import DomainError
from .qsim import StarStrategy, simulate_star
from .witness import CorrelatorPolynomial, builtin_fnn_star, evaluate

CSV_COLUMNS = ("theta0", "theta1", "phi0", "phi1", "v", "value")


class NoViolationError(DomainError):
    """The witness is not violated even at full visibility."""


def _check_v(v) -> None:
    arr = np.asarray(v, dtype=float)
    if np.any(arr < 0) or np.any(arr > 1):
        raise DomainError(f"visibility must lie in [0, 1], got {v}")


def closed_form_value(theta0, theta1, v=1.0):
    """``I_1`` of the ideal star under isotropic noise of visibility ``v`` (phi = 0).

    ``(v^2/4) [v s0 (s1^2 - 2 s0 s1 - s0^2) - 2 c0 c1 - c0^2 + c1^2] - 1/2``
    with ``s_k = sin(theta_k)``, ``c_k = cos(theta_k)``; written this way it
    is continuous at ``v = 0``. Accepts numpy arrays (broadcast).
    """
    _check_v(v)
    s0, s1, c0, c1 = np.sin(theta0), np.sin(theta1), np.cos(theta0), np.cos(theta1)
    v = np.asarray(v, dtype=float)
    val = v ** 2 / 4 * (v * s0 * (s1 ** 2 - 2 * s0 * s1 - s0 ** 2) - 2 * c0 * c1 - c0 ** 2 + c1 ** 2) - 0.5
    return float(val) if np.ndim(val) == 0 else val


# ------------------------------------------------------ batched evaluator

def _steered(theta, phi, v):
    """Entries ``(m00, m01, m10, m11)`` of ``v M^T / 2`` for ``M = n . sigma``."""
    c, s = np.cos(theta), np.sin(theta)
    return (v * c / 2, v * s * np.exp(1j * phi) / 2, v * s * np.exp(-1j * phi) / 2, -v * c / 2)


def star_value(w: CorrelatorPolynomial | int, theta0, theta1, phi0=0.0, phi1=0.0, v=1.0):
    """Value of a linear star witness on the ideal star, vectorized over angles.

    Works in the steering picture: each branch effect acts on the central
    qubit as ``K = v E^T / 2 + (1 - v) tr(E) I / 4``. For a correlator over
    branch set ``X`` the signed sum of effects is ``v M^T / 2`` on ``X`` and
    ``I / 2`` elsewhere; with the GHZ projector ``P`` this gives
    ``<X> = [X empty]`` and ``<X B> = 2 tr(P O_X) - <X>``. ``v`` may be a
    scalar or a triple of per-source visibilities.
    """
    if isinstance(w, int):
        w = builtin_fnn_star(w)
    vs = np.broadcast_to(np.asarray(v, dtype=float), (3,)) if np.ndim(v) <= 1 else v
    _check_v(vs)
    ang = {0: (theta0, phi0), 1: (theta1, phi1)}
    half = (0.5, 0.0, 0.0, 0.5)
    branches = ("A1", "A2", "A3")
    total = np.asarray(float(w.constant))
    for coeff, mono in w.terms:
        if len(mono) != 1:
            raise DomainError("batched evaluation supports linear witnesses only")
        sym = mono[0]
        names = {f.party: f for f in sym.factors}
        if set(names) - {"A1", "A2", "A3", "B"}:
            raise DomainError(f"unexpected party in {sym}")
        xs = [names[b] for b in branches if b in names]
        if not xs:
            value = np.asarray(-0.75 if "B" in names else 1.0)  # <B> = 2 tr(P)/8 - 1
        elif "B" not in names:
            value = np.asarray(0.0)
        else:
            ops = []
            for k, b in enumerate(branches):
                if b in names:
                    ops.append(_steered(*ang[names[b].input], vs[k]))
                else:
                    ops.append(half)
            # tr(P_GHZ A (x) B (x) C) = (A00B00C00 + A01B01C01 + A10B10C10 + A11B11C11) / 2
            tr = sum(ops[0][e] * ops[1][e] * ops[2][e] for e in range(4)) / 2
            value = 2 * np.real(tr)
        total = total + float(coeff) * value
    return float(total) if total.ndim == 0 else total


def simulated_value(w: CorrelatorPolynomial | int, theta0, theta1, phi0=0.0, phi1=0.0, v=1.0) -> float:
    """Value from the full Born-rule simulation (one angle set)."""
    if isinstance(w, int):
        w = builtin_fnn_star(w)
    d = simulate_star(StarStrategy(theta0, theta1, phi0, phi1, v))
    return evaluate(w, d).value


# ------------------------------------------------------------ optimizer

@dataclass(frozen=True)
class Optimum:
    theta0: float
    theta1: float
    phi0: float
    phi1: float
    value: float

    @property
    def angles(self) -> tuple[float, float, float, float]:
        return self.theta0, self.theta1, self.phi0, self.phi1


@dataclass(frozen=True)
class OptimizationResult:
    best: Optimum
    optima: tuple[Optimum, ...]  # every refined optimum within 1e-6 of the best
    grid_best: float


def _wrap(a: float) -> float:
    return (a + math.pi) % (2 * math.pi) - math.pi


def coordinate_descent(f: Callable[[np.ndarray], float], x0: Sequence[float], step: float,
                       tol: float = 1e-8, max_iter: int = 100_000) -> tuple[np.ndarray, float]:
    """Maximize ``f`` by coordinate steps that halve whenever no step improves.

    Stops once the step falls below ``tol``; the value never decreases.
    """
    x = np.array(x0, dtype=float)
    fx = f(x)
    it = 0
    while step >= tol and it < max_iter:
        moved = False
        for i in range(len(x)):
            for sgn in (1, -1):
                y = x.copy()
                y[i] += sgn * step
                fy = f(y)
                it += 1
                if fy > fx:
                    x, fx, moved = y, fy, True
                    break
        if not moved:
            step /= 2
    return x, fx


def _local_maxima(values: np.ndarray, count: int) -> list[tuple[int, ...]]:
    """Indices of the ``count`` best periodic local maxima of a grid."""
    mask = np.ones(values.shape, dtype=bool)
    for ax in range(values.ndim):
        for sh in (1, -1):
            mask &= values >= np.roll(values, sh, axis=ax)
    idx = np.argwhere(mask)
    order = np.argsort(-values[mask], kind="stable")
    return [tuple(idx[i]) for i in order[:count]]


def optimize_angles(resolution: float = 0.02, tol: float = 1e-8, allow_phi: bool = False,
                    witness: int | CorrelatorPolynomial = 1, phi_resolution: float = math.pi / 8,
                    grid: Iterable[Sequence[float]] | None = None, refine: bool = True,
                    n_starts: int = 8) -> OptimizationResult:
    """Grid search over [-pi, pi] followed by coordinate-descent refinement at v = 1.

    Without ``allow_phi`` the objective is the closed form (for ``I_1``) or the
    batched steering evaluator; with ``allow_phi`` the azimuths are searched
    too, on a coarser grid of step ``phi_resolution`` for all four angles.
    ``grid`` replaces the regular grid by explicit points ``(theta0, theta1[,
    phi0, phi1])``. All refined optima within 1e-6 of the best are reported,
    since reflections of the angles give equivalent maxima.
    """
    if resolution <= 0 or phi_resolution <= 0:
        raise DomainError("grid resolution must be positive")
    w = builtin_fnn_star(witness) if isinstance(witness, int) else witness
    use_closed = not allow_phi and w == builtin_fnn_star(1)
    dim = 4 if allow_phi else 2

    def batch(t0, t1, p0=0.0, p1=0.0):
        if use_closed:
            return closed_form_value(t0, t1, 1.0)
        return star_value(w, t0, t1, p0, p1, 1.0)

    if grid is not None:
        pts = np.array([list(p) + [0.0] * (dim - len(p)) for p in grid], dtype=float)
        if pts.ndim != 2 or pts.shape[1] != dim:
            raise DomainError("grid points have the wrong dimension")
        vals = np.asarray(batch(*pts.T), dtype=float).reshape(-1)
        starts = [pts[i] for i in np.argsort(-vals, kind="stable")[:n_starts]]
        grid_best = float(vals.max())
        step = resolution
    else:
        step = phi_resolution if allow_phi else resolution
        axis = np.arange(-math.pi, math.pi, step)
        mesh = np.meshgrid(*([axis] * dim), indexing="ij")
        vals = np.asarray(batch(*mesh), dtype=float)
        grid_best = float(vals.max())
        starts = [np.array([axis[i] for i in idx]) for idx in _local_maxima(vals, n_starts)]

    def f(x):
        return float(batch(*x))

    found: list[Optimum] = []
    for x0 in starts:
        if refine:
            x, fx = coordinate_descent(f, x0, step / 2, tol)
            x = np.array([_wrap(a) for a in x])
        else:
            x, fx = x0, f(x0)
        full = [float(a) for a in x] + [0.0] * (4 - dim)
        found.append(Optimum(*full, value=float(fx)))
    best_value = max(o.value for o in found)
    optima = []
    for o in sorted(found, key=lambda o: (-o.value, o.angles)):
        if o.value < best_value - 1e-6:
            continue
        if any(max(abs(_wrap(a - b)) for a, b in zip(o.angles, p.angles)) < 1e-4 for p in optima):
            continue
        optima.append(o)
    return OptimizationResult(optima[0], tuple(optima), grid_best)


# ---------------------------------------------------- critical visibility

def _value_function(theta0, theta1, phi0, phi1, backend, witness):
    w = builtin_fnn_star(witness) if isinstance(witness, int) else witness
    if backend == "closed_form":
        if phi0 or phi1:
            raise DomainError("the closed form covers phi = 0 only; use the simulation backend")
        if w != builtin_fnn_star(1):
            raise DomainError("the closed form is specific to I1")
        return lambda v: closed_form_value(theta0, theta1, v)
    if backend == "simulation":
        return lambda v: simulated_value(w, theta0, theta1, phi0, phi1, v)
    raise DomainError(f"unknown backend {backend!r}")


def critical_visibility(theta0: float, theta1: float, phi0: float = 0.0, phi1: float = 0.0,
                        backend: str = "closed_form", tol: float = 1e-6,
                        witness: int | CorrelatorPolynomial = 1) -> float:
    """Smallest visibility at which the witness is violated, by bisection on [0, 1]."""
    f = _value_function(theta0, theta1, phi0, phi1, backend, witness)
    hi_val = f(1.0)
    if hi_val <= 0:
        raise NoViolationError(f"no violation at any visibility (value at v=1 is {hi_val:.6g})")
    lo, hi = 0.0, 1.0
    if f(lo) > 0:
        return 0.0
    while hi - lo > tol:
        mid = (lo + hi) / 2
        if f(mid) > 0:
            hi = mid
        else:
            lo = mid
    return (lo + hi) / 2


# --------------------------------------------------------------- sweeps

@dataclass(frozen=True)
class SweepResult:
    """Rows ``(theta0, theta1, phi0, phi1, v, value)`` plus the best row and ``v_crit``."""

    rows: np.ndarray = field(repr=False)  # shape (n, 6)
    optimum: dict = field(default_factory=dict)

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=float).reshape(-1, len(CSV_COLUMNS))
        object.__setattr__(self, "rows", rows)

    @property
    def values(self) -> np.ndarray:
        return self.rows[:, -1]

    def column(self, name: str) -> np.ndarray:
        return self.rows[:, CSV_COLUMNS.index(name)]

    def to_csv(self, fh) -> None:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(CSV_COLUMNS)
        for r in self.rows:
            wr.writerow([f"{x:.12g}" for x in r])


def visibility_sweep(theta0: float, theta1: float, vs: Iterable[float], phi0: float = 0.0,
                     phi1: float = 0.0, backend: str = "closed_form",
                     witness: int | CorrelatorPolynomial = 1) -> SweepResult:
    """Witness value at each visibility in ``vs``."""
    vs = [float(v) for v in vs]
    _check_v(vs)
    f = _value_function(theta0, theta1, phi0, phi1, backend, witness)
    rows = [(theta0, theta1, phi0, phi1, v, f(v)) for v in vs]
    opt = {"theta0": theta0, "theta1": theta1, "phi0": phi0, "phi1": phi1}
    best = max(rows, key=lambda r: r[-1]) if rows else None
    if best is not None:
        opt.update(v=best[4], value=best[5])
    try:
        opt["v_crit"] = critical_visibility(theta0, theta1, phi0, phi1, backend, witness=witness)
    except NoViolationError:
        opt["v_crit"] = None
    return SweepResult(np.array(rows).reshape(-1, 6), opt)


def angle_sweep(theta0s: Iterable[float], theta1s: Iterable[float], v: float = 1.0,
                phi0: float = 0.0, phi1: float = 0.0, witness: int | CorrelatorPolynomial = 1) -> SweepResult:
    """Witness value on the product grid ``theta0s x theta1s`` (steering evaluator)."""
    _check_v(v)
    t0, t1 = np.meshgrid(np.asarray(list(theta0s), float), np.asarray(list(theta1s), float), indexing="ij")
    vals = np.asarray(star_value(witness, t0, t1, phi0, phi1, v)) * np.ones_like(t0)
    rows = np.stack([t0.ravel(), t1.ravel(), np.full(t0.size, phi0), np.full(t0.size, phi1),
                     np.full(t0.size, v), vals.ravel()], axis=1)
    opt = {}
    if len(rows):
        i = int(np.argmax(rows[:, -1]))
        opt = dict(zip(CSV_COLUMNS, (float(x) for x in rows[i])))
    return SweepResult(rows, opt)
