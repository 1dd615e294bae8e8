"""Few-qubit states, observables and Born-rule simulation of the star and bilocal networks.

Qubit ordering: the star's global state is ordered (A1, B1, A2, B2, A3, B3),
one pair per source, and the central party measures qubits (B1, B2, B3).
An outcome ``a`` in {0, 1} corresponds to eigenvalue ``(-1)**a``; the central
outcome ``b = 0`` is a successful GHZ projection.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import reduce
from typing import Sequence

import numpy as np

from .dist import ConditionalDistribution, DomainError, bilocal_scenario, star_scenario

I2 = np.eye(2, dtype=complex)
SX = np.array([[0, 1], [1, 0]], dtype=complex)
SY = np.array([[0, -1j], [1j, 0]], dtype=complex)
SZ = np.array([[1, 0], [0, -1]], dtype=complex)

_SQ2 = np.sqrt(0.5)
PHI_PLUS = np.array([_SQ2, 0, 0, _SQ2], dtype=complex)
PHI_MINUS = np.array([_SQ2, 0, 0, -_SQ2], dtype=complex)
PSI_MINUS = np.array([0, _SQ2, -_SQ2, 0], dtype=complex)


def kron(*ops: np.ndarray) -> np.ndarray:
    return reduce(np.kron, ops)


def projector(vec: np.ndarray) -> np.ndarray:
    vec = np.asarray(vec, dtype=complex)
    return np.outer(vec, vec.conj())


def is_density_operator(rho: np.ndarray) -> bool:
    if not np.allclose(rho, rho.conj().T, atol=1e-12, rtol=0):
        return False
    if abs(np.trace(rho) - 1) > 1e-12:
        return False
    return bool(np.linalg.eigvalsh(rho).min() >= -1e-10)


def is_observable(obs: np.ndarray) -> bool:
    if not np.allclose(obs, obs.conj().T, atol=1e-12, rtol=0):
        return False
    ev = np.linalg.eigvalsh(obs)
    return bool(np.all(np.minimum(np.abs(ev - 1), np.abs(ev + 1)) <= 1e-10))


def is_projector(p: np.ndarray) -> bool:
    return bool(np.max(np.abs(p @ p - p)) <= 1e-12)


def make_entangled_pair(kind: str = "phi_plus", visibility: float = 1.0) -> np.ndarray:
    """Isotropic two-qubit state ``v |psi><psi| + (1 - v) I/4``."""
    if not 0.0 <= visibility <= 1.0:
        raise DomainError(f"visibility must lie in [0, 1], got {visibility}")
    states = {"phi_plus": PHI_PLUS, "singlet": PSI_MINUS}
    try:
        psi = states[kind]
    except KeyError:
        raise DomainError(f"unknown pair kind {kind!r}") from None
    return visibility * projector(psi) + (1 - visibility) * np.eye(4) / 4


def branch_observable(theta: float, phi: float = 0.0) -> np.ndarray:
    """``sin(theta)cos(phi) X + sin(theta)sin(phi) Y + cos(theta) Z``."""
    st = np.sin(theta)
    return st * np.cos(phi) * SX + st * np.sin(phi) * SY + np.cos(theta) * SZ


def outcome_projector(obs: np.ndarray, outcome: int) -> np.ndarray:
    """Projector onto the ``(-1)**outcome`` eigenspace of a +-1 observable."""
    return (np.eye(obs.shape[0]) + (-1) ** outcome * obs) / 2


def ghz_state(n: int, sign: int = 1) -> np.ndarray:
    if n < 2:
        raise DomainError(f"GHZ state needs at least 2 qubits, got {n}")
    vec = np.zeros(2 ** n, dtype=complex)
    vec[0] = _SQ2
    vec[-1] = sign * _SQ2
    return vec


def ghz_projector(n: int) -> np.ndarray:
    return projector(ghz_state(n))


@dataclass(frozen=True)
class StarStrategy:
    """Measurement angles (radians) shared by every branch, and one visibility per source."""

    theta0: float
    theta1: float
    phi0: float = 0.0
    phi1: float = 0.0
    visibility: tuple[float, float, float] = (1.0, 1.0, 1.0)

    def __post_init__(self):
        v = self.visibility
        if np.ndim(v) == 0:
            v = (float(v),) * 3
        v = tuple(float(x) for x in v)
        if len(v) != 3:
            raise DomainError("need one visibility per source")
        if any(not 0.0 <= x <= 1.0 for x in v):
            raise DomainError(f"visibilities must lie in [0, 1], got {v}")
        object.__setattr__(self, "visibility", v)

    def observables(self) -> tuple[np.ndarray, np.ndarray]:
        return (branch_observable(self.theta0, self.phi0),
                branch_observable(self.theta1, self.phi1))


def _star_state(visibility: Sequence[float]) -> np.ndarray:
    """Three-pair state reordered to (A1, A2, A3, B1, B2, B3)."""
    rho = kron(*(make_entangled_pair("phi_plus", v) for v in visibility))
    rho = rho.reshape([2] * 12)
    order = [0, 2, 4, 1, 3, 5]
    rho = rho.transpose(order + [6 + k for k in order])
    return rho.reshape(64, 64)


def simulate_star(strategy: StarStrategy, method: str = "born") -> ConditionalDistribution:
    """``p(a1, a2, a3, b | x1, x2, x3)`` for the three-branch star.

    ``method="born"`` traces the full 64-dimensional state; ``"steering"``
    first maps each branch effect onto the central qubit it is entangled
    with and works in 8 dimensions. Both are exact.
    """
    obs = strategy.observables()
    effects = [[outcome_projector(o, a) for a in (0, 1)] for o in obs]
    g = ghz_projector(3)
    central = (g, np.eye(8) - g)
    table = np.zeros(star_scenario().shape)
    if method == "born":
        rho = _star_state(strategy.visibility)
        for x in itertools.product((0, 1), repeat=3):
            for a in itertools.product((0, 1), repeat=3):
                branch = kron(*(effects[x[k]][a[k]] for k in range(3)))
                for b in (0, 1):
                    op = np.kron(branch, central[b])
                    table[x + (0,) + a + (b,)] = np.einsum("ij,ji->", op, rho).real
    elif method == "steering":
        # tr_A[(E x I) rho_v] = v E^T/2 + (1 - v) tr(E) I/4 for isotropic phi+
        for x in itertools.product((0, 1), repeat=3):
            for a in itertools.product((0, 1), repeat=3):
                ks = []
                for k in range(3):
                    e = effects[x[k]][a[k]]
                    v = strategy.visibility[k]
                    ks.append(v * e.T / 2 + (1 - v) * np.trace(e) * I2 / 4)
                kk = kron(*ks)
                for b in (0, 1):
                    table[x + (0,) + a + (b,)] = np.einsum("ij,ji->", central[b], kk).real
    else:
        raise DomainError(f"unknown method {method!r}")
    return ConditionalDistribution(star_scenario(), _clip_roundoff(table))


def _clip_roundoff(table: np.ndarray) -> np.ndarray:
    # traces of PSD products can come out at -1e-17
    assert table.min() > -1e-13
    return np.maximum(table, 0.0)


def bilocal_measurements() -> tuple[list[np.ndarray], list[np.ndarray], list[np.ndarray]]:
    """Observables of A and C and the three-outcome central measurement."""
    a = [SX, SZ]
    c = [(SZ + SX) / np.sqrt(2), (SZ - SX) / np.sqrt(2)]
    bp, bm = projector(PHI_PLUS), projector(PHI_MINUS)
    return a, c, [bp, bm, np.eye(4) - bp - bm]


def simulate_bilocal() -> ConditionalDistribution:
    """``p(a, b, c | x, z)`` with two singlets and a partial Bell-state measurement.

    Qubits are ordered (A, B1, B2, C); b = 0, 1 resolve phi+ and phi-,
    b = 2 collects the unresolved events.
    """
    a_obs, c_obs, central = bilocal_measurements()
    rho = kron(make_entangled_pair("singlet"), make_entangled_pair("singlet"))
    sc = bilocal_scenario()
    table = np.zeros(sc.shape)
    for x, z in itertools.product((0, 1), repeat=2):
        for a, b, c in itertools.product((0, 1), range(3), (0, 1)):
            op = kron(outcome_projector(a_obs[x], a), central[b], outcome_projector(c_obs[z], c))
            table[x, 0, z, a, b, c] = np.einsum("ij,ji->", op, rho).real
    return ConditionalDistribution(sc, _clip_roundoff(table))
