"""Seeded random instances for every construction family.

Relations such as ``T1 T2 = Q T2 T1`` are linear in ``T1`` once ``T2`` and
``Q`` are fixed, so a feasible ``T1`` is drawn from the null space of that
linear map.  To make the null space non-trivial ``T2`` is a weighted shift
(nilpotent) in a random unitary frame and ``Q`` is diagonal in the same
frame.  Every candidate is residual-gated; a family that keeps failing the
gate raises :class:`~dilatron.errors.GenerationFailed`.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import null_space

from .config import resolve_tol
from .errors import GenerationFailed
from .numkernel import adj, opnorm

__all__ = [
    "random_unitary",
    "random_contraction",
    "q_commuting_pair",
    "intertwining_triple",
    "commuting_pair",
    "weyl_tree_operators",
    "MAX_ATTEMPTS",
]

MAX_ATTEMPTS = 100


def random_unitary(rng: np.random.Generator, d: int) -> np.ndarray:
    """Haar-distributed unitary (QR of a complex Gaussian, phases fixed)."""
    z = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    q, r = np.linalg.qr(z)
    ph = np.diag(r) / np.abs(np.diag(r))
    return q * ph


def random_contraction(rng: np.random.Generator, d: int, norm: float | None = None) -> np.ndarray:
    """Complex Gaussian matrix rescaled to the given norm (default uniform in (0, 1])."""
    z = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    target = rng.uniform(0.2, 1.0) if norm is None else norm
    nz = opnorm(z)
    return z * (target / nz) if nz > 0 else z


def _shift(rng: np.random.Generator, d: int) -> np.ndarray:
    s = np.zeros((d, d), dtype=complex)
    for i in range(d - 1):
        s[i + 1, i] = rng.uniform(0.3, 1.0) * np.exp(2j * np.pi * rng.uniform())
    return s


def _relation_map(position: str, t2: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Matrix of ``X -> X T2 - rhs(X)`` on row-major vectorized ``X``."""
    d = t2.shape[0]
    cols = []
    for k in range(d * d):
        e = np.zeros(d * d, dtype=complex)
        e[k] = 1
        x = e.reshape(d, d)
        rhs = {"L": q @ t2 @ x, "M": t2 @ q @ x, "R": t2 @ x @ q}[position]
        cols.append((x @ t2 - rhs).ravel())
    return np.array(cols).T


def _residual(position: str, t1, t2, q) -> float:
    rhs = {"L": q @ t2 @ t1, "M": t2 @ q @ t1, "R": t2 @ t1 @ q}[position]
    return opnorm(t1 @ t2 - rhs)


def q_commuting_pair(
    rng: np.random.Generator,
    d: int,
    position: str = "L",
    unitary_q: bool = True,
    norm1: float | None = None,
    norm2: float | None = None,
    tol: float | None = None,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Draw ``(T1, T2, Q)`` with the relation of ``position``.

    ``Q`` is unitary when ``unitary_q`` is set, otherwise a diagonal
    contraction.  Norms default to random values in ``[0.3, 0.9]``.
    """
    tol = resolve_tol(tol) * 1e-2
    position = str(position).upper()[0]
    if d == 1:
        return _scalar_pair(rng, unitary_q, norm1, norm2)
    for _ in range(MAX_ATTEMPTS):
        u = random_unitary(rng, d)
        t2 = _shift(rng, d)
        if unitary_q:
            qd = np.exp(2j * np.pi * rng.uniform(size=d))
        else:
            qd = rng.uniform(0.2, 1.0, size=d) * np.exp(2j * np.pi * rng.uniform(size=d))
        q = np.diag(qd)
        ns = null_space(_relation_map(position, t2, q))
        if ns.shape[1] == 0:
            continue
        coef = rng.normal(size=ns.shape[1]) + 1j * rng.normal(size=ns.shape[1])
        t1 = (ns @ coef).reshape(d, d)
        if opnorm(t1) < 1e-6:
            continue
        t1 = u @ t1 @ adj(u)
        t2 = u @ t2 @ adj(u)
        q = u @ q @ adj(u)
        n1 = rng.uniform(0.3, 0.9) if norm1 is None else norm1
        n2 = rng.uniform(0.3, 0.9) if norm2 is None else norm2
        t1 = t1 * (n1 / opnorm(t1))
        t2 = t2 * (n2 / opnorm(t2))
        if _residual(position, t1, t2, q) <= tol:
            return t1, t2, q
    raise GenerationFailed(f"no {position}-relation instance after {MAX_ATTEMPTS} attempts")


def _scalar_pair(rng, unitary_q, norm1, norm2):
    """On ``C`` the relation forces ``q = 1`` unless one factor vanishes."""
    n1 = rng.uniform(0.3, 0.9) if norm1 is None else norm1
    n2 = rng.uniform(0.3, 0.9) if norm2 is None else norm2
    t1 = np.array([[n1 * np.exp(2j * np.pi * rng.uniform())]])
    if unitary_q:
        t2 = np.array([[n2 * np.exp(2j * np.pi * rng.uniform())]])
        return t1, t2, np.eye(1, dtype=complex)
    q = np.array([[rng.uniform(0.2, 1.0) * np.exp(2j * np.pi * rng.uniform())]])
    return t1, np.zeros((1, 1), dtype=complex), q


def commuting_pair(rng: np.random.Generator, d: int, norm1=None, norm2=None) -> tuple[np.ndarray, np.ndarray]:
    """Commuting contractions: two polynomials in one random matrix."""
    a = random_contraction(rng, d, 1.0)
    c = rng.normal(size=3) + 1j * rng.normal(size=3)
    b = c[0] * np.eye(d) + c[1] * a + c[2] * a @ a
    n1 = rng.uniform(0.3, 0.9) if norm1 is None else norm1
    n2 = rng.uniform(0.3, 0.9) if norm2 is None else norm2
    return a * n1, b * (n2 / opnorm(b))


def intertwining_triple(
    rng: np.random.Generator, d: int, norm: float | None = None, tol: float | None = None
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Contractions with ``T1 X = X T2``: ``T2`` random, ``T1`` similar to it
    through an invertible ``S``, ``X`` in the null space of the relation."""
    tol = resolve_tol(tol) * 1e-2
    for _ in range(MAX_ATTEMPTS):
        t2 = random_contraction(rng, d, rng.uniform(0.3, 0.9))
        s = np.eye(d) + 0.4 * random_contraction(rng, d, 1.0)
        t1 = s @ t2 @ np.linalg.inv(s)
        if opnorm(t1) >= 1:
            t1 = t1 * (0.9 / opnorm(t1))
        cols = []
        for k in range(d * d):
            e = np.zeros(d * d, dtype=complex)
            e[k] = 1
            x = e.reshape(d, d)
            cols.append((t1 @ x - x @ t2).ravel())
        ns = null_space(np.array(cols).T)
        if ns.shape[1] == 0:
            continue
        coef = rng.normal(size=ns.shape[1]) + 1j * rng.normal(size=ns.shape[1])
        x = (ns @ coef).reshape(d, d)
        if opnorm(x) < 1e-6:
            continue
        x = x * ((rng.uniform(0.3, 0.9) if norm is None else norm) / opnorm(x))
        if opnorm(t1 @ x - x @ t2) <= tol:
            return t1, t2, x
    raise GenerationFailed(f"no intertwining instance after {MAX_ATTEMPTS} attempts")


def weyl_tree_operators(
    rng: np.random.Generator,
    n: int,
    edges,
    d: int,
    position: str = "L",
    norms=None,
) -> tuple[list[np.ndarray], dict[tuple[int, int], np.ndarray]]:
    """Scaled unitaries ``a_i U_i`` with ``U_i = diag(phases) S^k_i``.

    ``S`` is the cyclic shift, so any two such unitaries commute up to a
    diagonal unitary factor; the factor in the requested position is
    returned for every edge ``(i, j)``, ``i < j``.  A random unitary frame
    hides the diagonal structure.
    """
    position = str(position).upper()[0]
    frame = random_unitary(rng, d)
    shift = np.roll(np.eye(d), 1, axis=0)
    ops = []
    for _ in range(n):
        k = int(rng.integers(0, d))
        u = np.diag(np.exp(2j * np.pi * rng.uniform(size=d))) @ np.linalg.matrix_power(shift, k)
        ops.append(frame @ u @ adj(frame))
    a = [rng.uniform(0.3, 0.9) for _ in range(n)] if norms is None else list(norms)
    qmap = {}
    for e in edges:
        i, j = sorted(e)
        ui, uj = ops[i - 1], ops[j - 1]
        if position == "L":
            q = ui @ uj @ adj(uj @ ui)
        elif position == "M":
            q = adj(uj) @ ui @ uj @ adj(ui)
        else:
            q = adj(uj @ ui) @ ui @ uj
        qmap[(i, j)] = q
    return [ai * u for ai, u in zip(a, ops)], qmap
