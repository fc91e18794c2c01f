"""Deciding whether a pair admits a Q, and a corpus of worked examples.

In finite dimensions there is a ``Q`` with ``T1 T2 = Q T2 T1`` exactly when
``ker(T2 T1)`` sits inside ``ker(T1 T2)``.  The constructed ``Q`` sends
``T2 T1 x`` to ``T1 T2 x`` on the range of ``T2 T1`` and equals ``T1 T2`` on
the orthogonal complement of that range.  The right-hand form
``T1 T2 = T2 T1 Q`` is the same question for ``(T2*, T1*)``, after which
the answer is adjointed back.

The corpus holds finite sections of four families (two of them on
``l^2``).  Every claim is a small check: positive claims evaluate a relation
on basis vectors whose images stay inside the section, and negative claims
measure how far a witness vector is from every possible right-hand side.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.linalg import null_space

from .config import RANK_TOL, resolve_tol
from .numkernel import adj, as_matrix, opnorm

__all__ = [
    "QExistenceReport",
    "find_q",
    "least_squares_q",
    "CorpusClaim",
    "CorpusInstance",
    "example_corpus",
    "CORPUS_TRUNCATION",
    "WITNESS_GAP",
]

CORPUS_TRUNCATION = 16
# Lower bound that every negative corpus claim must exceed.
WITNESS_GAP = 1.0 / 12.0


@dataclass
class QExistenceReport:
    """Outcome of :func:`find_q`.

    ``q_left`` solves ``T1 T2 = Q T2 T1`` and ``q_right`` solves
    ``T1 T2 = T2 T1 Q``.  For an infeasible side the witness is a unit
    vector ``x`` with ``T2 T1 x = 0`` but ``T1 T2 x != 0`` (left), or ``u``
    with ``T1* T2* u = 0`` but ``T2* T1* u != 0`` (right).
    """

    feasible_left: bool
    feasible_right: bool
    q_left: np.ndarray | None = None
    q_right: np.ndarray | None = None
    witness_left: np.ndarray | None = None
    witness_right: np.ndarray | None = None
    residual_left: float | None = None
    residual_right: float | None = None
    certificates: dict[str, float] = field(default_factory=dict)

    @property
    def witness(self) -> np.ndarray | None:
        return self.witness_left if self.witness_left is not None else self.witness_right


def _kernel(m: np.ndarray) -> np.ndarray:
    scale = max(1.0, opnorm(m))
    return null_space(m, rcond=RANK_TOL * scale) if m.size else m


def _left(t1: np.ndarray, t2: np.ndarray, tol: float):
    """``(feasible, Q, witness, gap)`` for ``T1 T2 = Q T2 T1``."""
    ab, ba = t1 @ t2, t2 @ t1
    ker = _kernel(ba)
    gap = opnorm(ab @ ker) if ker.shape[1] else 0.0
    if gap > tol * max(1.0, opnorm(ab)):
        _, _, vh = np.linalg.svd(ab @ ker)
        return False, None, ker @ adj(vh)[:, 0], gap
    pinv = np.linalg.pinv(ba, rcond=RANK_TOL)
    proj = ba @ pinv
    q = ab @ pinv + ab @ (np.eye(ab.shape[0]) - proj)
    return True, q, None, gap


def find_q(t1, t2, tol: float | None = None) -> QExistenceReport:
    """Decide and construct ``Q`` for both the left and right relations.

    Parameters
    ----------
    t1, t2 : array_like
        Square matrices of equal size.
    tol : float, optional
        Relative threshold for the kernel-inclusion test; also the bound
        the returned ``Q`` is certified against.

    Examples
    --------
    >>> import numpy as np
    >>> r = find_q(np.array([[0, 1], [0, 2]]), np.array([[1, 2], [0, 3]]))
    >>> r.feasible_left, r.feasible_right
    (True, False)
    """
    tol = resolve_tol(tol)
    t1, t2 = as_matrix(t1), as_matrix(t2)
    fl, ql, wl, gl = _left(t1, t2, tol)
    fr, qr_star, wr, gr = _left(adj(t2), adj(t1), tol)
    qr = adj(qr_star) if fr else None
    certs = {}
    if fl:
        certs["relation_left"] = opnorm(t1 @ t2 - ql @ t2 @ t1)
    if fr:
        certs["relation_right"] = opnorm(t1 @ t2 - t2 @ t1 @ qr)
    return QExistenceReport(fl, fr, ql, qr, wl, wr, gl, gr, certs)


def least_squares_q(t1, t2, side: str = "left") -> tuple[np.ndarray, float]:
    """Brute-force ``Q`` from the vectorised linear system, and its residual.

    ``left`` solves ``(T2 T1)^T (x) I vec(Q) = vec(T1 T2)`` in column-major
    vectorisation; ``right`` solves the analogous system for
    ``T2 T1 Q = T1 T2``.
    """
    t1, t2 = as_matrix(t1), as_matrix(t2)
    n = t1.shape[0]
    ab, ba = t1 @ t2, t2 @ t1
    eye = np.eye(n)
    a = np.kron(ba.T, eye) if side == "left" else np.kron(eye, ba)
    b = ab.reshape(-1, order="F")
    sol, *_ = np.linalg.lstsq(a, b, rcond=None)
    q = sol.reshape(n, n, order="F")
    res = np.linalg.norm(a @ sol - b)
    return q, float(res)


# ---------------------------------------------------------------------------
# corpus


def _shift_op(n: int, images: Callable[[int], dict[int, complex]]) -> np.ndarray:
    """Matrix on ``C^n`` from ``e_j -> sum c_k e_k`` (1-based, out-of-range dropped)."""
    m = np.zeros((n, n), dtype=complex)
    for j in range(1, n + 1):
        for k, c in images(j).items():
            if 1 <= k <= n:
                m[k - 1, j - 1] += c
    return m


def _relation_rhs(position: str, a, b, q):
    return {"L": q @ b @ a, "M": b @ q @ a, "R": b @ a @ q}[position]


def _infimum_over_q(position: str, a, b, x) -> float:
    """``min_Q ||A B x - rhs(Q) x||`` for ``rhs`` in the given position.

    ``Q`` only enters through one vector, which can be anything, so the
    minimum is a distance to a fixed subspace.
    """
    target = a @ b @ x
    if position == "L":
        reach = (b @ a @ x)[:, None]
        if np.linalg.norm(reach) == 0:
            return float(np.linalg.norm(target))
        basis = np.eye(a.shape[0])
    elif position == "M":
        basis = b if np.linalg.norm(a @ x) > 0 else np.zeros_like(b)
    else:
        basis = b @ a if np.linalg.norm(x) > 0 else np.zeros_like(b)
    coef, *_ = np.linalg.lstsq(basis, target, rcond=None)
    return float(np.linalg.norm(target - basis @ coef))


@dataclass
class CorpusClaim:
    """One checkable statement about a corpus pair.

    ``order`` is ``"12"`` for ``(T1, T2)`` and ``"21"`` for ``(T2, T1)``.
    A positive claim carries ``q`` and the basis indices (1-based) on which
    the relation is asserted; a negative claim carries witness vectors and
    asserts that no ``Q`` brings the residual below ``WITNESS_GAP``.
    """

    position: str
    order: str
    positive: bool
    q: np.ndarray | None = None
    vectors: tuple[int, ...] = ()
    witnesses: tuple[np.ndarray, ...] = ()
    note: str = ""

    def residual(self, t1: np.ndarray, t2: np.ndarray) -> float:
        a, b = (t1, t2) if self.order == "12" else (t2, t1)
        if self.positive:
            n = a.shape[0]
            cols = np.eye(n, dtype=complex)[:, [j - 1 for j in self.vectors]]
            return opnorm((a @ b - _relation_rhs(self.position, a, b, self.q)) @ cols)
        return max(_infimum_over_q(self.position, a, b, w) for w in self.witnesses)

    def holds(self, t1, t2, tol: float | None = None) -> bool:
        r = self.residual(t1, t2)
        return r <= resolve_tol(tol) if self.positive else r >= WITNESS_GAP


@dataclass
class CorpusInstance:
    name: str
    t1: np.ndarray
    t2: np.ndarray
    claims: list[CorpusClaim]
    params: dict = field(default_factory=dict)

    def check(self, tol: float | None = None) -> dict[str, tuple[float, bool]]:
        out = {}
        for k, c in enumerate(self.claims):
            key = f"{'pos' if c.positive else 'neg'}_{c.order}_{c.position}_{k}"
            out[key] = (c.residual(self.t1, self.t2), c.holds(self.t1, self.t2, tol))
        return out


def _unit(n: int, j: int) -> np.ndarray:
    e = np.zeros(n, dtype=complex)
    e[j - 1] = 1
    return e


def upper_pair(a=(1.0, 2.0), b=(1.0, 2.0, 3.0)) -> CorpusInstance:
    """2x2 pair whose left relation always has a solution.

    ``T1 = [[0, a1], [0, a2]]`` and ``T2 = [[b1, b2], [0, b3]]``.  The left
    and middle relations are solved by explicit ``Q``'s; the right relation
    is solvable exactly when ``a1 b1 + a2 b2 = a1 b3``.
    """
    a1, a2 = a
    b1, b2, b3 = b
    t1 = np.array([[0, a1], [0, a2]], dtype=complex)
    t2 = np.array([[b1, b2], [0, b3]], dtype=complex)
    q = np.array([[0, a1 / a2], [0, 1]], dtype=complex)
    q1 = np.diag([(a1 * b3 - a2 * b2) / (a1 * b1), 1]).astype(complex)
    claims = [
        CorpusClaim("L", "12", True, q=q, vectors=(1, 2)),
        CorpusClaim("M", "12", True, q=q1, vectors=(1, 2)),
    ]
    right_ok = abs(a1 * b1 + b2 * a2 - a1 * b3) < 1e-12
    if not right_ok:
        claims.append(CorpusClaim("R", "12", False, witnesses=(_unit(2, 2),), note="a1 b1 + a2 b2 != a1 b3"))
    return CorpusInstance("upper_pair", t1, t2, claims, {"a": tuple(a), "b": tuple(b), "right_feasible": right_ok})


def _interior(n: int, guard: int) -> tuple[int, ...]:
    return tuple(range(1, n - guard + 1))


def no_q_pair(n: int = CORPUS_TRUNCATION) -> CorpusInstance:
    """Truncation of a pair on ``l^2`` with no ``Q`` in any position or order.

    Even ``j``: ``T1 e_j = (e_j + e_{j+1})/3``, ``T2 e_j = 0``; odd ``j``:
    ``T1 e_j = 0``, ``T2 e_j = e_{j+1}/2``.
    """
    t1 = _shift_op(n, lambda j: {j: 1 / 3, j + 1: 1 / 3} if j % 2 == 0 else {})
    t2 = _shift_op(n, lambda j: {} if j % 2 == 0 else {j + 1: 0.5})
    e1, e2 = _unit(n, 1), _unit(n, 2)
    claims = [
        CorpusClaim("L", "12", False, witnesses=(e1,)),
        CorpusClaim("M", "12", False, witnesses=(e1,)),
        CorpusClaim("R", "12", False, witnesses=(e1,)),
        CorpusClaim("L", "21", False, witnesses=(e2,)),
        CorpusClaim("M", "21", False, witnesses=(e2,)),
        CorpusClaim("R", "21", False, witnesses=(e2,)),
    ]
    return CorpusInstance("no_q_pair", t1, t2, claims, {"truncation": n})


def one_sided_pair(n: int = CORPUS_TRUNCATION) -> CorpusInstance:
    """Truncation of a pair that is left-related but not right- or middle-related.

    Odd ``j``: ``T1 e_j = e_{j+1}``, ``T2 e_j = (e_j + e_{j+1})/2``; even
    ``j``: ``T1 e_j = 0``, ``T2 e_j = e_{j+2}/2``.  ``Q`` moves even
    vectors two steps back and odd ones two forward; ``Q'`` moves every
    vector two steps forward.  Products of three factors move at most six
    steps, so positive claims use ``e_1 .. e_{n-6}``.
    """
    t1 = _shift_op(n, lambda j: {j + 1: 1.0} if j % 2 else {})
    t2 = _shift_op(n, lambda j: {j: 0.5, j + 1: 0.5} if j % 2 else {j + 2: 0.5})
    q = _shift_op(n, lambda j: {j + 2: 1.0} if j % 2 else {j - 2: 1.0})
    qp = _shift_op(n, lambda j: {j + 2: 1.0})
    inner = _interior(n, 6)
    e1 = _unit(n, 1)
    claims = [
        CorpusClaim("L", "12", True, q=q, vectors=inner),
        CorpusClaim("R", "21", True, q=q, vectors=inner),
        CorpusClaim("M", "21", True, q=qp, vectors=inner),
        CorpusClaim("R", "12", False, witnesses=(e1,)),
        CorpusClaim("M", "12", False, witnesses=(e1,)),
    ]
    return CorpusInstance("one_sided_pair", t1, t2, claims, {"truncation": n})


def backward_pair(n: int = CORPUS_TRUNCATION, a: complex = 0.5, b: complex = 0.5) -> CorpusInstance:
    """Scaled backward shifts: ``(T2, T1)`` is related in all three positions,
    ``(T1, T2)`` in none.

    ``T1 x = a (x2, x3, ...)`` and ``T2 x = (0, b x3, b x4, ...)``; the
    three ``Q``'s are coordinate projections killing ``e_1``, ``e_2`` and
    ``e_3``.  Backward shifts are compressed exactly, so every basis vector
    is usable.
    """
    t1 = _shift_op(n, lambda j: {j - 1: a} if j >= 2 else {})
    t2 = _shift_op(n, lambda j: {j - 1: b} if j >= 3 else {})
    proj = [np.diag([0.0 if k == drop else 1.0 for k in range(1, n + 1)]).astype(complex) for drop in (1, 2, 3)]
    every = tuple(range(1, n + 1))
    e3 = _unit(n, 3)
    claims = [
        CorpusClaim("L", "21", True, q=proj[0], vectors=every),
        CorpusClaim("M", "21", True, q=proj[1], vectors=every),
        CorpusClaim("R", "21", True, q=proj[2], vectors=every),
        CorpusClaim("L", "12", False, witnesses=(e3,)),
        CorpusClaim("M", "12", False, witnesses=(e3,)),
        CorpusClaim("R", "12", False, witnesses=(e3,)),
    ]
    return CorpusInstance("backward_pair", t1, t2, claims, {"truncation": n, "a": a, "b": b})


def example_corpus(n: int = CORPUS_TRUNCATION) -> list[CorpusInstance]:
    """The four worked families, the infinite ones cut to ``n`` coordinates."""
    return [upper_pair(), no_q_pair(n), one_sided_pair(n), backward_pair(n)]
