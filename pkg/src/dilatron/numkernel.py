"""Finite-dimensional matrix kernel.

Defect operators, Douglas factorizations and the completion lemmas that
all the dilation and lifting constructions are assembled from.  Every
function takes and returns dense complex ``numpy`` arrays and never
mutates its inputs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .config import EIG_CLAMP, RANK_TOL, resolve_tol
from .errors import (
    GeneratorMismatch,
    IncompatibleData,
    IndefiniteInput,
    Infeasible,
    NotAContraction,
    NotHermitian,
)

__all__ = [
    "as_matrix",
    "opnorm",
    "adj",
    "psd_sqrt",
    "DefectPair",
    "defect_pair",
    "defect",
    "codefect",
    "douglas_solve",
    "douglas_solve_pair",
    "CompletionResult",
    "triangular_complete",
    "extract_triangular_parameter",
    "dual_parrott_complete",
    "unitary_complete",
    "orth_complement",
]


def as_matrix(m) -> np.ndarray:
    """Return ``m`` as a 2-D complex array (scalars become 1x1)."""
    a = np.asarray(m, dtype=complex)
    if a.ndim == 0:
        a = a.reshape(1, 1)
    if a.ndim != 2:
        raise ValueError(f"expected a matrix, got array of shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix contains NaN or Inf")
    return a


def opnorm(m) -> float:
    """Spectral norm (largest singular value); 0 for empty matrices."""
    a = np.asarray(m)
    if a.size == 0:
        return 0.0
    return float(np.linalg.norm(a, 2))


def adj(m: np.ndarray) -> np.ndarray:
    return np.conj(m).T


def _scaled_tol(tol: float, *mats: np.ndarray) -> float:
    # Gram-type comparisons live at the scale of the squared norms.
    scale = max([1.0] + [opnorm(m) ** 2 for m in mats if m.size])
    return tol * scale


def psd_sqrt(m, tol: float | None = None, eig_clamp: float = EIG_CLAMP) -> np.ndarray:
    """Hermitian positive square root via an eigendecomposition.

    Eigenvalues in ``[-eig_clamp * max(1, |m|), 0)`` are rounded up to zero;
    anything more negative is reported as :class:`IndefiniteInput`.
    """
    tol = resolve_tol(tol)
    a = as_matrix(m)
    if a.shape[0] != a.shape[1]:
        raise NotHermitian(f"non-square input {a.shape}")
    if a.size == 0:
        return a.copy()
    scale = max(1.0, float(np.max(np.abs(a))))
    if np.max(np.abs(a - adj(a))) > tol * scale:
        raise NotHermitian("input is not Hermitian within tolerance")
    h = 0.5 * (a + adj(a))
    w, v = np.linalg.eigh(h)
    clamp = eig_clamp * scale
    if w[0] < -clamp:
        raise IndefiniteInput(w[0])
    w = np.where(w < 0, 0.0, w)
    s = (v * np.sqrt(w)) @ adj(v)
    return 0.5 * (s + adj(s))


@dataclass(frozen=True)
class DefectPair:
    """A contraction together with its defect ``D_T`` and co-defect ``D_{T*}``."""

    base: np.ndarray
    defect: np.ndarray
    codefect: np.ndarray


def _one_minus_gram(g: np.ndarray) -> np.ndarray:
    n = g.shape[0]
    d = np.eye(n, dtype=complex) - g
    return 0.5 * (d + adj(d))


def _defect_of(t: np.ndarray) -> np.ndarray:
    # I - T*T can dip below zero by rounding when ||T|| = 1; the clamp in
    # psd_sqrt handles roundoff, anything larger means T is not a contraction.
    g = _one_minus_gram(adj(t) @ t)
    w, v = np.linalg.eigh(g)
    w = np.where(w < 0, 0.0, w)
    s = (v * np.sqrt(w)) @ adj(v)
    return 0.5 * (s + adj(s))


def defect_pair(t, require_contraction: bool = True, tol: float | None = None) -> DefectPair:
    """Compute ``D_T = (I - T*T)^{1/2}`` and ``D_{T*} = (I - TT*)^{1/2}``.

    Raises
    ------
    NotAContraction
        If ``require_contraction`` is set and ``||t|| > 1 + tol``.
    """
    tol = resolve_tol(tol)
    a = as_matrix(t)
    nrm = opnorm(a)
    if require_contraction and nrm > 1 + tol:
        raise NotAContraction(nrm)
    return DefectPair(base=a, defect=_defect_of(a), codefect=_defect_of(adj(a)))


def defect(t) -> np.ndarray:
    """``D_T`` without the contraction check (callers have validated ``t``)."""
    return _defect_of(as_matrix(t))


def codefect(t) -> np.ndarray:
    return _defect_of(adj(as_matrix(t)))


def _pinv(b: np.ndarray) -> np.ndarray:
    if b.size == 0:
        return np.zeros((b.shape[1], b.shape[0]), dtype=complex)
    return np.linalg.pinv(b, rcond=RANK_TOL)


def douglas_solve(a, b, tol: float | None = None) -> np.ndarray:
    """Solve ``a = b Z`` with ``Z`` a contraction (Douglas factorization).

    Feasible exactly when ``a a* <= b b*``.  The returned solution is
    ``pinv(b) a``: it vanishes on the orthocomplement of ``range(b*)`` and
    is the minimal-norm choice.

    Raises
    ------
    Infeasible
        Carrying the smallest eigenvalue of ``b b* - a a*``.
    """
    tol = resolve_tol(tol)
    a = as_matrix(a)
    b = as_matrix(b)
    if a.shape[0] != b.shape[0]:
        raise ValueError(f"codomain mismatch: {a.shape} vs {b.shape}")
    if a.shape[0] == 0:
        return np.zeros((b.shape[1], a.shape[1]), dtype=complex)
    gap = b @ adj(b) - a @ adj(a)
    gap = 0.5 * (gap + adj(gap))
    lam = float(np.linalg.eigvalsh(gap)[0])
    if lam < -_scaled_tol(tol, a, b):
        raise Infeasible(lam)
    return _pinv(b) @ a


def douglas_solve_pair(a0, a1, a2, tol: float | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Solve ``a1 Z1 + a2 Z2 = a0`` with ``Z1*Z1 + Z2*Z2 <= I``.

    The pair is obtained from a single :func:`douglas_solve` against the
    row ``[a1 a2]``; the answer is split by rows.
    """
    a0, a1, a2 = (as_matrix(m) for m in (a0, a1, a2))
    stacked = np.hstack([a1, a2])
    try:
        z = douglas_solve(a0, stacked, tol)
    except Infeasible as exc:
        raise Infeasible(exc.min_eig, "douglas pair") from None
    k = a1.shape[1]
    return z[:k], z[k:]


@dataclass(frozen=True)
class CompletionResult:
    completed: np.ndarray
    parameter: np.ndarray
    achieved_norm: float


def triangular_complete(t1, t2, x, tol: float | None = None) -> CompletionResult:
    """Complete ``[[T1, X], [0, T2]]`` to a contraction by factoring ``X``.

    A contraction ``C`` with ``X = D_{T1*} C D_{T2}`` is searched with two
    nested Douglas steps; its existence is equivalent to the block matrix
    being a contraction.
    """
    tol = resolve_tol(tol)
    t1, t2, x = (as_matrix(m) for m in (t1, t2, x))
    p1 = defect_pair(t1, tol=tol)
    p2 = defect_pair(t2, tol=tol)
    # X = D_{T1*} Y, then Y* = D_{T2} C*.
    y = douglas_solve(x, p1.codefect, tol)
    c = adj(douglas_solve(adj(y), p2.defect, tol))
    if opnorm(c) > 1 + _scaled_tol(tol):
        raise Infeasible(1.0 - opnorm(c) ** 2, "triangular completion")
    recon = p1.codefect @ c @ p2.defect
    if opnorm(recon - x) > _scaled_tol(tol, x) * 10:
        raise Infeasible(-opnorm(recon - x), "triangular completion")
    z = np.zeros((t2.shape[0], t1.shape[1]), dtype=complex)
    block = np.block([[t1, x], [z, t2]])
    nrm = opnorm(block)
    return CompletionResult(completed=block, parameter=c, achieved_norm=nrm)


def extract_triangular_parameter(block, split: tuple[int, int], tol: float | None = None) -> np.ndarray:
    """Converse direction: from a contractive ``[[T1, X], [0, T2]]`` recover ``C``.

    ``split`` gives ``(rows of T1, cols of T1)``.
    """
    m = as_matrix(block)
    r, c = split
    t1, x, t2 = m[:r, :c], m[:r, c:], m[r:, c:]
    return triangular_complete(t1, t2, x, tol).parameter


def orth_complement(e: np.ndarray) -> np.ndarray:
    """Orthonormal basis of the orthocomplement of ``range(e)``."""
    n = e.shape[0]
    if e.shape[1] == 0:
        return np.eye(n, dtype=complex)
    return sla.null_space(adj(e), rcond=RANK_TOL).astype(complex)


def dual_parrott_complete(x, xprime, embed_h, embed_hprime, tol: float | None = None) -> CompletionResult:
    """Find ``Y: K -> K'`` with ``Y E = X``, ``Y* E' = X'`` and small norm.

    Parameters
    ----------
    x : (dim K', dim H) array
        Prescribed action on the subspace ``H`` (embedded by ``embed_h``).
    xprime : (dim K, dim H') array
        Prescribed action of ``Y*`` on ``H'`` (embedded by ``embed_hprime``).
    embed_h, embed_hprime : isometries
        ``K x H`` and ``K' x H'`` embeddings.

    Returns a completion with ``||Y|| <= max(||X||, ||X'||)``.
    """
    tol = resolve_tol(tol)
    x, xp, e, ep = (as_matrix(m) for m in (x, xprime, embed_h, embed_hprime))
    mismatch = adj(ep) @ x - adj(xp) @ e
    worst = float(np.max(np.abs(mismatch))) if mismatch.size else 0.0
    if worst > _scaled_tol(tol, x, xp):
        raise IncompatibleData(worst)
    mu = max(opnorm(x), opnorm(xp))
    dim_k, dim_kp = e.shape[0], ep.shape[0]
    if mu == 0.0:
        zero = np.zeros((dim_kp, dim_k), dtype=complex)
        return CompletionResult(zero, np.zeros((0, 0), dtype=complex), 0.0)
    u = np.hstack([e, orth_complement(e)])
    up = np.hstack([ep, orth_complement(ep)])
    h, hp = e.shape[1], ep.shape[1]
    row = (adj(xp) @ u) / mu  # block row over H' (A | B)
    col_low = (adj(up[:, hp:]) @ x) / mu  # C, the part of the column off H'
    d_row = _defect_of(row)  # defect of the fixed row, an operator on K
    e1, e2 = d_row[:, :h], d_row[:, h:]
    z = adj(douglas_solve(adj(col_low), adj(e1), tol))
    corner = z @ e2
    top = row
    bottom = np.hstack([col_low, corner])
    y_coords = np.vstack([top, bottom]) * mu
    y = up @ y_coords @ adj(u)
    return CompletionResult(completed=y, parameter=z, achieved_norm=opnorm(y))


def unitary_complete(p, r, tol: float | None = None) -> np.ndarray:
    """Unitary ``G`` on the common codomain with ``G p = r``.

    Requires ``p*p = r*r``.  The range of ``p`` is mapped to the range of
    ``r`` through a shared SVD; the orthocomplements are paired in the
    index order returned by the null-space factorization.
    """
    tol = resolve_tol(tol)
    p, r = as_matrix(p), as_matrix(r)
    if p.shape != r.shape:
        raise ValueError("generators must have the same shape")
    res = opnorm(adj(p) @ p - adj(r) @ r)
    if res > _scaled_tol(tol, p, r):
        raise GeneratorMismatch(res)
    n = p.shape[0]
    if p.size == 0:
        return np.eye(n, dtype=complex)
    _, s, vh = np.linalg.svd(p)
    rank = int(np.sum(s > RANK_TOL * max(s[0], 1e-300))) if s.size else 0
    if rank == 0:
        return np.eye(n, dtype=complex)
    v = adj(vh[:rank])
    up = p @ v / s[:rank]
    ur = r @ v / s[:rank]
    cp = orth_complement(up)
    cr = orth_complement(ur)
    k = min(cp.shape[1], cr.shape[1])
    g = ur @ adj(up) + cr[:, :k] @ adj(cp[:, :k])
    # Project onto the unitary group to absorb rounding in ur.
    w, _, zh = np.linalg.svd(g)
    return w @ zh
