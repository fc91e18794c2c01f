"""Raw matrix builders for Schäffer-type operators and filtered lifts.

Kept separate from :mod:`dilatron.dilation` so that the lifting engines
can build dilations without a circular import.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import RANK_TOL
from .numkernel import adj, as_matrix, codefect, defect


def schaffer_matrix(t: np.ndarray, blocks: int, d: np.ndarray | None = None) -> np.ndarray:
    """``(h0, h1, ...) -> (t h0, d h0, h1, h2, ...)`` on ``blocks`` copies.

    ``d`` defaults to ``D_t``; any ``d`` with ``d*d + t*t = I`` yields an
    isometry on the leading ``blocks - 1`` summands.
    """
    t = as_matrix(t)
    n = t.shape[0]
    if d is None:
        d = defect(t)
    v = np.zeros((n * blocks, n * blocks), dtype=complex)
    v[:n, :n] = t
    if blocks > 1:
        v[n : 2 * n, :n] = d
    for j in range(1, blocks - 1):
        v[(j + 1) * n : (j + 2) * n, j * n : (j + 1) * n] = np.eye(n)
    return v


def coiso_matrix(t: np.ndarray, blocks: int, d: np.ndarray | None = None) -> np.ndarray:
    """Row ``[t, D_{t*}, 0, ...]`` followed by shifted identities."""
    t = as_matrix(t)
    if d is None:
        d = codefect(t)
    return adj(schaffer_matrix(adj(t), blocks, adj(d)))


@dataclass(frozen=True)
class FilteredLift:
    """An isometric lift written along a filtration ``L0 + L1 + ...``.

    The matrix maps level ``j >= 1`` into level ``j + 1`` only and level 0
    into levels 0 and 1, so that its compression to levels ``0..n+1`` is
    ``[[V_n, 0], [S_n, 0]]`` with ``V_n* V_n + S_n* S_n = I``.  ``basis``
    (optional) expresses the level coordinates in the ambient space.
    """

    matrix: np.ndarray
    levels: tuple[int, ...]
    basis: np.ndarray | None = None

    def offsets(self) -> list[int]:
        out = [0]
        for s in self.levels:
            out.append(out[-1] + s)
        return out

    def structure_defect(self) -> float:
        off = self.offsets()
        worst = 0.0
        L = len(self.levels)
        for j in range(L):
            for i in range(L):
                if i == j + 1 or (i == 0 and j == 0):
                    continue
                blk = self.matrix[off[i] : off[i + 1], off[j] : off[j + 1]]
                if blk.size:
                    worst = max(worst, float(np.max(np.abs(blk))))
        return worst


def uniform_levels(dim: int, blocks: int) -> tuple[int, ...]:
    return tuple([dim] * blocks)


def krylov_filtration(v: np.ndarray, head_dim: int, max_levels: int, rank_tol: float = RANK_TOL) -> FilteredLift:
    """Filtration ``M_k = span{v^j H : j <= k}`` of an isometric lift.

    Returns the lift expressed in an orthonormal basis adapted to the
    nested subspaces.  Only levels whose image stays inside the exact part
    of ``v`` are meaningful; the caller picks ``max_levels`` accordingly.
    """
    n = v.shape[0]
    basis = [np.eye(n, dtype=complex)[:, :head_dim]]
    sizes = [head_dim]
    cur = basis[0]
    for _ in range(max_levels - 1):
        if cur.shape[1] == 0:
            break
        u = np.hstack(basis)
        w = v @ cur
        for _ in range(2):
            w = w - u @ (adj(u) @ w)
        if w.size == 0:
            break
        left, s, _ = np.linalg.svd(w, full_matrices=False)
        keep = s > rank_tol * max(1.0, float(s[0]) if s.size else 0.0)
        cur = left[:, keep]
        if cur.shape[1] == 0:
            break
        basis.append(cur)
        sizes.append(cur.shape[1])
    u = np.hstack(basis)
    return FilteredLift(matrix=adj(u) @ v @ u, levels=tuple(sizes), basis=u)
