"""Q-commuting systems indexed by the vertices of a tree.

A system assigns a contraction ``T_i`` to every vertex and a matrix
``Q(i, j)`` to every edge ``{i, j}`` with ``i < j``.  The relation on an
edge depends on the position::

    L:  T_i T_j = Q(i, j) T_j T_i
    M:  T_i T_j = T_j Q(i, j) T_i
    R:  T_i T_j = T_j T_i Q(i, j)

Non-adjacent vertices are unconstrained.

:func:`dilate_tree_system` builds isometric lifts by induction on the
number of vertices.  A leaf is removed, the smaller system is dilated to
isometries ``W_i`` on ``K'``, and the leaf is attached to its neighbour
``p``:

* ``L`` and ``M``: a contractive lift ``Y`` of the leaf operator is found
  on ``K'`` with the edge relation against ``W_p`` (an intertwining lift
  along Krylov filtrations), and the Ando-type Case II construction is run
  on the pair ``(Y, W_p)`` over ``K' + K' + ...``;
* ``R``: the strict construction runs with ``W_p`` in place of a Schäffer
  lift, so ``V_p = W_p + M + M + ...``.

In both cases ``K'`` reduces ``V_p`` and ``V_p`` agrees with ``W_p`` there;
every other isometry becomes ``W_i + I`` and every old ``Qbar`` becomes
``Qbar + I``.  Only unitary edge matrices are supported; the new ``Qbar``
is then ``Q + I``.

Truncation makes the operators exact only near ``H``.  Relations and
isometry are therefore certified on short words: for an edge ``(i, j)``
on ``span(H, V_i H, V_j H)`` and for a vertex on ``span(H, V_i H)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import networkx as nx
import numpy as np

from ._structures import krylov_filtration, schaffer_matrix
from .blockspace import BlockOperator, DirectSumSpace
from .config import MAX_TOTAL_DIM, STRICT_MARGIN, resolve_tol
from .dilation import (
    QPosition,
    _ando_core,
    _extend_identity,
    _is_unitary,
    _lift_res,
    _strict_right_step,
    inner_blocks,
    strict_q_diag_construction,
)
from .errors import (
    DimensionBudgetExceeded,
    DimensionMismatch,
    Disconnected,
    HasCycle,
    HypothesisViolated,
    NotAContraction,
    NotStrict,
    RelationViolated,
)
from .lifting import _trim_filtration, intertwine_general
from .numkernel import adj, as_matrix, opnorm

__all__ = [
    "QGraph",
    "GraphSystem",
    "GraphDilationResult",
    "validate_tree",
    "check_system",
    "edge_relation",
    "dilate_tree_system",
]

# Ando groups per attachment step; lowered to MIN_GROUPS when the budget
# would otherwise be exceeded.
MIN_GROUPS = 2
STRICT_OUTER = 4
STRICT_MIN_OUTER = 3


@dataclass(frozen=True)
class QGraph:
    """Simple graph on vertices ``1..n`` with a matrix on each edge.

    ``qmap`` is keyed by ordered pairs ``(i, j)`` with ``i < j``; an edge
    given as ``{j, i}`` is normalised.
    """

    n: int
    edges: frozenset
    qmap: Mapping[tuple[int, int], np.ndarray]

    def __init__(self, n: int, edges, qmap: Mapping | None = None):
        norm = set()
        for e in edges:
            a, b = tuple(e)
            if a == b:
                raise ValueError(f"loop at vertex {a}")
            if not (1 <= a <= n and 1 <= b <= n):
                raise ValueError(f"edge {(a, b)} outside vertices 1..{n}")
            key = (min(a, b), max(a, b))
            if key in norm:
                raise ValueError(f"repeated edge {key}")
            norm.add(key)
        q = {}
        for (a, b), m in (qmap or {}).items():
            key = (min(a, b), max(a, b))
            if key not in norm:
                raise ValueError(f"Q given on non-edge {key}")
            q[key] = as_matrix(m)
        missing = norm - set(q)
        if missing:
            raise ValueError(f"no Q on edges {sorted(missing)}")
        object.__setattr__(self, "n", int(n))
        object.__setattr__(self, "edges", frozenset(norm))
        object.__setattr__(self, "qmap", q)

    @property
    def ordered_edges(self) -> list[tuple[int, int]]:
        return sorted(self.edges)

    def neighbours(self, v: int) -> list[int]:
        return sorted({b for a, b in self.edges if a == v} | {a for a, b in self.edges if b == v})

    def to_networkx(self) -> nx.Graph:
        g = nx.Graph()
        g.add_nodes_from(range(1, self.n + 1))
        g.add_edges_from(self.edges)
        return g


@dataclass
class GraphSystem:
    """Contractions ``contractions[i - 1] = T_i`` on a common space."""

    graph: QGraph
    contractions: Sequence[np.ndarray]
    position: QPosition | str = QPosition.LEFT

    def __post_init__(self):
        self.position = QPosition.parse(self.position)
        self.contractions = [as_matrix(t) for t in self.contractions]
        if len(self.contractions) != self.graph.n:
            raise DimensionMismatch(f"{len(self.contractions)} operators for {self.graph.n} vertices")
        d = self.contractions[0].shape[0]
        for m in list(self.contractions) + list(self.graph.qmap.values()):
            if m.shape != (d, d):
                raise DimensionMismatch("all operators must act on the same space")

    @property
    def dim(self) -> int:
        return self.contractions[0].shape[0]

    def t(self, v: int) -> np.ndarray:
        return self.contractions[v - 1]


@dataclass
class GraphDilationResult:
    """Isometries per vertex and ``Qbar`` per edge on one truncated space.

    ``certificates`` holds ``lift_v{i}``, ``isometry_v{i}``,
    ``lift_q{i}_{j}``, ``relation_{i}_{j}`` and ``preserved_v{i}_step{k}``
    (exact block equality with the isometry of the previous step).
    """

    space: DirectSumSpace
    isometries: dict[int, BlockOperator]
    qbar_map: dict[tuple[int, int], BlockOperator]
    certificates: dict[str, float] = field(default_factory=dict)
    ordering: list[int] = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    def passed(self, tol: float | None = None) -> bool:
        tol = resolve_tol(tol)
        return all(v <= tol for v in self.certificates.values())

    def edge_certificates(self) -> dict[tuple[int, int], float]:
        return {k: self.certificates[f"relation_{k[0]}_{k[1]}"] for k in self.qbar_map}


# ---------------------------------------------------------------------------
# graph checks


def validate_tree(g: QGraph) -> list[int]:
    """Leaf-elimination ordering of a tree.

    While more than two vertices remain, the degree-1 vertex with the
    smallest index is removed.  The remaining edge closes the list with its
    smaller endpoint last, so path ``1-2-3`` gives ``[1, 3, 2]``.

    Raises
    ------
    Disconnected
        With the connected components (sorted).
    HasCycle
        With the vertices of one cycle.
    """
    nxg = g.to_networkx()
    if g.n > 1 and not nx.is_connected(nxg):
        comps = sorted(sorted(c) for c in nx.connected_components(nxg))
        raise Disconnected(comps)
    if len(g.edges) != g.n - 1:
        cycle = nx.find_cycle(nxg)
        raise HasCycle([a for a, _ in cycle])
    deg = dict(nxg.degree())
    alive = set(range(1, g.n + 1))
    order = []
    while len(alive) > 2:
        leaf = min(v for v in alive if deg[v] == 1)
        order.append(leaf)
        alive.discard(leaf)
        for u in nxg.neighbors(leaf):
            if u in alive:
                deg[u] -= 1
    # The last two vertices form the base edge; the smaller one is the root.
    order.extend(sorted(alive, reverse=True))
    return order


def edge_relation(position, ti, tj, q) -> np.ndarray:
    """``T_i T_j - rhs`` for the given position."""
    pos = QPosition.parse(position).value
    rhs = {"L": q @ tj @ ti, "M": tj @ q @ ti, "R": tj @ ti @ q}[pos]
    return ti @ tj - rhs


def check_system(s: GraphSystem) -> dict[tuple[int, int], float]:
    """Spectral-norm residual of the relation on every edge."""
    return {
        (i, j): opnorm(edge_relation(s.position, s.t(i), s.t(j), s.graph.qmap[(i, j)]))
        for i, j in s.graph.ordered_edges
    }


# ---------------------------------------------------------------------------
# construction


def _require_hypotheses(s: GraphSystem, tol: float) -> None:
    for v in range(1, s.graph.n + 1):
        nrm = opnorm(s.t(v))
        if nrm > 1 + tol:
            raise NotAContraction(nrm, f"T_{v}")
        if s.position is QPosition.RIGHT and nrm >= 1 - STRICT_MARGIN:
            raise NotStrict(f"T_{v} has norm {nrm:.6g}; position R needs strict contractions", nrm)
    for e, q in s.graph.qmap.items():
        if not _is_unitary(q, 100 * tol):
            raise HypothesisViolated(f"Q{e} is not unitary; tree dilation needs unitary edge matrices")
    for e, r in check_system(s).items():
        if r > tol:
            raise RelationViolated(f"edge {e} violates the {s.position.value} relation", r)


def _ando_step(wp, y, q0, leaf_first: bool, position: str, groups: int, gen_basis, tol):
    """Ando Case II on ``K'`` for the pair made of the leaf lift ``y`` and ``wp``.

    Returns ``(V_leaf, V_p)``.
    """
    if leaf_first:
        c = _ando_core(y, wp, q0, position, groups, gen_basis, tol, isometric="a2", composite=False)
        return c["v1"], c["v2"]
    c = _ando_core(wp, y, q0, position, groups, gen_basis, tol, isometric="a1", composite=False)
    return c["v2"], c["v1"]


def _leaf_lift(wp, q0, t_leaf, leaf_first: bool, position: str, d: int, tol):
    """Contractive lift of the leaf operator related to ``wp`` through ``q0``."""
    if position == "L":
        cod = q0 @ wp if leaf_first else adj(q0) @ wp
        dom = wp
    elif leaf_first:
        cod, dom = wp @ q0, wp
    else:
        cod, dom = wp, q0 @ wp
    y, top = intertwine_general(cod, dom, t_leaf, d, tol=tol)
    return y, top


def _krylov_core(dom: np.ndarray, d: int, top: np.ndarray, tol: float) -> np.ndarray:
    """Krylov span of ``dom`` from ``H`` with the top level ``top`` removed.

    The leaf lift vanishes off this span and the edge relation fails only
    on ``top``, so the generator identity is imposed on what remains.
    """
    f = _trim_filtration(krylov_filtration(dom, d, dom.shape[0]), tol)
    basis = f.basis
    if top.shape[1]:
        basis = basis - top @ (adj(top) @ basis)
    u, sv, _ = np.linalg.svd(basis, full_matrices=False)
    return u[:, sv > 1e-8]


def _attach_lm(state: dict, s: GraphSystem, leaf: int, p: int, groups: int, tol: float) -> tuple:
    pos = s.position.value
    d = s.dim
    wp = state["iso"][p]
    kp = wp.shape[0]
    key = (min(leaf, p), max(leaf, p))
    q0 = _extend_identity(s.graph.qmap[key], kp)
    leaf_first = leaf < p
    y, top = _leaf_lift(wp, q0, s.t(leaf), leaf_first, pos, d, tol)
    dom = wp if pos == "L" or leaf_first else q0 @ wp
    e = _krylov_core(dom, d, top, tol)
    v_leaf, v_p = _ando_step(wp, y, q0, leaf_first, pos, groups, e, tol)
    blocks = 1 + 4 * groups
    qbar = _extend_identity(q0, kp * blocks)
    return v_leaf, v_p, qbar, blocks, {"lift_dim": e.shape[1]}


def _attach_r(state: dict, s: GraphSystem, leaf: int, p: int, outer: int, tol: float) -> tuple:
    d = s.dim
    wp = state["iso"][p]
    kp = wp.shape[0]
    key = (min(leaf, p), max(leaf, p))
    q = s.graph.qmap[key]
    # Edge (p, leaf) with p < leaf reads T_p T_leaf = T_leaf T_p Q.  When the
    # leaf comes first the unitary Q is moved across: T_p T_leaf = T_leaf T_p Q*.
    q_eff = q if p < leaf else adj(q)
    q0 = _extend_identity(q_eff, kp)
    st = _strict_right_step(wp, q0, s.t(leaf), d, outer, tol)
    qbar = _extend_identity(_extend_identity(q, kp), kp * outer)
    return st["v2"], st["v1"], qbar, outer, {"cond_D": float(np.linalg.cond(st["D"]))}


def _base(s: GraphSystem, a: int, b: int, groups: int, outer: int, tol: float) -> dict:
    """Dilate the single edge ``(a, b)``, ``a < b``, on a space containing ``H``."""
    q = s.graph.qmap[(a, b)]
    pos = s.position.value
    if pos == "R":
        r = strict_q_diag_construction(s.t(a), s.t(b), q, "R", outer, tol=tol)
        return {"iso": {a: r.v1.matrix, b: r.v2.matrix}, "qbar": {(a, b): r.qbar.matrix}}
    c = _ando_core(s.t(a), s.t(b), q, pos, groups, tol=tol)
    return {"iso": {a: c["v1"], b: c["v2"]}, "qbar": {(a, b): c["qbar"]}}


def _relation_on(pos: str, vi, vj, qb, b) -> float:
    """Edge relation applied to the columns ``b`` without forming products."""
    lhs = vi @ (vj @ b)
    if pos == "L":
        rhs = qb @ (vj @ (vi @ b))
    elif pos == "M":
        rhs = vj @ (qb @ (vi @ b))
    else:
        rhs = vj @ (vi @ (qb @ b))
    return opnorm(lhs - rhs)


def _orth(cols: np.ndarray) -> np.ndarray:
    u, sv, _ = np.linalg.svd(cols, full_matrices=False)
    return u[:, sv > 1e-10 * max(1.0, sv[0] if sv.size else 0.0)]


def _certify(s: GraphSystem, iso: dict, qbar: dict, tol: float) -> dict[str, float]:
    d = s.dim
    total = next(iter(iso.values())).shape[0]
    head = np.eye(total, dtype=complex)[:, :d]
    certs: dict[str, float] = {}
    for v in sorted(iso):
        m = iso[v]
        certs[f"lift_v{v}"] = _lift_res(m, s.t(v))
        b = _orth(np.hstack([head, m @ head]))
        mb = m @ b
        certs[f"isometry_v{v}"] = opnorm(adj(mb) @ mb - np.eye(b.shape[1]))
    for (i, j), qb in sorted(qbar.items()):
        certs[f"lift_q{i}_{j}"] = _lift_res(qb, s.graph.qmap[(i, j)])
        b = _orth(np.hstack([head, iso[i] @ head, iso[j] @ head]))
        certs[f"relation_{i}_{j}"] = _relation_on(s.position.value, iso[i], iso[j], qb, b)
    return certs


def _plan(s: GraphSystem, ordering: list[int], n: int, budget: int) -> list[int]:
    """Blocks added at each step (base first), shrunk to fit the budget."""
    steps = max(0, len(ordering) - 1)
    if s.position is QPosition.RIGHT:
        hi, lo = STRICT_OUTER, STRICT_MIN_OUTER
    else:
        hi = max(MIN_GROUPS, -(-(max(n, 1) - 1) // 4))
        lo = MIN_GROUPS
    sizes = [hi] * steps

    def dim_of(sz):
        if s.position is QPosition.RIGHT:
            if not sz:
                return s.dim
            dim = s.dim * inner_blocks(sz[0]) * sz[0]
            for k in sz[1:]:
                dim *= k
            return dim
        dim = s.dim
        for k in sz:
            dim *= 1 + 4 * k
        return dim

    # Shrink the latest steps first: earlier steps carry more structure.
    for idx in reversed(range(steps)):
        while dim_of(sizes) > budget and sizes[idx] > lo:
            sizes[idx] -= 1
    need = dim_of(sizes)
    if need > budget:
        raise DimensionBudgetExceeded(need, budget)
    return sizes


def dilate_tree_system(
    s: GraphSystem, n: int = 10, max_total_dim: int = MAX_TOTAL_DIM, tol: float | None = None
) -> GraphDilationResult:
    """Isometric lifts ``V_i`` of a tree system with ``Qbar``-relations on edges.

    Parameters
    ----------
    s : GraphSystem
        Tree-indexed system with unitary ``Q`` on every edge.  Position
        ``R`` also needs ``||T_i|| < 1 - STRICT_MARGIN``.
    n : int
        Truncation hint for each Ando step (groups ``ceil((n - 1) / 4)``).
    max_total_dim : int
        The per-step sizes are lowered until the final space fits;
        otherwise :class:`DimensionBudgetExceeded` is raised.
    """
    tol = resolve_tol(tol)
    ordering = validate_tree(s.graph)
    _require_hypotheses(s, tol)
    d = s.dim
    if s.graph.n == 1:
        v = schaffer_matrix(s.t(1), max(2, n))
        space = DirectSumSpace.uniform(d, max(2, n))
        iso = {1: v}
        certs = _certify(s, iso, {}, tol)
        return GraphDilationResult(space, {1: BlockOperator(space, space, v, 1, 0, "V1")}, {}, certs, ordering)
    sizes = _plan(s, ordering, n, max_total_dim)
    a, b = sorted(ordering[-2:])
    state = _base(s, a, b, sizes[0], sizes[0], tol)
    attached = {a, b}
    certs: dict[str, float] = {}
    steps_info = []
    for k, leaf in enumerate(reversed(ordering[:-2]), start=1):
        p = next(u for u in s.graph.neighbours(leaf) if u in attached)
        old = state["iso"][p]
        kp = old.shape[0]
        if s.position is QPosition.RIGHT:
            v_leaf, v_p, qb, blocks, info = _attach_r(state, s, leaf, p, sizes[k], tol)
        else:
            v_leaf, v_p, qb, blocks, info = _attach_lm(state, s, leaf, p, sizes[k], tol)
        total = kp * blocks
        certs[f"preserved_v{p}_step{k}"] = float(np.max(np.abs(v_p[:kp, :kp] - old)))
        iso = {u: _extend_identity(m, total) for u, m in state["iso"].items()}
        iso[p] = v_p
        iso[leaf] = v_leaf
        qbar = {e: _extend_identity(m, total) for e, m in state["qbar"].items()}
        qbar[(min(leaf, p), max(leaf, p))] = qb
        state = {"iso": iso, "qbar": qbar}
        attached.add(leaf)
        steps_info.append({"leaf": leaf, "parent": p, "blocks": blocks, **info})
    certs.update(_certify(s, state["iso"], state["qbar"], tol))
    total = next(iter(state["iso"].values())).shape[0]
    space = DirectSumSpace((("H", d), ("K-H", total - d)))
    isos = {v: BlockOperator(space, space, m, None, None, f"V{v}", 0) for v, m in sorted(state["iso"].items())}
    qbars = {e: BlockOperator(space, space, m, None, None, f"Qbar{e}", 0) for e, m in sorted(state["qbar"].items())}
    return GraphDilationResult(space, isos, qbars, certs, ordering, {"steps": steps_info, "sizes": sizes})
