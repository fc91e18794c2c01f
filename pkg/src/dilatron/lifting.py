"""Constructive lifting and extension engines.

Three inductive engines build an operator on a truncated direct sum one
block at a time:

* the DMP ladder, each step being :func:`partial_iso_step`;
* the dual-Parrott ladder, each step being
  :func:`dilatron.numkernel.dual_parrott_complete`;
* the intertwining ladder, each step being :func:`qpart_step`.

Every engine keeps the previous level verbatim as the leading block of the
next one, so the ladder is consistent bit for bit.  The remaining
functions are front-ends that reduce the six Q-relation forms to one of
the engines, using adjoints to pass between lifts and extensions.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import numkernel as nk
from ._structures import FilteredLift, coiso_matrix, krylov_filtration, schaffer_matrix
from .blockspace import BlockOperator, DirectSumSpace, dualize
from .config import STRICT_MARGIN, resolve_tol
from .errors import HypothesisViolated, NotStrict
from .numkernel import adj, as_matrix, opnorm

# Scaling by slightly more than the norm keeps every defect operator
# invertible, which makes the Douglas solves well conditioned; the price is
# a relative norm excess of at most this amount.
NORM_HEADROOM = 1e-10

__all__ = [
    "LiftProblem",
    "LiftResult",
    "RELATION_FORMS",
    "relation_residual",
    "partial_iso_step",
    "lift_inductive_dmp",
    "lift_inductive_dualparrott",
    "qpart_step",
    "intertwine_ladder",
    "intertwine_lift",
    "contractive_lift_reduce",
    "q_commutant_lift",
    "q_intertwine_lift",
    "reverse_intertwine",
]

RELATION_FORMS = ("XT=QTX", "XT=TQX", "TX=XTQ", "TX=QXT", "XT=TXQ", "TX=XQT")


def _rel_sides(form: str, t, x, q):
    """Both sides of a relation form evaluated on the given matrices."""
    table = {
        "XT=QTX": (x @ t, q @ t @ x),
        "XT=TQX": (x @ t, t @ q @ x),
        "TX=XTQ": (t @ x, x @ t @ q),
        "TX=QXT": (t @ x, q @ x @ t),
        "XT=TXQ": (x @ t, t @ x @ q),
        "TX=XQT": (t @ x, x @ q @ t),
    }
    return table[form]


def relation_residual(form: str, t, x, q) -> float:
    lhs, rhs = _rel_sides(form, as_matrix(t), as_matrix(x), as_matrix(q))
    return opnorm(lhs - rhs)


@dataclass(frozen=True)
class LiftProblem:
    """Data ``T, X, Q`` with one of the six relation forms.

    ``side`` is ``"lift"`` (isometric lifts, ``H`` co-invariant) or
    ``"extend"`` (co-isometric extensions, ``H`` invariant).
    """

    t: np.ndarray
    x: np.ndarray
    q: np.ndarray
    relation_form: str
    side: str = "lift"
    position: str = "L"

    def __post_init__(self):
        for name in ("t", "x", "q"):
            object.__setattr__(self, name, as_matrix(getattr(self, name)))
        if self.relation_form not in RELATION_FORMS:
            raise ValueError(f"unknown relation form {self.relation_form!r}")
        if self.side not in ("lift", "extend"):
            raise ValueError("side must be 'lift' or 'extend'")

    def residual(self) -> float:
        return relation_residual(self.relation_form, self.t, self.x, self.q)


@dataclass
class LiftResult:
    space: DirectSumSpace
    y: BlockOperator
    qbar: BlockOperator
    per_level: list[np.ndarray]
    certificates: dict[str, float]
    engine: str = ""
    extra: dict = field(default_factory=dict)

    def passed(self, tol: float) -> bool:
        return all(v <= tol for v in self.certificates.values())


# ---------------------------------------------------------------------------
# one-step lemmas


def partial_iso_step(t, x, y, s0, tol: float | None = None, scale: float | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Solve ``X S0 = T C + S0 W`` keeping ``[[Y, C], [0, W]]`` at norm ``||Y||``.

    Requires ``XT = TY``, ``||X|| <= ||Y||`` and ``TT* + S0 S0* = I``.  The
    data are divided by ``scale`` (default ``max(||X||, ||Y||)`` plus a
    relative headroom of ``NORM_HEADROOM``); a two-term Douglas
    factorization gives ``R, W`` with ``X S0 = T D_{Y*} R + S0 W``.  Since
    ``R* R <= D_W^2`` we have ``R = F D_W`` for a contraction ``F``, and
    ``C = D_{Y*} F D_W = D_{Y*} R``.
    """
    tol = resolve_tol(tol)
    t, x, y, s0 = (as_matrix(m) for m in (t, x, y, s0))
    gram = t @ adj(t) + s0 @ adj(s0)
    if opnorm(gram - np.eye(gram.shape[0])) > 10 * tol:
        raise HypothesisViolated("TT* + S0 S0* = I", opnorm(gram - np.eye(gram.shape[0])))
    mu = _scale(max(opnorm(x), opnorm(y)), scale)
    k = s0.shape[1]
    if mu == 0.0:
        return np.zeros((t.shape[1], k), dtype=complex), np.zeros((k, k), dtype=complex)
    xs, ys = x / mu, y / mu
    d_ystar = nk.codefect(ys)
    r, w = nk.douglas_solve_pair(xs @ s0, t @ d_ystar, s0, tol)
    c = d_ystar @ r
    return c * mu, w * mu


def _scale(norm: float, scale: float | None) -> float:
    if scale is not None:
        return float(scale)
    return norm * (1.0 + NORM_HEADROOM)


def qpart_step(t1, t2, x, s1, s2, tol: float | None = None, scale: float | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Blocks ``A, B`` with ``V1 Y = Y V2`` for ``Y = [[X, 0], [A, B]]``.

    Here ``V_i = [[T_i, 0], [S_i, 0]]`` with ``T_i* T_i + S_i* S_i = I`` and
    ``T1 X = X T2``.  After scaling ``||X|| = 1`` the equation
    ``A T2 + B S2 = S1 X`` is solved in the form
    ``T2* D_X K* + S2* B* = X* S1*`` and ``A = K D_X``; the resulting ``Y``
    has the same norm as ``X`` (up to the headroom described in
    :func:`partial_iso_step`).
    """
    tol = resolve_tol(tol)
    t1, t2, x, s1, s2 = (as_matrix(m) for m in (t1, t2, x, s1, s2))
    # Rounding can push ||X|| a hair past a fixed scale after many levels;
    # never divide by less than the current norm.
    mu = max(_scale(opnorm(x), scale), _scale(opnorm(x), None))
    if mu == 0.0:
        return (np.zeros((s1.shape[0], x.shape[1]), dtype=complex), np.zeros((s1.shape[0], s2.shape[0]), dtype=complex))
    xs = x / mu
    d_x = nk.defect(xs)
    kstar, bstar = nk.douglas_solve_pair(adj(xs) @ adj(s1), adj(t2) @ d_x, adj(s2), tol)
    k, b = adj(kstar), adj(bstar)
    # [K B] is a contraction, so K = D_{B*} C for a contraction C and the
    # new column [[X, 0], [K D_X, B]] keeps norm one.
    a = k @ d_x
    return a * mu, b * mu


# ---------------------------------------------------------------------------
# inductive engines


def _level_offsets(levels) -> list[int]:
    out = [0]
    for s in levels:
        out.append(out[-1] + s)
    return out


def intertwine_ladder(v: FilteredLift, vp: FilteredLift, x, n_levels: int | None = None, tol: float | None = None) -> list[np.ndarray]:
    """Run the qpart induction between two filtered isometric lifts.

    ``v`` lifts ``T`` and ``vp`` lifts ``T'`` with ``T X = X T'``.  Returns
    the ladder ``Y_0 = X, Y_1, ...``; ``Y_{k+1} = [[Y_k, 0], [A_k, B_k]]``
    and ``V_k Y_k = Y_k V'_k`` for each level.
    """
    tol = resolve_tol(tol)
    x = as_matrix(x)
    L = min(len(v.levels), len(vp.levels)) if n_levels is None else n_levels
    ov, op = _level_offsets(v.levels), _level_offsets(vp.levels)
    ladder = [x]
    y = x
    scale = _scale(opnorm(x), None)
    for k in range(L - 1):
        a_, b_ = ov[k + 1], op[k + 1]
        t1 = v.matrix[:a_, :a_]
        s1 = v.matrix[a_ : ov[k + 2], :a_]
        t2 = vp.matrix[:b_, :b_]
        s2 = vp.matrix[b_ : op[k + 2], :b_]
        a_blk, b_blk = qpart_step(t1, t2, y, s1, s2, tol, scale)
        top = np.hstack([y, np.zeros((y.shape[0], b_blk.shape[1]), dtype=complex)])
        y = np.vstack([top, np.hstack([a_blk, b_blk])])
        ladder.append(y)
    return ladder


def _dmp_ladder(
    z: np.ndarray,
    d: int,
    x: np.ndarray,
    q_level: Callable[[int], np.ndarray],
    blocks: int,
    mode: str,
    qscalar: complex = 1.0,
    tol: float | None = None,
) -> list[np.ndarray]:
    """Level-by-level extension ladder on ``H + D + D + ...``.

    ``z`` is the truncated co-isometric extension of ``T``.  ``mode``
    ``"coiso"`` handles ``XT = TXQ`` with ``Q`` co-isometric (substitution
    ``Y = XQ``); ``mode`` ``"triangular"`` handles ``TX = QXT`` with the
    extension ``Qbar`` given level-wise by ``q_level`` (substitution
    ``S = Q X``).
    """
    ladder = [x]
    xk = x
    yk = x @ q_level(0) if mode == "coiso" else None
    scale = _scale(opnorm(x), None)
    for k in range(blocks - 1):
        a = (k + 1) * d
        zk = z[:a, :a]
        sk = z[:a, a : a + d]
        if mode == "coiso":
            c, w = partial_iso_step(zk, xk, yk, sk, tol, scale)
            yk = np.block([[yk, c], [np.zeros((d, a), dtype=complex), w]])
            xk = np.block([[xk, c / qscalar], [np.zeros((d, a), dtype=complex), w / qscalar]])
        else:
            s_prev = q_level(k) @ xk
            c, w = partial_iso_step(zk, s_prev, xk, sk, tol, scale)
            xk = np.block([[xk, c], [np.zeros((d, a), dtype=complex), w]])
        ladder.append(xk)
    return ladder


def _dualparrott_ladder(
    z: np.ndarray, d: int, x: np.ndarray, q_level: Callable[[int], np.ndarray], blocks: int, tol: float | None = None
) -> list[np.ndarray]:
    """Extension ladder for ``ZS = Qbar S Z`` built from dual Parrott steps.

    At level ``k`` the new operator must restrict to ``S_k`` on ``K_k`` and
    its adjoint must act on ``Z* K_k`` as ``Z* S_k* Qbar_k*``; the two
    prescriptions are compatible exactly when the level-``k`` relation
    holds, which :func:`dual_parrott_complete` checks before extending.
    """
    ladder = [x]
    sk = x
    for k in range(blocks - 1):
        a = (k + 1) * d
        zstar = adj(z[: a + d, : a + d])[:, :a]  # Z* restricted to K_k, into K_{k+1}
        e = np.eye(a + d, dtype=complex)[:, :a]
        xin = e @ sk
        xprime = zstar @ adj(sk) @ adj(q_level(k))
        res = nk.dual_parrott_complete(xin, xprime, e, zstar, tol)
        new = np.array(res.completed)
        new[:, :a] = xin  # keep the previous level verbatim
        sk = new
        ladder.append(sk)
    return ladder


def _check_contraction(m, label: str, tol: float) -> None:
    nrm = opnorm(m)
    if nrm > 1 + tol:
        raise HypothesisViolated(f"{label} is a contraction", nrm - 1)


def _is_isometry(m, tol) -> bool:
    return opnorm(adj(m) @ m - np.eye(m.shape[1])) <= tol


def _is_coisometry(m, tol) -> bool:
    return opnorm(m @ adj(m) - np.eye(m.shape[0])) <= tol


def _block_diag_q(q: np.ndarray, blocks: int, qscalar: complex = 1.0) -> np.ndarray:
    d = q.shape[0]
    out = np.eye(d * blocks, dtype=complex) * qscalar
    out[:d, :d] = q
    return out


def _qbar_levels(qbar: np.ndarray, d: int) -> Callable[[int], np.ndarray]:
    return lambda k: qbar[: (k + 1) * d, : (k + 1) * d]


def _require_upper_block(qbar: np.ndarray, d: int, tol: float) -> None:
    blocks = qbar.shape[0] // d
    worst = 0.0
    for i in range(blocks):
        for j in range(i):
            worst = max(worst, float(np.max(np.abs(qbar[i * d : (i + 1) * d, j * d : (j + 1) * d]))))
    if worst > tol:
        raise HypothesisViolated("Qbar leaves every K_n invariant (block upper triangular)", worst)


def _space(d: int, blocks: int, head="H", tail="D") -> DirectSumSpace:
    return DirectSumSpace.uniform(d, blocks, head, tail)


def _extension_certificates(z, y, qbar, x, form, d, ladder) -> dict[str, float]:
    """Certificates for an extension ``y`` of ``x`` (upper triangular)."""
    e = np.eye(y.shape[0], dtype=complex)[:, :d]
    lhs, rhs = _rel_sides(form, z, y, qbar)
    nx = opnorm(x)
    return {
        "lift_y": opnorm(y @ e - e @ x),
        "relation": opnorm(lhs - rhs),
        "norm_preservation": max(abs(opnorm(m) - nx) for m in ladder),
    }


def _extension_dmp(t, x, q, form, blocks, qbar=None, qscalar=1.0, engine="dmp", tol=None):
    """Extension-side inductive constructions (``XT=TXQ`` and ``TX=QXT``)."""
    tol = resolve_tol(tol)
    d = t.shape[0]
    z = coiso_matrix(t, blocks)
    if form == "XT=TXQ":
        if not _is_coisometry(q, 10 * tol):
            raise HypothesisViolated("Q is a co-isometry")
        if abs(abs(qscalar) - 1) > tol:
            raise HypothesisViolated("|q| = 1")
        qb = _block_diag_q(q, blocks, qscalar)
        if engine != "dmp":
            raise HypothesisViolated("the dual-Parrott engine applies to TX=QXT data")
        ladder = _dmp_ladder(z, d, x, _qbar_levels(qb, d), blocks, "coiso", qscalar, tol)
    elif form == "TX=QXT":
        qb = _block_diag_q(q, blocks) if qbar is None else as_matrix(qbar)
        _require_upper_block(qb, d, tol)
        _check_contraction(qb, "Qbar", tol)
        if opnorm(qb[:d, :d] - q) > tol:
            raise HypothesisViolated("Qbar extends Q")
        if engine == "dualparrott":
            ladder = _dualparrott_ladder(z, d, x, _qbar_levels(qb, d), blocks, tol)
        else:
            ladder = _dmp_ladder(z, d, x, _qbar_levels(qb, d), blocks, "triangular", tol=tol)
    else:
        raise HypothesisViolated(f"inductive extension engines do not handle {form}")
    return z, qb, ladder


def _run_inductive(p: LiftProblem, n: int, engine: str, qbar=None, qscalar=1.0, tol=None) -> LiftResult:
    tol = resolve_tol(tol)
    res = p.residual()
    if res > tol * max(1.0, opnorm(p.x)):
        raise HypothesisViolated(f"{p.relation_form} holds", res)
    _check_contraction(p.t, "T", tol)
    _check_contraction(p.q, "Q", tol)
    ext = p if p.side == "extend" else dualize(p)
    qb_in = None if qbar is None else (as_matrix(qbar) if p.side == "extend" else adj(as_matrix(qbar)))
    z, qb, ladder = _extension_dmp(ext.t, ext.x, ext.q, ext.relation_form, n, qb_in, np.conj(qscalar) if p.side == "lift" else qscalar, engine, tol)
    d = p.t.shape[0]
    y = ladder[-1]
    certs = _extension_certificates(z, y, qb, ext.x, ext.relation_form, d, ladder)
    space = _space(d, n, "H", "D_T*" if p.side == "extend" else "D_T")
    if p.side == "extend":
        yop = BlockOperator(space, space, y, 0, None, "Xtilde")
        qop = BlockOperator(space, space, qb, 0, 0, "Qbar")
        levels = ladder
    else:
        yop = BlockOperator(space, space, adj(y), None, 0, "Xtilde")
        qop = BlockOperator(space, space, adj(qb), 0, 0, "Qbar")
        levels = [adj(m) for m in ladder]
    return LiftResult(space, yop, qop, levels, certs, engine)


def lift_inductive_dmp(p: LiftProblem, n: int = 8, qbar=None, qscalar: complex = 1.0, tol: float | None = None) -> LiftResult:
    """Inductive construction with one-step partial-isometry completions.

    Extension data ``XT = TXQ`` (``Q`` co-isometric) produce ``X~`` with
    ``X~ Z = Z X~ Qbar`` and ``Qbar = Q + qI``; data ``TX = QXT`` produce
    ``Z X~ = Qbar X~ Z`` for a block upper-triangular contraction ``Qbar``
    (default ``Q + I``).  Lift data are handled through their adjoints.
    """
    return _run_inductive(p, n, "dmp", qbar, qscalar, tol)


def lift_inductive_dualparrott(p: LiftProblem, n: int = 8, qbar=None, tol: float | None = None) -> LiftResult:
    """Same problems as the ``TX = QXT`` branch of :func:`lift_inductive_dmp`,
    extended level by level with dual Parrott completions."""
    return _run_inductive(p, n, "dualparrott", qbar, 1.0, tol)


# ---------------------------------------------------------------------------
# intertwining lifts


def _schaffer_filtered(t, blocks, d=None) -> FilteredLift:
    t = as_matrix(t)
    return FilteredLift(schaffer_matrix(t, blocks, d), tuple([t.shape[0]] * blocks))


def _intertwine_certificates(v, vp, y, x, exact_cols=None) -> dict[str, float]:
    e1 = np.eye(y.shape[0], dtype=complex)[:, : x.shape[0]]
    e2 = np.eye(y.shape[1], dtype=complex)[:, : x.shape[1]]
    rel = v @ y - y @ vp
    if exact_cols is not None:
        rel = rel[:, :exact_cols]
    return {
        "lift_y": opnorm(adj(y) @ e1 - e2 @ adj(x)),
        "relation": opnorm(rel),
        "norm_preservation": abs(opnorm(y) - opnorm(x)),
    }


def intertwine_lift(t, tprime, x, n: int = 10, tol: float | None = None) -> LiftResult:
    """Lift ``X`` (with ``T X = X T'``) to ``Y`` with ``V Y = Y V'``.

    ``V`` and ``V'`` are the Schäffer isometric dilations of ``T`` and
    ``T'`` truncated to ``n`` blocks, and ``||Y|| = ||X||``.
    """
    tol = resolve_tol(tol)
    t, tp, x = (as_matrix(m) for m in (t, tprime, x))
    _check_contraction(t, "T", tol)
    _check_contraction(tp, "T'", tol)
    res = opnorm(t @ x - x @ tp)
    if res > tol * max(1.0, opnorm(x)):
        raise HypothesisViolated("TX = XT'", res)
    v = _schaffer_filtered(t, n)
    vp = _schaffer_filtered(tp, n)
    ladder = intertwine_ladder(v, vp, x, n, tol)
    y = ladder[-1]
    certs = _intertwine_certificates(v.matrix, vp.matrix, y, x)
    certs["norm_preservation"] = max(abs(opnorm(m) - opnorm(x)) for m in ladder)
    cod = _space(t.shape[0], n, "H", "D_T")
    dom = _space(tp.shape[0], n, "H", "D_T'")
    yop = BlockOperator(dom, cod, y, None, 0, "Y")
    return LiftResult(cod, yop, BlockOperator(cod, cod, np.eye(cod.total_dim), 0, 0, "I"), ladder, certs, "qpart")


def contractive_lift_reduce(t, tprime, a, w, n: int = 10, tol: float | None = None) -> BlockOperator:
    """Contractive lift ``B`` of ``A`` with ``W B = B V``.

    ``V`` is the Schäffer dilation of ``T`` (``n`` blocks) and ``w`` a
    contractive lift of ``T'`` on a finite space whose first summand is
    ``H``.  ``W`` is dilated to an isometry ``V''`` (Schäffer again), the
    intertwining engine runs between ``V''`` and ``V`` along the Krylov
    filtration of ``V''``, and ``B`` is the compression of the result to
    the space of ``W``.
    """
    tol = resolve_tol(tol)
    t, tp, a = (as_matrix(m) for m in (t, tprime, a))
    wm = as_matrix(w.matrix if isinstance(w, BlockOperator) else w)
    d = t.shape[0]
    dim_w = wm.shape[0]
    res = opnorm(tp @ a - a @ t)
    if res > tol * max(1.0, opnorm(a)):
        raise HypothesisViolated("T'A = AT", res)
    _check_contraction(wm, "W", tol)
    if opnorm(adj(wm)[: tp.shape[0], : tp.shape[0]] - adj(tp)) > tol or opnorm(adj(wm)[tp.shape[0] :, : tp.shape[0]]) > tol:
        raise HypothesisViolated("W lifts T'")
    if opnorm(a) == 0.0:
        return BlockOperator(_space(d, n), DirectSumSpace((("H", tp.shape[0]), ("K'", dim_w - tp.shape[0]))), np.zeros((dim_w, d * n)), None, 0, "B")
    outer = n + 1
    vpp = schaffer_matrix(wm, outer)
    filt = krylov_filtration(vpp, tp.shape[0], n)
    v = _schaffer_filtered(t, n)
    levels = min(len(filt.levels), n)
    ladder = intertwine_ladder(filt, v, a, levels, tol)
    yc = ladder[-1]
    cols = sum(v.levels[:levels])
    b_full = filt.basis[:, : yc.shape[0]] @ yc
    b = np.zeros((dim_w, d * n), dtype=complex)
    b[:, :cols] = b_full[:dim_w]
    dom = _space(d, n, "H", "D_T")
    cod = DirectSumSpace((("H", tp.shape[0]), ("K'", dim_w - tp.shape[0])))
    return BlockOperator(dom, cod, b, None, 0, "B", exact_override=max(0, levels - 1))


def _schaffer_lift_of(q: np.ndarray, blocks: int) -> np.ndarray:
    return schaffer_matrix(q, blocks)


def _qbar_matrix(q: np.ndarray, blocks: int, choice: str, tol: float) -> tuple[np.ndarray, str]:
    if choice == "auto":
        choice = "direct_sum" if _is_isometry(q, 10 * tol) else "schaffer"
    if choice == "direct_sum":
        return _block_diag_q(q, blocks), choice
    if choice == "schaffer":
        return _schaffer_lift_of(q, blocks), choice
    raise ValueError(f"unknown qbar choice {choice!r}")


def _two_step_levels(blocks: int, d: int) -> tuple[int, ...]:
    """Levels ``d, 2d, 2d, ...`` (last level possibly single) covering ``blocks``."""
    sizes = [d]
    left = blocks - 1
    while left > 0:
        take = min(2, left)
        sizes.append(take * d)
        left -= take
    return tuple(sizes)


def _as_filtered(m: np.ndarray, d: int, blocks: int, tol: float) -> FilteredLift:
    """View an isometric lift on ``blocks`` copies of ``H`` as a filtered lift."""
    for levels in (tuple([d] * blocks), _two_step_levels(blocks, d)):
        f = FilteredLift(m, levels)
        if f.structure_defect() <= tol:
            return f
    return krylov_filtration(m, d, blocks)


def q_commutant_lift(p: LiftProblem, qbar_choice: str = "auto", n: int = 10, engine: str = "auto", qbar=None, tol: float | None = None) -> LiftResult:
    """Front-end for Q-commutant lifts and extensions of a single contraction.

    ======== ===================================== ==========================
    form     lift produced                         route
    ======== ===================================== ==========================
    XT=QTX   Y V = Qbar V Y                        intertwining (or reduction)
    XT=TQX   Y V = V Qbar Y                        intertwining (or reduction)
    TX=XTQ   V Y = Y V Qbar   (Qbar isometric)     intertwining
    TX=XQT   V Y = Y Qbar V   (Qbar isometric)     intertwining
    TX=QXT   V X~ = Qbar X~ V (Q isometric)        DMP on the adjoint data
    XT=TXQ   X~ V = V X~ Qbar                      DMP or dual Parrott
    ======== ===================================== ==========================

    Extension problems are dualized, solved as lifts and adjointed back.
    """
    tol = resolve_tol(tol)
    if p.side == "extend":
        r = q_commutant_lift(dualize(p), qbar_choice, n, engine, None if qbar is None else adj(as_matrix(qbar)), tol)
        return _adjoint_result(r)
    form = p.relation_form
    if form in ("TX=QXT", "XT=TXQ"):
        if form == "TX=QXT" and not _is_isometry(p.q, 10 * tol):
            raise HypothesisViolated("Q is an isometry")
        eng = "dmp" if engine in ("auto", "dmp") else engine
        if form == "TX=QXT" and eng == "dualparrott":
            raise HypothesisViolated("the dual-Parrott engine applies to XT=TXQ lifts")
        return _run_inductive(p, n, eng, qbar, 1.0, tol)
    t, x, q = p.t, p.x, p.q
    _check_contraction(t, "T", tol)
    res = p.residual()
    if res > tol * max(1.0, opnorm(x)):
        raise HypothesisViolated(f"{form} holds", res)
    d = t.shape[0]
    big = 2 * n + 1  # internal truncation; results are cut back to n blocks
    v = schaffer_matrix(t, big)
    if qbar is not None:
        qb = as_matrix(qbar)
        choice = "given"
    else:
        qb, choice = _qbar_matrix(q, big, qbar_choice, tol)
    if form == "XT=QTX":
        w, tprime, w_left = qb @ v, q @ t, True
    elif form == "XT=TQX":
        w, tprime, w_left = v @ qb, t @ q, True
    elif form == "TX=XTQ":
        w, tprime, w_left = v @ qb, t @ q, False
    else:  # TX=XQT
        w, tprime, w_left = qb @ v, q @ t, False
    _check_contraction(tprime, "composite", tol)
    wn = w[: n * d, : n * d]
    if opnorm(wn) > 1 + tol:
        raise HypothesisViolated("||Qbar V|| <= 1 (composite lift is contractive)", opnorm(wn) - 1)
    w_iso = _is_isometry(w[:, : (big - 2) * d], 100 * tol)
    space = _space(d, n, "H", "D_T")
    vn = v[: n * d, : n * d]
    if w_left:
        # W Y = Y V: the composite sits on the codomain side.
        if w_iso:
            fw = _as_filtered(w, d, big, tol)
            ladder = intertwine_ladder(fw, _schaffer_filtered(t, big), x, n, tol)
            y_big = ladder[-1]
            if fw.basis is not None:
                y_big = fw.basis[:, : y_big.shape[0]] @ y_big
            y = np.zeros((n * d, n * d), dtype=complex)
            rows = min(n * d, y_big.shape[0])
            y[:rows, :] = y_big[:rows, : n * d]
            exact = n - 1
            route = "qpart"
        else:
            bop = contractive_lift_reduce(t, tprime, x, wn, n, tol)
            y = bop.matrix
            exact = bop.exact_input_blocks
            route = "reduction"
        ladder_out = [y[: (k + 1) * d, : (k + 1) * d] for k in range(n)]
        rel = (wn @ y - y @ vn)[:, : exact * d]
    else:
        if not w_iso:
            raise HypothesisViolated("Qbar is an isometric lift (composite lift must be isometric)")
        fw = _as_filtered(w, d, big, tol)
        ladder = intertwine_ladder(_schaffer_filtered(t, big), fw, x, None, tol)
        y_big = ladder[-1]
        if fw.basis is not None:
            y_big = y_big @ adj(fw.basis[:, : y_big.shape[1]])
        y = np.zeros((n * d, n * d), dtype=complex)
        rows, cols = min(n * d, y_big.shape[0]), min(n * d, y_big.shape[1])
        y[:rows, :cols] = y_big[:rows, :cols]
        # W may move content two blocks forward, so the last two blocks of
        # the cut-down Y are not seen exactly
        exact = max(1, n - 2)
        route = "qpart"
        ladder_out = [y[: (k + 1) * d, : (k + 1) * d] for k in range(n)]
        rel = (vn @ y - y @ wn)[:, : exact * d]
    e = np.eye(n * d, dtype=complex)[:, :d]
    certs = {
        "lift_y": opnorm(adj(y) @ e - e @ adj(x)),
        "relation": opnorm(rel),
        "norm_preservation": max(0.0, opnorm(y) - opnorm(x)),
    }
    yop = BlockOperator(space, space, y, None, 0, "Y", exact_override=exact)
    qop = BlockOperator(space, space, qb[: n * d, : n * d], 1 if choice == "schaffer" else 0, 0, "Qbar")
    return LiftResult(space, yop, qop, ladder_out, certs, route, {"qbar_choice": choice})


def _adjoint_result(r: LiftResult) -> LiftResult:
    from .blockspace import adjoint

    return LiftResult(
        r.space,
        adjoint(r.y),
        adjoint(r.qbar),
        [adj(m) for m in r.per_level],
        dict(r.certificates),
        r.engine,
        dict(r.extra),
    )


def q_intertwine_lift(t1, t2, x, q, position: str = "L", side: str = "lift", n: int = 10, tol: float | None = None) -> LiftResult:
    """Two-space Q-intertwining lifts.

    Lift side, position ``L``: ``X T1 = Q T2 X`` gives ``Y V1 = Qbar V2 Y``;
    position ``M``: ``X T1 = T2 Q X`` gives ``Y V1 = V2 Qbar Y``.  The
    extension side treats the adjoint data and returns
    ``V1 Y = Y V2 Qbar`` (resp. ``V1 Y = Y Qbar V2``) for co-isometric
    extensions.
    """
    tol = resolve_tol(tol)
    t1, t2, x, q = (as_matrix(m) for m in (t1, t2, x, q))
    if side == "extend":
        # T1 X = X T2 Q (resp. X Q T2) is the adjoint of a lift problem in
        # the same position.
        r = q_intertwine_lift(adj(t1), adj(t2), adj(x), adj(q), position, "lift", n, tol)
        return _adjoint_result(r)
    if position not in ("L", "M"):
        raise HypothesisViolated("Q-intertwining lifts are available for positions L and M")
    _check_contraction(t1, "T1", tol)
    _check_contraction(t2, "T2", tol)
    comp = q @ t2 if position == "L" else t2 @ q
    _check_contraction(comp, "composite", tol)
    res = opnorm(x @ t1 - comp @ x)
    if res > tol * max(1.0, opnorm(x)):
        raise HypothesisViolated("X T1 = Q T2 X" if position == "L" else "X T1 = T2 Q X", res)
    d1, d2 = t1.shape[0], t2.shape[0]
    big = 2 * n + 1
    v1 = schaffer_matrix(t1, big)
    v2 = schaffer_matrix(t2, big)
    qb, choice = _qbar_matrix(q, big, "auto", tol)
    w = qb @ v2 if position == "L" else v2 @ qb
    w_iso = _is_isometry(w[:, : (big - 2) * d2], 100 * tol)
    if w_iso:
        fw = _as_filtered(w, d2, big, tol)
        ladder = intertwine_ladder(fw, _schaffer_filtered(t1, big), x, n, tol)
        y_big = ladder[-1]
        if fw.basis is not None:
            y_big = fw.basis[:, : y_big.shape[0]] @ y_big
        y = np.zeros((n * d2, n * d1), dtype=complex)
        rows = min(n * d2, y_big.shape[0])
        y[:rows] = y_big[:rows, : n * d1]
        exact = n - 1
        route = "qpart"
    else:
        bop = contractive_lift_reduce(t1, comp, x, w[: n * d2, : n * d2], n, tol)
        y = bop.matrix
        exact = bop.exact_input_blocks
        route = "reduction"
    wn = w[: n * d2, : n * d2]
    v1n = v1[: n * d1, : n * d1]
    e1 = np.eye(n * d1, dtype=complex)[:, :d1]
    e2 = np.eye(n * d2, dtype=complex)[:, :d2]
    certs = {
        "lift_y": opnorm(adj(y) @ e2 - e1 @ adj(x)),
        "relation": opnorm((y @ v1n - wn @ y)[:, : exact * d1]),
        "norm_preservation": max(0.0, opnorm(y) - opnorm(x)),
    }
    dom = _space(d1, n, "H", "D_T1")
    cod = _space(d2, n, "H", "D_T2")
    yop = BlockOperator(dom, cod, y, None, 0, "Y", exact_override=exact)
    qop = BlockOperator(cod, cod, qb[: n * d2, : n * d2], 0, 0, "Qbar")
    ladder_out = [y[: (k + 1) * d2, : (k + 1) * d1] for k in range(n)]
    return LiftResult(cod, yop, qop, ladder_out, certs, route, {"qbar_choice": choice})


# ---------------------------------------------------------------------------
# reverse intertwining


def _finter_extend(t1, t2, x, n, tol):
    """``Y1 Z = Z Y2`` with ``Z`` the co-isometric extension of ``X``.

    ``Y1 = T1 + 0`` keeps the norm of ``T1``; ``Y2`` is a contractive
    extension of ``T2`` assembled from the Douglas chain of the proof.
    """
    d = t1.shape[0]
    z = coiso_matrix(x, n)
    d_xs = nk.codefect(x)
    d_t2s = nk.codefect(t2)
    z1, z2 = nk.douglas_solve_pair(t1 @ d_xs, x @ d_t2s, d_xs, tol)
    # Restrict Z2 to D_{X*}: only its action there matters.
    z11 = z2
    d_z11 = nk.defect(z11)
    c = adj(nk.douglas_solve(adj(z1), d_z11, tol))
    y1 = np.zeros((n * d, n * d), dtype=complex)
    y1[:d, :d] = t1
    y2 = np.zeros((n * d, n * d), dtype=complex)
    y2[:d, :d] = t2
    y2[:d, d : 2 * d] = d_t2s @ c @ d_z11
    if n > 1:
        y2[d : 2 * d, d : 2 * d] = z11
    return z, y1, y2, {"Z1": z1, "Z2": z2, "C": c}


def reverse_intertwine(t1, t2, x, mode: str = "extend", n: int = 10, tol: float | None = None) -> LiftResult:
    """Dilate ``X`` (with ``T1 X = X T2``) and move ``T1, T2`` along.

    ``mode="extend"``: co-isometric extension ``Z`` of ``X`` and extensions
    ``Y1, Y2`` of ``T1, T2`` with ``Y1 Z = Z Y2``, ``||Y1|| = ||T1||``.

    ``mode="lift"``: the adjoint statement; isometric lift ``V`` of ``X``
    and lifts ``S1, S2`` with ``S1 V = V S2``.

    ``mode="codilate"``: requires ``||X|| < 1``; co-isometric extensions
    ``Z1, Z2`` of ``T1, T2`` and a pure co-isometric extension ``R`` of
    ``X`` with ``Z1 R = R Z2``.
    """
    tol = resolve_tol(tol)
    t1, t2, x = (as_matrix(m) for m in (t1, t2, x))
    for m, lbl in ((t1, "T1"), (t2, "T2"), (x, "X")):
        _check_contraction(m, lbl, tol)
    res = opnorm(t1 @ x - x @ t2)
    if res > tol * max(1.0, opnorm(x), opnorm(t1), opnorm(t2)):
        raise HypothesisViolated("T1 X = X T2", res)
    d = t1.shape[0]
    space = _space(d, n, "H", "D_X*")
    if mode == "extend":
        z, y1, y2, parts = _finter_extend(t1, t2, x, n, tol)
        e = np.eye(n * d, dtype=complex)[:, :d]
        certs = {
            "lift_y": max(opnorm(y1 @ e - e @ t1), opnorm(y2 @ e - e @ t2)),
            "relation": opnorm(y1 @ z - z @ y2),
            "norm_preservation": abs(opnorm(y1) - opnorm(t1)),
            "contractive_y2": max(0.0, opnorm(y2) - 1),
        }
        yop = BlockOperator(space, space, y1, 0, 0, "Y1")
        extra = {"Y2": BlockOperator(space, space, y2, 0, 1, "Y2"), "Z": BlockOperator(space, space, z, 0, 1, "Z"), **parts}
        return LiftResult(space, yop, BlockOperator(space, space, np.eye(n * d), 0, 0, "I"), [y1, y2], certs, "finter", extra)
    if mode == "lift":
        # adjoints: T2* X* = X* T1*, so run the extension with roles swapped
        r = reverse_intertwine(adj(t2), adj(t1), adj(x), "extend", n, tol)
        y2e = r.extra["Y2"].matrix
        y1e = r.y.matrix
        z = r.extra["Z"].matrix
        s1, s2, v = adj(y2e), adj(y1e), adj(z)
        e = np.eye(n * d, dtype=complex)[:, :d]
        certs = {
            "lift_y": max(opnorm(adj(s1) @ e - e @ adj(t1)), opnorm(adj(s2) @ e - e @ adj(t2))),
            "relation": opnorm(s1 @ v - v @ s2),
            "norm_preservation": abs(opnorm(s2) - opnorm(t2)),
            "contractive_y2": max(0.0, opnorm(s1) - 1),
        }
        sp = _space(d, n, "H", "D_X")
        yop = BlockOperator(sp, sp, s2, 0, 0, "S2")
        extra = {"S1": BlockOperator(sp, sp, s1, 1, 0, "S1"), "V": BlockOperator(sp, sp, v, 1, 0, "V")}
        return LiftResult(sp, yop, BlockOperator(sp, sp, np.eye(n * d), 0, 0, "I"), [s1, s2], certs, "finter", extra)
    if mode == "codilate":
        return _pure_codilation(t1, t2, x, n, tol)
    raise ValueError(f"unknown mode {mode!r}")


def coiso_residual_on(m: np.ndarray, rows: int) -> float:
    """``||(m m* - I)`` restricted to the first ``rows`` coordinates``||``."""
    g = m[:rows] @ adj(m[:rows])
    return opnorm(g - np.eye(rows))


def _pure_codilation(t1, t2, x, n, tol, n_inner=None):
    """Pure co-isometric ``R`` extending ``X`` with ``Z1 R = R Z2``.

    ``Z1', Z2'`` are the co-isometric extensions of ``T1, T2`` on
    ``K' = H + H + ...``, ``Y`` an extension of ``X`` with ``Z1' Y = Y Z2'``
    from the intertwining engine (on adjoints), and

    ``R  = [[Y, D_{Y*}, 0, ...], [0, 0, I, ...], ...]``,
    ``Zi = diag(Zi', M, M, ...)`` with ``M = D^{-1} Z1' D``, ``D = D_{Y*}``.

    The truncated ``Z1'`` misses co-isometry in its last block and
    ``D^{-1}`` spreads that error backwards, decaying geometrically; the
    co-isometry of ``M`` is therefore certified on the first quarter of the
    inner blocks only (``n_inner`` defaults to ``max(6 n, 48)``).
    """
    nx = opnorm(x)
    if nx >= 1 - STRICT_MARGIN:
        raise NotStrict("||X|| < 1 - strict_margin", nx)
    d = t1.shape[0]
    n_inner = max(6 * n, 48) if n_inner is None else n_inner
    # Z1' Y = Y Z2'  <=>  Y* W1 = W2 Y* with W_i the Schaffer lifts of T_i*,
    # i.e. the intertwining lift of X* between T2* and T1*.
    inner = intertwine_lift(adj(t2), adj(t1), adj(x), n_inner, tol)
    yk = adj(inner.y.matrix)
    z1p = coiso_matrix(t1, n_inner)
    z2p = coiso_matrix(t2, n_inner)
    dys = nk.codefect(yk)
    cond = np.linalg.cond(dys)
    if cond > 1 / tol:
        from .errors import ConditioningFailure

        raise ConditioningFailure(cond)
    dinv = np.linalg.inv(dys)
    m = dinv @ z1p @ dys
    outer = n
    kd = yk.shape[0]
    r = coiso_matrix(yk, outer, dys)
    z1 = np.zeros((kd * outer, kd * outer), dtype=complex)
    z2 = np.zeros_like(z1)
    z1[:kd, :kd] = z1p
    z2[:kd, :kd] = z2p
    for j in range(1, outer):
        sl = slice(j * kd, (j + 1) * kd)
        z1[sl, sl] = m
        z2[sl, sl] = m
    e = np.eye(kd * outer, dtype=complex)[:, :d]
    inner_exact = (n_inner // 4) * d
    certs = {
        "lift_y": max(opnorm(r @ e - e @ x), opnorm(z1 @ e - e @ t1), opnorm(z2 @ e - e @ t2)),
        "relation": opnorm(z1 @ r - r @ z2),
        "norm_preservation": abs(opnorm(yk) - nx),
        "inner_relation": opnorm(z1p @ yk - yk @ z2p),
        "coisometry_r": coiso_residual_on(r, (outer - 1) * kd),
        "coisometry_z": max(coiso_residual_on(z1p, inner_exact), coiso_residual_on(z2p, inner_exact), coiso_residual_on(m, inner_exact)),
    }
    space = DirectSumSpace.uniform(kd, outer, "K'", "K'")
    yop = BlockOperator(space, space, r, 0, 1, "R")
    extra = {"Z1": z1, "Z2": z2, "Y": yk, "M": m, "D": dys, "inner_exact_dim": inner_exact}
    return LiftResult(space, yop, BlockOperator(space, space, np.eye(kd * outer), 0, 0, "I"), [yk], certs, "pure-codilation", extra)


def intertwine_general(cod, dom, x, head_dim: int, levels: int | None = None, tol: float | None = None):
    """Intertwining lift between two isometric lifts given as plain matrices.

    ``cod`` lifts ``T`` and ``dom`` lifts ``T'`` (first ``head_dim``
    coordinates span ``H``), ``T X = X T'``.  Both are expressed along their
    Krylov filtrations from ``H``; the number of levels is the largest one
    (at most ``levels``) on which both act isometrically, so truncated
    inputs are fine as long as ``H`` sits well inside their exact parts.

    Returns ``(Y, top)``: ``Y`` is zero off the domain Krylov span and
    satisfies ``cod Y = Y dom`` except on ``top``, an orthonormal basis of
    the highest domain level.
    """
    tol = resolve_tol(tol)
    cod, dom, x = as_matrix(cod), as_matrix(dom), as_matrix(x)
    max_levels = levels if levels is not None else max(cod.shape[0], dom.shape[0])
    fc = _trim_filtration(krylov_filtration(cod, head_dim, max_levels), tol)
    fd = _trim_filtration(krylov_filtration(dom, head_dim, max_levels), tol)
    L = min(len(fc.levels), len(fd.levels))
    ladder = intertwine_ladder(fc, fd, x, L, tol)
    yf = ladder[-1]
    bc = fc.basis[:, : yf.shape[0]]
    bd = fd.basis[:, : yf.shape[1]]
    y = bc @ yf @ adj(bd)
    off = fd.offsets()
    top = bd[:, off[L - 1] : off[L]] if L > 1 else np.zeros((dom.shape[0], 0), dtype=complex)
    return y, top


def _trim_filtration(f: FilteredLift, tol: float) -> FilteredLift:
    """Drop trailing levels on which the lift is not isometric.

    Level ``k`` may be used by the ladder only if the operator maps the
    span of levels ``0..k-1`` isometrically into the span of ``0..k``.
    """
    off = f.offsets()
    keep = len(f.levels)
    for k in range(1, len(f.levels) + 1):
        cols = off[k - 1] if k - 1 < len(off) else off[-1]
        block = f.matrix[: off[min(k, len(f.levels))], :cols]
        if cols and opnorm(adj(block) @ block - np.eye(cols)) > 100 * tol:
            keep = k - 1
            break
    keep = max(1, keep)
    m = f.matrix[: off[keep], : off[keep]]
    basis = None if f.basis is None else f.basis[:, : off[keep]]
    return FilteredLift(m, f.levels[:keep], basis)
