"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v``; the verdict lines are
printed outside pytest's capture so they appear in the plain log.
"""

import time

import numpy as np
import pytest

from dilatron import numkernel as nk
from dilatron.dilation import (
    ando_q_case1,
    ando_q_case2,
    coisometric_extension,
    power_dilation_residual,
    schaffer_isometric_dilation,
)
from dilatron.errors import HasCycle, Infeasible
from dilatron.generators import (
    commuting_pair,
    intertwining_triple,
    q_commuting_pair,
    random_contraction,
    weyl_tree_operators,
)
from dilatron.graphsys import GraphSystem, QGraph, dilate_tree_system
from dilatron.lifting import (
    LiftProblem,
    intertwine_lift,
    lift_inductive_dmp,
    lift_inductive_dualparrott,
    q_intertwine_lift,
    reverse_intertwine,
)
from dilatron.qfinder import WITNESS_GAP, example_corpus, find_q, least_squares_q

SEED = 20240917


@pytest.fixture
def verdict(capsys):
    def emit(number, title, ok, detail):
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] criterion {number}: {title} ({detail})")
        assert ok, detail

    return emit


def _herm(m):
    return m.conj().T


def _opnorm(m):
    return np.linalg.norm(m, 2)


def _ladder_ok(levels):
    for small, big in zip(levels, levels[1:]):
        r, c = small.shape
        if not np.array_equal(big[:r, :c], small):
            return False
    return True


def test_criterion_1_kernel_identities(verdict):
    rng = np.random.default_rng(SEED)
    start = time.perf_counter()
    worst_sq, worst_int = 0.0, 0.0
    for _ in range(1000):
        d = int(rng.integers(1, 9))
        t = random_contraction(rng, d, rng.uniform(0.0, 1.0))
        p = nk.defect_pair(t)
        worst_sq = max(worst_sq, _opnorm(p.defect @ p.defect + _herm(t) @ t - np.eye(d)))
        worst_int = max(worst_int, _opnorm(t @ p.defect - p.codefect @ t))
    elapsed = time.perf_counter() - start
    ok = worst_sq <= 1e-10 and worst_int <= 1e-9 and elapsed < 10
    verdict(1, "kernel identities", ok, f"square {worst_sq:.1e}, intertwining {worst_int:.1e}, {elapsed:.2f}s")


def test_criterion_2_douglas_oracle(verdict):
    rng = np.random.default_rng(SEED)
    agree, feasible_count, worst = 0, 0, 0.0
    for k in range(1000):
        b = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
        if k % 3 == 0:
            b[:, int(rng.integers(4))] = 0  # rank-deficient B
        if k % 4 == 3:
            a = rng.normal(size=(4, 4))  # unrelated A
        else:
            # A = B C with ||C|| away from 1 on either side
            scale = rng.choice([rng.uniform(0.2, 0.95), rng.uniform(1.05, 2.0)])
            a = b @ random_contraction(rng, 4, scale)
        lam = np.linalg.eigvalsh(b @ _herm(b) - a @ _herm(a))[0]
        oracle = lam >= -1e-9
        try:
            z = nk.douglas_solve(a, b)
            feasible = True
            worst = max(worst, _opnorm(b @ z - a), _opnorm(z) - 1)
        except Infeasible:
            feasible = False
        agree += feasible == oracle
        feasible_count += feasible
    ok = agree == 1000 and worst <= 1e-9 and 0 < feasible_count < 1000
    verdict(2, "Douglas oracle", ok, f"{agree}/1000 agree, {feasible_count} feasible, residual {worst:.1e}")


def test_criterion_3_schaffer(verdict):
    rng = np.random.default_rng(SEED)
    n, worst_cert, worst_power = 12, 0.0, 0.0
    for _ in range(200):
        d = int(rng.integers(1, 5))
        t = random_contraction(rng, d)
        v = schaffer_isometric_dilation(t, n)
        z = coisometric_extension(t, n)
        worst_cert = max(worst_cert, *v.certificates.values(), *z.certificates.values())
        # independent isometry check on exact-domain vectors
        cols = np.eye(n * d)[:, : (n - 1) * d]
        m = v.matrix @ cols
        worst_cert = max(worst_cert, _opnorm(_herm(m) @ m - np.eye(cols.shape[1])))
        worst_power = max(worst_power, power_dilation_residual(v, v, t, t, max_total=5))
    ok = worst_cert <= 1e-10 and worst_power <= 1e-9
    verdict(3, "Schaffer lift and extension", ok, f"certificates {worst_cert:.1e}, powers {worst_power:.1e}")


def test_criterion_4_ando_case2(verdict):
    rng = np.random.default_rng(SEED)
    worst = {"generator_identity": 0.0, "g_unitarity": 0.0, "q_relation": 0.0}
    failures = 0
    for position in ("L", "M", "R"):
        for k in range(100):
            d = 1 + k % 4
            t1, t2, q = q_commuting_pair(rng, d, position, unitary_q=bool(k % 2))
            r = ando_q_case2(t1, t2, q, position, 13)
            failures += (r.space.truncation_level - 1) % 4 != 0
            for key in worst:
                worst[key] = max(worst[key], r.certificates[key])
    ok = worst["generator_identity"] <= 1e-10 and worst["g_unitarity"] <= 1e-10 and worst["q_relation"] <= 1e-9
    ok = ok and failures == 0
    detail = ", ".join(f"{k} {v:.1e}" for k, v in worst.items())
    verdict(4, "Ando Case II (L, M, R)", ok, detail)


def test_criterion_5_ando_case1(verdict):
    rng = np.random.default_rng(SEED)
    worst, structure_ok = 0.0, True
    for position in ("L", "M"):
        for k in range(50):
            d = 1 + k % 3
            t1, t2, q = q_commuting_pair(rng, d, position, unitary_q=True)
            r = ando_q_case1(t1, t2, q, position, 6)
            v1, v2, qb = r.v1.matrix, r.v2.matrix, r.qbar.matrix
            rhs = qb @ v2 @ v1 if position == "L" else v2 @ qb @ v1
            worst = max(worst, _opnorm(v1 @ v2 - rhs), r.certificates["q_relation"])
            rest = qb.shape[0] - d
            structure_ok &= (
                np.array_equal(qb[:d, :d], q)
                and np.array_equal(qb[d:, d:], np.eye(rest))
                and not qb[:d, d:].any()
                and not qb[d:, :d].any()
            )
    ok = worst <= 1e-9 and structure_ok
    verdict(5, "Ando Case I (L, M)", ok, f"relation {worst:.1e}, Qbar = Q + I exact: {structure_ok}")


def test_criterion_6_inductive_ladders(verdict):
    rng = np.random.default_rng(SEED)
    worst_norm, worst_rel, ladders = 0.0, 0.0, True
    for k in range(50):
        d = 1 + k % 3
        # XT = TXQ is the R relation with (T1, T2) = (X, T)
        x, t, q = q_commuting_pair(rng, d, "R", unitary_q=True)
        runs = [(x, lift_inductive_dmp(LiftProblem(t, x, q, "XT=TXQ", "extend"), 8))]
        # TX = QXT is the L relation with (T1, T2) = (T, X); both engines
        t, x, q = q_commuting_pair(rng, d, "L", unitary_q=True)
        p = LiftProblem(t, x, q, "TX=QXT", "extend")
        runs += [(x, lift_inductive_dmp(p, 8)), (x, lift_inductive_dualparrott(p, 8))]
        for x0, res in runs:
            ladders &= len(res.per_level) == 8 and _ladder_ok(res.per_level)
            nx = _opnorm(x0)
            worst_norm = max(worst_norm, max(abs(_opnorm(m) - nx) for m in res.per_level))
            worst_rel = max(worst_rel, res.certificates["relation"])
    ok = ladders and worst_norm <= 1e-8 and worst_rel <= 1e-9
    verdict(6, "inductive ladders (DMP, dual Parrott)", ok, f"bit-exact {ladders}, norm {worst_norm:.1e}, relation {worst_rel:.1e}")


def test_criterion_7_intertwining(verdict):
    rng = np.random.default_rng(SEED)
    worst_lift, worst_match = 0.0, 0.0
    for k in range(100):
        t, x = commuting_pair(rng, 1 + k % 3)
        a = q_intertwine_lift(t, t, x, np.eye(t.shape[0]), "L", n=8)
        b = intertwine_lift(t, t, x, 8)
        worst_lift = max(worst_lift, *a.certificates.values(), *b.certificates.values())
        ya, yb = a.y.matrix, b.y.matrix
        worst_match = max(worst_match, abs(_opnorm(ya) - _opnorm(x)), abs(_opnorm(yb) - _opnorm(x)))
    worst_rev, worst_norm = 0.0, 0.0
    for _ in range(20):
        t1, t2, x = intertwining_triple(rng, 2)
        r = reverse_intertwine(t1, t2, x, "extend", 10)
        y1, y2, z = r.y.matrix, r.extra["Y2"].matrix, r.extra["Z"].matrix
        worst_rev = max(worst_rev, _opnorm(y1 @ z - z @ y2))
        worst_norm = max(worst_norm, abs(_opnorm(y1) - _opnorm(t1)))
    ok = worst_lift <= 1e-9 and worst_match <= 1e-8 and worst_rev <= 1e-9 and worst_norm <= 1e-8
    detail = f"lift {worst_lift:.1e}, norm {worst_match:.1e}, reverse {worst_rev:.1e}, |Y1|-|T1| {worst_norm:.1e}"
    verdict(7, "intertwining lifts", ok, detail)


def test_criterion_8_qfinder(verdict):
    t1 = np.array([[0.0, 1.0], [0.0, 2.0]])
    t2 = np.array([[1.0, 2.0], [0.0, 3.0]])
    r = find_q(t1, t2)
    example = (
        r.feasible_left
        and not r.feasible_right
        and _opnorm(t1 @ t2 - r.q_left @ t2 @ t1) <= 1e-12
        and 1 * 1 + 2 * 2 != 1 * 3
    )
    rng = np.random.default_rng(SEED)
    agree = 0
    for k in range(1000):
        a, b = rng.normal(size=(4, 4)), rng.normal(size=(4, 4))
        if k % 2:
            a[:, int(rng.integers(4))] = 0
            b[int(rng.integers(4))] = 0
        rep = find_q(a, b)
        scale = max(1.0, _opnorm(a @ b))
        for side, feasible in (("left", rep.feasible_left), ("right", rep.feasible_right)):
            agree += feasible == (least_squares_q(a, b, side)[1] <= 1e-8 * scale)
    negatives = [res for inst in example_corpus() for key, (res, _) in inst.check().items() if key.startswith("neg")]
    positives = [ok for inst in example_corpus() for key, (_, ok) in inst.check().items() if key.startswith("pos")]
    ok = example and agree == 2000 and min(negatives) >= WITNESS_GAP and all(positives)
    detail = f"example {example}, oracle {agree}/2000, smallest negative {min(negatives):.3f} vs {WITNESS_GAP:.3f}"
    verdict(8, "Q existence", ok, detail)


def test_criterion_9_graph(verdict):
    rng = np.random.default_rng(SEED)
    path, star = [(1, 2), (2, 3)], [(1, 2), (1, 3), (1, 4)]
    worst = 0.0
    for position in ("L", "M"):
        for n, edges in ((3, path), (4, star)):
            ts, qmap = weyl_tree_operators(rng, n, edges, 2, position)
            r = dilate_tree_system(GraphSystem(QGraph(n, edges, qmap), ts, position), n=10)
            worst = max(worst, *r.certificates.values())
    ts, qmap = weyl_tree_operators(rng, 3, path, 2, "R", norms=[0.7, 0.6, 0.7])
    strict = dilate_tree_system(GraphSystem(QGraph(3, path, qmap), ts, "R"), n=10)
    strict_worst = max(strict.certificates.values())
    tri = [(1, 2), (2, 3), (1, 3)]
    ts, qmap = weyl_tree_operators(rng, 3, tri, 2, "L")
    try:
        dilate_tree_system(GraphSystem(QGraph(3, tri, qmap), ts, "L"))
        rejected = False
    except HasCycle:
        rejected = True
    ok = worst <= 1e-8 and strict_worst <= 1e-8 and rejected
    verdict(9, "tree dilation", ok, f"P3/K13 {worst:.1e}, strict R {strict_worst:.1e}, triangle rejected {rejected}")
