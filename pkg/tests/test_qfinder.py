import numpy as np
import pytest

from dilatron.generators import commuting_pair, q_commuting_pair, random_contraction
from dilatron.qfinder import (
    CORPUS_TRUNCATION,
    WITNESS_GAP,
    backward_pair,
    example_corpus,
    find_q,
    least_squares_q,
    no_q_pair,
    one_sided_pair,
    upper_pair,
)

T1 = np.array([[0.0, 1.0], [0.0, 2.0]])
T2 = np.array([[1.0, 2.0], [0.0, 3.0]])


def test_upper_pair_decision():
    r = find_q(T1, T2)
    assert r.feasible_left and not r.feasible_right
    assert np.linalg.norm(T1 @ T2 - r.q_left @ T2 @ T1, 2) <= 1e-12
    assert r.certificates["relation_left"] <= 1e-12
    # right witness: T1* T2* u = 0 but T2* T1* u != 0
    u = r.witness_right
    assert np.linalg.norm(T1.T @ T2.T @ u) <= 1e-12
    assert np.linalg.norm(T2.T @ T1.T @ u) > 0.1
    # the pair fails 1*1 + 2*2 = 1*3, the solvability condition on the right
    assert 1 * 1 + 2 * 2 != 1 * 3
    _, res = least_squares_q(T1, T2, "right")
    assert res > 0.1


def test_right_feasible_when_condition_holds():
    # a1 b1 + a2 b2 = a1 b3 with a = (1, 2), b = (1, 1, 3)
    t2 = np.array([[1.0, 1.0], [0.0, 3.0]])
    r = find_q(T1, t2)
    assert r.feasible_left and r.feasible_right
    assert np.linalg.norm(T1 @ t2 - t2 @ T1 @ r.q_right, 2) <= 1e-12
    assert upper_pair(b=(1.0, 1.0, 3.0)).params["right_feasible"]


def test_trivial_pairs(rng):
    a, b = commuting_pair(rng, 3)
    r = find_q(a, b)
    assert r.feasible_left and r.feasible_right
    assert r.certificates["relation_left"] <= 1e-10
    z = np.zeros((3, 3))
    r = find_q(z, random_contraction(rng, 3, 0.5))
    assert r.feasible_left and r.feasible_right and r.witness is None


@pytest.mark.parametrize("position", ["L", "R"])
def test_generated_pairs_are_feasible(rng, position):
    t1, t2, _ = q_commuting_pair(rng, 3, position, unitary_q=True)
    r = find_q(t1, t2)
    assert (r.feasible_left if position == "L" else r.feasible_right)


def test_agrees_with_least_squares_oracle(rng):
    agree = 0
    for k in range(300):
        a = rng.normal(size=(4, 4))
        b = rng.normal(size=(4, 4))
        if k % 2:
            a[:, 0] = 0  # rank-deficient factors make infeasible cases common
            b[1] = 0
        r = find_q(a, b)
        for side, feasible in (("left", r.feasible_left), ("right", r.feasible_right)):
            _, res = least_squares_q(a, b, side)
            scale = max(1.0, np.linalg.norm(a @ b, 2))
            agree += feasible == (res <= 1e-8 * scale)
    assert agree == 600


def test_corpus_claims():
    insts = example_corpus()
    assert [i.name for i in insts] == ["upper_pair", "no_q_pair", "one_sided_pair", "backward_pair"]
    for inst in insts:
        for key, (res, ok) in inst.check().items():
            assert ok, (inst.name, key, res)
            if key.startswith("neg"):
                assert res >= WITNESS_GAP


def test_corpus_negatives_beat_oracle():
    # brute force: the best Q restricted to the witness column is the
    # least-squares fit of T1 T2 x within span{rhs(E_ij) x}
    inst = no_q_pair(8)
    a, b = inst.t1, inst.t2
    x = np.eye(8)[:, 0]
    cols = []
    for i in range(8):
        for j in range(8):
            e = np.zeros((8, 8))
            e[i, j] = 1
            cols.append(e @ b @ a @ x)
    basis = np.array(cols).T
    target = a @ b @ x
    coef, *_ = np.linalg.lstsq(basis, target, rcond=None)
    brute = np.linalg.norm(target - basis @ coef)
    claim = next(c for c in inst.claims if c.position == "L" and c.order == "12")
    assert claim.residual(a, b) == pytest.approx(brute, abs=1e-12)
    assert brute >= WITNESS_GAP


def test_truncated_families_sizes():
    for make in (no_q_pair, one_sided_pair, backward_pair):
        inst = make()
        assert inst.t1.shape == (CORPUS_TRUNCATION, CORPUS_TRUNCATION)
        assert np.linalg.norm(inst.t1, 2) <= 1 and np.linalg.norm(inst.t2, 2) <= 1
