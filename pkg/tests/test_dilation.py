import numpy as np
import pytest

from dilatron.dilation import (
    QPosition,
    ando_intertwine,
    ando_q_case1,
    ando_q_case2,
    coisometric_extension,
    pair_relation_residual,
    power_dilation_residual,
    schaffer_isometric_dilation,
    strict_q_diag_construction,
)
from dilatron.errors import (
    HypothesisViolated,
    NotAContraction,
    NotStrict,
    RelationViolated,
)
from dilatron.generators import (
    commuting_pair,
    intertwining_triple,
    q_commuting_pair,
    random_contraction,
    random_unitary,
)

from .conftest import gram_residual

CERT = 1e-9


def _herm(m):
    return m.conj().T


def test_position_parse():
    assert QPosition.parse("left") is QPosition.LEFT
    assert QPosition.parse("M") is QPosition.MIDDLE
    assert QPosition.parse(QPosition.RIGHT) is QPosition.RIGHT
    with pytest.raises(ValueError):
        QPosition.parse("X")


# --- single contractions ----------------------------------------------------


def test_schaffer_zero_is_block_shift():
    v = schaffer_isometric_dilation(np.zeros((2, 2)), 5)
    assert np.array_equal(v.matrix, np.eye(10, k=-2))
    assert v.forward_bandwidth == 1


def test_schaffer_unitary_has_zero_defect(rng):
    u = random_unitary(rng, 2)
    v = schaffer_isometric_dilation(u, 4).matrix
    assert np.allclose(v[:2, :2], u)
    assert np.allclose(v[2:4, :2], 0, atol=1e-12)
    h = rng.normal(size=2) + 1j * rng.normal(size=2)
    e = np.zeros(8, dtype=complex)
    e[:2] = h
    assert np.allclose((_herm(v) @ e)[:2], _herm(u) @ h)


def test_schaffer_random_certificates(rng):
    t = random_contraction(rng, 3, 0.9)
    v = schaffer_isometric_dilation(t, 8)
    assert v.certificates["isometry"] <= 1e-10
    assert v.certificates["lift"] <= 1e-10
    # independent check on the first N - 1 blocks
    assert gram_residual(v.matrix, np.eye(24)[:, :21]) <= 1e-10
    assert power_dilation_residual(v, v, t, t) <= CERT


def test_schaffer_rejects_expansive():
    with pytest.raises(NotAContraction):
        schaffer_isometric_dilation(2 * np.eye(2), 4)


def test_coisometric_extension(rng):
    z0 = coisometric_extension(np.zeros((1, 1)), 4).matrix
    assert np.array_equal(z0, np.eye(4, k=1))
    t = random_contraction(rng, 3, 0.8)
    z = coisometric_extension(t, 6)
    assert np.allclose(z.matrix, _herm(schaffer_isometric_dilation(_herm(t), 6).matrix), atol=1e-14)
    rows = np.eye(18)[:, :15]
    assert np.linalg.norm(rows.T @ z.matrix @ _herm(z.matrix) @ rows - np.eye(15), 2) <= 1e-10
    assert all(v <= 1e-10 for v in z.certificates.values())


# --- Case II ----------------------------------------------------------------


def test_case2_q_identity_aux_is_v2(rng):
    t1, t2 = commuting_pair(rng, 2)
    r = ando_q_case2(t1, t2, np.eye(2), "L", 13)
    assert np.allclose(r.aux.matrix, r.v2.matrix, atol=1e-14)
    assert r.passed(CERT)
    assert power_dilation_residual(r.v1, r.v2, t1, t2) <= CERT


def test_case2_zero_pair():
    z = np.zeros((2, 2))
    r = ando_q_case2(z, z, np.eye(2), "R", 13)
    assert r.passed(1e-12)
    assert np.allclose(r.extra["G"], np.eye(8))


@pytest.mark.parametrize("position", ["L", "M", "R"])
def test_case2_random(rng, position):
    for _ in range(5):
        t1, t2, q = q_commuting_pair(rng, 2, position, unitary_q=False)
        r = ando_q_case2(t1, t2, q, position, 13)
        assert r.space.truncation_level % 4 == 1
        assert r.certificates["q_relation"] <= CERT
        assert r.certificates["generator_identity"] <= 1e-10
        assert r.certificates["g_unitarity"] <= 1e-10
        assert r.passed(CERT)
        # independent relation evaluation from the returned matrices
        v1, v2, aux, qb = r.v1.matrix, r.v2.matrix, r.aux.matrix, r.qbar.matrix
        rhs = {"L": qb @ aux @ v1, "M": v2 @ qb @ aux, "R": v2 @ aux @ qb}[position]
        assert np.linalg.norm(v1 @ v2 - rhs, 2) <= CERT


@pytest.mark.parametrize("position", ["L", "M"])
def test_case2_with_unitary_q_matches_case1_relation(rng, position):
    t1, t2, q = q_commuting_pair(rng, 2, position, unitary_q=True)
    r = ando_q_case2(t1, t2, q, position, 13)
    # with an isometric Q the modified defect equals the plain one
    partner = r.v2 if position == "L" else r.v1
    assert np.allclose(r.aux.matrix, partner.matrix, atol=1e-12)
    v1, v2, qb = r.v1.matrix, r.v2.matrix, r.qbar.matrix
    rhs = qb @ v2 @ v1 if position == "L" else v2 @ qb @ v1
    assert np.linalg.norm(v1 @ v2 - rhs, 2) <= CERT


def test_case2_example_upper_pair():
    # T1 = [[0, a1], [0, a2]], T2 = [[b1, b2], [0, b3]] with a = (1, 2),
    # b = (1, 2, 3), scaled by 1/4.  The printed Q has norm sqrt(5)/2; the
    # minimal-norm solution of T1 T2 = Q T2 T1 is a contraction.
    t1 = np.array([[0, 1], [0, 2]]) / 4
    t2 = np.array([[1, 2], [0, 3]]) / 4
    ab, ba = t1 @ t2, t2 @ t1
    q = ab @ np.linalg.pinv(ba)
    assert np.linalg.norm(q, 2) == pytest.approx(np.sqrt(45 / 61))
    r = ando_q_case2(t1, t2, q, "L", 13)
    assert r.passed(CERT)
    printed = np.array([[0, 0.5], [0, 1]])
    assert pair_relation_residual("L", t1, t2, printed) <= 1e-15
    with pytest.raises(NotAContraction):
        ando_q_case1(t1, t2, printed, "L")
    with pytest.raises(HypothesisViolated):
        ando_q_case1(t1, t2, q, "L")


def test_case2_rejects_expansive_q():
    # with contractive Q the composite is automatically contractive, so an
    # expansive Q is the only way to break the composite hypothesis
    t2 = 0.9 * np.eye(2)
    with pytest.raises(NotAContraction):
        ando_q_case2(np.zeros((2, 2)), t2, np.diag([1.5, 0.75]), "L", 13)


# --- Case I -----------------------------------------------------------------


@pytest.mark.parametrize("position", ["L", "M"])
def test_case1_commuting(rng, position):
    t1, t2 = commuting_pair(rng, 2)
    r = ando_q_case1(t1, t2, np.eye(2), position, 6)
    assert r.passed(CERT)


@pytest.mark.parametrize("position", ["L", "M"])
def test_case1_unitary_q(rng, position):
    t1, t2, q = q_commuting_pair(rng, 2, position, unitary_q=True)
    r = ando_q_case1(t1, t2, q, position, 6)
    assert r.certificates["q_relation"] <= CERT
    assert r.certificates["qbar_structure"] == 0.0
    qb = r.qbar.matrix
    assert np.array_equal(qb[:2, :2], q)
    assert np.array_equal(qb[2:, 2:], np.eye(qb.shape[0] - 2))
    assert not qb[:2, 2:].any() and not qb[2:, :2].any()


def test_case1_t2_zero(rng):
    t1 = random_contraction(rng, 2, 0.5)
    r = ando_q_case1(t1, np.zeros((2, 2)), np.eye(2), "L", 6)
    assert r.certificates["q_relation"] <= 1e-12


def test_case1_rejects_bad_input(rng):
    t1, t2, q = q_commuting_pair(rng, 2, "L", unitary_q=True)
    with pytest.raises(RelationViolated):
        ando_q_case1(t1 + 0.1 * np.eye(2), t2, q, "L")
    with pytest.raises(ValueError):
        ando_q_case1(t1, t2, q, "R")


# --- strict construction ----------------------------------------------------


def test_strict_zero_factor(rng):
    t1 = random_contraction(rng, 2, 0.6)
    r = strict_q_diag_construction(t1, np.zeros((2, 2)), np.eye(2), "R", 4)
    assert np.allclose(r.extra["D"], np.eye(r.extra["D"].shape[0]), atol=1e-12)
    assert r.passed(CERT)


def test_strict_scalar_commuting():
    r = strict_q_diag_construction([[0.5]], [[1 / 3]], [[1.0]], "R", 4)
    assert r.passed(CERT)


@pytest.mark.parametrize("unitary_q", [True, False])
def test_strict_random(rng, unitary_q):
    t1, t2, q = q_commuting_pair(rng, 2, "R", unitary_q=unitary_q, norm1=0.7, norm2=0.7)
    r = strict_q_diag_construction(t1, t2, q, "R", 4)
    assert r.passed(CERT)
    # (D^-1 W D)(D^-1 W D)* = I on the certified inner coordinates
    m = r.extra["M"]
    k = r.extra["exact_inner_dim"]
    rows = np.eye(m.shape[0])[:, :k]
    assert np.linalg.norm(rows.T @ m @ _herm(m) @ rows - np.eye(k), 2) <= 1e-8


def test_strict_left_dual(rng):
    t1, t2, q = q_commuting_pair(rng, 2, "L", unitary_q=True, norm1=0.6, norm2=0.6)
    r = strict_q_diag_construction(t1, t2, q, "L", 4)
    assert r.extra["form"] == "coisometric"
    assert r.passed(CERT)


def test_strict_requires_margin(rng):
    t1, t2, q = q_commuting_pair(rng, 2, "R", unitary_q=True, norm1=0.5, norm2=1.0)
    with pytest.raises(NotStrict):
        strict_q_diag_construction(t1, t2, q, "R", 4)


# --- intertwining -----------------------------------------------------------


def test_intertwine_identity(rng):
    t = random_contraction(rng, 2, 0.7)
    r = ando_intertwine(t, t, np.eye(2), 13)
    assert r.passed(CERT)


def test_intertwine_zero_operators(rng):
    x = random_contraction(rng, 2, 0.9)
    z = np.zeros((2, 2))
    r = ando_intertwine(z, z, x, 13)
    assert r.passed(1e-12)


def test_intertwine_random(rng):
    for _ in range(5):
        t1, t2, x = intertwining_triple(rng, 3)
        r = ando_intertwine(t1, t2, x, 13)
        assert r.passed(CERT)
        v1, v2, v = r.v1.matrix, r.v2.matrix, r.qbar.matrix
        assert np.linalg.norm(v1 @ v - v @ v2, 2) <= CERT
