import numpy as np
import pytest
import scipy.linalg as sla

from dilatron import numkernel as nk
from dilatron.errors import (
    GeneratorMismatch,
    IncompatibleData,
    IndefiniteInput,
    Infeasible,
    NotAContraction,
    NotHermitian,
)
from dilatron.generators import random_contraction


def _herm(m):
    return m.conj().T


# --- psd_sqrt ---------------------------------------------------------------


def test_psd_sqrt_identity_and_zero():
    assert np.allclose(nk.psd_sqrt(np.eye(3)), np.eye(3), atol=1e-14)
    assert np.allclose(nk.psd_sqrt(np.zeros((2, 2))), 0, atol=1e-14)


def test_psd_sqrt_diagonal():
    s = nk.psd_sqrt(np.diag([4.0, 9.0]))
    assert np.allclose(s, np.diag([2.0, 3.0]), atol=1e-13)
    # squaring the output recovers the input
    assert np.allclose(s @ s, np.diag([4.0, 9.0]), atol=1e-12)


def test_psd_sqrt_matches_scipy(rng):
    a = rng.normal(size=(5, 5)) + 1j * rng.normal(size=(5, 5))
    m = a @ _herm(a)
    assert np.allclose(nk.psd_sqrt(m), sla.sqrtm(m), atol=1e-9)


def test_psd_sqrt_clamps_roundoff_and_rejects_indefinite():
    m = np.diag([1.0, -1e-14])
    assert np.all(np.linalg.eigvalsh(nk.psd_sqrt(m)) >= 0)
    with pytest.raises(IndefiniteInput):
        nk.psd_sqrt(np.diag([1.0, -0.5]))
    with pytest.raises(NotHermitian):
        nk.psd_sqrt(np.array([[1.0, 1.0], [0.0, 1.0]]))


# --- defect_pair ------------------------------------------------------------


def test_defect_pair_zero():
    p = nk.defect_pair(np.zeros((2, 2)))
    assert np.allclose(p.defect, np.eye(2))
    assert np.allclose(p.codefect, np.eye(2))


def test_defect_pair_isometric_column():
    t = np.array([[1.0], [0.0]])
    p = nk.defect_pair(t)
    # I - t*t = 0 and I - tt* = diag(0, 1)
    assert np.allclose(p.defect, np.zeros((1, 1)), atol=1e-14)
    assert np.allclose(p.codefect, np.diag([0.0, 1.0]), atol=1e-14)


def test_defect_pair_half_identity():
    p = nk.defect_pair(0.5 * np.eye(2))
    expected = np.sqrt(3) / 2 * np.eye(2)
    assert np.allclose(p.defect, expected, atol=1e-14)
    assert np.allclose(p.codefect, expected, atol=1e-14)


def test_defect_pair_rejects_expansive():
    with pytest.raises(NotAContraction):
        nk.defect_pair(1.5 * np.eye(2))
    # the check can be switched off
    nk.defect_pair(1.5 * np.eye(2), require_contraction=False)


def test_defect_identities_random(rng):
    for _ in range(200):
        d = int(rng.integers(1, 9))
        t = random_contraction(rng, d, rng.uniform(0, 1))
        p = nk.defect_pair(t)
        assert np.linalg.norm(p.defect @ p.defect + _herm(t) @ t - np.eye(d), 2) <= 1e-10
        assert np.linalg.norm(t @ p.defect - p.codefect @ t, 2) <= 1e-9
        assert np.allclose(p.defect, _herm(p.defect))
        assert np.linalg.eigvalsh(p.defect).min() >= -1e-12


# --- Douglas ----------------------------------------------------------------


def test_douglas_a_equals_b(rng):
    b = rng.normal(size=(3, 4)) + 1j * rng.normal(size=(3, 4))
    z = nk.douglas_solve(b, b)
    assert np.allclose(b @ z, b, atol=1e-10)
    # Z is the orthogonal projection onto range(b*)
    proj = np.linalg.pinv(b) @ b
    assert np.allclose(z, proj, atol=1e-10)


def test_douglas_half(rng):
    b = rng.normal(size=(3, 3))
    b[:, 2] = 0
    z = nk.douglas_solve(0.5 * b, b)
    assert np.linalg.norm(b @ z - 0.5 * b) <= 1e-10
    assert np.allclose(z, 0.5 * np.linalg.pinv(b) @ b, atol=1e-10)


def test_douglas_infeasible_reports_eigenvalue():
    with pytest.raises(Infeasible) as info:
        nk.douglas_solve(np.eye(2), np.diag([1.0, 0.0]))
    assert info.value.min_eig == pytest.approx(-1.0)


def test_douglas_pair_trivial_and_isometry(rng):
    a1 = rng.normal(size=(3, 3))
    z1, z2 = nk.douglas_solve_pair(a1, a1, np.zeros((3, 2)))
    assert np.allclose(a1 @ z1, a1, atol=1e-10)
    assert np.allclose(z2, 0)
    u = np.linalg.qr(rng.normal(size=(4, 4)))[0]
    c1, c2 = u[:, :2], u[:, 2:]
    # Z1 = Z2 = I would have Z1*Z1 + Z2*Z2 = 2I, so the sum is halved
    z1, z2 = nk.douglas_solve_pair((c1 + c2) / 2, c1, c2)
    assert np.allclose(z1, 0.5 * np.eye(2), atol=1e-10)
    assert np.allclose(z2, 0.5 * np.eye(2), atol=1e-10)
    with pytest.raises(Infeasible):
        nk.douglas_solve_pair(c1 + c2, c1, c2)


def test_douglas_pair_brute_branch():
    a1 = a2 = 0.5 * np.eye(2)
    a0 = 2 * a1
    gap = np.linalg.eigvalsh(a1 @ a1.T + a2 @ a2.T - a0 @ a0.T).min()
    assert gap < 0  # the eigen-oracle says infeasible
    with pytest.raises(Infeasible):
        nk.douglas_solve_pair(a0, a1, a2)


# --- completions ------------------------------------------------------------


def test_triangular_zero_x(rng):
    t1 = random_contraction(rng, 2, 0.6)
    t2 = random_contraction(rng, 2, 0.8)
    r = nk.triangular_complete(t1, t2, np.zeros((2, 2)))
    assert np.allclose(r.parameter, 0)
    assert r.achieved_norm == pytest.approx(0.8, abs=1e-12)


def test_triangular_zero_diagonal(rng):
    x = random_contraction(rng, 3, 0.9)
    z = np.zeros((3, 3))
    r = nk.triangular_complete(z, z, x)
    assert np.allclose(r.parameter, x, atol=1e-12)


def test_triangular_identity_infeasible():
    with pytest.raises(Infeasible):
        nk.triangular_complete(np.eye(2), np.eye(2), 0.1 * np.eye(2))


def test_triangular_random_and_converse(rng):
    for _ in range(20):
        t1 = random_contraction(rng, 3, 0.7)
        t2 = random_contraction(rng, 3, 0.6)
        c = random_contraction(rng, 3, 0.9)
        x = nk.codefect(t1) @ c @ nk.defect(t2)
        r = nk.triangular_complete(t1, t2, x)
        assert r.achieved_norm <= 1 + 1e-9
        assert np.linalg.norm(nk.codefect(t1) @ r.parameter @ nk.defect(t2) - x) <= 1e-9
        c2 = nk.extract_triangular_parameter(r.completed, (3, 3))
        assert np.linalg.norm(nk.codefect(t1) @ c2 @ nk.defect(t2) - x) <= 1e-9


def test_dual_parrott_trivial(rng):
    x = random_contraction(rng, 3, 0.7)
    e = np.eye(3)
    r = nk.dual_parrott_complete(x, _herm(x), e, e)
    assert np.allclose(r.completed, x, atol=1e-12)
    z = nk.dual_parrott_complete(np.zeros((2, 1)), np.zeros((2, 1)), np.eye(2)[:, :1], np.eye(2)[:, :1])
    assert z.achieved_norm == 0.0


def test_dual_parrott_one_dimensional():
    e = np.array([[1.0], [0.0]])
    x = np.array([[0.5], [0.0]])  # Y e1 = e1/2
    xp = np.array([[0.5], [0.0]])  # Y* e1 = e1/2
    r = nk.dual_parrott_complete(x, xp, e, e)
    y = r.completed
    assert np.allclose(y @ e, x, atol=1e-12)
    assert np.allclose(_herm(y) @ e, xp, atol=1e-12)
    assert r.achieved_norm == pytest.approx(0.5, abs=1e-12)
    # brute-force oracle: the best corner over a grid cannot beat 1/2
    grid = np.linspace(-1, 1, 41)
    best = min(np.linalg.norm(np.array([[0.5, 0], [0, c]]), 2) for c in grid)
    assert best == pytest.approx(0.5)


def test_dual_parrott_random_norm_bound(rng):
    for _ in range(20):
        u = np.linalg.qr(rng.normal(size=(5, 5)) + 1j * rng.normal(size=(5, 5)))[0]
        up = np.linalg.qr(rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4)))[0]
        e, ep = u[:, :2], up[:, :2]
        y0 = random_contraction(rng, 4, 1.0)[:, :4] @ rng.normal(size=(4, 5)) * 0.2
        x, xp = y0 @ e, _herm(y0) @ ep
        r = nk.dual_parrott_complete(x, xp, e, ep)
        mu = max(np.linalg.norm(x, 2), np.linalg.norm(xp, 2))
        assert np.linalg.norm(r.completed @ e - x) <= 1e-9
        assert np.linalg.norm(_herm(r.completed) @ ep - xp) <= 1e-9
        assert r.achieved_norm <= mu * (1 + 1e-9)


def test_dual_parrott_incompatible():
    e = np.eye(2)[:, :1]
    with pytest.raises(IncompatibleData):
        nk.dual_parrott_complete(np.array([[0.5], [0]]), np.array([[0.1], [0]]), e, e)


def test_unitary_complete_examples(rng):
    p = np.array([[1.0], [0.0]])
    r = np.array([[0.0], [1.0]])
    g = nk.unitary_complete(p, r)
    assert np.allclose(g @ p, r)
    assert np.allclose(_herm(g) @ g, np.eye(2))
    assert np.allclose(nk.unitary_complete(p, p), np.eye(2))
    for _ in range(50):
        w = np.linalg.qr(rng.normal(size=(6, 6)) + 1j * rng.normal(size=(6, 6)))[0]
        p = rng.normal(size=(6, 3)) + 1j * rng.normal(size=(6, 3))
        p[:, 2] = p[:, 0] - p[:, 1]  # rank deficient on purpose
        r = w @ p
        g = nk.unitary_complete(p, r)
        assert np.linalg.norm(g @ p - r, 2) <= 1e-9
        assert np.linalg.norm(_herm(g) @ g - np.eye(6), 2) <= 1e-10
        assert np.linalg.norm(g @ _herm(g) - np.eye(6), 2) <= 1e-10


def test_unitary_complete_mismatch():
    with pytest.raises(GeneratorMismatch):
        nk.unitary_complete(np.array([[1.0], [0.0]]), np.array([[2.0], [0.0]]))


def test_inputs_not_mutated(rng):
    t = random_contraction(rng, 3, 0.5)
    keep = t.copy()
    nk.defect_pair(t)
    nk.douglas_solve(t, np.eye(3))
    assert np.array_equal(t, keep)
