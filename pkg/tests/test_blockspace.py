import dataclasses

import numpy as np
import pytest

from dilatron._structures import schaffer_matrix
from dilatron.blockspace import (
    BlockOperator,
    DirectSumSpace,
    adjoint,
    compose,
    compress,
    dualize,
    embed,
    identity,
)
from dilatron.dilation import schaffer_isometric_dilation
from dilatron.errors import DimensionMismatch, SpaceMismatch
from dilatron.generators import random_contraction
from dilatron.lifting import LiftProblem


def test_space_bookkeeping():
    s = DirectSumSpace.uniform(2, 4)
    assert s.total_dim == 8
    assert s.truncation_level == 4
    assert s.offsets() == [0, 2, 4, 6, 8]
    assert s.block_slice(2) == slice(4, 6)
    assert s.leading_basis(2).shape == (8, 4)
    g = s.grouped([1, 3])
    assert g.dims == [2, 6]


def test_embed_compress():
    s = DirectSumSpace.uniform(2, 3)
    assert np.array_equal(embed(np.array([1, 0]), s), np.array([1, 0, 0, 0, 0, 0]))
    assert np.array_equal(embed(np.zeros(2), s), np.zeros(6))
    h = np.array([0.3 + 1j, -2.0])
    assert np.linalg.norm(embed(h, s)) == np.linalg.norm(h)
    assert np.array_equal(compress(embed(h, s), s), h)
    v = np.zeros(6)
    v[2:] = 1
    assert np.array_equal(compress(v, s), np.zeros(2))
    with pytest.raises(DimensionMismatch):
        embed(np.zeros(3), s)
    with pytest.raises(DimensionMismatch):
        compress(np.zeros(5), s)


def test_compress_is_adjoint_of_embed(rng):
    s = DirectSumSpace.uniform(3, 4)
    v = rng.normal(size=12) + 1j * rng.normal(size=12)
    h = rng.normal(size=3) + 1j * rng.normal(size=3)
    assert abs(np.vdot(h, compress(v, s)) - np.vdot(embed(h, s), v)) <= 1e-12


def test_compose_identity_and_bandwidth():
    s = DirectSumSpace.uniform(1, 8)
    shift2 = BlockOperator(s, s, np.eye(8, k=-2), 2, 0, "S")
    c = compose(identity(s), shift2)
    assert np.array_equal(c.matrix, shift2.matrix)
    assert c.forward_bandwidth == 2
    cc = compose(shift2, shift2)
    assert cc.forward_bandwidth == 4
    # support oracle: e_0 lands exactly four blocks down
    out = cc.apply(np.eye(8)[:, 0])
    assert np.flatnonzero(out).tolist() == [4]
    assert cc.exact_input_blocks == 4


def test_compose_exact_domain_matches_longer_truncation(rng):
    t = random_contraction(rng, 2, 0.8)
    n = 8
    small = schaffer_isometric_dilation(t, n)
    big = schaffer_matrix(t, n + 1)
    c = compose(small, small)
    k = c.exact_input_blocks
    assert k == n - 2
    d = 2
    v = np.zeros(d * n, dtype=complex)
    v[: d * k] = rng.normal(size=d * k)
    w = np.zeros(d * (n + 1), dtype=complex)
    w[: d * n] = v
    exact = (big @ big @ w)[: d * n]
    assert np.linalg.norm(c.apply(v) - exact) <= 1e-12


def test_compose_space_mismatch():
    a = identity(DirectSumSpace.uniform(1, 2))
    b = identity(DirectSumSpace.uniform(1, 3))
    with pytest.raises(SpaceMismatch):
        compose(a, b)


def test_adjoint(rng):
    t = random_contraction(rng, 2, 0.7)
    v = schaffer_isometric_dilation(t, 6)
    assert adjoint(adjoint(v)) == v
    a = adjoint(v)
    assert a.forward_bandwidth == v.backward_bandwidth
    assert a.backward_bandwidth == v.forward_bandwidth
    # V* is co-isometric where V is isometric
    rows = v.domain.leading_basis(v.exact_input_blocks)
    res = np.linalg.norm(rows.T @ a.matrix @ a.matrix.conj().T @ rows - np.eye(rows.shape[1]), 2)
    assert res <= 1e-12
    x = rng.normal(size=12) + 1j * rng.normal(size=12)
    y = rng.normal(size=12) + 1j * rng.normal(size=12)
    assert abs(np.vdot(y, v.apply(x)) - np.vdot(a.apply(y), x)) <= 1e-12


def test_block_operator_validates_shape():
    s = DirectSumSpace.uniform(2, 2)
    with pytest.raises(DimensionMismatch):
        BlockOperator(s, s, np.eye(3))
    op = identity(s)
    with pytest.raises(ValueError):
        op.matrix[0, 0] = 5  # stored read-only


def test_dualize(rng):
    t = random_contraction(rng, 2, 0.5)
    p = LiftProblem(t, 0.5 * t, np.eye(2), "XT=QTX", "lift", "L")
    d = dualize(p)
    assert (d.relation_form, d.side, d.position) == ("TX=XTQ", "extend", "R")
    back = dualize(d)
    for f in dataclasses.fields(p):
        a, b = getattr(p, f.name), getattr(back, f.name)
        assert np.array_equal(a, b) if isinstance(a, np.ndarray) else a == b
    # the adjoint data satisfy the dual relation exactly when the primal holds
    assert d.residual() == pytest.approx(p.residual(), abs=1e-14)
