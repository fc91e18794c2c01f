"""Truncated direct sums and block operators with exactness bookkeeping.

An infinite direct sum ``H + D + D + ...`` is stored as its first ``N``
summands.  Operators that push content toward the tail lose whatever
falls off the last block, so each :class:`BlockOperator` records how far
it shifts (``forward_bandwidth``).  Vectors supported on the first
``N - forward_bandwidth`` blocks are mapped exactly as by the untruncated
operator; identities are certified only on such vectors.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DimensionMismatch, SpaceMismatch
from .numkernel import adj, as_matrix

__all__ = [
    "DirectSumSpace",
    "BlockOperator",
    "ExactDomainSpec",
    "embed",
    "compress",
    "compose",
    "adjoint",
    "dualize",
    "identity",
    "RELATION_DUALS",
    "POSITION_DUALS",
]


@dataclass(frozen=True)
class DirectSumSpace:
    """Ordered labelled summands; ``truncation_level`` is the block count."""

    components: tuple[tuple[str, int], ...]

    def __post_init__(self):
        comps = tuple((str(lbl), int(d)) for lbl, d in self.components)
        if any(d < 0 for _, d in comps):
            raise DimensionMismatch("negative component dimension")
        object.__setattr__(self, "components", comps)

    @classmethod
    def uniform(cls, dim: int, blocks: int, head: str = "H", tail: str = "D") -> "DirectSumSpace":
        """``H + D + ... + D`` with ``blocks`` summands of equal dimension."""
        if blocks < 1:
            raise DimensionMismatch("need at least one block")
        return cls(((head, dim),) + tuple((tail, dim) for _ in range(blocks - 1)))

    @property
    def truncation_level(self) -> int:
        return len(self.components)

    @property
    def dims(self) -> list[int]:
        return [d for _, d in self.components]

    @property
    def total_dim(self) -> int:
        return sum(self.dims)

    @property
    def head_dim(self) -> int:
        return self.components[0][1]

    def offsets(self) -> list[int]:
        out = [0]
        for d in self.dims:
            out.append(out[-1] + d)
        return out

    def block_slice(self, i: int) -> slice:
        off = self.offsets()
        return slice(off[i], off[i + 1])

    def leading_dim(self, blocks: int) -> int:
        """Dimension of the span of the first ``blocks`` summands."""
        blocks = max(0, min(blocks, self.truncation_level))
        return self.offsets()[blocks]

    def leading_basis(self, blocks: int) -> np.ndarray:
        """Columns of the identity spanning the first ``blocks`` summands."""
        k = self.leading_dim(blocks)
        return np.eye(self.total_dim, dtype=complex)[:, :k]

    def grouped(self, sizes: Sequence[int], labels: Sequence[str] | None = None) -> "DirectSumSpace":
        """Merge consecutive blocks into groups of the given sizes."""
        if sum(sizes) != self.truncation_level:
            raise DimensionMismatch("group sizes must cover every block")
        comps = []
        pos = 0
        for j, s in enumerate(sizes):
            dim = sum(self.dims[pos : pos + s])
            lbl = labels[j] if labels else "+".join(l for l, _ in self.components[pos : pos + s])
            comps.append((lbl, dim))
            pos += s
        return DirectSumSpace(tuple(comps))


@dataclass(frozen=True)
class ExactDomainSpec:
    """Vectors on the first ``leading_blocks`` summands are acted on exactly."""

    leading_blocks: int

    def basis(self, space: DirectSumSpace) -> np.ndarray:
        return space.leading_basis(self.leading_blocks)

    def after(self, inner_bandwidth: int | None, outer: "ExactDomainSpec") -> "ExactDomainSpec":
        """Exact domain of ``outer_op o inner_op`` given this inner domain."""
        if inner_bandwidth is None:
            return ExactDomainSpec(0)
        return ExactDomainSpec(max(0, min(self.leading_blocks, outer.leading_blocks - inner_bandwidth)))


@dataclass(frozen=True, eq=False)
class BlockOperator:
    """Dense matrix between two truncated direct sums.

    ``forward_bandwidth``  how many blocks content moves toward the tail
    (``None`` means unbounded, e.g. a lower-triangular lift); the adjoint
    swaps it with ``backward_bandwidth``.
    """

    domain: DirectSumSpace
    codomain: DirectSumSpace
    matrix: np.ndarray
    forward_bandwidth: int | None = 0
    backward_bandwidth: int | None = 0
    label: str = ""
    exact_override: int | None = field(default=None, compare=False)
    certificates: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        m = as_matrix(self.matrix)
        if m.shape != (self.codomain.total_dim, self.domain.total_dim):
            raise DimensionMismatch(
                f"matrix {m.shape} does not match spaces "
                f"{self.codomain.total_dim}x{self.domain.total_dim}"
            )
        m = m.copy()
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    def __eq__(self, other) -> bool:
        if not isinstance(other, BlockOperator):
            return NotImplemented
        return (
            self.domain == other.domain
            and self.codomain == other.codomain
            and self.forward_bandwidth == other.forward_bandwidth
            and self.backward_bandwidth == other.backward_bandwidth
            and self.label == other.label
            and np.array_equal(self.matrix, other.matrix)
        )

    __hash__ = None

    @property
    def exact_input_blocks(self) -> int:
        if self.exact_override is not None:
            return self.exact_override
        if self.forward_bandwidth is None:
            return 0
        return max(0, self.domain.truncation_level - self.forward_bandwidth)

    @property
    def exact_domain(self) -> ExactDomainSpec:
        return ExactDomainSpec(self.exact_input_blocks)

    def apply(self, v: np.ndarray) -> np.ndarray:
        return self.matrix @ v

    def with_matrix(self, m: np.ndarray, **kw) -> "BlockOperator":
        return dataclasses.replace(self, matrix=m, **kw)


def identity(space: DirectSumSpace, label: str = "I") -> BlockOperator:
    return BlockOperator(space, space, np.eye(space.total_dim, dtype=complex), 0, 0, label)


def embed(h, space: DirectSumSpace) -> np.ndarray:
    """Place ``h`` in block 0 of ``space`` (zero elsewhere)."""
    h = np.asarray(h, dtype=complex)
    if h.shape[0] != space.head_dim:
        raise DimensionMismatch(f"vector of length {h.shape[0]} does not fit head block {space.head_dim}")
    out = np.zeros((space.total_dim,) + h.shape[1:], dtype=complex)
    out[: space.head_dim] = h
    return out


def compress(v, space: DirectSumSpace) -> np.ndarray:
    """Block-0 component of ``v`` (the adjoint of :func:`embed`)."""
    v = np.asarray(v, dtype=complex)
    if v.shape[0] != space.total_dim:
        raise DimensionMismatch(f"vector of length {v.shape[0]} is not in a space of dim {space.total_dim}")
    return v[: space.head_dim].copy()


def _add_bw(a: int | None, b: int | None) -> int | None:
    return None if a is None or b is None else a + b


def compose(a: BlockOperator, b: BlockOperator) -> BlockOperator:
    """``a o b``; bandwidths add and the exact domain shrinks accordingly."""
    if a.domain != b.codomain:
        raise SpaceMismatch("a.domain must equal b.codomain")
    inner = b.exact_domain.after(b.forward_bandwidth, a.exact_domain)
    return BlockOperator(
        domain=b.domain,
        codomain=a.codomain,
        matrix=a.matrix @ b.matrix,
        forward_bandwidth=_add_bw(a.forward_bandwidth, b.forward_bandwidth),
        backward_bandwidth=_add_bw(a.backward_bandwidth, b.backward_bandwidth),
        label=f"({a.label})({b.label})" if a.label or b.label else "",
        exact_override=inner.leading_blocks,
    )


def adjoint(a: BlockOperator) -> BlockOperator:
    """Conjugate transpose with spaces and bandwidths swapped."""
    return BlockOperator(
        domain=a.codomain,
        codomain=a.domain,
        matrix=adj(a.matrix),
        forward_bandwidth=a.backward_bandwidth,
        backward_bandwidth=a.forward_bandwidth,
        label=f"{a.label}*" if a.label and not a.label.endswith("*") else a.label[:-1],
    )


# Taking adjoints of ``XT = QTX`` gives ``T*X* = X*T*Q*``, and so on: every
# relation form has a partner in which the order of all factors is reversed.
RELATION_DUALS = {
    "XT=QTX": "TX=XTQ",
    "TX=XTQ": "XT=QTX",
    "XT=TQX": "TX=XQT",
    "TX=XQT": "XT=TQX",
    "TX=QXT": "XT=TXQ",
    "XT=TXQ": "TX=QXT",
}
POSITION_DUALS = {"L": "R", "R": "L", "M": "M"}
SIDE_DUALS = {"lift": "extend", "extend": "lift"}


def dualize(problem):
    """Adjoint every datum of a lifting problem and swap the relation side.

    Works on any dataclass with fields ``t, x, q, position, side,
    relation_form`` (such as :class:`dilatron.lifting.LiftProblem`).
    Applying it twice returns an equal problem.
    """
    return dataclasses.replace(
        problem,
        t=adj(problem.t),
        x=adj(problem.x),
        q=adj(problem.q),
        position=POSITION_DUALS[problem.position],
        side=SIDE_DUALS[problem.side],
        relation_form=RELATION_DUALS[problem.relation_form],
    )
