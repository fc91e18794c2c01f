"""Exception hierarchy shared by every dilatron module."""

from __future__ import annotations


class DilatronError(Exception):
    """Base class for all library errors."""


class NotHermitian(DilatronError):
    pass


class IndefiniteInput(DilatronError):
    def __init__(self, min_eig: float):
        super().__init__(f"matrix has eigenvalue {min_eig:.3e} below the clamp")
        self.min_eig = float(min_eig)


class NotAContraction(DilatronError):
    def __init__(self, norm: float, label: str = "operator"):
        super().__init__(f"{label} has norm {norm:.12g} > 1")
        self.norm = float(norm)


class Infeasible(DilatronError):
    """A Douglas-type factorization has no contractive solution.

    ``min_eig`` is the most negative eigenvalue of the difference of Gram
    matrices that decided the failure.
    """

    def __init__(self, min_eig: float, context: str = "douglas"):
        super().__init__(f"{context}: infeasible, min eigenvalue {min_eig:.3e}")
        self.min_eig = float(min_eig)
        self.context = context


class IncompatibleData(DilatronError):
    def __init__(self, mismatch: float):
        super().__init__(f"restriction data incompatible, worst mismatch {mismatch:.3e}")
        self.mismatch = float(mismatch)


class GeneratorMismatch(DilatronError):
    def __init__(self, residual: float):
        super().__init__(f"generator Gram matrices differ by {residual:.3e}")
        self.residual = float(residual)


class DimensionMismatch(DilatronError):
    pass


class SpaceMismatch(DilatronError):
    pass


class HypothesisViolated(DilatronError):
    """A documented precondition of a construction does not hold."""

    def __init__(self, hypothesis: str, residual: float | None = None):
        msg = hypothesis if residual is None else f"{hypothesis} (residual {residual:.3e})"
        super().__init__(msg)
        self.hypothesis = hypothesis
        self.residual = residual


class RelationViolated(HypothesisViolated):
    pass


class CompositeNotContraction(HypothesisViolated):
    pass


class NotStrict(HypothesisViolated):
    pass


class ConditioningFailure(DilatronError):
    def __init__(self, cond: float):
        super().__init__(f"defect operator condition number {cond:.3e} too large")
        self.cond = float(cond)


class HasCycle(DilatronError):
    def __init__(self, witness: list[int]):
        super().__init__(f"graph has a cycle through {witness}")
        self.witness = list(witness)


class Disconnected(DilatronError):
    def __init__(self, components: list[list[int]]):
        super().__init__(f"graph is disconnected: {components}")
        self.components = [list(c) for c in components]


class GenerationFailed(DilatronError):
    pass


class DimensionBudgetExceeded(DilatronError):
    def __init__(self, needed: int, budget: int):
        super().__init__(f"construction needs dimension {needed} > budget {budget}")
        self.needed = needed
        self.budget = budget
