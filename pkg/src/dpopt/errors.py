"""Exception hierarchy. Everything raised on purpose derives from DpoptError."""


class DpoptError(Exception):
    pass


class InvalidInput(DpoptError, ValueError):
    pass


class NonStochasticRow(InvalidInput):
    pass


class NegativeEntry(InvalidInput):
    pass


class SupportMismatch(InvalidInput):
    pass


class DimensionMismatch(InvalidInput):
    pass


class InvalidN(InvalidInput):
    pass


class InvalidT(InvalidInput):
    pass


class InvalidEpsilon(InvalidInput):
    pass


class OutOfRange(InvalidInput):
    pass


class EmptyGuessSet(InvalidInput):
    pass


class IllegalLoss(InvalidInput):
    """Loss is not monotone on the grid it is used on."""


class InvalidWitness(InvalidInput):
    pass


class LinearDependence(DpoptError):
    """Posteriors of the coarser channel are not linearly independent."""


class EvaluationFailure(DpoptError):
    pass


class SolverFailure(DpoptError):
    pass


class QuadratureNonconvergence(DpoptError):
    def __init__(self, achieved: float, target: float):
        super().__init__(f"quadrature error estimate {achieved:.3g} exceeds target {target:.3g}")
        self.achieved = achieved
        self.target = target


class SamplerStall(DpoptError):
    pass


class OptimalityViolation(DpoptError):
    pass


class ChainViolation(DpoptError):
    def __init__(self, link: str, detail: str = ""):
        super().__init__(f"inequality chain broken at {link}" + (f": {detail}" if detail else ""))
        self.link = link
