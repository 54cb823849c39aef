"""Exception hierarchy shared by all modules."""


class MatchPriorError(Exception):
    """Base class for every error raised by this package."""


class NumericalError(MatchPriorError):
    pass


class StepSizeUnderflow(NumericalError):
    pass


class NonFiniteRhs(NumericalError):
    pass


class NonFiniteIntegrand(NumericalError):
    pass


class NonFiniteValue(NumericalError):
    pass


class NoSignChange(NumericalError):
    pass


class DomainViolation(MatchPriorError):
    pass


class SingularInformation(NumericalError):
    pass


class DegenerateFit(MatchPriorError):
    """A fit that cannot feed the tail approximations."""


class SeparationDetected(DegenerateFit):
    pass


class NonConvergence(DegenerateFit):
    pass


class NegativeRadicand(DegenerateFit):
    pass


class NonPositiveCurvature(DegenerateFit):
    pass


class PathLeftDomain(NumericalError):
    pass


class TangencyDetected(NumericalError):
    pass


class NonRealPower(NumericalError):
    pass


class BracketingFailure(NumericalError):
    pass
