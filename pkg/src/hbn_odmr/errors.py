"""Exception and warning types shared across the package."""


class OdmrError(Exception):
    """Base class for domain errors (CLI exit code 1)."""


class DimensionCap(OdmrError):
    pass


class NotHermitian(OdmrError):
    pass


class StepTooLarge(OdmrError):
    pass


class NoMinimum(OdmrError):
    pass


class BasisMismatch(OdmrError):
    pass


class Degenerate(OdmrError):
    pass


class NonlinearRegime(OdmrError):
    pass


class Underdetermined(OdmrError):
    pass


class DegenerateJacobian(OdmrError):
    pass


class NoConvergence(OdmrError):
    pass


class PeakCollapse(OdmrError):
    """Two fitted centers ended up closer than fwhm/10.

    The offending fit is attached as ``model`` and ``result`` so callers can
    still inspect it.
    """

    def __init__(self, message, model=None, result=None):
        super().__init__(message)
        self.model = model
        self.result = result


class MissingBranch(OdmrError):
    pass


class ParseError(OdmrError):
    pass


class ValidationError(OdmrError, ValueError):
    pass


class SchemaMismatch(OdmrError):
    pass


class NumericParse(OdmrError):
    pass


class GridTooCoarse(UserWarning):
    pass


class StiffnessWarning(UserWarning):
    pass
