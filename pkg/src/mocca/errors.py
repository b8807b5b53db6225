class MoccaError(Exception):
    pass


class FormatError(MoccaError, ValueError):
    """Malformed input file or data that violates a structural precondition."""


class AcsCoverageError(FormatError):
    """Required calibration samples (the centered ``M+L-1`` block) are not acquired."""


class NumericalError(MoccaError, ArithmeticError):
    """SVD failure, degenerate combination, or a singular system without fallback."""
