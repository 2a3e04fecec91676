"""
Exception hierarchy for the Spatial PPM Analysis Package
"""


class SpatialPPMError(Exception):
    """Base class for every error raised by the package"""


class InputError(SpatialPPMError, ValueError):
    """Invalid argument, malformed input file or inconsistent configuration"""


class ProjectionDomainError(InputError):
    """Coordinates outside the domain of the map projection"""


class NumericalError(SpatialPPMError, ArithmeticError):
    """A computation could not produce a meaningful number"""


class EdgeCorrectionError(NumericalError):
    """Kernel mass retained inside the window is zero"""


class RankDeficientError(NumericalError):
    """
    The covariate matrix of a quadrature scheme is not of full column rank

    Parameters
    ----------
    columns : list of str
        Names of the columns found to be linearly dependent on the others
    """

    def __init__(self, columns):
        self.columns = list(columns)
        super().__init__(
            "Covariate matrix is rank deficient; collinear columns: "
            + ", ".join(self.columns)
        )
