from typing import Optional

#### error hierarchy section #################################################

class StablePerturbError(Exception):
    """Base class for every error raised by this package"""


class InvalidMeasureError(StablePerturbError, ValueError):
    """Spectral or jump measure violates its invariants"""


class DomainError(StablePerturbError, ValueError):
    """Parameter outside its admissible range"""


class InadmissibleExponentError(StablePerturbError, ValueError):
    """Integrability exponents (p, q) fail the required condition"""


class ConfigError(StablePerturbError, ValueError):
    """Experiment configuration cannot be used"""


class ResolutionError(StablePerturbError):
    """Lattice does not resolve the decay of the Fourier integrand"""

    def __init__(self, message: str, suggested_points: Optional[int] = None):
        super().__init__(message)
        self.suggested_points = suggested_points


class ExtentError(StablePerturbError):
    """Lattice extent too small: the periodised tail is not negligible"""


class QuadratureError(StablePerturbError):
    """Quadrature failed or its error estimate exceeds the tolerance"""


class ContractionError(StablePerturbError):
    """k_lambda >= 1/2, the Neumann series is not certified"""


class GridExhaustedError(StablePerturbError):
    """No lambda on the search grid satisfies the contraction condition"""


class ModelBoundError(StablePerturbError):
    """State-dependent intensity exceeded its thinning envelope"""


class StepSizeError(StablePerturbError):
    """Time step too coarse for the thinning precondition"""


class LedgerMissingError(StablePerturbError, KeyError):
    """Requested constant is not present in the ledger"""
