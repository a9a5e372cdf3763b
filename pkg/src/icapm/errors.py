"""Exception hierarchy. Every error carries a short machine code for the CLI."""


class ICAPMError(Exception):
    code = "E_GENERIC"


class DataError(ICAPMError, ValueError):
    code = "E_DATA"


class ConfigError(ICAPMError, ValueError):
    code = "E_CONFIG"


class NumericalError(ICAPMError, ArithmeticError):
    code = "E_NUMERIC"


class PSDError(NumericalError):
    """Conditional covariance lost positive definiteness during filtering."""

    code = "E_PSD"

    def __init__(self, t, min_eigenvalue):
        self.t = t
        self.min_eigenvalue = min_eigenvalue
        super().__init__(
            f"H_t not positive semi-definite at t={t} "
            f"(smallest eigenvalue {min_eigenvalue:.6g})"
        )


class SingularMatrixError(NumericalError):
    code = "E_SINGULAR"


class EstimationError(NumericalError):
    code = "E_ESTIMATION"

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace or []
