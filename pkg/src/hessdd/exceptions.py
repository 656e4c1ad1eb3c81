"""Error types shared across the package.

The CLI maps ConfigError to exit code 2 and NumericError (and subclasses)
to exit code 3.
"""


class ConfigError(ValueError):
    """Bad or inconsistent user-supplied configuration."""


class DataError(ValueError):
    """Malformed dataset input; message cites row/column where possible."""


class NumericError(RuntimeError):
    """Numerical failure during assembly or analysis."""


class CapacityError(NumericError):
    """Problem size exceeds the configured dense-matrix cap."""


class CollapseError(NumericError):
    """Spectrum has no usable eigenvalues (rank 0 at the zero threshold)."""


class LeverageError(NumericError):
    """A leave-one-out leverage reached 1; the estimator is undefined."""

    def __init__(self, index: int, leverage: float):
        self.index = int(index)
        self.leverage = float(leverage)
        super().__init__(
            f"leverage {leverage!r} at sample {index} is too close to 1; "
            "leave-one-out correction overflows"
        )
