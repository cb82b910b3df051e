"""Exception hierarchy shared across the package.

Two broad families matter for the command line tool: configuration or
input problems (exit code 2) and numerical failures discovered while
evaluating the model (exit code 3).
"""


class RydsenseError(Exception):
    """Base class for all package specific errors."""


class ConfigError(RydsenseError):
    """Problems with configuration input (exit code 2 territory)."""


class SchemaError(ConfigError):
    """Config file could not be parsed or contains unknown keys."""


class ValidationError(ConfigError):
    """Config parsed fine but violates a physical or range constraint."""


class DomainError(ConfigError):
    """An operation was called with arguments outside its domain."""


class NumericalError(RydsenseError):
    """Numerical failures while evaluating the model (exit code 3)."""


class DegenerateSteadyStateError(NumericalError):
    """The Liouvillian has no unique steady state."""


class StepSizeError(NumericalError):
    """Fixed-step propagation drifted; the step is too large."""


class QuadratureAccuracyError(NumericalError):
    """A quadrature failed to reach its accuracy target."""


class UnphysicalGainError(NumericalError):
    """Averaged probe coherence implies amplification of the probe."""


class InsensitiveOperatingPointError(NumericalError):
    """Transmission slope too small to define a photon limited field."""


class UndefinedCorrelationError(NumericalError):
    """Pearson correlation requested for series with zero variance."""


class SingularityError(NumericalError):
    """Susceptibility evaluated at (or too near) a pole."""


class FitError(NumericalError):
    """Nonlinear fit did not converge or the data are degenerate."""


class AdiabaticityError(DomainError):
    """Trace synthesis asked for signal parameters outside the
    quasi-static regime (signal Rabi or offset frequency not small
    against the local oscillator Rabi frequency)."""


class ExtrapolationError(DomainError):
    """A sweep grid extends beyond a tabulated calibration."""
