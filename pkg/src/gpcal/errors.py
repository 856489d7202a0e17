"""Exception hierarchy. Exit codes follow the CLI contract:
1 usage/config, 2 data, 3 numerical failure, 4 gate failure."""


class GpcalError(Exception):
    exit_code = 1


class ConfigError(GpcalError):
    """Bad configuration, missing files, invalid CLI usage."""
    exit_code = 1


class DataError(GpcalError):
    """Malformed or inconsistent input data."""
    exit_code = 2


class SimulatorError(DataError):
    """Simulator binding failure (bad exit status, malformed output, missing row)."""


class NumericalError(GpcalError):
    """Numerical breakdown: factorization failure, negative variance, non-finite objective."""
    exit_code = 3


class IllConditionedError(NumericalError):
    """Correlation/covariance matrix cannot be factorized even after nugget escalation."""


class FitError(NumericalError):
    """Hyperparameter estimation or MCMC diagnostics failed."""


class GateError(GpcalError):
    """Workflow quality gate not met (e.g. emulator predictivity below threshold)."""
    exit_code = 4


class ExtrapolationWarning(UserWarning):
    """Prediction requested outside the emulator's training bounding box."""


class NumericalWarning(UserWarning):
    """Recoverable numerical event, e.g. automatic nugget escalation."""
