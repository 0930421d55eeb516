"""Exception hierarchy shared by all robsim modules.

Every error carries an ``exit_code`` used by the command-line front end:
2 for configuration problems, 3 for numerical failures, 4 for I/O.
"""


class RobsimError(Exception):
    exit_code = 3


class ConfigError(RobsimError):
    exit_code = 2


class ParseError(ConfigError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ValidationError(ConfigError):
    def __init__(self, key, reason):
        self.key = key
        self.reason = reason
        super().__init__(f"{key}: {reason}")


class InvalidAlpha(ConfigError):
    pass


class SpecMismatch(ConfigError):
    pass


class FormatError(ParseError):
    """Malformed field or observation file."""

    exit_code = 4


class NonMonotoneTime(FormatError):
    pass


class NumericalError(RobsimError):
    exit_code = 3


class NonConvergence(NumericalError):
    def __init__(self, message, residual=None):
        self.residual = residual
        super().__init__(message)


class IncompatibleRHS(NumericalError):
    pass


class SingularCorrection(NumericalError):
    pass


class CFLViolation(NumericalError):
    pass


class InsufficientData(NumericalError):
    pass
