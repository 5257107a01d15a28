"""Exception hierarchy shared by the library and the command line."""


class LatentBOError(Exception):
    exit_code = 1


class ConfigError(LatentBOError):
    """Bad configuration: missing or unknown key, wrong type, invalid value."""

    exit_code = 2

    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key


class OutputError(LatentBOError):
    exit_code = 3

    def __init__(self, message, path=None):
        super().__init__(message)
        self.path = path


class NumericalError(LatentBOError):
    exit_code = 4


class FactorizationError(NumericalError):
    def __init__(self, message, jitter=None):
        super().__init__(message)
        self.jitter = jitter


class InversionError(NumericalError):
    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class TrainingError(NumericalError):
    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class BudgetError(LatentBOError):
    exit_code = 5


class InputError(LatentBOError, ValueError):
    """Malformed input to a numerical routine (shape or domain)."""

    exit_code = 2
