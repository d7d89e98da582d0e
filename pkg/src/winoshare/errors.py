"""Exception types shared across the package."""


class WinoshareError(Exception):
    """Base class for all package-specific errors."""


class ConfigurationError(WinoshareError):
    """Unsupported or inconsistent hardware/algorithm configuration."""


class ContractViolation(WinoshareError):
    """An operation was called with arguments violating its contract."""


class UnsupportedLayerError(WinoshareError):
    """Layer shape or attribute outside the supported envelope."""


class InfeasibleConfigError(WinoshareError):
    """No schedule or configuration fits the given buffers/budgets."""

    def __init__(self, message: str, binding: str | None = None):
        super().__init__(message)
        self.binding = binding


class CapacityError(WinoshareError):
    """A modeled buffer or bank address range was exceeded."""


class BankConflictError(WinoshareError):
    """Two distinct addresses were demanded from one bank in one cycle."""

    def __init__(self, message: str, bank=None, addresses=None):
        super().__init__(message)
        self.bank = bank
        self.addresses = addresses


class SimulationError(WinoshareError):
    """Internal simulator invariant broke (deadlock, buffer overlap, ...)."""


class ModelFileError(WinoshareError):
    """Problem in a network model or config file."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
