"""Exception hierarchy shared by all modules."""


class BankPideError(Exception):
    """Base class for every error raised by this package."""


class InvalidSpec(BankPideError, ValueError):
    pass


class NonpositiveBoundary(BankPideError, ValueError):
    pass


class NonpositiveShiftedBoundary(BankPideError, ValueError):
    pass


class NoConsistentRegime(BankPideError, RuntimeError):
    pass


class InvalidMesh(BankPideError, ValueError):
    pass


class ShapeMismatch(BankPideError, ValueError):
    pass


class SingularTridiagonal(BankPideError, RuntimeError):
    pass


class DegenerateAnnuity(BankPideError, ArithmeticError):
    pass


class NoConvergence(BankPideError, RuntimeError):
    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


class OutOfRange(BankPideError, ValueError):
    pass


class WindowViolation(BankPideError, UserWarning):
    """(theta, sigma) outside the HV stability window."""


class ConfigError(BankPideError, ValueError):
    pass
