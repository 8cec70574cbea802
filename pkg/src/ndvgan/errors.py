"""Exception hierarchy shared by every module."""


class NDVError(Exception):
    pass


class ShapeError(NDVError, ValueError):
    pass


class ContractError(NDVError, ValueError):
    """A precondition of an operation was violated by the caller."""


class NumericError(NDVError, ArithmeticError):
    pass


class DivergenceError(NumericError):
    def __init__(self, step, detail=""):
        self.step = step
        msg = f"integration diverged at step {step}"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)


class ConfigurationError(NDVError, ValueError):
    def __init__(self, message, key=None):
        self.key = key
        super().__init__(message)


class CapabilityError(NDVError):
    """The requested operation is not supported by the generator family."""


class CorruptFileError(NDVError, OSError):
    pass


class TrainingError(NDVError, RuntimeError):
    pass
