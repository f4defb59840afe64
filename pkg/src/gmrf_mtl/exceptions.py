"""Exception types shared across the package."""


class ValidationError(ValueError):
    """Raised when an input violates a documented precondition."""


class DisconnectedGraphError(ValidationError):
    """Raised when a topology is not connected.

    Attributes
    ----------
    components : list of list of int
        Connected components, 0-indexed agent ids.
    """

    def __init__(self, components):
        self.components = [sorted(c) for c in components]
        names = "; ".join("{" + ", ".join(str(k + 1) for k in c) + "}" for c in self.components)
        super().__init__(f"topology is disconnected: components {names}")


class DivergenceError(FloatingPointError):
    """A recursion produced a non-finite iterate."""

    def __init__(self, iteration, message=None):
        self.iteration = iteration
        super().__init__(message or f"non-finite state at iteration {iteration}")


class IllConditionedEstimateError(ArithmeticError):
    """The projected covariance has more than one (numerically) zero eigenvalue."""

    def __init__(self, eigenvalues, floor):
        self.eigenvalues = eigenvalues
        self.floor = floor
        n_small = int((eigenvalues < floor).sum())
        super().__init__(
            f"{n_small} eigenvalues below floor {floor:.3g}; estimate is effectively disconnected"
        )


class UnstableStepsizeError(ValidationError):
    """Stepsize outside the stability region of a recursion."""


class ConfigError(ValueError):
    """Malformed experiment configuration."""

    def __init__(self, message, line=None, key=None):
        self.line = line
        self.key = key
        where = []
        if line is not None:
            where.append(f"line {line}")
        if key is not None:
            where.append(f"field '{key}'")
        prefix = f"[{', '.join(where)}] " if where else ""
        super().__init__(prefix + message)
