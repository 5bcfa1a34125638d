"""Exception hierarchy shared by the solvers and the CLI."""


class ContractError(Exception):
    """Base class for all contractq errors."""


class EmptyCellError(ContractError, ValueError):
    """A proposed performance category has zero probability mass."""

    def __init__(self, message="empty cell"):
        super().__init__(message)


class InfeasibleError(ContractError):
    """No wage scheme satisfies the incentive constraints.

    ``agent`` identifies the failing agent in two-agent problems and
    ``certificate`` carries whatever evidence the solver produced (for
    example the index of an unsatisfiable deviation constraint).
    """

    def __init__(self, message, *, agent=None, certificate=None):
        super().__init__(message)
        self.agent = agent
        self.certificate = certificate


class ConvergenceError(ContractError):
    """An iterative solver hit its iteration cap."""

    def __init__(self, message, *, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class ConfigError(ContractError, ValueError):
    """An experiment configuration failed validation."""
