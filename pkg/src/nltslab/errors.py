"""Exception hierarchy shared by all modules.

The CLI maps these onto distinct exit codes (validation 2, resource 3,
internal assertion 4).
"""


class ParameterError(ValueError):
    """Invalid argument: bad sizes, indices out of range, malformed intervals."""


class ResourceLimitError(RuntimeError):
    """A configured enumeration / qubit / retry budget would be exceeded."""

    def __init__(self, message: str, budget_name: str | None = None):
        super().__init__(message)
        self.budget_name = budget_name


class ContractError(RuntimeError):
    """A postcondition or certificate re-check failed.

    Carries an optional witness (e.g. the offending pair of assignments).
    """

    def __init__(self, message: str, witness=None):
        super().__init__(message)
        self.witness = witness
