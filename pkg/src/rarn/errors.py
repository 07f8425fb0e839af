class RarnError(Exception):
    pass


class ContractError(RarnError, ValueError):
    """An argument violates an operation's precondition."""


class DomainError(RarnError, ValueError):
    """The operation is undefined at the given input (e.g. antipodal points)."""


class ConfigError(RarnError, ValueError):
    """Invalid solver or harness configuration."""
