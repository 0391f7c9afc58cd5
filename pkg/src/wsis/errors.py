"""Exception hierarchy shared across the package."""


class WsisError(Exception):
    pass


class DomainError(WsisError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class ConfigError(WsisError, ValueError):
    """Invalid or inconsistent configuration."""


class ContractError(WsisError, RuntimeError):
    """A caller broke an operation's precondition."""


class IngestionError(WsisError, ValueError):
    """Wind data could not be parsed or is malformed."""

    def __init__(self, message, row=None):
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)
        self.row = row


class EpisodeError(WsisError, RuntimeError):
    pass
