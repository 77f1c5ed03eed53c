"""Exception types shared across the package."""


class AdesError(Exception):
    pass


class DimensionError(AdesError, ValueError):
    """Operand shapes do not agree."""


class ConfigError(AdesError, ValueError):
    """Invalid configuration value or key."""


class ContractError(AdesError, ValueError):
    """A documented precondition was violated by the caller."""


class DatasetError(AdesError, ValueError):
    pass
