"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid or inconsistent configuration (bad flag, unknown key, degenerate wiring)."""


class DataFormatError(ValueError):
    """A data file violates the expected on-disk format."""


class NumericsError(RuntimeError):
    """A numerical failure: non-finite loss, exploding gradients, failed gradient check."""
