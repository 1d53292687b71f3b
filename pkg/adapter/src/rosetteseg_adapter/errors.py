class AdapterError(Exception):
    """Base error for adapter failures (bad input, unavailable models)."""


class ModelUnavailableError(AdapterError):
    """A foundation-model backend was requested but cannot be loaded."""
