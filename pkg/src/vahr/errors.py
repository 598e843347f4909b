"""Shared exception root; concrete errors live with the module that raises them."""


class VahrError(Exception):
    """Base class for all errors raised by this package."""
