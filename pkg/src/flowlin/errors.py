"""Shared exception base class.

Concrete error types live next to the operations that raise them; they all
derive from :class:`FlowlinError` so callers can catch package errors broadly.
"""


class FlowlinError(Exception):
    """Base class for all errors raised by flowlin."""
