"""Exception hierarchy shared by every service layer.

The web gateway maps these onto HTTP statuses; library callers catch them
directly. Keep messages free of private content: error pages are public.
"""


class SciBlogError(Exception):
    """Base class for all service errors."""


class ValidationError(SciBlogError):
    """Caller supplied a malformed or out-of-range value."""


class NotAuthorizedError(SciBlogError):
    """Actor lacks the privilege the operation requires."""


class NotFoundError(SciBlogError):
    """Entity does not exist (or must appear not to exist to this actor)."""


class AuthenticationError(SciBlogError):
    """Login rejected. One uniform message for bad login or bad password."""


class RateLimitedError(SciBlogError):
    """Public endpoint throttle exceeded for this client key."""


class StoreError(SciBlogError):
    """Record store failure (I/O, format)."""


class StoreFormatError(StoreError):
    """A log file failed structural validation (bad magic or version)."""


class IntegrityError(SciBlogError):
    """Stored content no longer matches its recorded digest."""


class BudgetExceededError(SciBlogError):
    """A dynamic page rendered over the byte budget in enforce mode."""

    def __init__(self, route: str, byte_count: int, max_bytes: int):
        super().__init__(
            f"page for {route} rendered {byte_count} bytes, budget {max_bytes}"
        )
        self.route = route
        self.byte_count = byte_count
        self.max_bytes = max_bytes
