"""Device-independent QKD analysis toolkit."""

__version__ = "0.1.0"

from ._numerics import DomainError, NoRootError  # noqa: F401
