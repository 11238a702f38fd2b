from .app import Application
from .http import Request, Response

__all__ = ["Application", "Request", "Response"]
