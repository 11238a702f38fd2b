"""SciBlog: a collaboration service for research groups on slow links.

Everything is served as plain HTML over HTTP, persisted in a purpose-built
append-only record store, and every dynamically generated page is held to a
hard byte budget so the site stays usable on a dial-up line.
"""

__version__ = "0.1.0"
