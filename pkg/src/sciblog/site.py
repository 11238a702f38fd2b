"""Wiring: one data directory, one store, all services."""

from __future__ import annotations

import time
from pathlib import Path

from .accounts import AccountsService
from .config import SiteConfig
from .content import ContentService
from .messaging import MessagingService
from .store import RecordStore


class Site:
    """Everything a gateway, CLI, or test needs, opened over one data dir."""

    def __init__(self, data_dir, config: SiteConfig | None = None, clock=time.time):
        self.data_dir = Path(data_dir)
        self.data_dir.mkdir(parents=True, exist_ok=True)
        self.config = config or SiteConfig()
        self.clock = clock
        self.store = RecordStore(self.data_dir)
        self.accounts = AccountsService(self.store, self.config, clock)
        self.messaging = MessagingService(self.store, self.accounts, self.config, clock)
        self.content = ContentService(self.store, self.accounts, self.config, clock)

    def close(self) -> None:
        self.store.close()

    def __enter__(self) -> "Site":
        return self

    def __exit__(self, *exc) -> None:
        self.close()
