"""Runtime configuration used across services.

Defaults encode the operating envelope: 25 KiB page budget for dial-up
users, 12-hour sessions, modest content limits. All knobs are plain
constructor arguments so tests and deployments can tune them.
"""

from __future__ import annotations

from dataclasses import dataclass

BUDGET_ENFORCE = "enforce"
BUDGET_WARN = "warn"


@dataclass
class SiteConfig:
    budget_bytes: int = 25 * 1024
    budget_mode: str = BUDGET_ENFORCE
    page_hard_cap: int = 50  # most items fit_page_size will ever place on a page
    session_ttl_hours: float = 12.0
    # Recorded beside every hash so the cost can be raised without breaking
    # existing credentials.
    password_algorithm: str = "pbkdf2_sha256"
    password_iterations: int = 100_000
    min_password_length: int = 8
    contact_rate_limit: int = 10
    contact_rate_window_seconds: int = 3600
    asset_max_bytes: int = 64 * 1024 * 1024
    forum_body_max_bytes: int = 32 * 1024
    message_body_max_bytes: int = 16 * 1024
    subject_max_chars: int = 200
    title_max_chars: int = 200
    agenda_notes_max_bytes: int = 4 * 1024
    ledger_description_max_chars: int = 500
    url_max_chars: int = 2048
    filename_max_chars: int = 255
    default_currency: str = "USD"

    def __post_init__(self):
        if self.budget_bytes <= 0:
            raise ValueError("budget_bytes must be positive")
        if self.budget_mode not in (BUDGET_ENFORCE, BUDGET_WARN):
            raise ValueError(f"unknown budget mode: {self.budget_mode}")
