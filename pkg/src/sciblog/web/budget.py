"""The page byte budget and the machinery that keeps list pages inside it.

Every dynamically generated body must weigh in under the configured
maximum (default 25 * 1024 bytes) so the site stays responsive on a
33 kbit/s dial-up line. List pages choose how many items to show by
probing rendered sizes; a single item too large for one page is truncated
with an elision marker and a continuation link.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

from ..config import BUDGET_ENFORCE, BUDGET_WARN, SiteConfig
from ..errors import BudgetExceededError

log = logging.getLogger("sciblog.budget")


@dataclass(frozen=True)
class PageBudget:
    max_bytes: int = 25 * 1024
    mode: str = BUDGET_ENFORCE

    def __post_init__(self):
        if self.max_bytes <= 0:
            raise ValueError("max_bytes must be positive")
        if self.mode not in (BUDGET_ENFORCE, BUDGET_WARN):
            raise ValueError(f"unknown budget mode: {self.mode}")

    @classmethod
    def from_config(cls, config: SiteConfig) -> "PageBudget":
        return cls(max_bytes=config.budget_bytes, mode=config.budget_mode)


def check_budget(route: str, byte_count: int, budget: PageBudget) -> None:
    """Enforce or warn on an already-rendered 2xx dynamic body."""
    if byte_count <= budget.max_bytes:
        return
    if budget.mode == BUDGET_WARN:
        log.warning("page over budget: %s rendered %d > %d bytes", route, byte_count, budget.max_bytes)
        return
    log.error("budget exceeded: %s rendered %d > %d bytes", route, byte_count, budget.max_bytes)
    raise BudgetExceededError(route, byte_count, budget.max_bytes)


def fit_page_size(item_count: int, render_probe, budget: PageBudget, hard_cap: int = 50) -> int:
    """Largest k in [1, hard_cap] whose rendered page fits the budget.

    `render_probe(k)` must deterministically return the byte size of the
    page rendered with the first k remaining items, nondecreasing in k.
    Returns 0 only for an empty list. When even one item overflows the
    budget, returns 1: the caller is expected to truncate that item.
    """
    if item_count <= 0:
        return 0
    hi = min(item_count, hard_cap)
    if render_probe(1) > budget.max_bytes:
        return 1
    lo = 1
    while lo < hi:
        mid = (lo + hi + 1) // 2
        if render_probe(mid) <= budget.max_bytes:
            lo = mid
        else:
            hi = mid - 1
    return lo


def fit_text_slice(render_probe, text_len: int, budget: PageBudget) -> int:
    """Largest character count L in [0, text_len] with render_probe(L)
    within budget. Used to truncate one oversized body so its page fits."""
    lo, hi = 0, text_len
    if render_probe(hi) <= budget.max_bytes:
        return hi
    while lo < hi:
        mid = (lo + hi + 1) // 2
        if render_probe(mid) <= budget.max_bytes:
            lo = mid
        else:
            hi = mid - 1
    return lo
