// Unread/alert badge: polls the JSON endpoint and keeps the nav badge in
// sync. One request in flight at most; a 403 means the session is gone, so
// polling stops for good and the re-login link is revealed.

export const POLL_INTERVAL_MS = 60_000;
export const BACKOFF_CEILING_MS = 600_000;
const STALE_AFTER_FAILURES = 3;

interface UnreadPayload {
  unread: Record<string, number>;
  alerts: number;
}

function totalCount(payload: UnreadPayload): number {
  let total = payload.alerts || 0;
  for (const slug in payload.unread) {
    total += payload.unread[slug] || 0;
  }
  return total;
}

function applyCounts(badge: Element, payload: UnreadPayload): void {
  const total = totalCount(payload);
  if (total > 0) {
    badge.textContent = String(total);
    (badge as HTMLElement).hidden = false;
  } else {
    badge.textContent = "";
    (badge as HTMLElement).hidden = true;
  }
}

export function pollUnread(intervalMs: number = POLL_INTERVAL_MS): void {
  const badge = document.getElementById("unread-badge");
  if (!badge) return; // public page: stay inert
  const url = badge.getAttribute("data-unread-url") || "/api/unread";
  let failures = 0;
  let stopped = false;

  const schedule = (): void => {
    const delay =
      failures > 0
        ? Math.min(intervalMs * 2 ** failures, BACKOFF_CEILING_MS)
        : intervalMs * (0.9 + Math.random() * 0.2); // +-10% jitter
    setTimeout(tick, delay);
  };

  const tick = async (): Promise<void> => {
    if (stopped) return;
    try {
      const resp = await fetch(url, {
        credentials: "same-origin",
        headers: { Accept: "application/json" },
      });
      if (resp.status === 403) {
        // Session expired: stop entirely, point the user at the login page.
        stopped = true;
        const relogin = document.getElementById("relogin-link");
        if (relogin) relogin.hidden = false;
        return;
      }
      if (!resp.ok) throw new Error(String(resp.status));
      applyCounts(badge, (await resp.json()) as UnreadPayload);
      failures = 0;
      badge.classList.remove("stale");
    } catch {
      failures += 1;
      if (failures >= STALE_AFTER_FAILURES) badge.classList.add("stale");
    } finally {
      if (!stopped) schedule();
    }
  };

  void tick();
}
