// Read-receipt glyphs on the sent-messages view. All data comes from the
// server-rendered data-read-at attribute; no requests are made.

export function decorateSentMessages(root: Document): void {
  const rows = root.querySelectorAll("[data-read-at]");
  for (let i = 0; i < rows.length; i++) {
    const el = rows[i];
    const value = el.getAttribute("data-read-at");
    if (value === null) continue;
    if (value === "") {
      el.textContent = "○"; // unread
      el.setAttribute("title", "not read yet");
      continue;
    }
    const parsed = Date.parse(value);
    if (Number.isNaN(parsed)) continue; // malformed: leave the row alone
    el.textContent = "✓";
    el.setAttribute("title", "read " + new Date(parsed).toLocaleString());
  }
}
