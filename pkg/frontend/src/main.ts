import { pollUnread } from "./badge";
import { decorateSentMessages } from "./receipts";
import { enhanceComposer } from "./composer";

function boot(): void {
  pollUnread();
  decorateSentMessages(document);
  enhanceComposer(document);
}

if (document.readyState === "loading") {
  document.addEventListener("DOMContentLoaded", boot);
} else {
  boot();
}
