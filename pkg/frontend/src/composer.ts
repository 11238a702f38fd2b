// Form niceties: a live remaining-character counter on fields that declare
// data-maxlen, and a double-submit guard. Plain submissions always go
// through; the guard only swallows repeats.

export function enhanceComposer(root: Document): void {
  const fields = root.querySelectorAll("input[data-maxlen],textarea[data-maxlen]");
  for (let i = 0; i < fields.length; i++) {
    const field = fields[i] as HTMLInputElement | HTMLTextAreaElement;
    const max = parseInt(field.getAttribute("data-maxlen") || "", 10);
    if (!Number.isFinite(max) || max <= 0) continue;
    const counter = root.createElement("span");
    counter.className = "meta counter";
    const update = (): void => {
      counter.textContent = String(max - field.value.length);
    };
    field.addEventListener("input", update);
    update();
    field.insertAdjacentElement("afterend", counter);
  }

  const forms = root.querySelectorAll("form");
  for (let i = 0; i < forms.length; i++) {
    const form = forms[i];
    let submitted = false;
    form.addEventListener("submit", (ev: Event) => {
      if (submitted) {
        ev.preventDefault();
        return;
      }
      submitted = true;
      const button = form.querySelector("button");
      // Disable on the next tick so this submission still carries the button.
      if (button) setTimeout(() => ((button as HTMLButtonElement).disabled = true), 0);
    });
  }
}
