// Scripted harness over the SHIPPED bundle: dist/app.js runs inside a vm
// sandbox with a stub DOM, recorded fetch, and captured timers, so every
// assertion here is about the artifact the server actually serves.

import assert from "node:assert/strict";
import fs from "node:fs";
import path from "node:path";
import { test } from "node:test";
import vm from "node:vm";

import { StubDocument, StubElement } from "./dom_stub";

const BUNDLE = fs.readFileSync(path.join(__dirname, "..", "dist", "app.js"), "utf8");

interface FetchCall {
  url: string;
  init: unknown;
}

interface Timer {
  fn: () => void;
  delay: number;
}

type FetchImpl = (url: string) => Promise<unknown>;

function jsonResponse(payload: unknown, status = 200) {
  return {
    ok: status >= 200 && status < 300,
    status,
    json: async () => payload,
  };
}

function loadClient(doc: StubDocument, fetchImpl: FetchImpl, random = () => 0.5) {
  const fetchCalls: FetchCall[] = [];
  const timers: Timer[] = [];
  const sandbox = {
    document: doc,
    fetch: (url: string, init: unknown) => {
      fetchCalls.push({ url, init });
      return fetchImpl(url);
    },
    setTimeout: (fn: () => void, delay: number) => {
      timers.push({ fn, delay });
      return timers.length;
    },
    Math: Object.assign(Object.create(Math), { random }),
  };
  vm.createContext(sandbox);
  vm.runInContext(BUNDLE, sandbox);
  return { fetchCalls, timers };
}

async function settle(): Promise<void> {
  for (let i = 0; i < 10; i++) {
    await new Promise((resolve) => setTimeout(resolve, 0));
  }
}

function authedDocument() {
  const doc = new StubDocument();
  const badge = new StubElement("span", {
    id: "unread-badge",
    "data-unread-url": "/api/unread",
  });
  badge.hidden = true;
  doc.add(badge, "unread-badge");
  const relogin = new StubElement("a", { id: "relogin-link", href: "/login" });
  relogin.hidden = true;
  doc.add(relogin, "relogin-link");
  return { doc, badge, relogin };
}

test("badge shows the summed unread and alert counts", async () => {
  const { doc, badge } = authedDocument();
  const harness = loadClient(doc, async () =>
    jsonResponse({ unread: { "plasma-lab": 2, "neutrino-net": 1 }, alerts: 1 })
  );
  await settle();
  assert.equal(harness.fetchCalls.length, 1);
  assert.equal(harness.fetchCalls[0].url, "/api/unread");
  assert.equal(badge.textContent, "4");
  assert.equal(badge.hidden, false);
});

test("zero counts hide the badge entirely", async () => {
  const { doc, badge } = authedDocument();
  loadClient(doc, async () => jsonResponse({ unread: {}, alerts: 0 }));
  await settle();
  assert.equal(badge.textContent, "");
  assert.equal(badge.hidden, true);
});

test("polling repeats on a jittered interval", async () => {
  const { doc } = authedDocument();
  const harness = loadClient(
    doc,
    async () => jsonResponse({ unread: {}, alerts: 0 }),
    () => 0.5
  );
  await settle();
  assert.equal(harness.timers.length, 1);
  assert.equal(harness.timers[0].delay, 60_000); // 60s * (0.9 + 0.5*0.2)
  harness.timers[0].fn();
  await settle();
  assert.equal(harness.fetchCalls.length, 2);
  const last = harness.timers[harness.timers.length - 1].delay;
  assert.ok(last >= 54_000 && last <= 66_000);
});

test("403 halts polling for good and reveals the re-login link", async () => {
  const { doc, relogin } = authedDocument();
  const harness = loadClient(doc, async () => jsonResponse({}, 403));
  await settle();
  assert.equal(harness.fetchCalls.length, 1);
  assert.equal(harness.timers.length, 0); // nothing rescheduled: halted
  assert.equal(relogin.hidden, false);
});

test("network failures back off exponentially to the ten-minute ceiling", async () => {
  const { doc, badge } = authedDocument();
  const harness = loadClient(doc, async () => {
    throw new Error("connection refused");
  });
  await settle();
  const delays = [harness.timers[0].delay];
  for (let i = 0; i < 3; i++) {
    harness.timers[harness.timers.length - 1].fn();
    await settle();
    delays.push(harness.timers[harness.timers.length - 1].delay);
  }
  assert.deepEqual(delays, [120_000, 240_000, 480_000, 600_000]);
  assert.ok(badge.classList.contains("stale")); // three consecutive failures
});

test("badge recovers and clears the stale marker after a success", async () => {
  const { doc, badge } = authedDocument();
  let calls = 0;
  const harness = loadClient(doc, async () => {
    calls += 1;
    if (calls <= 3) throw new Error("down");
    return jsonResponse({ unread: { g: 1 }, alerts: 0 });
  });
  await settle();
  for (let i = 0; i < 3; i++) {
    harness.timers[harness.timers.length - 1].fn();
    await settle();
  }
  assert.equal(badge.classList.contains("stale"), false);
  assert.equal(badge.textContent, "1");
  assert.equal(harness.timers[harness.timers.length - 1].delay, 60_000);
});

test("read receipts decorate from data attributes, no requests", async () => {
  const doc = new StubDocument();
  const read = new StubElement("span", { "data-read-at": "2004-09-01T10:00:00+00:00" });
  read.textContent = "read 2004-09-01 10:00";
  const unread = new StubElement("span", { "data-read-at": "" });
  unread.textContent = "unread";
  const malformed = new StubElement("span", { "data-read-at": "not-a-date" });
  malformed.textContent = "server text";
  const plain = new StubElement("span");
  plain.textContent = "no attribute";
  for (const el of [read, unread, malformed, plain]) doc.add(el);

  const harness = loadClient(doc, async () => jsonResponse({ unread: {}, alerts: 0 }));
  await settle();
  assert.equal(read.textContent, "✓");
  assert.ok((read.getAttribute("title") || "").includes("read"));
  assert.equal(unread.textContent, "○");
  assert.equal(malformed.textContent, "server text"); // left undecorated
  assert.equal(plain.textContent, "no attribute");
  assert.equal(harness.fetchCalls.length, 0); // no badge on this page
});

test("composer counter tracks remaining characters", async () => {
  const doc = new StubDocument();
  const form = new StubElement("form");
  const subject = new StubElement("input", { name: "subject", "data-maxlen": "200" });
  form.appendChild(subject);
  form.appendChild(new StubElement("button"));
  doc.add(form);

  loadClient(doc, async () => jsonResponse({ unread: {}, alerts: 0 }));
  await settle();
  const counter = form.children[form.children.indexOf(subject) + 1];
  assert.equal(counter.tagName, "span");
  assert.equal(counter.textContent, "200");
  subject.value = "x".repeat(195);
  subject.dispatch("input");
  assert.equal(counter.textContent, "5");
});

test("double submit yields exactly one uncancelled POST", async () => {
  const doc = new StubDocument();
  const form = new StubElement("form", { method: "post", action: "/messages/new" });
  const button = new StubElement("button");
  form.appendChild(button);
  doc.add(form);

  const harness = loadClient(doc, async () => jsonResponse({ unread: {}, alerts: 0 }));
  await settle();
  const first = form.dispatch("submit");
  const second = form.dispatch("submit");
  const third = form.dispatch("submit");
  const posted = [first, second, third].filter((ev) => !ev.defaultPrevented);
  assert.equal(posted.length, 1);
  for (const t of harness.timers) t.fn(); // the deferred button disable
  assert.equal(button.disabled, true);
});

test("script stays inert without the enhancement hooks", async () => {
  const doc = new StubDocument();
  doc.add(new StubElement("p"));
  const before = doc.snapshot();
  const harness = loadClient(doc, async () => jsonResponse({ unread: {}, alerts: 0 }));
  await settle();
  assert.equal(harness.fetchCalls.length, 0);
  assert.equal(harness.timers.length, 0);
  assert.equal(doc.createdCount, 0);
  assert.equal(doc.snapshot(), before);
});
