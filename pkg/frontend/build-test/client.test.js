"use strict";
var __create = Object.create;
var __defProp = Object.defineProperty;
var __getOwnPropDesc = Object.getOwnPropertyDescriptor;
var __getOwnPropNames = Object.getOwnPropertyNames;
var __getProtoOf = Object.getPrototypeOf;
var __hasOwnProp = Object.prototype.hasOwnProperty;
var __copyProps = (to, from, except, desc) => {
  if (from && typeof from === "object" || typeof from === "function") {
    for (let key of __getOwnPropNames(from))
      if (!__hasOwnProp.call(to, key) && key !== except)
        __defProp(to, key, { get: () => from[key], enumerable: !(desc = __getOwnPropDesc(from, key)) || desc.enumerable });
  }
  return to;
};
var __toESM = (mod, isNodeMode, target) => (target = mod != null ? __create(__getProtoOf(mod)) : {}, __copyProps(
  // If the importer is in node compatibility mode or this is not an ESM
  // file that has been converted to a CommonJS file using a Babel-
  // compatible transform (i.e. "__esModule" has not been set), then set
  // "default" to the CommonJS "module.exports" for node compatibility.
  isNodeMode || !mod || !mod.__esModule ? __defProp(target, "default", { value: mod, enumerable: true }) : target,
  mod
));

// test/client.test.ts
var import_strict = __toESM(require("node:assert/strict"));
var import_node_fs = __toESM(require("node:fs"));
var import_node_path = __toESM(require("node:path"));
var import_node_test = require("node:test");
var import_node_vm = __toESM(require("node:vm"));

// test/dom_stub.ts
var StubEvent = class {
  constructor(type) {
    this.defaultPrevented = false;
    this.type = type;
  }
  preventDefault() {
    this.defaultPrevented = true;
  }
};
var StubElement = class {
  constructor(tagName, attrs) {
    this.parent = null;
    this.children = [];
    this.textContent = "";
    this.value = "";
    this.hidden = false;
    this.disabled = false;
    this.className = "";
    this.attrs = /* @__PURE__ */ new Map();
    this.listeners = /* @__PURE__ */ new Map();
    this.classes = /* @__PURE__ */ new Set();
    this.classList = {
      add: (name) => void this.classes.add(name),
      remove: (name) => void this.classes.delete(name),
      contains: (name) => this.classes.has(name)
    };
    this.tagName = tagName.toLowerCase();
    for (const [k, v] of Object.entries(attrs || {})) {
      this.attrs.set(k, v);
    }
  }
  getAttribute(name) {
    return this.attrs.has(name) ? this.attrs.get(name) : null;
  }
  setAttribute(name, value) {
    this.attrs.set(name, value);
  }
  addEventListener(type, fn) {
    const list = this.listeners.get(type) || [];
    list.push(fn);
    this.listeners.set(type, list);
  }
  dispatch(type) {
    const ev = new StubEvent(type);
    for (const fn of this.listeners.get(type) || []) {
      fn(ev);
    }
    return ev;
  }
  appendChild(el) {
    el.parent = this;
    this.children.push(el);
    return el;
  }
  insertAdjacentElement(position, el) {
    if (position !== "afterend" || !this.parent) return null;
    el.parent = this.parent;
    const index = this.parent.children.indexOf(this);
    this.parent.children.splice(index + 1, 0, el);
    return el;
  }
  matches(selector) {
    return selector.split(",").some((part) => {
      const m = part.trim().match(/^([a-z]*)(?:\[([a-z-]+)\])?$/);
      if (!m) return false;
      const [, tag, attr] = m;
      if (tag && this.tagName !== tag) return false;
      if (attr && !this.attrs.has(attr)) return false;
      return true;
    });
  }
  walk(out) {
    for (const child of this.children) {
      out.push(child);
      child.walk(out);
    }
  }
  querySelector(selector) {
    const all = [];
    this.walk(all);
    return all.find((el) => el.matches(selector)) || null;
  }
};
var StubDocument = class {
  constructor() {
    this.readyState = "complete";
    this.body = new StubElement("body");
    this.createdCount = 0;
    this.byId = /* @__PURE__ */ new Map();
  }
  add(el, id) {
    this.body.appendChild(el);
    if (id) this.byId.set(id, el);
    return el;
  }
  getElementById(id) {
    return this.byId.get(id) || null;
  }
  querySelectorAll(selector) {
    const all = [];
    this.body.walk(all);
    return all.filter((el) => el.matches(selector));
  }
  createElement(tag) {
    this.createdCount += 1;
    return new StubElement(tag);
  }
  addEventListener() {
  }
  snapshot() {
    const all = [];
    this.body.walk(all);
    return JSON.stringify(
      all.map((el) => [el.tagName, el.textContent, el.hidden, el.className])
    );
  }
};

// test/client.test.ts
var BUNDLE = import_node_fs.default.readFileSync(import_node_path.default.join(__dirname, "..", "dist", "app.js"), "utf8");
function jsonResponse(payload, status = 200) {
  return {
    ok: status >= 200 && status < 300,
    status,
    json: async () => payload
  };
}
function loadClient(doc, fetchImpl, random = () => 0.5) {
  const fetchCalls = [];
  const timers = [];
  const sandbox = {
    document: doc,
    fetch: (url, init) => {
      fetchCalls.push({ url, init });
      return fetchImpl(url);
    },
    setTimeout: (fn, delay) => {
      timers.push({ fn, delay });
      return timers.length;
    },
    Math: Object.assign(Object.create(Math), { random })
  };
  import_node_vm.default.createContext(sandbox);
  import_node_vm.default.runInContext(BUNDLE, sandbox);
  return { fetchCalls, timers };
}
async function settle() {
  for (let i = 0; i < 10; i++) {
    await new Promise((resolve) => setTimeout(resolve, 0));
  }
}
function authedDocument() {
  const doc = new StubDocument();
  const badge = new StubElement("span", {
    id: "unread-badge",
    "data-unread-url": "/api/unread"
  });
  badge.hidden = true;
  doc.add(badge, "unread-badge");
  const relogin = new StubElement("a", { id: "relogin-link", href: "/login" });
  relogin.hidden = true;
  doc.add(relogin, "relogin-link");
  return { doc, badge, relogin };
}
(0, import_node_test.test)("badge shows the summed unread and alert counts", async () => {
  const { doc, badge } = authedDocument();
  const harness = loadClient(
    doc,
    async () => jsonResponse({ unread: { "plasma-lab": 2, "neutrino-net": 1 }, alerts: 1 })
  );
  await settle();
  import_strict.default.equal(harness.fetchCalls.length, 1);
  import_strict.default.equal(harness.fetchCalls[0].url, "/api/unread");
  import_strict.default.equal(badge.textContent, "4");
  import_strict.default.equal(badge.hidden, false);
});
(0, import_node_test.test)("zero counts hide the badge entirely", async () => {
  const { doc, badge } = authedDocument();
  loadClient(doc, async () => jsonResponse({ unread: {}, alerts: 0 }));
  await settle();
  import_strict.default.equal(badge.textContent, "");
  import_strict.default.equal(badge.hidden, true);
});
(0, import_node_test.test)("polling repeats on a jittered interval", async () => {
  const { doc } = authedDocument();
  const harness = loadClient(
    doc,
    async () => jsonResponse({ unread: {}, alerts: 0 }),
    () => 0.5
  );
  await settle();
  import_strict.default.equal(harness.timers.length, 1);
  import_strict.default.equal(harness.timers[0].delay, 6e4);
  harness.timers[0].fn();
  await settle();
  import_strict.default.equal(harness.fetchCalls.length, 2);
  const last = harness.timers[harness.timers.length - 1].delay;
  import_strict.default.ok(last >= 54e3 && last <= 66e3);
});
(0, import_node_test.test)("403 halts polling for good and reveals the re-login link", async () => {
  const { doc, relogin } = authedDocument();
  const harness = loadClient(doc, async () => jsonResponse({}, 403));
  await settle();
  import_strict.default.equal(harness.fetchCalls.length, 1);
  import_strict.default.equal(harness.timers.length, 0);
  import_strict.default.equal(relogin.hidden, false);
});
(0, import_node_test.test)("network failures back off exponentially to the ten-minute ceiling", async () => {
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
  import_strict.default.deepEqual(delays, [12e4, 24e4, 48e4, 6e5]);
  import_strict.default.ok(badge.classList.contains("stale"));
});
(0, import_node_test.test)("badge recovers and clears the stale marker after a success", async () => {
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
  import_strict.default.equal(badge.classList.contains("stale"), false);
  import_strict.default.equal(badge.textContent, "1");
  import_strict.default.equal(harness.timers[harness.timers.length - 1].delay, 6e4);
});
(0, import_node_test.test)("read receipts decorate from data attributes, no requests", async () => {
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
  import_strict.default.equal(read.textContent, "\u2713");
  import_strict.default.ok((read.getAttribute("title") || "").includes("read"));
  import_strict.default.equal(unread.textContent, "\u25CB");
  import_strict.default.equal(malformed.textContent, "server text");
  import_strict.default.equal(plain.textContent, "no attribute");
  import_strict.default.equal(harness.fetchCalls.length, 0);
});
(0, import_node_test.test)("composer counter tracks remaining characters", async () => {
  const doc = new StubDocument();
  const form = new StubElement("form");
  const subject = new StubElement("input", { name: "subject", "data-maxlen": "200" });
  form.appendChild(subject);
  form.appendChild(new StubElement("button"));
  doc.add(form);
  loadClient(doc, async () => jsonResponse({ unread: {}, alerts: 0 }));
  await settle();
  const counter = form.children[form.children.indexOf(subject) + 1];
  import_strict.default.equal(counter.tagName, "span");
  import_strict.default.equal(counter.textContent, "200");
  subject.value = "x".repeat(195);
  subject.dispatch("input");
  import_strict.default.equal(counter.textContent, "5");
});
(0, import_node_test.test)("double submit yields exactly one uncancelled POST", async () => {
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
  import_strict.default.equal(posted.length, 1);
  for (const t of harness.timers) t.fn();
  import_strict.default.equal(button.disabled, true);
});
(0, import_node_test.test)("script stays inert without the enhancement hooks", async () => {
  const doc = new StubDocument();
  doc.add(new StubElement("p"));
  const before = doc.snapshot();
  const harness = loadClient(doc, async () => jsonResponse({ unread: {}, alerts: 0 }));
  await settle();
  import_strict.default.equal(harness.fetchCalls.length, 0);
  import_strict.default.equal(harness.timers.length, 0);
  import_strict.default.equal(doc.createdCount, 0);
  import_strict.default.equal(doc.snapshot(), before);
});
