// Budget discipline extends to the enhancement script itself.

import assert from "node:assert/strict";
import fs from "node:fs";
import path from "node:path";
import { test } from "node:test";

const BUNDLE_PATH = path.join(__dirname, "..", "dist", "app.js");
const MAX_BYTES = 10_240;

test(`bundle stays within ${MAX_BYTES} bytes`, () => {
  const size = fs.statSync(BUNDLE_PATH).size;
  console.log(`dist/app.js is ${size} bytes (budget ${MAX_BYTES})`);
  assert.ok(size <= MAX_BYTES, `bundle is ${size} bytes`);
});
