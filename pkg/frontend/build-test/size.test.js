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

// test/size.test.ts
var import_strict = __toESM(require("node:assert/strict"));
var import_node_fs = __toESM(require("node:fs"));
var import_node_path = __toESM(require("node:path"));
var import_node_test = require("node:test");
var BUNDLE_PATH = import_node_path.default.join(__dirname, "..", "dist", "app.js");
var MAX_BYTES = 10240;
(0, import_node_test.test)(`bundle stays within ${MAX_BYTES} bytes`, () => {
  const size = import_node_fs.default.statSync(BUNDLE_PATH).size;
  console.log(`dist/app.js is ${size} bytes (budget ${MAX_BYTES})`);
  import_strict.default.ok(size <= MAX_BYTES, `bundle is ${size} bytes`);
});
