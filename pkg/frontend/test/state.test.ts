import assert from "node:assert/strict";
import { test } from "node:test";

import {
  ExplorationState,
  clearRestrictions,
  initialState,
  parse,
  removeRestriction,
  serialize,
  toggleValue,
} from "../src/state.js";

function demoState(): ExplorationState {
  let s = initialState("data", ["country", "table_name"], 10);
  s = toggleValue(s, "country", "fr", false);
  s = toggleValue(s, "country", "de", false);
  s = toggleValue(s, "table_name", "logs_x", true);
  s = toggleValue(s, "latency", 500, false);
  return s;
}

test("clicking accumulates values per field", () => {
  const s = demoState();
  assert.deepEqual(s.restrictions, [
    { field: "country", values: ["fr", "de"], negated: false },
    { field: "table_name", values: ["logs_x"], negated: true },
    { field: "latency", values: [500], negated: false },
  ]);
});

test("clicking a selected value again removes it", () => {
  let s = demoState();
  s = toggleValue(s, "country", "fr", false);
  assert.deepEqual(
    s.restrictions.find((r) => r.field === "country")?.values,
    ["de"],
  );
  s = toggleValue(s, "country", "de", false);
  assert.equal(s.restrictions.some((r) => r.field === "country"), false);
});

test("negated and plain sets for one field are independent", () => {
  let s = initialState("data", ["country"]);
  s = toggleValue(s, "country", "fr", false);
  s = toggleValue(s, "country", "us", true);
  assert.equal(s.restrictions.length, 2);
  s = removeRestriction(s, "country", true);
  assert.deepEqual(s.restrictions, [
    { field: "country", values: ["fr"], negated: false },
  ]);
});

test("toggleValue never mutates the previous state", () => {
  const before = demoState();
  const snapshot = JSON.stringify(before);
  toggleValue(before, "country", "jp", false);
  toggleValue(before, "country", "fr", false);
  assert.equal(JSON.stringify(before), snapshot);
});

test("clearRestrictions returns to the full scan state", () => {
  const s = clearRestrictions(demoState());
  assert.deepEqual(s.restrictions, []);
});

test("url roundtrip is a fixed point", () => {
  const s = demoState();
  const once = serialize(s);
  const back = parse("#" + once);
  assert.ok(back);
  assert.equal(serialize(back!), once);
  assert.deepEqual(back, s);
});

test("url roundtrip survives awkward characters", () => {
  let s = initialState("data", ["name"], 7);
  s = toggleValue(s, "name", "it's & #1; 100%|,:\"", false);
  s = toggleValue(s, "name", "日本", true);
  const frag = serialize(s);
  const back = parse(frag)!;
  assert.deepEqual(back, s);
  assert.equal(serialize(back), frag);
});

test("numbers keep their type through the url", () => {
  let s = initialState("data", ["latency"]);
  s = toggleValue(s, "latency", 42, false);
  const back = parse(serialize(s))!;
  assert.strictEqual(back.restrictions[0].values[0], 42);
});

test("parse rejects fragments without a table", () => {
  assert.equal(parse(""), null);
  assert.equal(parse("#k=10"), null);
});
