import assert from "node:assert/strict";
import { test } from "node:test";
import * as path from "path";

import { getColumn, hasColumn, readTraceCsv, MODE_MACRO } from "../src/csv";
import { makeRunDir } from "./fixture";

test("reads trace csv with modes and columns", () => {
    const { dir } = makeRunDir();
    const tr = readTraceCsv(path.join(dir, "hmm.csv"));
    assert.equal(tr.times.length, 201);
    assert.equal(tr.times[0], 0);
    assert.ok(Math.abs(tr.times[200] - 2.0) < 1e-12);
    assert.equal(tr.modes[0], MODE_MACRO);
    assert.equal(tr.modes[1], 0);
    assert.ok(tr.columns.has("x_D"));
    assert.ok(tr.columns.has("y"));
});

test("envelope column derived from D/Q pair", () => {
    const { dir } = makeRunDir();
    const tr = readTraceCsv(path.join(dir, "baseline.csv"));
    assert.ok(hasColumn(tr, "env(x)"));
    const env = getColumn(tr, "env(x)");
    for (let i = 0; i < env.length; i += 37) {
        assert.ok(Math.abs(env[i] - 1.0) < 1e-12); // hypot(cos, sin) = 1
    }
});

test("missing variable raises a named error", () => {
    const { dir } = makeRunDir();
    const tr = readTraceCsv(path.join(dir, "baseline.csv"));
    assert.throws(() => getColumn(tr, "nope"), /nope/);
});

test("rejects a non-trace csv", () => {
    const { dir } = makeRunDir();
    const fs = require("fs");
    const bad = path.join(dir, "bad.csv");
    fs.writeFileSync(bad, "a,b,c\n1,2,3\n");
    assert.throws(() => readTraceCsv(bad), /not a trace CSV/);
});
