// Full-stack integration: spawn the real query service on a freshly
// imported store, mount the compiled app under jsdom with real fetch,
// click a dimension value, and check SQL, stats and URL state end to end.
// Skips when the backend CLI is not on PATH.
import assert from "node:assert/strict";
import { spawn, spawnSync } from "node:child_process";
import { mkdtempSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { test } from "node:test";
import { JSDOM } from "jsdom";
import { App } from "../src/main.js";
import { parse, serialize } from "../src/state.js";
const PORT = 8461;
const BASE = `http://127.0.0.1:${PORT}`;
const CSV = [
    "country,table_name,latency",
    ...["de", "de", "fr", "fr", "us", "us"].flatMap((c, i) => [
        `${c},logs_alpha,${(i + 1) * 10}`,
        `${c},logs_beta,${(i + 1) * 11}`,
    ]),
].join("\n") + "\n";
function backendAvailable() {
    return spawnSync("skipstore", ["--help"], { stdio: "ignore" }).status === 0;
}
async function waitForHealthz(deadlineMs) {
    const until = Date.now() + deadlineMs;
    while (Date.now() < until) {
        try {
            const resp = await fetch(`${BASE}/v1/healthz`);
            if (resp.ok)
                return true;
        }
        catch {
            await new Promise((r) => setTimeout(r, 250));
        }
    }
    return false;
}
test("live drill-down against the real service", { timeout: 60000 }, async (t) => {
    if (!backendAvailable()) {
        t.skip("skipstore CLI not on PATH");
        return;
    }
    const dir = mkdtempSync(join(tmpdir(), "ui-live-"));
    writeFileSync(join(dir, "data.csv"), CSV);
    const imported = spawnSync("skipstore", [
        "import", "--input", join(dir, "data.csv"), "--out", join(dir, "store"),
        "--partition-fields", "country,table_name", "--max-chunk-rows", "4",
    ]);
    assert.equal(imported.status, 0, String(imported.stderr));
    const server = spawn("skipstore", [
        "serve", "--store", join(dir, "store"), "--listen", `127.0.0.1:${PORT}`,
    ], { stdio: "ignore" });
    t.after(() => server.kill());
    assert.ok(await waitForHealthz(20000), "service did not come up");
    const dom = new JSDOM('<div id="app"></div>', { url: "http://ui.local/" });
    const doc = dom.window.document;
    const issued = [];
    let hash = "";
    const app = new App({
        document: doc,
        container: doc.getElementById("app"),
        fetchFn: async (input, init) => {
            if (init?.body)
                issued.push(JSON.parse(String(init.body)).sql);
            return fetch(input, init);
        },
        apiBase: BASE,
        getHash: () => hash,
        setHash: (h) => {
            hash = h;
        },
    });
    await app.start();
    await app.idle;
    // panels came from the real schema's dimension fields
    const panelFields = app.state?.panels.map((p) => p.field) ?? [];
    assert.ok(panelFields.includes("country") && panelFields.includes("table_name"), panelFields.join(","));
    const frCell = [...doc.querySelectorAll(".cell-value")].find((n) => n.textContent === "fr");
    assert.ok(frCell, "country panel should list 'fr'");
    issued.length = 0;
    frCell.click();
    await app.idle;
    for (const sql of issued) {
        assert.ok(sql.includes("WHERE country IN ('fr')"), sql);
    }
    const shown = [...doc.querySelectorAll(".panel-sql")].map((n) => n.textContent);
    assert.deepEqual(shown, issued);
    // the stats strip agrees with a direct /v1/query call for the same SQL
    const direct = await (await fetch(`${BASE}/v1/query`, {
        method: "POST",
        headers: { "content-type": "application/json" },
        body: JSON.stringify({ sql: issued[0] }),
    })).json();
    assert.ok(direct.stats.skipped_fraction > 0, "a one-country filter must skip chunks");
    const strip = doc.querySelector(".stats-text")?.textContent ?? "";
    const skippedShown = Number(/skipped (\d+\.\d)%/.exec(strip)?.[1]);
    assert.ok(Math.abs(skippedShown - direct.stats.skipped_fraction * 100) < 0.1, strip);
    // shareable view: the hash rehydrates to the same state
    const restored = parse(hash);
    assert.equal(serialize(restored), hash);
    assert.deepEqual(restored.restrictions, app.state?.restrictions);
});
