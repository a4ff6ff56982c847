// App wiring: state lives in the URL fragment, every state revision fires
// one query batch (one group-by per panel), stale batches are discarded.
import { ApiClient, QueryFailed } from "./api.js";
import { renderAll } from "./panels.js";
import { clearRestrictions, initialState, parse, removeRestriction, serialize, toggleValue, } from "./state.js";
import { panelSql } from "./sql.js";
export class App {
    constructor(host) {
        this.host = host;
        this.state = null;
        this.history = [];
        this.revision = 0;
        /** resolves when the current refresh has painted (tests await this) */
        this.idle = Promise.resolve();
        this.api = new ApiClient(host.apiBase, host.fetchFn);
    }
    async start() {
        const fromUrl = parse(this.host.getHash());
        if (fromUrl) {
            this.state = fromUrl;
        }
        else {
            const [table] = await this.api.tables();
            const schema = await this.api.schema(table);
            const dims = schema.fields
                .filter((f) => f.role === "dimension")
                .slice(0, 4)
                .map((f) => f.name);
            this.state = initialState(table, dims.length ? dims : [schema.fields[0].name]);
        }
        this.apply(this.state);
    }
    /** Publish a new state revision: update the URL and re-query every panel. */
    apply(state) {
        this.state = state;
        this.host.setHash(serialize(state));
        const revision = ++this.revision;
        const queries = state.panels.map((p) => ({ field: p.field, sql: panelSql(state, p) }));
        for (const q of queries)
            this.history.push(q.sql);
        this.idle = (async () => {
            const results = await Promise.all(queries.map(async ({ field, sql }) => {
                try {
                    return { field, sql, response: await this.api.query(sql), error: null };
                }
                catch (err) {
                    const msg = err instanceof QueryFailed ? err.message : String(err);
                    return { field, sql, response: null, error: msg };
                }
            }));
            if (revision !== this.revision)
                return; // superseded: discard silently
            this.paint(results);
        })();
    }
    paint(results) {
        if (!this.state)
            return;
        renderAll(this.host.document, this.host.container, this.state, results, {
            onValueClick: (field, value, negated) => this.apply(toggleValue(this.state, field, value, negated)),
            onRemoveRestriction: (r) => this.apply(removeRestriction(this.state, r.field, r.negated)),
            onClearRestrictions: () => this.apply(clearRestrictions(this.state)),
        });
    }
}
export function bootstrap(win) {
    const params = new URLSearchParams(win.location.search);
    const apiBase = params.get("api") ?? win.location.origin;
    const container = win.document.getElementById("app");
    if (!container)
        throw new Error("missing #app container");
    const app = new App({
        document: win.document,
        container,
        apiBase,
        getHash: () => win.location.hash,
        setHash: (hash) => {
            if (win.location.hash.slice(1) !== hash)
                win.location.hash = hash;
        },
    });
    void app.start();
    win.addEventListener("hashchange", () => {
        const next = parse(win.location.hash);
        if (next && app.state && serialize(next) !== serialize(app.state)) {
            app.apply(next);
        }
    });
    return app;
}
if (typeof window !== "undefined" && typeof window.document !== "undefined"
    && window.document.getElementById("app")) {
    window.__explorer = bootstrap(window);
}
