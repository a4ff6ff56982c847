// Thin typed client for the /v1 endpoints.
export class QueryFailed extends Error {
    constructor(message, position = null) {
        super(message);
        this.position = position;
    }
}
export class ApiClient {
    constructor(base, fetchFn = (input, init) => fetch(input, init)) {
        this.base = base;
        this.fetchFn = fetchFn;
    }
    url(path) {
        return this.base.replace(/\/$/, "") + path;
    }
    async tables() {
        const resp = await this.fetchFn(this.url("/v1/tables"));
        const body = (await resp.json());
        return body.tables;
    }
    async schema(table) {
        const resp = await this.fetchFn(this.url(`/v1/tables/${encodeURIComponent(table)}/schema`));
        if (!resp.ok)
            throw new QueryFailed(`schema request failed (${resp.status})`);
        return (await resp.json());
    }
    async query(sql) {
        const resp = await this.fetchFn(this.url("/v1/query"), {
            method: "POST",
            headers: { "content-type": "application/json" },
            body: JSON.stringify({ sql }),
        });
        const body = (await resp.json());
        if (!resp.ok || "error" in body) {
            const err = body;
            throw new QueryFailed(err.error ?? `query failed (${resp.status})`, err.position ?? null);
        }
        return body;
    }
}
