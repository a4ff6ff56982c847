// Thin typed client for the /v1 endpoints.

import type { ApiError, QueryResponse, SchemaResponse } from "./types.js";

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class QueryFailed extends Error {
  position: number | null;

  constructor(message: string, position: number | null = null) {
    super(message);
    this.position = position;
  }
}

export class ApiClient {
  constructor(
    private base: string,
    private fetchFn: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private url(path: string): string {
    return this.base.replace(/\/$/, "") + path;
  }

  async tables(): Promise<string[]> {
    const resp = await this.fetchFn(this.url("/v1/tables"));
    const body = (await resp.json()) as { tables: string[] };
    return body.tables;
  }

  async schema(table: string): Promise<SchemaResponse> {
    const resp = await this.fetchFn(this.url(`/v1/tables/${encodeURIComponent(table)}/schema`));
    if (!resp.ok) throw new QueryFailed(`schema request failed (${resp.status})`);
    return (await resp.json()) as SchemaResponse;
  }

  async query(sql: string): Promise<QueryResponse> {
    const resp = await this.fetchFn(this.url("/v1/query"), {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ sql }),
    });
    const body = (await resp.json()) as QueryResponse | ApiError;
    if (!resp.ok || "error" in body) {
      const err = body as ApiError;
      throw new QueryFailed(err.error ?? `query failed (${resp.status})`, err.position ?? null);
    }
    return body as QueryResponse;
  }
}
