// App wiring: state lives in the URL fragment, every state revision fires
// one query batch (one group-by per panel), stale batches are discarded.

import { ApiClient, FetchLike, QueryFailed } from "./api.js";
import { PanelResult, renderAll } from "./panels.js";
import {
  ExplorationState,
  Restriction,
  Value,
  clearRestrictions,
  initialState,
  parse,
  removeRestriction,
  serialize,
  toggleValue,
} from "./state.js";
import { panelSql } from "./sql.js";

export interface AppHost {
  document: Document;
  container: HTMLElement;
  fetchFn?: FetchLike;
  apiBase: string;
  getHash(): string;
  setHash(hash: string): void;
}

export class App {
  state: ExplorationState | null = null;
  history: string[] = [];
  private revision = 0;
  private api: ApiClient;
  /** resolves when the current refresh has painted (tests await this) */
  idle: Promise<void> = Promise.resolve();

  constructor(private host: AppHost) {
    this.api = new ApiClient(host.apiBase, host.fetchFn);
  }

  async start(): Promise<void> {
    const fromUrl = parse(this.host.getHash());
    if (fromUrl) {
      this.state = fromUrl;
    } else {
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
  apply(state: ExplorationState): void {
    this.state = state;
    this.host.setHash(serialize(state));
    const revision = ++this.revision;
    const queries = state.panels.map((p) => ({ field: p.field, sql: panelSql(state, p) }));
    for (const q of queries) this.history.push(q.sql);

    this.idle = (async () => {
      const results: PanelResult[] = await Promise.all(
        queries.map(async ({ field, sql }) => {
          try {
            return { field, sql, response: await this.api.query(sql), error: null };
          } catch (err) {
            const msg = err instanceof QueryFailed ? err.message : String(err);
            return { field, sql, response: null, error: msg };
          }
        }),
      );
      if (revision !== this.revision) return; // superseded: discard silently
      this.paint(results);
    })();
  }

  private paint(results: PanelResult[]): void {
    if (!this.state) return;
    renderAll(this.host.document, this.host.container, this.state, results, {
      onValueClick: (field: string, value: Value, negated: boolean) =>
        this.apply(toggleValue(this.state!, field, value, negated)),
      onRemoveRestriction: (r: Restriction) =>
        this.apply(removeRestriction(this.state!, r.field, r.negated)),
      onClearRestrictions: () => this.apply(clearRestrictions(this.state!)),
    });
  }
}

export function bootstrap(win: Window): App {
  const params = new URLSearchParams(win.location.search);
  const apiBase = params.get("api") ?? win.location.origin;
  const container = win.document.getElementById("app");
  if (!container) throw new Error("missing #app container");
  const app = new App({
    document: win.document,
    container,
    apiBase,
    getHash: () => win.location.hash,
    setHash: (hash) => {
      if (win.location.hash.slice(1) !== hash) win.location.hash = hash;
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

declare global {
  interface Window {
    __explorer?: App;
  }
}

if (typeof window !== "undefined" && typeof window.document !== "undefined"
    && window.document.getElementById("app")) {
  window.__explorer = bootstrap(window);
}
