// SQL text generation. The UI never hides query logic: the exact string
// built here is displayed next to each panel and sent to /v1/query.

import type { ExplorationState, Panel, Restriction, Value } from "./state.js";

export function quoteValue(v: Value): string {
  if (typeof v === "number") return String(v);
  return "'" + v.replace(/'/g, "''") + "'";
}

export function restrictionSql(r: Restriction): string {
  const op = r.negated ? "NOT IN" : "IN";
  return `${r.field} ${op} (${r.values.map(quoteValue).join(", ")})`;
}

/** The conjunction of every active restriction, or "" for a full scan. */
export function whereSql(restrictions: Restriction[]): string {
  if (!restrictions.length) return "";
  return restrictions.map(restrictionSql).join(" AND ");
}

export function panelSql(state: ExplorationState, panel: Panel): string {
  let sql = `SELECT ${panel.field}, ${panel.aggregate} AS v FROM ${state.table}`;
  const where = whereSql(state.restrictions);
  if (where) sql += ` WHERE ${where}`;
  sql += ` GROUP BY ${panel.field} ORDER BY v DESC LIMIT ${state.limit}`;
  return sql;
}

export function panelQueries(state: ExplorationState): string[] {
  return state.panels.map((p) => panelSql(state, p));
}
