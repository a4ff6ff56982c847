// DOM rendering: restriction chips, the stats strip, and one panel per
// group-by dimension with top-k rows, bars, and the verbatim SQL.

import { barWidth, combineStats, displayCell, pct, statsStrip } from "./format.js";
import type { ExplorationState, Restriction, Value } from "./state.js";
import type { QueryResponse, QueryStats } from "./types.js";

export interface PanelResult {
  field: string;
  sql: string;
  response: QueryResponse | null;
  error: string | null;
}

export interface Callbacks {
  onValueClick(field: string, value: Value, negated: boolean): void;
  onRemoveRestriction(restriction: Restriction): void;
  onClearRestrictions(): void;
}

function el<K extends keyof HTMLElementTagNameMap>(
  doc: Document,
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = doc.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

function renderChips(
  doc: Document,
  state: ExplorationState,
  callbacks: Callbacks,
): HTMLElement {
  const bar = el(doc, "div", "chips");
  if (!state.restrictions.length) {
    bar.appendChild(el(doc, "span", "chips-empty", "no restrictions — full scan"));
    return bar;
  }
  for (const r of state.restrictions) {
    const chip = el(doc, "span", "chip" + (r.negated ? " chip-negated" : ""));
    const op = r.negated ? "NOT IN" : "IN";
    chip.appendChild(el(doc, "span", "chip-label", `${r.field} ${op} {${r.values.join(", ")}}`));
    const remove = el(doc, "button", "chip-remove", "×");
    remove.onclick = () => callbacks.onRemoveRestriction(r);
    chip.appendChild(remove);
    bar.appendChild(chip);
  }
  const clear = el(doc, "button", "chips-clear", "clear all");
  clear.onclick = () => callbacks.onClearRestrictions();
  bar.appendChild(clear);
  return bar;
}

function renderStats(doc: Document, stats: QueryStats | null): HTMLElement {
  const strip = el(doc, "div", "stats-strip");
  if (!stats) {
    strip.textContent = "";
    return strip;
  }
  strip.appendChild(el(doc, "span", "stats-text", statsStrip(stats)));
  const meter = el(doc, "span", "stats-meter");
  for (const [cls, fraction] of [
    ["skipped", stats.skipped_fraction],
    ["cached", stats.cached_fraction],
    ["scanned", stats.scanned_fraction],
  ] as const) {
    const seg = el(doc, "span", `meter-${cls}`);
    seg.style.width = pct(fraction);
    seg.title = `${cls} ${pct(fraction)}`;
    meter.appendChild(seg);
  }
  strip.appendChild(meter);
  return strip;
}

function renderPanel(
  doc: Document,
  result: PanelResult,
  callbacks: Callbacks,
): HTMLElement {
  const panel = el(doc, "section", "panel");
  panel.dataset.field = result.field;
  panel.appendChild(el(doc, "h3", "panel-title", result.field));

  if (result.error !== null) {
    panel.appendChild(el(doc, "div", "panel-error", result.error));
  } else if (result.response) {
    const rows = result.response.rows;
    const max = rows.reduce((m, r) => Math.max(m, Number(r[1] ?? 0)), 0);
    const table = el(doc, "table", "panel-table");
    for (const row of rows) {
      const tr = el(doc, "tr", "panel-row");
      const value = row[0];
      const metric = Number(row[1] ?? 0);
      const valueCell = el(doc, "td", "cell-value", displayCell(value));
      valueCell.onclick = (ev: MouseEvent) =>
        callbacks.onValueClick(
          result.field,
          (value ?? "") as Value,
          ev.altKey || ev.ctrlKey || ev.metaKey,
        );
      tr.appendChild(valueCell);
      tr.appendChild(el(doc, "td", "cell-metric", displayCell(metric)));
      const barCell = el(doc, "td", "cell-bar");
      const bar = el(doc, "div", "bar");
      bar.style.width = `${barWidth(metric, max)}%`;
      barCell.appendChild(bar);
      tr.appendChild(barCell);
      table.appendChild(tr);
    }
    panel.appendChild(table);
  }

  const sql = el(doc, "code", "panel-sql", result.sql);
  panel.appendChild(sql);
  return panel;
}

export function renderAll(
  doc: Document,
  container: HTMLElement,
  state: ExplorationState,
  results: PanelResult[],
  callbacks: Callbacks,
): void {
  container.replaceChildren();
  container.appendChild(renderChips(doc, state, callbacks));
  const statsList = results
    .map((r) => r.response?.stats)
    .filter((s): s is QueryStats => !!s);
  container.appendChild(renderStats(doc, statsList.length ? combineStats(statsList) : null));
  const grid = el(doc, "div", "panel-grid");
  for (const result of results) {
    grid.appendChild(renderPanel(doc, result, callbacks));
  }
  container.appendChild(grid);
}
