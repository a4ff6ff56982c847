// Presentation helpers kept pure so they are testable without a DOM.
export function pct(fraction) {
    return (fraction * 100).toFixed(1) + "%";
}
/** "skipped 92.4% · cached 5.0% · scanned 2.7%" — sums to 100% ± rounding. */
export function statsStrip(stats) {
    return (`skipped ${pct(stats.skipped_fraction)}` +
        ` · cached ${pct(stats.cached_fraction)}` +
        ` · scanned ${pct(stats.scanned_fraction)}`);
}
export function combineStats(all) {
    const sum = (f) => all.reduce((a, s) => a + f(s), 0);
    const rows = sum((s) => s.rows_skipped) + sum((s) => s.rows_cached) + sum((s) => s.rows_scanned);
    return {
        chunks_skipped: sum((s) => s.chunks_skipped),
        chunks_cached: sum((s) => s.chunks_cached),
        chunks_scanned: sum((s) => s.chunks_scanned),
        rows_skipped: sum((s) => s.rows_skipped),
        rows_cached: sum((s) => s.rows_cached),
        rows_scanned: sum((s) => s.rows_scanned),
        skipped_fraction: rows ? sum((s) => s.rows_skipped) / rows : 0,
        cached_fraction: rows ? sum((s) => s.rows_cached) / rows : 0,
        scanned_fraction: rows ? sum((s) => s.rows_scanned) / rows : 0,
        elapsed_ms: sum((s) => s.elapsed_ms),
        kmv_seed: all.length ? all[0].kmv_seed : 0,
    };
}
export function barWidth(value, max) {
    if (max <= 0 || value <= 0)
        return 0;
    return Math.max(2, Math.round((value / max) * 100));
}
export function displayCell(v) {
    if (v === null)
        return "∅";
    if (typeof v === "number" && !Number.isInteger(v))
        return v.toFixed(3);
    return String(v);
}
