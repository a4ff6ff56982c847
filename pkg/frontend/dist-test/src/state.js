// Exploration state: the selected table, the conjunction of IN / NOT IN
// restrictions the user has clicked together, and the visible panels.
// The whole state serializes into the URL fragment so views are shareable;
// serialize(parse(serialize(s))) === serialize(s).
export function initialState(table, panelFields, limit = 10) {
    return {
        table,
        restrictions: [],
        panels: panelFields.map((field) => ({ field, aggregate: "COUNT(*)" })),
        limit,
    };
}
function findRestriction(state, field, negated) {
    return state.restrictions.find((r) => r.field === field && r.negated === negated);
}
/** Click on a value: toggle it inside the field's IN (or NOT IN) set. */
export function toggleValue(state, field, value, negated) {
    const restrictions = state.restrictions.map((r) => ({ ...r, values: [...r.values] }));
    const next = { ...state, restrictions };
    const existing = findRestriction(next, field, negated);
    if (!existing) {
        restrictions.push({ field, values: [value], negated });
        return next;
    }
    const at = existing.values.findIndex((v) => v === value);
    if (at < 0) {
        existing.values.push(value);
    }
    else {
        existing.values.splice(at, 1);
        if (existing.values.length === 0) {
            next.restrictions = restrictions.filter((r) => r !== existing);
        }
    }
    return next;
}
export function removeRestriction(state, field, negated) {
    return {
        ...state,
        restrictions: state.restrictions.filter((r) => !(r.field === field && r.negated === negated)),
    };
}
export function clearRestrictions(state) {
    return { ...state, restrictions: [] };
}
// ---------------------------------------------------------- URL fragment
// #t=data&k=10&p=country:COUNT(*);name:COUNT(*)&r=country:in:"fr","de";name:nin:"x"
// every variable-text component is URI-encoded, values are JSON scalars
const enc = encodeURIComponent;
const dec = decodeURIComponent;
export function serialize(state) {
    const parts = [`t=${enc(state.table)}`, `k=${state.limit}`];
    if (state.panels.length) {
        parts.push("p=" + state.panels.map((p) => `${enc(p.field)}:${enc(p.aggregate)}`).join(";"));
    }
    if (state.restrictions.length) {
        parts.push("r=" +
            state.restrictions
                .map((r) => {
                const vals = r.values.map((v) => enc(JSON.stringify(v))).join(",");
                return `${enc(r.field)}:${r.negated ? "nin" : "in"}:${vals}`;
            })
                .join(";"));
    }
    return parts.join("&");
}
export function parse(fragment) {
    const text = fragment.startsWith("#") ? fragment.slice(1) : fragment;
    if (!text)
        return null;
    const fields = new Map();
    for (const part of text.split("&")) {
        const eq = part.indexOf("=");
        if (eq > 0)
            fields.set(part.slice(0, eq), part.slice(eq + 1));
    }
    const table = fields.get("t");
    if (!table)
        return null;
    const state = {
        table: dec(table),
        limit: Number(fields.get("k") ?? "10") || 10,
        panels: [],
        restrictions: [],
    };
    const panels = fields.get("p");
    if (panels) {
        for (const item of panels.split(";")) {
            const [field, aggregate] = item.split(":");
            if (field && aggregate)
                state.panels.push({ field: dec(field), aggregate: dec(aggregate) });
        }
    }
    const restrictions = fields.get("r");
    if (restrictions) {
        for (const item of restrictions.split(";")) {
            const [field, mode, vals] = item.split(":");
            if (!field || !vals || (mode !== "in" && mode !== "nin"))
                continue;
            const values = [];
            for (const v of vals.split(",")) {
                try {
                    values.push(JSON.parse(dec(v)));
                }
                catch {
                    // skip unparseable fragments rather than failing the whole view
                }
            }
            if (values.length) {
                state.restrictions.push({ field: dec(field), values, negated: mode === "nin" });
            }
        }
    }
    return state;
}
