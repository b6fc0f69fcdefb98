/** Interactive pivot grid: hierarchy path columns, value cells, totals.
 *
 * Every number rendered comes verbatim from a PivotResultDoc; the grid does
 * no arithmetic. Clicking a non-leaf member cell asks the service to drill
 * into it; leaf cells are inert and marked as such.
 */

import type { HeaderDoc, PivotResultDoc, SchemaDoc } from "./types.js";

export interface GridHandlers {
    onDrill(dimension: string, member: string): void;
}

const NO_DATA = "no data";

export function formatValue(value: number | null): string {
    return value === null ? NO_DATA : String(value);
}

function leafLevelOf(schema: SchemaDoc, dimension: string): string {
    const dim = schema.schema.dimensions.find((d) => d.name === dimension);
    if (!dim) {
        return "";
    }
    return dim.levels[dim.levels.length - 1].name;
}

function columnCaption(col: HeaderDoc, measure: string, measures: string[]): string {
    let caption: string;
    if (col.kind === "grand_total") {
        caption = "Grand Total";
    } else if (col.kind === "subtotal") {
        caption = [...col.path, "Total"].join(" / ");
    } else {
        caption = col.path.join(" / ");
    }
    if (!caption) {
        return measure;
    }
    return measures.length > 1 ? `${caption} ${measure}` : caption;
}

export function renderPivot(
    container: HTMLElement,
    result: PivotResultDoc,
    schema: SchemaDoc,
    handlers: GridHandlers,
): void {
    container.textContent = "";
    const table = document.createElement("table");
    table.className = "pivot-grid";

    const head = table.createTHead().insertRow();
    const pathWidth = Math.max(1, result.row_levels.length);
    const labels = result.row_levels.length ? result.row_levels.map(([, level]) => level) : [""];
    for (const label of labels) {
        const th = document.createElement("th");
        th.textContent = label;
        head.appendChild(th);
    }
    for (const col of result.cols) {
        for (const measure of result.measures) {
            const th = document.createElement("th");
            th.textContent = columnCaption(col, measure, result.measures);
            head.appendChild(th);
        }
    }

    const body = table.createTBody();
    result.rows.forEach((row, i) => {
        const tr = body.insertRow();
        tr.className = `row-${row.kind}`;
        renderRowLabels(tr, row, result, pathWidth, schema, handlers);
        result.cells[i].forEach((cell) => {
            for (const measure of result.measures) {
                const td = tr.insertCell();
                td.className = "value";
                td.textContent = formatValue(cell[measure] ?? null);
            }
        });
    });

    if (result.rows.length === 0) {
        const empty = document.createElement("p");
        empty.className = "empty-grid";
        empty.textContent = NO_DATA;
        container.appendChild(table);
        container.appendChild(empty);
        return;
    }
    container.appendChild(table);
}

function renderRowLabels(
    tr: HTMLTableRowElement,
    row: HeaderDoc,
    result: PivotResultDoc,
    pathWidth: number,
    schema: SchemaDoc,
    handlers: GridHandlers,
): void {
    if (row.kind === "grand_total") {
        const td = tr.insertCell();
        td.colSpan = pathWidth;
        td.textContent = "Grand Total";
        td.className = "label total-label";
        return;
    }
    // the clickable cell of each dimension segment is its queried (deepest)
    // level: the last position before the dimension changes
    const axisLevel = result.row_levels.map(([dimension], position) => {
        const next = result.row_levels[position + 1];
        return next === undefined || next[0] !== dimension;
    });
    const cells = row.path.slice(0, pathWidth);
    cells.forEach((display, position) => {
        const td = tr.insertCell();
        td.textContent = display;
        const [dimension, level] = result.row_levels[position];
        if (!axisLevel[position]) {
            td.className = "label context";
            return;
        }
        if (level === leafLevelOf(schema, dimension)) {
            td.className = "label leaf";
            td.title = "leaf member";
            return;
        }
        td.className = "label drillable";
        const memberKey = row.keys[position];
        td.addEventListener("click", () => handlers.onDrill(dimension, memberKey));
    });
    if (row.kind === "subtotal") {
        const td = tr.insertCell();
        td.textContent = "Total";
        td.className = "label total-label";
    }
    for (let filled = cells.length + (row.kind === "subtotal" ? 1 : 0); filled < pathWidth; filled++) {
        const td = tr.insertCell();
        td.className = "label";
    }
}
