/** Bar-chart view of the current grid: one bar per member row.
 *
 * Bars show the first measure, grouped by column member when a column axis
 * is present. Subtotal and grand-total lines never become bars. Values are
 * taken verbatim from the result; heights are scaled against the max.
 */

import type { PivotResultDoc } from "./types.js";

const MAX_BAR_HEIGHT = 160; // px

export function chartEligible(result: PivotResultDoc): boolean {
    return result.row_axis.length + result.column_axis.length <= 2;
}

export function renderChart(container: HTMLElement, result: PivotResultDoc): void {
    container.textContent = "";

    if (!chartEligible(result)) {
        const note = document.createElement("p");
        note.className = "chart-disabled";
        note.textContent = "chart view supports at most two axis dimensions; roll up or remove one to enable it";
        container.appendChild(note);
        return;
    }

    const measure = result.measures[0];
    const bars: { label: string; value: number }[] = [];
    result.rows.forEach((row, i) => {
        if (row.kind !== "member") {
            return;
        }
        result.cols.forEach((col, j) => {
            if (col.kind !== "member") {
                return;
            }
            const value = result.cells[i][j][measure];
            if (value === null || value === undefined) {
                return;
            }
            const parts = [row.path.join(" / ")];
            if (col.path.length) {
                parts.push(col.path.join(" / "));
            }
            bars.push({ label: parts.join(" @ "), value });
        });
    });

    if (bars.length === 0) {
        const empty = document.createElement("p");
        empty.className = "chart-empty";
        empty.textContent = "no data";
        container.appendChild(empty);
        return;
    }

    const max = Math.max(...bars.map((b) => Math.abs(b.value)), 1);
    const chart = document.createElement("div");
    chart.className = "bar-chart";
    for (const bar of bars) {
        const wrapper = document.createElement("div");
        wrapper.className = "bar-wrapper";

        const value = document.createElement("span");
        value.className = "bar-value";
        value.textContent = String(bar.value);

        const rect = document.createElement("div");
        rect.className = "bar";
        rect.style.height = `${Math.round((Math.abs(bar.value) / max) * MAX_BAR_HEIGHT)}px`;
        rect.dataset.value = String(bar.value);
        rect.title = `${bar.label}: ${bar.value}`;

        const label = document.createElement("span");
        label.className = "bar-label";
        label.textContent = bar.label;

        wrapper.appendChild(value);
        wrapper.appendChild(rect);
        wrapper.appendChild(label);
        chart.appendChild(wrapper);
    }
    container.appendChild(chart);
}
