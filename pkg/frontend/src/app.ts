/** Application shell: wires state, API calls, grid, chart, and reports.
 *
 * One query in flight at a time: a newer navigation supersedes an older
 * response (latest wins). Failed navigation never touches the rendered
 * grid; the service's error code and message show in the notice banner.
 */

import { ApiClient, ApiRequestError } from "./api.js";
import { chartEligible, renderChart } from "./chart.js";
import { renderPivot } from "./grid.js";
import { createState, pushQuery, removeFilter, toggleMode, undo, ViewState } from "./state.js";
import type { CubeQueryDoc, PivotResultDoc, ReportDoc, SchemaDoc } from "./types.js";
import { defaultQuery } from "./types.js";

export class App {
    readonly state: ViewState;
    lastResult: PivotResultDoc | null = null;
    private schema: SchemaDoc | null = null;
    private requestSeq = 0;

    constructor(
        private readonly root: HTMLElement,
        private readonly api: ApiClient,
        token: string,
        query: CubeQueryDoc = defaultQuery(),
    ) {
        this.state = createState(query, token);
        this.buildShell();
    }

    private element<T extends HTMLElement>(id: string): T {
        return this.root.querySelector(`#${id}`) as T;
    }

    private buildShell(): void {
        this.root.innerHTML = `
            <header class="toolbar">
                <button id="up" title="back to the previous view">up</button>
                <button id="mode-toggle">chart view</button>
                <span id="status" class="status"></span>
            </header>
            <p id="notice" class="notice" hidden></p>
            <div id="breadcrumbs" class="breadcrumbs"></div>
            <div id="content" class="content"></div>
            <section id="report-panel" class="report-panel"></section>
        `;
        this.element<HTMLButtonElement>("up").addEventListener("click", () => void this.goUp());
        this.element<HTMLButtonElement>("mode-toggle").addEventListener("click", () => this.toggleView());
    }

    async start(): Promise<void> {
        this.schema = await this.api.schema();
        await this.run();
    }

    /** Issue the current query; stale responses are dropped (latest wins). */
    async run(): Promise<void> {
        const seq = ++this.requestSeq;
        this.setNotice(null);
        try {
            const result = await this.api.query(this.state.query);
            if (seq !== this.requestSeq) {
                return; // superseded by a newer navigation
            }
            this.lastResult = result;
            this.render();
        } catch (error) {
            if (seq !== this.requestSeq) {
                return;
            }
            this.showError(error);
        }
    }

    render(): void {
        if (!this.lastResult || !this.schema) {
            return;
        }
        const content = this.element<HTMLDivElement>("content");
        if (this.state.mode === "chart") {
            renderChart(content, this.lastResult);
        } else {
            renderPivot(content, this.lastResult, this.schema, {
                onDrill: (dimension, member) => void this.drill(dimension, member),
            });
        }
        this.renderBreadcrumbs();
        this.element<HTMLSpanElement>("status").textContent =
            `snapshot ${this.lastResult.snapshot_id} | ${this.lastResult.provenance}`;
        const toggle = this.element<HTMLButtonElement>("mode-toggle");
        toggle.textContent = this.state.mode === "grid" ? "chart view" : "grid view";
        toggle.disabled = this.state.mode === "grid" && !chartEligible(this.lastResult);
        toggle.title = toggle.disabled ? "chart view supports at most two axis dimensions" : "";
    }

    private renderBreadcrumbs(): void {
        const container = this.element<HTMLDivElement>("breadcrumbs");
        container.textContent = "";
        this.state.query.slice_filters.forEach(([dimension, level, members], index) => {
            const chip = document.createElement("span");
            chip.className = "crumb";
            chip.textContent = `${dimension}.${level} = ${members.join(", ")}`;
            const remove = document.createElement("button");
            remove.className = "crumb-remove";
            remove.textContent = "x";
            remove.title = "remove this filter";
            remove.addEventListener("click", () => {
                removeFilter(this.state, index);
                void this.run();
            });
            chip.appendChild(remove);
            container.appendChild(chip);
        });
    }

    async drill(dimension: string, member: string): Promise<void> {
        try {
            const next = await this.api.drilldown(this.state.query, dimension, member);
            pushQuery(this.state, next);
            await this.run();
        } catch (error) {
            this.showError(error); // grid stays as it was
        }
    }

    async goUp(): Promise<void> {
        if (undo(this.state)) {
            await this.run();
        }
    }

    toggleView(): void {
        toggleMode(this.state);
        this.render();
    }

    async showReport(key: string, asOf: string): Promise<void> {
        try {
            const report = await this.api.borrowerReport(key, asOf);
            this.renderReport(report);
        } catch (error) {
            this.showError(error);
        }
    }

    private renderReport(report: ReportDoc): void {
        const panel = this.element<HTMLElement>("report-panel");
        const amount = (value: number | null) => (value === null ? "no data" : String(value));
        const rows = (items: { label: string; value: number | null }[]) =>
            items.map((r) => `<tr><td>${r.label}</td><td class="value">${amount(r.value)}</td></tr>`).join("");
        panel.innerHTML = `
            <h3>${report.borrower_name} <small>[${report.borrower_key}] as of ${report.as_of}</small></h3>
            <p class="hierarchy">${report.borrower_path.join(" / ")}</p>
            <h4>facilities</h4>
            <table class="report-table"><tbody>
                ${rows(report.per_institute.map((e) => ({ label: e.institute, value: e.outstanding })))}
                <tr class="row-subtotal"><td>borrower total</td><td class="value">${amount(report.borrower_total)}</td></tr>
            </tbody></table>
            <h4>group exposure: ${report.group}</h4>
            <table class="report-table"><tbody>
                ${rows(report.group_members.map((m) => ({ label: m.name, value: m.outstanding })))}
                <tr class="row-subtotal"><td>group total</td><td class="value">${amount(report.group_total)}</td></tr>
            </tbody></table>
        `;
    }

    private setNotice(text: string | null): void {
        const notice = this.element<HTMLParagraphElement>("notice");
        notice.hidden = text === null;
        notice.textContent = text ?? "";
    }

    private showError(error: unknown): void {
        if (error instanceof ApiRequestError) {
            const suffix = error.code === "DRILL_DEPTH_DENIED" ? " (your role does not permit this drill depth)" : "";
            this.setNotice(`${error.code}: ${error.message}${suffix}`);
        } else {
            this.setNotice(`ERROR: ${String(error)}`);
        }
    }
}
