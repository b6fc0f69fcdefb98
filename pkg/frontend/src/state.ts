/** View state: current query, navigation history, display mode, token.
 *
 * Navigation is a pure query transformation, so the history stack holds the
 * exact prior query documents; undoing replays them verbatim.
 */

import type { CubeQueryDoc } from "./types.js";

export type DisplayMode = "grid" | "chart";

export interface ViewState {
    query: CubeQueryDoc;
    history: CubeQueryDoc[];
    mode: DisplayMode;
    token: string;
}

function clone(query: CubeQueryDoc): CubeQueryDoc {
    return JSON.parse(JSON.stringify(query)) as CubeQueryDoc;
}

export function createState(query: CubeQueryDoc, token: string): ViewState {
    return { query: clone(query), history: [], mode: "grid", token };
}

/** Advance to a new query, remembering the current one for undo. */
export function pushQuery(state: ViewState, query: CubeQueryDoc): void {
    state.history.push(clone(state.query));
    state.query = clone(query);
}

/** Step back one navigation; returns false at the bottom of the stack. */
export function undo(state: ViewState): boolean {
    const previous = state.history.pop();
    if (previous === undefined) {
        return false;
    }
    state.query = previous;
    return true;
}

/** Drop one slice filter by position (breadcrumb removal). */
export function removeFilter(state: ViewState, index: number): void {
    const next = clone(state.query);
    next.slice_filters.splice(index, 1);
    pushQuery(state, next);
}

export function toggleMode(state: ViewState): void {
    state.mode = state.mode === "grid" ? "chart" : "grid";
}
