/** Wire types mirroring the query service's JSON documents. */

export type AxisEntry = [dimension: string, level: string];
export type SliceFilter = [dimension: string, level: string, members: string[]];

export interface CubeQueryDoc {
    row_axis: AxisEntry[];
    column_axis: AxisEntry[];
    slice_filters: SliceFilter[];
    measures: string[];
    include_subtotals: boolean;
    include_grand_total: boolean;
}

export type HeaderKind = "member" | "subtotal" | "grand_total";

export interface HeaderDoc {
    kind: HeaderKind;
    path: string[];
    keys: string[];
}

export type Cell = Record<string, number | null>;

export interface PivotResultDoc {
    snapshot_id: number;
    row_axis: AxisEntry[];
    column_axis: AxisEntry[];
    row_levels: AxisEntry[];
    col_levels: AxisEntry[];
    measures: string[];
    rows: HeaderDoc[];
    cols: HeaderDoc[];
    cells: Cell[][];
    grand_total: Cell;
    provenance: string;
}

export interface LevelDoc {
    name: string;
    ordinal: number;
}

export interface DimensionDoc {
    name: string;
    levels: LevelDoc[];
}

export interface SchemaDoc {
    snapshot_id: number | null;
    schema: {
        fact: { name: string; grain: string[] };
        dimensions: DimensionDoc[];
        measures: { name: string; aggregator: string }[];
    };
}

export interface ApiErrorDoc {
    code: string;
    message: string;
    details?: Record<string, unknown>;
}

export interface AlertDoc {
    rule_id: string;
    kpi_id: string;
    observed: number;
    comparator: string;
    threshold: number;
    severity: string;
    snapshot_id: number;
}

export interface ReportDoc {
    borrower_key: string;
    borrower_name: string;
    borrower_path: string[];
    as_of: string;
    per_institute: { institute: string; outstanding: number | null }[];
    borrower_total: number | null;
    group: string;
    group_total: number | null;
    group_members: { key: string; name: string; outstanding: number | null }[];
    guarantor_links: { guarantor: string; institute: string; outstanding: number | null }[];
    snapshot_id: number;
    measure: string;
}

export function defaultQuery(): CubeQueryDoc {
    return {
        row_axis: [["Borrower", "Group"]],
        column_axis: [],
        slice_filters: [],
        measures: ["outstanding_amount"],
        include_subtotals: true,
        include_grand_total: true,
    };
}
