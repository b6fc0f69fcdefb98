/** Thin fetch client for the query service; one method per endpoint. */

import type {
    AlertDoc,
    ApiErrorDoc,
    CubeQueryDoc,
    PivotResultDoc,
    ReportDoc,
    SchemaDoc,
    SliceFilter,
} from "./types.js";

export class ApiRequestError extends Error {
    readonly code: string;
    readonly status: number;
    readonly details: Record<string, unknown>;

    constructor(status: number, body: ApiErrorDoc) {
        super(body.message ?? "request failed");
        this.code = body.code ?? "UNKNOWN";
        this.status = status;
        this.details = body.details ?? {};
    }
}

export class ApiClient {
    constructor(
        private readonly baseUrl: string,
        private token: string,
        private readonly fetchFn: typeof fetch = fetch,
    ) {}

    setToken(token: string): void {
        this.token = token;
    }

    private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
        const response = await this.fetchFn(`${this.baseUrl}${path}`, {
            method,
            headers: {
                Authorization: `Bearer ${this.token}`,
                ...(body === undefined ? {} : { "Content-Type": "application/json" }),
            },
            body: body === undefined ? undefined : JSON.stringify(body),
        });
        const payload = await response.json();
        if (!response.ok) {
            throw new ApiRequestError(response.status, payload as ApiErrorDoc);
        }
        return payload as T;
    }

    schema(): Promise<SchemaDoc> {
        return this.request("GET", "/api/schema");
    }

    query(query: CubeQueryDoc): Promise<PivotResultDoc> {
        return this.request("POST", "/api/query", query);
    }

    drilldown(query: CubeQueryDoc, dimension: string, member: string): Promise<CubeQueryDoc> {
        return this.navigate("/api/query/drilldown", { query, dimension, member });
    }

    rollup(query: CubeQueryDoc, dimension: string): Promise<CubeQueryDoc> {
        return this.navigate("/api/query/rollup", { query, dimension });
    }

    slice(query: CubeQueryDoc, dimension: string, level: string, member: string): Promise<CubeQueryDoc> {
        return this.navigate("/api/query/slice", { query, dimension, level, member });
    }

    dice(query: CubeQueryDoc, filters: SliceFilter[]): Promise<CubeQueryDoc> {
        return this.navigate("/api/query/dice", { query, filters });
    }

    private async navigate(path: string, body: unknown): Promise<CubeQueryDoc> {
        const response = await this.request<{ query: CubeQueryDoc }>("POST", path, body);
        return response.query;
    }

    borrowerReport(key: string, asOf: string): Promise<ReportDoc> {
        return this.request("GET", `/api/report/borrower/${encodeURIComponent(key)}?as_of=${encodeURIComponent(asOf)}`);
    }

    alerts(): Promise<{ snapshot_id: number; alerts: AlertDoc[] }> {
        return this.request("GET", "/api/alerts");
    }
}
