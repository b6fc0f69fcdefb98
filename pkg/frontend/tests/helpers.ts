/** Shared test helpers: a routable fetch mock over captured fixtures. */

import { vi } from "vitest";

export interface RecordedCall {
    method: string;
    path: string;
    body: unknown;
}

export interface Route {
    method: string;
    path: string;
    reply: (body: unknown) => { status: number; body: unknown };
}

export function makeFetch(routes: Route[], calls: RecordedCall[] = []) {
    const mock = vi.fn(async (url: string, init?: RequestInit) => {
        const method = init?.method ?? "GET";
        const path = url.split("?")[0];
        const body = init?.body ? JSON.parse(init.body as string) : undefined;
        calls.push({ method, path, body });
        const route = routes.find((r) => r.method === method && r.path === path);
        if (!route) {
            return response(404, { code: "NO_ROUTE", message: `no mock route for ${method} ${path}` });
        }
        const { status, body: payload } = route.reply(body);
        return response(status, payload);
    });
    return { fetch: mock as unknown as typeof fetch, calls };
}

function response(status: number, payload: unknown) {
    return {
        ok: status >= 200 && status < 300,
        status,
        json: async () => payload,
    } as Response;
}

/** Every numeric token that appears anywhere in a JSON document. */
export function numbersIn(doc: unknown): Set<string> {
    const found = new Set<string>();
    const walk = (value: unknown): void => {
        if (typeof value === "number") {
            found.add(String(value));
        } else if (Array.isArray(value)) {
            value.forEach(walk);
        } else if (value && typeof value === "object") {
            Object.values(value).forEach(walk);
        }
    };
    walk(doc);
    return found;
}
