/** Browser bootstrap: token entry, then the pivot app. */

import { ApiClient } from "./api.js";
import { App } from "./app.js";

function boot(): void {
    const form = document.getElementById("connect-form") as HTMLFormElement;
    const tokenInput = document.getElementById("token") as HTMLInputElement;
    const baseInput = document.getElementById("base-url") as HTMLInputElement;
    const mount = document.getElementById("app") as HTMLDivElement;

    form.addEventListener("submit", (event) => {
        event.preventDefault();
        const token = tokenInput.value.trim();
        if (!token) {
            return;
        }
        const base = baseInput.value.trim() || "";
        const api = new ApiClient(base, token);
        const app = new App(mount, api, token);
        form.hidden = true;
        void app.start().catch((error) => {
            form.hidden = false;
            mount.textContent = String(error);
        });

        const reportForm = document.getElementById("report-form") as HTMLFormElement;
        reportForm.hidden = false;
        reportForm.addEventListener("submit", (reportEvent) => {
            reportEvent.preventDefault();
            const key = (document.getElementById("report-key") as HTMLInputElement).value.trim();
            const asOf = (document.getElementById("report-asof") as HTMLInputElement).value.trim();
            if (key && asOf) {
                void app.showReport(key, asOf);
            }
        });
    });
}

document.addEventListener("DOMContentLoaded", boot);
