/** Hash-routed single-page portal. All server state arrives via ApiClient;
 * views are pure renderers and this module only wires DOM events. */

import { ApiClient, ApiError } from "./api";
import { esc, stalenessBadge } from "./render";
import type { InstanceRow, Session, WorkflowItem } from "./types";
import { renderJobDetail, renderCsvPreview, parsePgm, drawPgm } from "./views/artifacts";
import { BoardController, renderInstanceBoard } from "./views/instanceBoard";
import { renderTemplateForm, validateForm, FormState } from "./views/templateForm";
import { renderWorkflowList } from "./views/workflowList";

const root = document.getElementById("app") as HTMLElement;
const api = new ApiClient("");

let session: Session | null = null;
let board: BoardController | null = null;

function setFlash(message: string, kind: "error" | "info" = "error"): void {
  const el = document.getElementById("flash") as HTMLElement;
  el.innerHTML = message ? `<div class="flash ${kind}">${esc(message)}</div>` : "";
}

function surfaceApiError(err: unknown): void {
  if (err instanceof ApiError) {
    // denied/failed server responses are surfaced verbatim
    setFlash(`${err.status} ${err.code}: ${err.envelope.error.message}`);
    if (err.status === 401) {
      session = null;
      location.hash = "#/login";
    }
  } else {
    setFlash(String(err));
  }
}

function renderLogin(): void {
  root.innerHTML = `<section class="panel narrow"><h2>Sign in</h2>
<form id="login-form">
  <label class="field"><span class="path">username</span><input name="username" autofocus></label>
  <label class="field"><span class="path">password</span><input name="password" type="password"></label>
  <button type="submit">Sign in</button>
</form></section>`;
  const form = document.getElementById("login-form") as HTMLFormElement;
  form.addEventListener("submit", async (ev) => {
    ev.preventDefault();
    const data = new FormData(form);
    try {
      const result = await api.login(String(data.get("username")), String(data.get("password")));
      api.setToken(result.token);
      session = { token: result.token, username: result.username, role: result.role as Session["role"] };
      setFlash("");
      renderChrome();
      location.hash = "#/workflows";
    } catch (err) {
      surfaceApiError(err);
    }
  });
}

function renderChrome(): void {
  const nav = document.getElementById("nav") as HTMLElement;
  if (!session) {
    nav.innerHTML = "";
    return;
  }
  nav.innerHTML = `
  <a href="#/workflows">Workflows</a>
  <a href="#/instances">Instances</a>
  <span class="who">${esc(session.username)} (${esc(session.role)})</span>
  <a href="#/login" id="logout">sign out</a>`;
  (document.getElementById("logout") as HTMLElement).addEventListener("click", () => {
    session = null;
    api.setToken(null);
  });
}

async function showWorkflows(): Promise<void> {
  if (!session) return renderLogin();
  try {
    const { items } = await api.listWorkflows();
    root.innerHTML = renderWorkflowList(items, session, new Date());
    root.querySelectorAll("button[data-action]").forEach((button) => {
      button.addEventListener("click", () => void onItemAction(button as HTMLButtonElement, items));
    });
  } catch (err) {
    surfaceApiError(err);
  }
}

async function onItemAction(button: HTMLButtonElement, items: WorkflowItem[]): Promise<void> {
  const id = button.dataset.id as string;
  const action = button.dataset.action;
  try {
    if (action === "submit") {
      const result = await api.submitInstance(id);
      location.hash = `#/instances/${result.id}`;
    } else if (action === "instantiate") {
      location.hash = `#/templates/${id}`;
    } else if (action === "export") {
      const response = await fetch(api.exportUrl(id), {
        method: "POST",
        headers: { authorization: `Bearer ${session!.token}` },
      });
      if (response.status >= 400) throw new ApiError(response.status, await response.json());
      const blob = await response.blob();
      const a = document.createElement("a");
      a.href = URL.createObjectURL(blob);
      const item = items.find((i) => i.id === id);
      a.download = `${item?.name ?? id}.zip`;
      a.click();
      URL.revokeObjectURL(a.href);
    } else if (action === "publish") {
      await api.publishWorkflow(id);
      await showWorkflows();
    } else if (action === "delete") {
      await api.deleteWorkflow(id);
      await showWorkflows();
    }
  } catch (err) {
    surfaceApiError(err);
  }
}

async function showInstances(): Promise<void> {
  if (!session) return renderLogin();
  try {
    const { items } = await api.listInstances();
    const rows = items
      .sort((a: InstanceRow, b: InstanceRow) => b.created_at - a.created_at)
      .map((i) => `<tr>
  <td><a href="#/instances/${esc(i.id)}">${esc(i.id)}</a></td>
  <td><span class="status status-${esc(i.status)}">${esc(i.status)}</span></td>
  <td>${esc(i.workflow)}</td><td>${esc(i.owner)}</td>
</tr>`);
    root.innerHTML = `<section class="panel"><h2>Instances ${stalenessBadge(new Date())}</h2>
<table class="list"><thead><tr><th>id</th><th>status</th><th>workflow</th><th>owner</th></tr></thead>
<tbody>${rows.join("\n") || "<tr><td colspan=4 class='empty'>none yet</td></tr>"}</tbody></table></section>`;
  } catch (err) {
    surfaceApiError(err);
  }
}

function showBoard(instanceId: string): void {
  if (!session) return renderLogin();
  board?.dispose();
  const controller = new BoardController(api, instanceId, () => {
    if (!controller.snapshot) {
      if (controller.stale) setFlash("instance fetch failing, retrying");
      return;
    }
    root.innerHTML = renderInstanceBoard(
      controller.snapshot, controller.events, session!, controller.lastFetch,
      { stale: controller.stale, abortDisabled: controller.abortDisabled });
    const abortButton = root.querySelector("button[data-action=abort]");
    abortButton?.addEventListener("click", () => void controller.abort().catch(surfaceApiError));
    root.querySelectorAll("button[data-action=resubmit]").forEach((b) =>
      b.addEventListener("click", async () => {
        try {
          await api.resubmitJob((b as HTMLButtonElement).dataset.job as string);
          await controller.pollOnce();
        } catch (err) {
          surfaceApiError(err);
        }
      }));
  });
  board = controller;
  controller.start();
}

async function showTemplateForm(templateId: string): Promise<void> {
  if (!session) return renderLogin();
  // free fields come from the exported template archive metadata; the portal
  // exposes them through the workflow list item (kind=template) plus the
  // instantiate endpoint, so the form asks for fills by path.
  let detail: { name: string; free_fields?: string[]; frozen_fields?: string[] };
  try {
    detail = await api.workflowDetail(templateId);
  } catch (err) {
    surfaceApiError(err);
    return;
  }
  const state: FormState = { name: `${detail.name}_run`, fills: {} };
  const model = {
    templateId,
    templateName: detail.name,
    freeFields: detail.free_fields ?? [],
    frozenSample: (detail.frozen_fields ?? []).slice(0, 6),
  };

  const redraw = () => {
    const issues = validateForm(state);
    root.innerHTML = renderTemplateForm(model, state, issues);
    const form = root.querySelector("form") as HTMLFormElement;
    form.querySelectorAll("input[data-free-field], input[data-name-field]").forEach((input) => {
      input.addEventListener("change", () => {
        const el = input as HTMLInputElement;
        if (el.name === "__name__") state.name = el.value;
        else state.fills[el.name] = el.value;
        redraw();
      });
    });
    form.addEventListener("submit", async (ev) => {
      ev.preventDefault();
      if (validateForm(state).length) return; // blocked client-side
      try {
        const fills = Object.fromEntries(
          Object.entries(state.fills).filter(([, v]) => v !== ""));
        const created = await api.instantiateTemplate(templateId, fills);
        const instance = await api.submitInstance(created.id);
        location.hash = `#/instances/${instance.id}`;
      } catch (err) {
        surfaceApiError(err);  // field-level 400s surface verbatim
      }
    });
  };
  redraw();
}

async function showJob(jobId: string): Promise<void> {
  if (!session) return renderLogin();
  try {
    const job = await api.job(jobId);
    root.innerHTML = renderJobDetail(job);
    const preview = document.getElementById("preview") as HTMLElement;
    root.querySelectorAll("a[data-artifact]").forEach((link) =>
      link.addEventListener("click", async (ev) => {
        ev.preventDefault();
        const name = (link as HTMLElement).dataset.artifact as string;
        try {
          const text = await api.jobArtifact(jobId, name);
          if (text.startsWith("P2\n") || text.startsWith("P2 ")) {
            preview.innerHTML = `<h3>${esc(name)}</h3>`;
            const canvas = document.createElement("canvas");
            canvas.className = "pgm";
            preview.appendChild(canvas);
            drawPgm(parsePgm(text), canvas);
          } else if (text.split("\n", 1)[0].includes(",")) {
            preview.innerHTML = `<h3>${esc(name)}</h3>` + renderCsvPreview(text);
          } else {
            preview.innerHTML = `<h3>${esc(name)}</h3><pre>${esc(text.slice(0, 4000))}</pre>`;
          }
        } catch (err) {
          surfaceApiError(err);
        }
      }));
    const stdout = await api.jobStream(jobId, "stdout");
    if (stdout.trim()) {
      preview.innerHTML = `<h3>stdout</h3><pre>${esc(stdout.slice(0, 4000))}</pre>`;
    }
  } catch (err) {
    surfaceApiError(err);
  }
}

async function showStream(jobId: string, stream: "stdout" | "stderr"): Promise<void> {
  if (!session) return renderLogin();
  try {
    const text = await api.jobStream(jobId, stream);
    root.innerHTML = `<section class="panel"><h2>${esc(jobId)} ${stream}</h2>
<pre class="stream">${esc(text) || "(empty)"}</pre>
<p><a href="#/jobs/${esc(jobId)}">back to job</a></p></section>`;
    if (stream === "stdout" && text.startsWith("P2\n")) {
      const canvas = document.createElement("canvas");
      root.querySelector(".panel")?.appendChild(canvas);
      drawPgm(parsePgm(text), canvas);
    }
  } catch (err) {
    surfaceApiError(err);
  }
}

function route(): void {
  board?.dispose();  // navigating away cancels the board's poll loop
  board = null;
  setFlash("");
  const hash = location.hash || "#/login";
  const parts = hash.slice(2).split("/");
  if (!session || parts[0] === "login") return renderLogin();
  if (parts[0] === "workflows") return void showWorkflows();
  if (parts[0] === "instances" && parts.length === 1) return void showInstances();
  if (parts[0] === "instances") return showBoard(parts[1]);
  if (parts[0] === "templates") return void showTemplateForm(parts[1]);
  if (parts[0] === "jobs" && parts.length === 2) return void showJob(parts[1]);
  if (parts[0] === "jobs" && (parts[2] === "stdout" || parts[2] === "stderr")) {
    return void showStream(parts[1], parts[2] as "stdout" | "stderr");
  }
  renderLogin();
}

window.addEventListener("hashchange", route);
window.addEventListener("DOMContentLoaded", () => {
  renderChrome();
  route();
});
