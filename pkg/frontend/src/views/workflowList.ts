/** Workflow repository list with role-gated operate actions. */

import { itemActions } from "../roles";
import { esc, stalenessBadge } from "../render";
import type { Session, WorkflowItem } from "../types";

const ACTION_LABELS: Record<string, string> = {
  submit: "Submit",
  instantiate: "Configure & submit",
  export: "Export",
  publish: "Publish",
  delete: "Delete",
};

export function renderWorkflowList(
  items: WorkflowItem[],
  session: Session,
  fetchedAt: Date,
): string {
  if (items.length === 0) {
    return `<section class="panel"><h2>Workflows</h2>
<p class="empty">The repository is empty. ${
      session.role === "end_user"
        ? "Ask a power user to publish an application or template."
        : "Upload an archive or create a graph via the CLI to get started."
    }</p></section>`;
  }
  const rows = items.map((item) => {
    const actions = itemActions(item, session)
      .map((a) => `<button data-action="${a}" data-id="${esc(item.id)}" data-kind="${esc(item.kind)}">${ACTION_LABELS[a]}</button>`)
      .join(" ");
    return `<tr>
  <td>${esc(item.name)}</td>
  <td><span class="kind kind-${esc(item.kind)}">${esc(item.kind)}</span></td>
  <td>${esc(item.owner)}</td>
  <td>${esc(item.visibility)}</td>
  <td class="actions">${actions}</td>
</tr>`;
  });
  return `<section class="panel"><h2>Workflows ${stalenessBadge(fetchedAt)}</h2>
<table class="list">
<thead><tr><th>name</th><th>kind</th><th>owner</th><th>visibility</th><th>operate</th></tr></thead>
<tbody>
${rows.join("\n")}
</tbody>
</table></section>`;
}
