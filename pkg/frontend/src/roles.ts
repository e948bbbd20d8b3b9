/** Client-side mirror of the server's role/action matrix.
 *
 * Buttons derive their enablement from the same rules the server enforces,
 * so the UI never offers an action the API would deny; the server stays
 * authoritative and any denial it returns is surfaced verbatim.
 */

import type { Role, Session, WorkflowItem } from "./types";

export type Action =
  | "create_graph" | "edit_workflow" | "publish" | "submit"
  | "monitor_own" | "monitor_any" | "abort_own" | "abort_any"
  | "resubmit" | "manage_users" | "manage_backends";

const PERMISSIONS: Record<Role, ReadonlySet<Action>> = {
  admin: new Set<Action>([
    "create_graph", "edit_workflow", "publish", "submit",
    "monitor_own", "monitor_any", "abort_own", "abort_any",
    "resubmit", "manage_users", "manage_backends",
  ]),
  power_user: new Set<Action>([
    "create_graph", "edit_workflow", "publish", "submit",
    "monitor_own", "abort_own", "resubmit",
  ]),
  end_user: new Set<Action>(["submit", "monitor_own", "abort_own", "resubmit"]),
};

const ANY_VARIANT: Partial<Record<Action, Action>> = {
  monitor_own: "monitor_any",
  abort_own: "abort_any",
};

/** Matrix plus ownership: own-scoped actions on another user's resource
 * escalate to their any-scoped variant (admin-only when none exists). */
export function can(session: Session, action: Action, resourceOwner?: string): boolean {
  let effective = action;
  if (resourceOwner !== undefined && resourceOwner !== session.username) {
    const variant = ANY_VARIANT[action];
    if (variant) {
      effective = variant;
    } else if (session.role !== "admin") {
      return false;
    }
  }
  return PERMISSIONS[session.role].has(effective);
}

export type ItemAction = "submit" | "instantiate" | "export" | "publish" | "delete";

/** Operate actions offered on one workflow-list row. */
export function itemActions(item: WorkflowItem, session: Session): ItemAction[] {
  const actions: ItemAction[] = [];
  const runnable = item.kind === "workflow" || item.kind === "application";
  if (runnable && can(session, "submit")) actions.push("submit");
  if (item.kind === "template" && can(session, "submit")) actions.push("instantiate");
  actions.push("export");
  if (item.visibility === "private" && can(session, "publish", item.owner)) {
    actions.push("publish");
  }
  if (can(session, "edit_workflow", item.owner)) actions.push("delete");
  return actions;
}
