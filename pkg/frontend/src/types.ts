/** Shapes of the portal API responses the UI projects from. */

export type Role = "admin" | "power_user" | "end_user";

export interface Session {
  token: string;
  username: string;
  role: Role;
}

export interface WorkflowItem {
  id: string;
  kind: "graph" | "workflow" | "template" | "application" | "project";
  name: string;
  owner: string;
  visibility: "private" | "published";
  version: number;
}

export type JobState =
  | "init" | "ready" | "submitted" | "running" | "finished" | "error" | "aborted";

export interface JobCell {
  id: string;
  node: string;
  coord: number[];
  state: JobState;
  attempt: number;
  backend: string | null;
  exit_code: number | null;
}

export interface InstanceSnapshot {
  id: string;
  owner: string;
  status: "submitted" | "running" | "finished" | "error" | "aborted";
  seq: number;
  workflow: string;
  jobs: JobCell[];
}

export interface InstanceRow {
  id: string;
  owner: string;
  status: string;
  workflow: string;
  created_at: number;
}

export interface EventRecord {
  seq: number;
  ts: number;
  type: string;
  [key: string]: unknown;
}

export interface ErrorEnvelope {
  error: { code: string; message: string; details: Record<string, unknown> };
}

export interface JobDetail extends JobCell {
  artifacts: Record<string, { hash: string; size: number }>;
}

export const TERMINAL_STATUSES = ["finished", "error", "aborted"] as const;

export function isTerminal(status: string): boolean {
  return (TERMINAL_STATUSES as readonly string[]).includes(status);
}
