/** Thin typed client over /api/v1 with bearer auth.
 *
 * The fetch implementation is injectable so controllers are testable against
 * a mocked API; a denied response surfaces the server's envelope verbatim.
 */

import type {
  ErrorEnvelope,
  EventRecord,
  InstanceRow,
  InstanceSnapshot,
  JobDetail,
  WorkflowItem,
} from "./types";

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(
    public readonly status: number,
    public readonly envelope: ErrorEnvelope,
  ) {
    super(envelope.error.message);
  }

  get code(): string {
    return this.envelope.error.code;
  }
}

export class ApiClient {
  constructor(
    private readonly base: string = "",
    private token: string | null = null,
    private readonly fetchImpl: FetchLike = (u, i) => fetch(u, i),
  ) {}

  setToken(token: string | null): void {
    this.token = token;
  }

  private async call<T>(method: string, path: string, body?: unknown): Promise<T> {
    const headers: Record<string, string> = {};
    if (body !== undefined) headers["content-type"] = "application/json";
    if (this.token) headers["authorization"] = `Bearer ${this.token}`;
    const response = await this.fetchImpl(`${this.base}/api/v1${path}`, {
      method,
      headers,
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    if (response.status >= 400) {
      let envelope: ErrorEnvelope;
      try {
        envelope = (await response.json()) as ErrorEnvelope;
      } catch {
        envelope = { error: { code: "http_error", message: response.statusText, details: {} } };
      }
      throw new ApiError(response.status, envelope);
    }
    const text = await response.text();
    return (text ? JSON.parse(text) : {}) as T;
  }

  login(username: string, password: string) {
    return this.call<{ token: string; username: string; role: string }>(
      "POST", "/auth/login", { username, password });
  }

  me() {
    return this.call<{ username: string; role: string; permissions: string[] }>("GET", "/auth/me");
  }

  listWorkflows() {
    return this.call<{ items: WorkflowItem[] }>("GET", "/workflows");
  }

  workflowDetail(itemId: string) {
    return this.call<WorkflowItem & {
      free_fields?: string[];
      frozen_fields?: string[];
      required_fields?: string[];
    }>("GET", `/workflows/${itemId}`);
  }

  exportUrl(itemId: string): string {
    return `${this.base}/api/v1/workflows/${itemId}/export`;
  }

  publishWorkflow(itemId: string) {
    return this.call<{ visibility: string }>("POST", `/workflows/${itemId}/publish`);
  }

  deleteWorkflow(itemId: string) {
    return this.call<{ deleted: string }>("DELETE", `/workflows/${itemId}`);
  }

  instantiateTemplate(itemId: string, fills: Record<string, string>) {
    return this.call<WorkflowItem>("POST", `/templates/${itemId}/instantiate`, { fills });
  }

  submitInstance(workflowId: string) {
    return this.call<{ id: string; status: string }>("POST", "/instances", {
      workflow_id: workflowId,
    });
  }

  listInstances() {
    return this.call<{ items: InstanceRow[] }>("GET", "/instances");
  }

  instance(instanceId: string, waitMs?: number) {
    const wait = waitMs ? `?wait=${waitMs}` : "";
    return this.call<InstanceSnapshot>("GET", `/instances/${instanceId}${wait}`);
  }

  instanceEvents(instanceId: string, since = 0) {
    return this.call<{ events: EventRecord[] }>(
      "GET", `/instances/${instanceId}/events?since=${since}`);
  }

  abortInstance(instanceId: string) {
    return this.call<{ id: string; status: string }>("POST", `/instances/${instanceId}/abort`);
  }

  job(jobId: string) {
    return this.call<JobDetail>("GET", `/jobs/${jobId}`);
  }

  async jobStream(jobId: string, stream: "stdout" | "stderr"): Promise<string> {
    const headers: Record<string, string> = {};
    if (this.token) headers["authorization"] = `Bearer ${this.token}`;
    const response = await this.fetchImpl(`${this.base}/api/v1/jobs/${jobId}/${stream}`, { headers });
    if (response.status >= 400) {
      throw new ApiError(response.status, await response.json());
    }
    return response.text();
  }

  async jobArtifact(jobId: string, name: string): Promise<string> {
    const headers: Record<string, string> = {};
    if (this.token) headers["authorization"] = `Bearer ${this.token}`;
    const response = await this.fetchImpl(
      `${this.base}/api/v1/jobs/${jobId}/artifacts/${name}`, { headers });
    if (response.status >= 400) {
      throw new ApiError(response.status, await response.json());
    }
    return response.text();
  }

  resubmitJob(jobId: string) {
    return this.call<{ id: string; attempt: number }>("POST", `/jobs/${jobId}/resubmit`);
  }

  listBackends() {
    return this.call<{ items: Record<string, unknown>[] }>("GET", "/backends");
  }
}
