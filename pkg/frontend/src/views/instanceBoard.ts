/** Live instance board: a node x sweep-coordinate job grid plus event feed.
 *
 * The poll controller keeps at most one status request in flight, retries
 * network failures with backoff (labeling the view stale), and stops
 * polling once the instance is terminal or the view is disposed.
 */

import { can } from "../roles";
import { esc, stalenessBadge } from "../render";
import type { EventRecord, InstanceSnapshot, JobCell, Session } from "../types";
import { isTerminal } from "../types";

export function coordLabel(coord: number[]): string {
  return coord.length ? coord.map((c) => `[${c}]`).join("") : "";
}

export function renderInstanceBoard(
  snapshot: InstanceSnapshot,
  events: EventRecord[],
  session: Session,
  fetchedAt: Date,
  opts: { stale?: boolean; abortDisabled?: boolean } = {},
): string {
  const byNode = new Map<string, JobCell[]>();
  for (const job of snapshot.jobs) {
    const list = byNode.get(job.node) ?? [];
    list.push(job);
    byNode.set(job.node, list);
  }
  const rows = [...byNode.entries()].map(([node, jobs]) => {
    const cells = jobs
      .sort((a, b) => coordLabel(a.coord).localeCompare(coordLabel(b.coord)))
      .map((job) => `<td class="cell state-${job.state}" data-job="${esc(job.id)}" title="${esc(job.id)} attempt ${job.attempt}">
  <a href="#/jobs/${esc(job.id)}">${esc(node)}${coordLabel(job.coord)}</a>
  <div class="state">${job.state}${job.state === "error" ? ` (exit ${job.exit_code})` : ""}</div>
  ${job.state === "error" ? `<button data-action="resubmit" data-job="${esc(job.id)}">Resubmit</button>
  <a class="errlink" href="#/jobs/${esc(job.id)}/stderr">stderr</a>` : ""}
</td>`)
      .join("\n");
    return `<tr><th>${esc(node)}</th>${cells}</tr>`;
  });

  const abortable = can(session, "abort_own", snapshot.owner) &&
    !isTerminal(snapshot.status) && !opts.abortDisabled;
  const feed = events
    .slice(-12)
    .reverse()
    .map((e) => `<li><code>#${e.seq}</code> ${esc(describeEvent(e))}</li>`)
    .join("\n");

  return `<section class="panel">
<h2>Instance ${esc(snapshot.id)} <span class="status status-${esc(snapshot.status)}">${esc(snapshot.status)}</span>
${stalenessBadge(fetchedAt)}${opts.stale ? ' <span class="stale-warning">stale - retrying</span>' : ""}</h2>
<p>workflow <strong>${esc(snapshot.workflow)}</strong>, owner ${esc(snapshot.owner)}, seq ${snapshot.seq}</p>
<p><button data-action="abort" data-id="${esc(snapshot.id)}"${abortable ? "" : " disabled"}>Abort</button></p>
<table class="grid"><tbody>
${rows.join("\n")}
</tbody></table>
<h3>Events</h3>
<ul class="feed">
${feed}
</ul></section>`;
}

export function describeEvent(e: EventRecord): string {
  switch (e.type) {
    case "job_transition":
      return `${e.job_id} ${e.from} -> ${e.to}`;
    case "artifact_staged":
      return `${e.job_id} staged ${e.name} (${e.size} bytes)`;
    case "job_created":
      return `created ${e.job_id} for ${e.node}`;
    case "sweep_expanded":
      return `sweep expanded ${e.node} by ${e.count}`;
    case "abort_requested":
      return "abort requested";
    default:
      return e.type;
  }
}

export interface BoardApi {
  instance(id: string, waitMs?: number): Promise<InstanceSnapshot>;
  instanceEvents(id: string, since: number): Promise<{ events: EventRecord[] }>;
  abortInstance(id: string): Promise<unknown>;
}

export type Scheduler = (fn: () => void, ms: number) => unknown;

export class BoardController {
  snapshot: InstanceSnapshot | null = null;
  events: EventRecord[] = [];
  stale = false;
  abortDisabled = false;
  lastFetch: Date = new Date(0);
  polling = false;
  disposed = false;
  pollCount = 0;
  private inFlight = false;
  private backoffMs = 0;

  constructor(
    private readonly api: BoardApi,
    private readonly instanceId: string,
    private readonly onChange: () => void,
    private readonly schedule: Scheduler = (fn, ms) => setTimeout(fn, ms),
    private readonly pollIntervalMs = 500,
    private readonly now: () => Date = () => new Date(),
  ) {}

  start(): void {
    this.polling = true;
    void this.pollOnce();
  }

  dispose(): void {
    this.disposed = true;
    this.polling = false;
  }

  /** One poll cycle; never runs concurrently with itself. */
  async pollOnce(): Promise<void> {
    if (this.inFlight || this.disposed) return;
    this.inFlight = true;
    this.pollCount += 1;
    try {
      const snapshot = await this.api.instance(this.instanceId);
      const since = this.events.length ? this.events[this.events.length - 1].seq : 0;
      const feed = await this.api.instanceEvents(this.instanceId, since);
      this.events = [...this.events, ...feed.events];
      this.snapshot = snapshot;
      this.lastFetch = this.now();
      this.stale = false;
      this.backoffMs = 0;
    } catch {
      this.stale = true;  // keep the last snapshot, label it, back off
      this.backoffMs = Math.min(this.backoffMs === 0 ? 1000 : this.backoffMs * 2, 15_000);
    } finally {
      this.inFlight = false;
    }
    this.onChange();
    if (this.snapshot && isTerminal(this.snapshot.status)) {
      this.polling = false;  // terminal rendering reached: stop polling
      return;
    }
    if (this.polling && !this.disposed) {
      this.schedule(() => void this.pollOnce(), this.backoffMs || this.pollIntervalMs);
    }
  }

  /** Abort button handler: a 409 means already terminal; disable and stop. */
  async abort(): Promise<void> {
    try {
      await this.api.abortInstance(this.instanceId);
    } catch (err) {
      const status = (err as { status?: number }).status;
      if (status !== 409) throw err;
    }
    this.abortDisabled = true;
    this.onChange();
    await this.pollOnce();
  }
}
