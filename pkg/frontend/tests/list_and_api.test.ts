import { describe, expect, it } from "vitest";

import { ApiClient, ApiError } from "../src/api";
import { renderWorkflowList } from "../src/views/workflowList";
import { parsePgm, renderCsvPreview } from "../src/views/artifacts";
import type { Session, WorkflowItem } from "../src/types";

const power: Session = { token: "t", username: "alice", role: "power_user" };
const endUser: Session = { token: "t", username: "bob", role: "end_user" };

const items: WorkflowItem[] = [
  { id: "w1", kind: "workflow", name: "tension", owner: "alice", visibility: "private", version: 1 },
  { id: "t1", kind: "template", name: "tension_tpl", owner: "alice", visibility: "published", version: 1 },
];

describe("workflow list rendering", () => {
  it("end user sees no authoring actions anywhere", () => {
    const html = renderWorkflowList(items, endUser, new Date(0));
    expect(html).not.toContain('data-action="publish"');
    expect(html).not.toContain('data-action="delete"');
    expect(html).toContain('data-action="instantiate"');
  });

  it("power user gets publish on own private items", () => {
    const html = renderWorkflowList(items, power, new Date(0));
    expect(html).toContain('data-action="publish" data-id="w1"');
    expect(html).not.toContain('data-action="publish" data-id="t1"');
  });

  it("empty repository renders the empty state", () => {
    const html = renderWorkflowList([], endUser, new Date(0));
    expect(html).toContain("repository is empty");
  });

  it("escapes hostile names", () => {
    const hostile: WorkflowItem[] = [{
      id: "x", kind: "workflow", name: "<script>alert(1)</script>",
      owner: "alice", visibility: "private", version: 1,
    }];
    const html = renderWorkflowList(hostile, power, new Date(0));
    expect(html).not.toContain("<script>alert");
    expect(html).toContain("&lt;script&gt;");
  });
});

function fakeFetch(status: number, body: unknown) {
  return async () =>
    new Response(JSON.stringify(body), {
      status,
      headers: { "content-type": "application/json" },
    });
}

describe("api client", () => {
  it("surfaces the server's error envelope verbatim", async () => {
    const envelope = { error: { code: "forbidden", message: "role 'end_user' is not allowed to publish", details: { action: "publish" } } };
    const api = new ApiClient("", "tok", fakeFetch(403, envelope));
    try {
      await api.publishWorkflow("w1");
      expect.unreachable();
    } catch (err) {
      const apiErr = err as ApiError;
      expect(apiErr.status).toBe(403);
      expect(apiErr.envelope).toEqual(envelope);
      expect(apiErr.code).toBe("forbidden");
    }
  });

  it("sends the bearer token", async () => {
    let seen: RequestInit | undefined;
    const api = new ApiClient("", "secret", async (url, init) => {
      seen = init;
      return new Response("{}", { status: 200 });
    });
    await api.listWorkflows();
    expect((seen?.headers as Record<string, string>).authorization).toBe("Bearer secret");
  });
});

describe("artifact previews", () => {
  it("parses a plain PGM", () => {
    const image = parsePgm("P2\n3 2\n255\n0 128 255\n255 128 0\n");
    expect(image.width).toBe(3);
    expect(image.height).toBe(2);
    expect(image.pixels).toEqual([0, 128, 255, 255, 128, 0]);
  });

  it("rejects non-P2 payloads", () => {
    expect(() => parsePgm("P5\n1 1\n255\n")).toThrow();
  });

  it("renders CSV with a header row", () => {
    const html = renderCsvPreview("r,g\n0.1,0\n0.2,1.5\n");
    expect(html).toContain("<th>r</th><th>g</th>");
    expect(html).toContain("<td>0.2</td><td>1.5</td>");
  });
});
