import { describe, expect, it } from "vitest";
import type { Candidate, FetchLike } from "../src/api.js";
import { ReviewApiClient } from "../src/api.js";
import { ReviewController } from "../src/review.js";

// Minimal in-memory stand-in for the review service: one flip candidate,
// then done. Mirrors the server contract (409 on stale batch, graph edges
// annotated with status).
class FakeServer {
  edges: Array<[string, string]> = [["a.m", "b.m"]];
  batch: Candidate[] = [
    {
      kind: "flip",
      src: "a.m",
      dst: "b.m",
      evidence: { score: 2.1 },
      connectivity_changing: false,
      rank: 0,
    },
  ];
  phase = "direction_screen";
  round = 1;
  failNextPost: "network" | "stale" | null = null;
  posts: unknown[] = [];

  fetch: FetchLike = async (url, init) => {
    const u = new URL(url);
    if (u.pathname.endsWith("/graph")) {
      return json({
        phase: this.phase,
        round: this.round,
        graph: {
          kind: "causal",
          nodes: [node("a.m"), node("b.m")],
          edges: this.edges.map(([src, dst]) => ({
            src,
            dst,
            status: this.batch.some((c) => c.src === src && c.dst === dst)
              ? `candidate-${this.batch[0].kind}`
              : "confirmed",
            collapsed_via: [],
            direct: true,
          })),
        },
      });
    }
    if (u.pathname.endsWith("/candidates")) {
      return json({ phase: this.phase, candidates: this.batch });
    }
    if (u.pathname.endsWith("/decisions")) {
      if (this.failNextPost === "network") {
        this.failNextPost = null;
        throw new TypeError("fetch failed");
      }
      if (this.failNextPost === "stale") {
        this.failNextPost = null;
        return json({ detail: "stale candidate" }, 409);
      }
      const body = JSON.parse(String(init?.body));
      this.posts.push(body);
      for (const d of body) {
        if (d.kind === "flip" && d.decision === "accept") {
          this.edges = this.edges.map(([s, t]) =>
            s === d.src && t === d.dst ? [t, s] : [s, t],
          );
        }
      }
      this.phase = "done";
      this.round += 1;
      this.batch = [];
      return json({ phase: this.phase, round: this.round, candidates: [] });
    }
    return json({ detail: "unknown session" }, 404);
  };
}

const node = (id: string) => ({
  id,
  instance: id.split(".")[0],
  metric: "m",
  level: "service_level",
  observed: true,
  description: "",
});

const json = (body: unknown, status = 200) =>
  new Response(JSON.stringify(body), {
    status,
    headers: { "content-type": "application/json" },
  });

function controller(server: FakeServer): ReviewController {
  return new ReviewController(new ReviewApiClient("http://svc", server.fetch));
}

describe("ReviewController", () => {
  it("refuses to submit until every candidate has a decision", async () => {
    const server = new FakeServer();
    const ctl = controller(server);
    await ctl.open("s1");
    expect(ctl.allDecided).toBe(false);
    expect(await ctl.submit()).toBe(false);
    expect(ctl.banner.kind).toBe("error");
    expect(server.posts).toHaveLength(0);
  });

  it("accepting a flip re-renders with the edge direction reversed", async () => {
    const server = new FakeServer();
    const ctl = controller(server);
    await ctl.open("s1");
    ctl.decide(ctl.candidates[0], "accept");
    expect(await ctl.submit()).toBe(true);
    // No optimistic mutation: the reversed edge comes from the re-fetch.
    const edges = ctl.view!.edges.map((e) => [e.src, e.dst]);
    expect(edges).toEqual([["b.m", "a.m"]]);
    expect(ctl.phase).toBe("done");
    expect(ctl.done).toBe(true);
  });

  it("all-reject advances the phase indicator", async () => {
    const server = new FakeServer();
    const ctl = controller(server);
    await ctl.open("s1");
    ctl.rejectAll();
    expect(await ctl.submit()).toBe(true);
    expect(ctl.phase).toBe("done");
    expect(ctl.view!.edges.map((e) => [e.src, e.dst])).toEqual([
      ["a.m", "b.m"],
    ]);
  });

  it("409 reloads candidates and prompts re-review", async () => {
    const server = new FakeServer();
    const ctl = controller(server);
    await ctl.open("s1");
    ctl.rejectAll();
    server.failNextPost = "stale";
    expect(await ctl.submit()).toBe(false);
    expect(ctl.banner.kind).toBe("stale");
    // Candidates were re-fetched and stale decisions discarded.
    expect(ctl.candidates).toHaveLength(1);
    expect(ctl.allDecided).toBe(false);
    expect(ctl.view).not.toBeNull();
  });

  it("network failure preserves decisions locally and retry succeeds", async () => {
    const server = new FakeServer();
    const ctl = controller(server);
    await ctl.open("s1");
    ctl.decide(ctl.candidates[0], "accept");
    server.failNextPost = "network";
    expect(await ctl.submit()).toBe(false);
    expect(ctl.banner).toMatchObject({ kind: "error", retriable: true });
    expect(ctl.pendingRetry).toHaveLength(1);
    expect(await ctl.retry()).toBe(true);
    expect(ctl.pendingRetry).toBeNull();
    expect(ctl.view!.edges.map((e) => [e.src, e.dst])).toEqual([
      ["b.m", "a.m"],
    ]);
  });

  it("404 surfaces an error banner with retry", async () => {
    const bad = new ReviewController(
      new ReviewApiClient("http://svc", async () =>
        json({ detail: "unknown session" }, 404),
      ),
    );
    await bad.open("nope");
    expect(bad.banner).toMatchObject({ kind: "error", retriable: true });
  });
});
