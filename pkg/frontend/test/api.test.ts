import { describe, expect, it } from "vitest";
import { ApiError, ReviewApiClient, type FetchLike } from "../src/api.js";

function fakeFetch(
  handler: (url: string, init?: RequestInit) => { status: number; body: unknown },
): { fetch: FetchLike; calls: Array<{ url: string; init?: RequestInit }> } {
  const calls: Array<{ url: string; init?: RequestInit }> = [];
  const fetch: FetchLike = async (url, init) => {
    calls.push({ url, init });
    const { status, body } = handler(url, init);
    return new Response(
      typeof body === "string" ? body : JSON.stringify(body),
      { status, headers: { "content-type": "application/json" } },
    );
  };
  return { fetch, calls };
}

describe("ReviewApiClient", () => {
  it("creates a session with a JSON POST", async () => {
    const { fetch, calls } = fakeFetch(() => ({
      status: 201,
      body: { session_id: "abc", created_at: "t" },
    }));
    const client = new ReviewApiClient("http://svc", fetch);
    const info = await client.createSession({
      graph_path: "/g.json",
      dataset_path: "/d.csv",
      seed: 3,
    });
    expect(info.session_id).toBe("abc");
    expect(calls[0].url).toBe("http://svc/sessions");
    expect(calls[0].init?.method).toBe("POST");
    expect(JSON.parse(calls[0].init?.body as string)).toEqual({
      graph_path: "/g.json",
      dataset_path: "/d.csv",
      seed: 3,
    });
  });

  it("maps non-2xx responses to ApiError with the server detail", async () => {
    const { fetch } = fakeFetch(() => ({
      status: 404,
      body: { detail: "unknown session" },
    }));
    const client = new ReviewApiClient("http://svc", fetch);
    const err = await client.getGraph("nope").catch((e) => e);
    expect(err).toBeInstanceOf(ApiError);
    expect(err.status).toBe(404);
    expect(err.detail).toBe("unknown session");
  });

  it("serializes decisions as a bare JSON array", async () => {
    const { fetch, calls } = fakeFetch(() => ({
      status: 200,
      body: { phase: "edge_screen", round: 1, candidates: [] },
    }));
    const client = new ReviewApiClient("http://svc", fetch);
    await client.postDecisions("s1", [
      { kind: "remove", src: "a", dst: "b", decision: "reject" },
    ]);
    const sent = JSON.parse(calls[0].init?.body as string);
    expect(Array.isArray(sent)).toBe(true);
    expect(sent[0].decision).toBe("reject");
  });

  it("builds attribution query parameters", async () => {
    const { fetch, calls } = fakeFetch(() => ({
      status: 200,
      body: { symptom: "s", method: "exact", total_change: 0, ranking: [] },
    }));
    const client = new ReviewApiClient("http://svc", fetch);
    await client.getAttribution("s1", {
      symptom: "Client.latency",
      normal: "/n.csv",
      anomalous: "/a.csv",
      topk: 3,
    });
    const url = new URL(calls[0].url);
    expect(url.pathname).toBe("/sessions/s1/attribution");
    expect(url.searchParams.get("symptom")).toBe("Client.latency");
    expect(url.searchParams.get("topk")).toBe("3");
  });

  it("healthz returns plain text", async () => {
    const fetch: FetchLike = async () => new Response("ok", { status: 200 });
    const client = new ReviewApiClient("http://svc", fetch);
    expect(await client.healthz()).toBe("ok");
  });
});
