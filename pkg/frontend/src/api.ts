// Typed client for the causal review service HTTP API. The UI is a pure
// client of this API: all statistical logic stays on the server.

export type EdgeStatus =
  | "confirmed"
  | "candidate-remove"
  | "candidate-flip"
  | "candidate-add";

export interface GraphNode {
  id: string;
  instance: string;
  metric: string;
  level: string;
  observed: boolean;
  description: string;
}

export interface GraphEdge {
  src: string;
  dst: string;
  collapsed_via: string[][];
  direct: boolean;
  status: EdgeStatus;
}

export interface Graph {
  kind: string;
  nodes: GraphNode[];
  edges: GraphEdge[];
}

export interface GraphResponse {
  graph: Graph;
  phase: string;
  round: number;
}

export interface Candidate {
  kind: string; // remove | flip | add | cut
  src: string;
  dst: string;
  evidence: Record<string, unknown>;
  connectivity_changing: boolean;
  rank: number;
}

export interface CandidatesResponse {
  phase: string;
  candidates: Candidate[];
}

export interface DecisionsResponse extends CandidatesResponse {
  round: number;
}

export interface Decision {
  kind: string;
  src: string;
  dst: string;
  decision: "accept" | "reject";
}

export interface SessionInfo {
  session_id: string;
  created_at: string;
}

export interface AttributionEntry {
  node: string;
  score: number;
  rank: number;
}

export interface AttributionReport {
  symptom: string;
  method: string;
  total_change: number;
  ranking: AttributionEntry[];
  [key: string]: unknown;
}

export class ApiError extends Error {
  constructor(
    public readonly status: number,
    public readonly detail: string,
  ) {
    super(`HTTP ${status}: ${detail}`);
    this.name = "ApiError";
  }
}

export type FetchLike = (
  url: string,
  init?: RequestInit,
) => Promise<Response>;

async function raiseForStatus(resp: Response): Promise<void> {
  if (resp.ok) return;
  let detail = resp.statusText;
  try {
    const body = await resp.json();
    if (body && typeof body.detail === "string") detail = body.detail;
    else if (body) detail = JSON.stringify(body.detail ?? body);
  } catch {
    /* non-JSON error body; keep statusText */
  }
  throw new ApiError(resp.status, detail);
}

export class ReviewApiClient {
  constructor(
    private readonly baseUrl: string,
    private readonly fetchImpl: FetchLike = (url, init) => fetch(url, init),
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const resp = await this.fetchImpl(this.baseUrl + path, init);
    await raiseForStatus(resp);
    return (await resp.json()) as T;
  }

  async healthz(): Promise<string> {
    const resp = await this.fetchImpl(this.baseUrl + "/healthz");
    await raiseForStatus(resp);
    return resp.text();
  }

  createSession(body: {
    graph_path: string;
    dataset_path: string;
    alpha?: number;
    seed?: number;
  }): Promise<SessionInfo> {
    return this.request("/sessions", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(body),
    });
  }

  getGraph(sessionId: string): Promise<GraphResponse> {
    return this.request(`/sessions/${sessionId}/graph`);
  }

  getCandidates(sessionId: string): Promise<CandidatesResponse> {
    return this.request(`/sessions/${sessionId}/candidates`);
  }

  postDecisions(
    sessionId: string,
    decisions: Decision[],
  ): Promise<DecisionsResponse> {
    return this.request(`/sessions/${sessionId}/decisions`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(decisions),
    });
  }

  getAttribution(
    sessionId: string,
    params: {
      symptom: string;
      normal: string;
      anomalous: string;
      topk?: number;
      seed?: number;
    },
  ): Promise<AttributionReport> {
    const q = new URLSearchParams();
    q.set("symptom", params.symptom);
    q.set("normal", params.normal);
    q.set("anomalous", params.anomalous);
    if (params.topk !== undefined) q.set("topk", String(params.topk));
    if (params.seed !== undefined) q.set("seed", String(params.seed));
    return this.request(`/sessions/${sessionId}/attribution?${q}`);
  }
}
