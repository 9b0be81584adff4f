// Review session controller: candidate decisions, submission, and the
// stale-batch / network-failure recovery contract. No optimistic mutation:
// graph state only changes after a 200 response is re-fetched.

import {
  ApiError,
  type Candidate,
  type Decision,
  type ReviewApiClient,
} from "./api.js";
import { buildViewModel, type GraphViewModel } from "./viewmodel.js";

export type Banner =
  | { kind: "none" }
  | { kind: "error"; message: string; retriable: boolean }
  | { kind: "stale"; message: string };

function key(c: { kind: string; src: string; dst: string }): string {
  return `${c.kind}|${c.src}|${c.dst}`;
}

export class ReviewController {
  sessionId = "";
  view: GraphViewModel | null = null;
  candidates: Candidate[] = [];
  decisions = new Map<string, "accept" | "reject">();
  banner: Banner = { kind: "none" };
  /** Decisions held locally after a network failure, offered for retry. */
  pendingRetry: Decision[] | null = null;

  constructor(private readonly api: ReviewApiClient) {}

  get phase(): string {
    return this.view?.phase ?? "";
  }

  get done(): boolean {
    return this.phase === "done";
  }

  get allDecided(): boolean {
    return this.candidates.every((c) => this.decisions.has(key(c)));
  }

  async open(sessionId: string): Promise<void> {
    this.sessionId = sessionId;
    await this.refresh();
  }

  async refresh(): Promise<void> {
    try {
      const [graph, cands] = await Promise.all([
        this.api.getGraph(this.sessionId),
        this.api.getCandidates(this.sessionId),
      ]);
      this.candidates = cands.candidates;
      this.view = buildViewModel(graph, cands);
      // Keep only decisions that still refer to a live candidate, so a
      // reload never silently re-applies stale intent.
      const live = new Set(this.candidates.map(key));
      for (const k of [...this.decisions.keys()]) {
        if (!live.has(k)) this.decisions.delete(k);
      }
      this.banner = { kind: "none" };
    } catch (err) {
      if (err instanceof ApiError && err.status === 404) {
        this.banner = {
          kind: "error",
          message: `unknown session: ${err.detail}`,
          retriable: true,
        };
        return;
      }
      throw err;
    }
  }

  decide(c: Candidate, decision: "accept" | "reject"): void {
    this.decisions.set(key(c), decision);
  }

  rejectAll(): void {
    for (const c of this.candidates) this.decisions.set(key(c), "reject");
  }

  private toDecisions(): Decision[] {
    return this.candidates.map((c) => ({
      kind: c.kind,
      src: c.src,
      dst: c.dst,
      decision: this.decisions.get(key(c))!,
    }));
  }

  /** Submit the current batch. Every candidate must carry a decision. */
  async submit(): Promise<boolean> {
    if (!this.allDecided) {
      this.banner = {
        kind: "error",
        message: "every candidate needs a decision before submitting",
        retriable: false,
      };
      return false;
    }
    return this.post(this.toDecisions());
  }

  async retry(): Promise<boolean> {
    if (!this.pendingRetry) return false;
    return this.post(this.pendingRetry);
  }

  private async post(decisions: Decision[]): Promise<boolean> {
    try {
      await this.api.postDecisions(this.sessionId, decisions);
    } catch (err) {
      if (err instanceof ApiError && err.status === 409) {
        // Stale batch: reload candidates; unrelated view state (the graph
        // layout, banner-independent fields) is rebuilt from the server.
        this.pendingRetry = null;
        this.decisions.clear();
        await this.refresh();
        this.banner = {
          kind: "stale",
          message: "candidate batch changed on the server; please re-review",
        };
        return false;
      }
      if (err instanceof ApiError) {
        this.banner = { kind: "error", message: err.detail, retriable: false };
        return false;
      }
      // Network failure: keep the decisions locally and offer a retry.
      this.pendingRetry = decisions;
      this.banner = {
        kind: "error",
        message: "network failure; decisions preserved locally",
        retriable: true,
      };
      return false;
    }
    this.pendingRetry = null;
    this.decisions.clear();
    await this.refresh();
    return true;
  }

  /** Drive the whole session with a scripted decision table (tests and the
   * API-equivalence check); unmatched candidates are rejected, matching the
   * server-side decisions-file reviewer. */
  async runScripted(
    table: Map<string, "accept" | "reject">,
    maxRounds = 200,
  ): Promise<void> {
    for (let i = 0; i < maxRounds && !this.done; i++) {
      if (!this.candidates.length) {
        await this.refresh();
        if (!this.candidates.length) break;
      }
      for (const c of this.candidates) {
        this.decide(c, table.get(key(c)) ?? "reject");
      }
      const ok = await this.submit();
      if (!ok && this.banner.kind === "error") {
        throw new Error(this.banner.message);
      }
    }
  }
}

export { key as candidateKey };
