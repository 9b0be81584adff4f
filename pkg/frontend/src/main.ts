// Browser entry point: mounts the review session named in the query string
// (?session=...&api=...) and wires the candidate panel buttons.

import { ReviewApiClient, type Candidate } from "./api.js";
import { ReviewController, candidateKey } from "./review.js";
import { renderCandidatePanel, renderSvg } from "./render.js";

export function mount(root: HTMLElement): void {
  const params = new URLSearchParams(window.location.search);
  const api = new ReviewApiClient(params.get("api") ?? "");
  const ctl = new ReviewController(api);
  const sessionId = params.get("session") ?? "";

  const paint = (): void => {
    const banner =
      ctl.banner.kind === "none"
        ? ""
        : `<div class="banner ${ctl.banner.kind}">${ctl.banner.message}` +
          (ctl.banner.kind === "error" && ctl.banner.retriable
            ? '<button class="retry">retry</button>'
            : "") +
          "</div>";
    root.innerHTML = ctl.view
      ? banner +
        `<div class="graph">${renderSvg(ctl.view)}</div>` +
        `<div class="panel">${renderCandidatePanel(ctl.view)}` +
        '<button class="submit">submit decisions</button></div>'
      : banner || "<p>loading…</p>";
  };

  const byKey = (k: string): Candidate | undefined =>
    ctl.candidates.find((c) => candidateKey(c) === k);

  root.addEventListener("click", (ev) => {
    const el = ev.target as HTMLElement;
    const k = el.dataset.key;
    if (el.classList.contains("accept") && k) {
      const c = byKey(k);
      if (c) ctl.decide(c, "accept");
    } else if (el.classList.contains("reject") && k) {
      const c = byKey(k);
      if (c) ctl.decide(c, "reject");
    } else if (el.classList.contains("submit")) {
      void ctl.submit().then(paint);
    } else if (el.classList.contains("retry")) {
      void (ctl.pendingRetry ? ctl.retry() : ctl.refresh()).then(paint);
    } else if (el.classList.contains("next-phase")) {
      ctl.rejectAll();
      void ctl.submit().then(paint);
    }
  });

  void ctl.open(sessionId).then(paint);
}

if (typeof document !== "undefined") {
  const root = document.getElementById("app");
  if (root) mount(root);
}
