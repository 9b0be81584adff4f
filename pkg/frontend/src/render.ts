// String renderers for the graph SVG and the candidate review panel. Kept
// DOM-free so they are testable in node and trivially mountable in a page.

import type { Candidate } from "./api.js";
import {
  NODE_HEIGHT,
  NODE_WIDTH,
  phaseLabel,
  type EdgeView,
  type GraphViewModel,
  type NodeView,
} from "./viewmodel.js";

const esc = (s: string): string =>
  s
    .replaceAll("&", "&amp;")
    .replaceAll("<", "&lt;")
    .replaceAll(">", "&gt;")
    .replaceAll('"', "&quot;");

function center(n: NodeView): [number, number] {
  return [n.x + NODE_WIDTH / 2, n.y + NODE_HEIGHT / 2];
}

function edgeSvg(e: EdgeView, byId: Map<string, NodeView>): string {
  const a = byId.get(e.src);
  const b = byId.get(e.dst);
  if (!a || !b) return "";
  const [x1, y1] = center(a);
  const [x2, y2] = center(b);
  const dash = e.style.dash ? ` stroke-dasharray="${e.style.dash}"` : "";
  const markers =
    e.style.marker === "both"
      ? ' marker-end="url(#arrow)" marker-start="url(#arrow-rev)"'
      : ' marker-end="url(#arrow)"';
  let out =
    `<line class="edge ${e.status}" x1="${x1}" y1="${y1}" x2="${x2}" y2="${y2}"` +
    ` stroke="${e.style.stroke}"${dash}${markers}/>`;
  if (e.collapsed) {
    // Asterisk marker at the midpoint; tooltip lists the unobserved
    // intermediates the edge was collapsed through.
    const mx = (x1 + x2) / 2;
    const my = (y1 + y2) / 2;
    out +=
      `<text class="collapsed-marker" x="${mx}" y="${my}" fill="#dc2626">*` +
      `<title>via unobserved: ${esc(e.collapsedVia.join(", "))}</title></text>`;
  }
  return out;
}

export function renderSvg(vm: GraphViewModel): string {
  const byId = new Map(vm.nodes.map((n) => [n.id, n]));
  const parts: string[] = [];
  for (const box of vm.boxes) {
    parts.push(
      `<g class="component-box" data-component="${esc(box.component)}">` +
        `<rect x="${box.x}" y="${box.y}" width="${box.width}" height="${box.height}"` +
        ` fill="none" stroke="#94a3b8" rx="8"/>` +
        `<text x="${box.x + 6}" y="${box.y - 4}">${esc(box.component)}</text></g>`,
    );
  }
  for (const e of vm.edges) parts.push(edgeSvg(e, byId));
  for (const n of vm.nodes) {
    parts.push(
      `<g class="node${n.observed ? "" : " unobserved"}" data-id="${esc(n.id)}">` +
        `<rect x="${n.x}" y="${n.y}" width="${NODE_WIDTH}" height="${NODE_HEIGHT}"` +
        ` rx="6" fill="#f8fafc" stroke="#334155"/>` +
        `<text x="${n.x + NODE_WIDTH / 2}" y="${n.y + NODE_HEIGHT / 2}"` +
        ` text-anchor="middle">${esc(n.label)}</text></g>`,
    );
  }
  const width = Math.max(...vm.nodes.map((n) => n.x), 0) + NODE_WIDTH + 40;
  const height = Math.max(...vm.nodes.map((n) => n.y), 0) + NODE_HEIGHT + 40;
  return (
    `<svg xmlns="http://www.w3.org/2000/svg" viewBox="-30 -30 ${width} ${height}">` +
    `<defs>` +
    `<marker id="arrow" markerWidth="8" markerHeight="8" refX="7" refY="4" orient="auto">` +
    `<path d="M0,0 L8,4 L0,8 z"/></marker>` +
    `<marker id="arrow-rev" markerWidth="8" markerHeight="8" refX="1" refY="4" orient="auto">` +
    `<path d="M8,0 L0,4 L8,8 z"/></marker>` +
    `</defs>${parts.join("")}</svg>`
  );
}

function evidenceHtml(c: Candidate): string {
  const items = Object.entries(c.evidence)
    .map(
      ([k, v]) =>
        `<dt>${esc(k)}</dt><dd>${esc(
          typeof v === "number" ? v.toPrecision(4) : String(v),
        )}</dd>`,
    )
    .join("");
  return `<dl class="evidence">${items}</dl>`;
}

export function renderCandidatePanel(vm: GraphViewModel): string {
  const header =
    `<div class="phase-indicator" data-phase="${esc(vm.phase)}">` +
    `phase: ${esc(phaseLabel(vm.phase))} · round ${vm.round}</div>`;
  if (vm.phase === "done") {
    return `${header}<p class="phase-complete">review complete</p>`;
  }
  if (!vm.candidates.length) {
    return (
      `${header}<p class="phase-complete">no candidates in this phase</p>` +
      `<button class="next-phase">next phase</button>`
    );
  }
  const items = vm.candidates
    .map((c) => {
      const badge = c.connectivity_changing
        ? '<span class="badge connectivity">changes connectivity</span>'
        : "";
      return (
        `<li class="candidate" data-kind="${esc(c.kind)}" data-rank="${c.rank}">` +
        `<span class="kind">${esc(c.kind)}</span> ` +
        `<span class="edge-ref">${esc(c.src)} &rarr; ${esc(c.dst)}</span>` +
        `${badge}${evidenceHtml(c)}` +
        `<button class="accept" data-key="${esc(`${c.kind}|${c.src}|${c.dst}`)}">accept</button>` +
        `<button class="reject" data-key="${esc(`${c.kind}|${c.src}|${c.dst}`)}">reject</button>` +
        `</li>`
      );
    })
    .join("");
  return `${header}<ol class="candidates">${items}</ol>`;
}
