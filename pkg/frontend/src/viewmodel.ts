// View model for the refinement UI: layered DAG layout, component bounding
// boxes, and per-status edge styling. Derived solely from the /graph and
// /candidates responses — no statistical logic lives here.

import type {
  Candidate,
  CandidatesResponse,
  EdgeStatus,
  GraphResponse,
} from "./api.js";

export const NODE_WIDTH = 150;
export const NODE_HEIGHT = 34;
export const LAYER_GAP = 90;
export const ROW_GAP = 24;
export const BOX_PAD = 16;

export interface NodeView {
  id: string;
  label: string;
  component: string; // instance grouping, one bounding box per component
  observed: boolean;
  layer: number;
  x: number;
  y: number;
}

export interface EdgeStyle {
  stroke: string;
  dash: string; // SVG stroke-dasharray, "" for solid
  marker: "arrow" | "both";
}

export interface EdgeView {
  src: string;
  dst: string;
  status: EdgeStatus;
  style: EdgeStyle;
  collapsed: boolean; // went through at least one unobserved node
  collapsedVia: string[]; // unique unobserved intermediates, for the tooltip
}

export interface ComponentBox {
  component: string;
  x: number;
  y: number;
  width: number;
  height: number;
  nodeIds: string[];
}

export interface GraphViewModel {
  phase: string;
  round: number;
  nodes: NodeView[];
  edges: EdgeView[];
  boxes: ComponentBox[];
  candidates: Candidate[];
}

export const EDGE_STYLES: Record<EdgeStatus, EdgeStyle> = {
  confirmed: { stroke: "#334155", dash: "", marker: "arrow" },
  "candidate-remove": { stroke: "#dc2626", dash: "6 3", marker: "arrow" },
  "candidate-flip": { stroke: "#d97706", dash: "6 3", marker: "both" },
  "candidate-add": { stroke: "#16a34a", dash: "2 3", marker: "arrow" },
};

export const PHASE_LABELS: Record<string, string> = {
  edge_screen: "edge screen",
  direction_screen: "direction",
  cycle_resolution: "cycles",
  missed_edges: "additions",
  done: "complete",
};

export function phaseLabel(phase: string): string {
  return PHASE_LABELS[phase] ?? phase;
}

/** Longest-path layering after discarding DFS back edges, so the layout is
 * defined even while cycle-resolution candidates are pending. */
export function assignLayers(
  ids: string[],
  edges: Array<[string, string]>,
): Map<string, number> {
  const out = new Map<string, string[]>();
  for (const id of ids) out.set(id, []);
  const acyclic: Array<[string, string]> = [];
  const state = new Map<string, number>(); // 0 unseen, 1 on stack, 2 done
  const adj = new Map<string, string[]>();
  for (const id of ids) adj.set(id, []);
  for (const [s, d] of edges) adj.get(s)?.push(d);

  const visit = (id: string): void => {
    state.set(id, 1);
    for (const next of adj.get(id) ?? []) {
      if (state.get(next) === 1) continue; // back edge: drop from layout
      acyclic.push([id, next]);
      if (!state.get(next)) visit(next);
    }
    state.set(id, 2);
  };
  for (const id of ids) if (!state.get(id)) visit(id);

  for (const [s, d] of acyclic) out.get(s)!.push(d);
  const layer = new Map<string, number>();
  const indeg = new Map<string, number>();
  for (const id of ids) indeg.set(id, 0);
  for (const [, d] of acyclic) indeg.set(d, (indeg.get(d) ?? 0) + 1);
  const queue = ids.filter((id) => (indeg.get(id) ?? 0) === 0);
  for (const id of queue) layer.set(id, 0);
  while (queue.length) {
    const id = queue.shift()!;
    for (const next of out.get(id) ?? []) {
      layer.set(next, Math.max(layer.get(next) ?? 0, (layer.get(id) ?? 0) + 1));
      indeg.set(next, (indeg.get(next) ?? 1) - 1);
      if (indeg.get(next) === 0) queue.push(next);
    }
  }
  for (const id of ids) if (!layer.has(id)) layer.set(id, 0);
  return layer;
}

/** Median-of-neighbors ordering inside each layer (two sweeps). */
function orderLayers(
  ids: string[],
  edges: Array<[string, string]>,
  layer: Map<string, number>,
): Map<string, number> {
  const byLayer = new Map<number, string[]>();
  for (const id of ids) {
    const l = layer.get(id) ?? 0;
    if (!byLayer.has(l)) byLayer.set(l, []);
    byLayer.get(l)!.push(id);
  }
  const pos = new Map<string, number>();
  for (const members of byLayer.values()) {
    members.sort();
    members.forEach((id, i) => pos.set(id, i));
  }
  const preds = new Map<string, string[]>();
  const succs = new Map<string, string[]>();
  for (const id of ids) {
    preds.set(id, []);
    succs.set(id, []);
  }
  for (const [s, d] of edges) {
    preds.get(d)?.push(s);
    succs.get(s)?.push(d);
  }
  const layersAsc = [...byLayer.keys()].sort((a, b) => a - b);
  const sweep = (order: number[], neighbors: Map<string, string[]>) => {
    for (const l of order) {
      const members = byLayer.get(l)!;
      members.sort((a, b) => {
        const med = (id: string) => {
          const ps = (neighbors.get(id) ?? [])
            .map((n) => pos.get(n) ?? 0)
            .sort((x, y) => x - y);
          return ps.length ? ps[Math.floor(ps.length / 2)] : pos.get(id) ?? 0;
        };
        return med(a) - med(b) || a.localeCompare(b);
      });
      members.forEach((id, i) => pos.set(id, i));
    }
  };
  sweep(layersAsc, preds);
  sweep([...layersAsc].reverse(), succs);
  return pos;
}

export function buildViewModel(
  graphResp: GraphResponse,
  candResp?: CandidatesResponse,
): GraphViewModel {
  const nodes = graphResp.graph.nodes;
  const edges = graphResp.graph.edges;
  const ids = nodes.map((n) => n.id);
  const pairs: Array<[string, string]> = edges.map((e) => [e.src, e.dst]);
  const layer = assignLayers(ids, pairs);
  const pos = orderLayers(ids, pairs, layer);

  const nodeViews: NodeView[] = nodes.map((n) => ({
    id: n.id,
    label: n.id,
    component: n.instance,
    observed: n.observed,
    layer: layer.get(n.id) ?? 0,
    x: (layer.get(n.id) ?? 0) * (NODE_WIDTH + LAYER_GAP),
    y: (pos.get(n.id) ?? 0) * (NODE_HEIGHT + ROW_GAP),
  }));

  const edgeViews: EdgeView[] = edges.map((e) => {
    const via = [...new Set(e.collapsed_via.flat())];
    return {
      src: e.src,
      dst: e.dst,
      status: e.status,
      style: EDGE_STYLES[e.status] ?? EDGE_STYLES.confirmed,
      collapsed: via.length > 0,
      collapsedVia: via,
    };
  });

  const byComponent = new Map<string, NodeView[]>();
  for (const nv of nodeViews) {
    if (!byComponent.has(nv.component)) byComponent.set(nv.component, []);
    byComponent.get(nv.component)!.push(nv);
  }
  const boxes: ComponentBox[] = [...byComponent.entries()].map(
    ([component, members]) => {
      const xs = members.map((m) => m.x);
      const ys = members.map((m) => m.y);
      const x0 = Math.min(...xs) - BOX_PAD;
      const y0 = Math.min(...ys) - BOX_PAD;
      return {
        component,
        x: x0,
        y: y0,
        width: Math.max(...xs) + NODE_WIDTH + BOX_PAD - x0,
        height: Math.max(...ys) + NODE_HEIGHT + BOX_PAD - y0,
        nodeIds: members.map((m) => m.id).sort(),
      };
    },
  );
  boxes.sort((a, b) => a.component.localeCompare(b.component));

  return {
    phase: graphResp.phase,
    round: graphResp.round,
    nodes: nodeViews,
    edges: edgeViews,
    boxes,
    candidates: candResp ? candResp.candidates : [],
  };
}
