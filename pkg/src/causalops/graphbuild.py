"""Graph assembly of pairwise verdicts, unobserved-node collapse, and I/O.

The confounder graph holds observed and unobserved metric nodes.  The causal
graph keeps only observed nodes; an edge a->b exists iff the confounder graph
has a directed path a->...->b whose intermediates are all unobserved, and the
set of such witness paths is recorded per edge (``collapsed_via``).
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

from .agents import CandidatePair, MetricNode
from .errors import AssemblyError, ParseError

A_CAUSES_B = "a_causes_b"
B_CAUSES_A = "b_causes_a"
NONE = "none"

DEFAULT_PATH_CAP = 8


@dataclass
class ConfounderGraph:
    nodes: dict[str, MetricNode] = field(default_factory=dict)
    edges: set[tuple[str, str]] = field(default_factory=set)

    def add_node(self, node: MetricNode) -> None:
        self.nodes.setdefault(node.id, node)

    def add_edge(self, src: str, dst: str) -> None:
        if src == dst:
            raise AssemblyError(f"self loop on {src!r}")
        if src not in self.nodes or dst not in self.nodes:
            missing = src if src not in self.nodes else dst
            raise AssemblyError(f"edge endpoint {missing!r} is not a node")
        self.edges.add((src, dst))

    def successors(self, node_id: str) -> list[str]:
        return sorted(dst for src, dst in self.edges if src == node_id)

    def observed_ids(self) -> list[str]:
        return [nid for nid, n in self.nodes.items() if n.observed]


@dataclass
class CausalGraph:
    nodes: dict[str, MetricNode] = field(default_factory=dict)
    # (src, dst) -> tuple of witness paths; each path is a tuple of unobserved
    # node ids; the empty tuple marks a direct confounder-graph edge.
    edges: dict[tuple[str, str], tuple[tuple[str, ...], ...]] = field(default_factory=dict)

    def edge_set(self) -> set[tuple[str, str]]:
        return set(self.edges)

    def parents(self, node_id: str) -> list[str]:
        return sorted(src for src, dst in self.edges if dst == node_id)

    def children(self, node_id: str) -> list[str]:
        return sorted(dst for src, dst in self.edges if src == node_id)

    def copy(self) -> "CausalGraph":
        return CausalGraph(nodes=dict(self.nodes), edges=dict(self.edges))


def assemble(verdicts) -> ConfounderGraph:
    """Build the confounder graph from (CandidatePair, CausalVerdict) items."""
    g = ConfounderGraph()
    for pair, _ in verdicts:
        g.add_node(pair.a)
        g.add_node(pair.b)
    decided: dict[frozenset[str], str] = {}
    for pair, verdict in verdicts:
        key = frozenset((pair.a.id, pair.b.id))
        oriented = None
        if verdict.relation == A_CAUSES_B:
            oriented = (pair.a.id, pair.b.id)
        elif verdict.relation == B_CAUSES_A:
            oriented = (pair.b.id, pair.a.id)
        marker = NONE if oriented is None else f"{oriented[0]}->{oriented[1]}"
        if key in decided and decided[key] != marker:
            raise AssemblyError(
                f"contradictory verdicts for pair {sorted(key)}: {decided[key]} vs {marker}"
            )
        decided[key] = marker
        if oriented is not None:
            g.add_edge(*oriented)
    return g


def collapse(g: ConfounderGraph, path_cap: int = DEFAULT_PATH_CAP) -> CausalGraph:
    """Delete unobserved nodes while preserving transitive influence.

    Witness paths are simple paths whose intermediates are all unobserved,
    enumerated up to ``path_cap`` intermediate nodes.
    """
    out = CausalGraph(nodes={nid: n for nid, n in g.nodes.items() if n.observed})
    observed = set(out.nodes)
    succ: dict[str, list[str]] = {nid: g.successors(nid) for nid in g.nodes}

    for start in sorted(observed):
        found: dict[str, set[tuple[str, ...]]] = {}
        # DFS over unobserved intermediates only.
        stack: list[tuple[str, tuple[str, ...]]] = [(start, ())]
        while stack:
            cur, path = stack.pop()
            for nxt in succ[cur]:
                if nxt == start:
                    continue
                if nxt in observed:
                    found.setdefault(nxt, set()).add(path)
                elif nxt not in path and len(path) < path_cap:
                    stack.append((nxt, path + (nxt,)))
        for dst, paths in found.items():
            out.edges[(start, dst)] = tuple(sorted(paths))
    return out


def unobserved_cycles(g: ConfounderGraph) -> list[list[str]]:
    """Cycles lying entirely among unobserved nodes (flagged for refinement)."""
    import networkx as nx

    sub = nx.DiGraph()
    unobserved = {nid for nid, n in g.nodes.items() if not n.observed}
    sub.add_nodes_from(unobserved)
    sub.add_edges_from((s, d) for s, d in g.edges if s in unobserved and d in unobserved)
    return [sorted(c) for c in nx.simple_cycles(sub)]


def _node_obj(n: MetricNode) -> dict:
    return {
        "id": n.id,
        "instance": n.instance_id,
        "metric": n.metric_name,
        "level": n.level,
        "observed": n.observed,
        "description": n.description,
    }


def _node_from_obj(obj: dict) -> MetricNode:
    try:
        return MetricNode(
            id=obj["id"],
            instance_id=obj.get("instance", obj["id"].split(".", 1)[0]),
            metric_name=obj.get("metric", obj["id"].split(".", 1)[-1]),
            level=obj.get("level", ""),
            description=obj.get("description", ""),
            observed=bool(obj.get("observed", True)),
        )
    except KeyError as e:
        raise ParseError(f"graph node missing field {e.args[0]!r}")


def export_confounder(g: ConfounderGraph) -> bytes:
    obj = {
        "kind": "confounder",
        "nodes": [_node_obj(g.nodes[nid]) for nid in g.nodes],
        "edges": [{"src": s, "dst": d} for s, d in sorted(g.edges)],
    }
    return json.dumps(obj, indent=2).encode()


def export_causal(g: CausalGraph) -> bytes:
    obj = {
        "kind": "causal",
        "nodes": [_node_obj(g.nodes[nid]) for nid in g.nodes],
        "edges": [
            {
                "src": s,
                "dst": d,
                "collapsed_via": [list(p) for p in via if p],
                "direct": any(p == () for p in via),
            }
            for (s, d), via in sorted(g.edges.items())
        ],
    }
    return json.dumps(obj, indent=2).encode()


def import_graph(data: bytes | str) -> ConfounderGraph | CausalGraph:
    try:
        obj = json.loads(data)
    except json.JSONDecodeError as e:
        raise ParseError(f"malformed graph JSON: {e.msg}")
    if not isinstance(obj, dict) or "nodes" not in obj or "edges" not in obj:
        raise ParseError("graph JSON must carry 'nodes' and 'edges'")
    nodes = {}
    for n in obj["nodes"]:
        node = _node_from_obj(n)
        nodes[node.id] = node
    kind = obj.get("kind", "causal")
    if kind == "confounder":
        g = ConfounderGraph(nodes=nodes)
        for e in obj["edges"]:
            _check_endpoints(e, nodes)
            g.edges.add((e["src"], e["dst"]))
        return g
    cg = CausalGraph(nodes=nodes)
    for e in obj["edges"]:
        _check_endpoints(e, nodes)
        via = tuple(tuple(p) for p in e.get("collapsed_via", []))
        if e.get("direct", not via):
            via = ((),) + via
        cg.edges[(e["src"], e["dst"])] = tuple(sorted(via))
    return cg


def _check_endpoints(e: dict, nodes: dict) -> None:
    for end in ("src", "dst"):
        if e.get(end) not in nodes:
            raise ParseError(f"edge endpoint {e.get(end)!r} is not a declared node")


def to_dot(g: ConfounderGraph | CausalGraph, name: str = "g") -> str:
    lines = [f"digraph {name} {{"]
    for nid in sorted(g.nodes):
        n = g.nodes[nid]
        style = "" if n.observed else ", style=dashed"
        lines.append(f'  "{nid}" [label="{nid}"{style}];')
    if isinstance(g, CausalGraph):
        for (s, d), via in sorted(g.edges.items()):
            collapsed = any(p for p in via)
            extra = ' [label="*"]' if collapsed else ""
            lines.append(f'  "{s}" -> "{d}"{extra};')
    else:
        for s, d in sorted(g.edges):
            lines.append(f'  "{s}" -> "{d}";')
    lines.append("}")
    return "\n".join(lines) + "\n"
