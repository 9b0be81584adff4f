"""Data-driven human-in-the-loop graph refinement.

Four phases run in order: screen edges against Markov blankets, screen
directions with the additive noise model, cut remaining cycles with a minimal
feedback arc set, then suggest missed connections.  Each phase proposes
batches of at most five candidates; accepted candidates mutate the graph and
a fully rejected (or empty) batch advances the phase.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from itertools import combinations

import networkx as nx

from . import stats
from .dataset import TelemetryDataset
from .errors import ConflictError
from .graphbuild import CausalGraph
from .oracle import CausalVerdict

REMOVE_EDGE = "remove_edge"
FLIP_EDGE = "flip_edge"
CUT_FOR_CYCLE = "cut_for_cycle"
ADD_EDGE = "add_edge"

EDGE_SCREEN = "edge_screen"
DIRECTION_SCREEN = "direction_screen"
CYCLE_RESOLUTION = "cycle_resolution"
MISSED_EDGES = "missed_edges"
DONE = "done"

PHASES = (EDGE_SCREEN, DIRECTION_SCREEN, CYCLE_RESOLUTION, MISSED_EDGES, DONE)

ACCEPT = "accept"
REJECT = "reject"

BATCH_SIZE = 5


@dataclass(frozen=True)
class Candidate:
    kind: str
    edge: tuple[str, str]
    evidence: dict
    connectivity_changing: bool
    rank: int
    direction_known: bool = True

    def ref(self) -> dict:
        return {"kind": self.kind, "src": self.edge[0], "dst": self.edge[1]}


@dataclass
class Verdict:
    candidate: Candidate
    decision: str  # accept | reject
    source: str = "interactive"  # interactive | file | auto_truth


@dataclass
class RefinementSession:
    graph: CausalGraph
    data: TelemetryDataset
    alpha: float = stats.DEFAULT_ALPHA
    anm_margin: float = 1.5
    anm_permutations: int = 200
    seed: int = 0
    # Pairs the oracle left as low-confidence "none"; boosted as additions.
    suggested_pairs: list[tuple[str, str]] = field(default_factory=list)
    phase: str = EDGE_SCREEN
    round_no: int = 0
    history: list[dict] = field(default_factory=list)
    proposed: int = 0
    accepted: int = 0
    _rejected: set[tuple[str, str, str]] = field(default_factory=set)
    _current: list[Candidate] = field(default_factory=list)
    _blankets: dict[str, set[str]] | None = None

    # -- candidate computation ------------------------------------------------

    def _markov_blankets(self) -> dict[str, set[str]]:
        if self._blankets is None:
            self._blankets = {
                n: stats.markov_blanket(self.data, n, self.alpha).members
                for n in sorted(self.graph.nodes)
                if n in self.data.columns
            }
        return self._blankets

    def _is_bridge(self, edge: tuple[str, str]) -> bool:
        und = nx.Graph()
        und.add_nodes_from(self.graph.nodes)
        und.add_edges_from(self.graph.edge_set())
        u, v = edge
        if not und.has_edge(u, v):
            return False
        return (u, v) in set(nx.bridges(und)) or (v, u) in set(nx.bridges(und))

    def _order_batch(self, items: list[tuple[Candidate, float]]) -> list[Candidate]:
        # connectivity-changing first, then by evidence key ascending.
        items.sort(key=lambda it: (not it[0].connectivity_changing, it[1], it[0].edge))
        batch = []
        for i, (cand, _) in enumerate(items[:BATCH_SIZE]):
            batch.append(
                Candidate(
                    kind=cand.kind, edge=cand.edge, evidence=cand.evidence,
                    connectivity_changing=cand.connectivity_changing, rank=i,
                    direction_known=cand.direction_known,
                )
            )
        return batch

    def _not_rejected(self, kind: str, edge: tuple[str, str]) -> bool:
        return (kind, *edge) not in self._rejected

    def propose_edge_removals(self) -> list[Candidate]:
        blankets = self._markov_blankets()
        items = []
        for u, v in sorted(self.graph.edge_set()):
            if u not in self.data.columns or v not in self.data.columns:
                continue
            if stats.is_degenerate(self.data, u) or stats.is_degenerate(self.data, v):
                continue
            if v in blankets.get(u, set()) or u in blankets.get(v, set()):
                continue
            if not self._not_rejected(REMOVE_EDGE, (u, v)):
                continue
            res = stats.ci_test(self.data, u, v, (), self.alpha)
            cand = Candidate(
                kind=REMOVE_EDGE, edge=(u, v),
                evidence={"p_value": res.p_value},
                connectivity_changing=self._is_bridge((u, v)), rank=0,
            )
            # Weakest dependence (largest p-value) first.
            items.append((cand, -res.p_value))
        return self._order_batch(items)

    def propose_direction_flips(self) -> list[Candidate]:
        items = []
        for u, v in sorted(self.graph.edge_set()):
            if u not in self.data.columns or v not in self.data.columns:
                continue
            if not self._not_rejected(FLIP_EDGE, (u, v)):
                continue
            if stats.is_degenerate(self.data, u) or stats.is_degenerate(self.data, v):
                continue
            judgment = stats.anm_direction(
                self.data, u, v, self.anm_margin, self.anm_permutations, self.seed
            )
            if judgment.preferred != stats.Y_TO_X:
                continue
            strength = (judgment.score_backward + 1e-9) / (judgment.score_forward + 1e-9)
            cand = Candidate(
                kind=FLIP_EDGE, edge=(u, v),
                evidence={
                    "score_forward": judgment.score_forward,
                    "score_backward": judgment.score_backward,
                },
                connectivity_changing=self._is_bridge((u, v)), rank=0,
            )
            items.append((cand, -strength))
        return self._order_batch(items)

    def resolve_cycles(self) -> list[Candidate]:
        g = nx.DiGraph()
        g.add_nodes_from(self.graph.nodes)
        g.add_edges_from(self.graph.edge_set())
        if nx.is_directed_acyclic_graph(g):
            return []
        cut = minimum_feedback_arc_set(g)
        items = []
        for u, v in sorted(cut):
            if not self._not_rejected(CUT_FOR_CYCLE, (u, v)):
                continue
            items.append(
                (
                    Candidate(
                        kind=CUT_FOR_CYCLE, edge=(u, v),
                        evidence={"cycle": True},
                        connectivity_changing=self._is_bridge((u, v)), rank=0,
                    ),
                    0.0,
                )
            )
        return self._order_batch(items)

    def propose_additions(self) -> list[Candidate]:
        blankets = self._markov_blankets()
        g = nx.DiGraph()
        g.add_nodes_from(self.graph.nodes)
        g.add_edges_from(self.graph.edge_set())
        suggested = {frozenset(p) for p in self.suggested_pairs}
        items = []
        seen: set[frozenset] = set()
        for t in sorted(blankets):
            for m in sorted(blankets[t]):
                key = frozenset((t, m))
                if key in seen or m not in self.graph.nodes:
                    continue
                seen.add(key)
                if g.has_edge(t, m) or g.has_edge(m, t):
                    continue
                if nx.has_path(g, t, m) or nx.has_path(g, m, t):
                    continue  # only additions that create new connectivity
                judgment = stats.anm_direction(
                    self.data, m, t, self.anm_margin, self.anm_permutations, self.seed
                )
                if judgment.preferred == stats.X_TO_Y:
                    edge, known = (m, t), True
                elif judgment.preferred == stats.Y_TO_X:
                    edge, known = (t, m), True
                else:
                    edge, known = (m, t), False
                if not self._not_rejected(ADD_EDGE, edge):
                    continue
                res = stats.ci_test(self.data, t, m, (), self.alpha)
                boosted = key in suggested
                cand = Candidate(
                    kind=ADD_EDGE, edge=edge,
                    evidence={"p_value": res.p_value, "suggested": boosted},
                    connectivity_changing=True, rank=0, direction_known=known,
                )
                items.append((cand, (0 if boosted else 1, res.p_value)))
        return self._order_batch(items)

    # -- round protocol -------------------------------------------------------

    def current_candidates(self) -> list[Candidate]:
        """Candidates of the current round, advancing phases past empty
        batches."""
        while self.phase != DONE:
            if self._current:
                return self._current
            batch = self._compute_batch()
            if batch:
                self._current = batch
                self.proposed += len(batch)
                return batch
            self._advance()
        return []

    def _compute_batch(self) -> list[Candidate]:
        if self.phase == EDGE_SCREEN:
            return self.propose_edge_removals()
        if self.phase == DIRECTION_SCREEN:
            return self.propose_direction_flips()
        if self.phase == CYCLE_RESOLUTION:
            return self.resolve_cycles()
        if self.phase == MISSED_EDGES:
            return self.propose_additions()
        return []

    def _advance(self) -> None:
        idx = PHASES.index(self.phase)
        self.phase = PHASES[min(idx + 1, len(PHASES) - 1)]

    def apply_verdicts(self, verdicts: list[Verdict]) -> None:
        batch = self.current_candidates()
        if not batch:
            return
        by_ref = {(c.kind, *c.edge): c for c in batch}
        covered = set()
        for v in verdicts:
            ref = (v.candidate.kind, *v.candidate.edge)
            if ref not in by_ref:
                raise ConflictError(f"verdict references stale candidate {ref}")
            covered.add(ref)
        missing = set(by_ref) - covered
        if missing:
            raise ConflictError(f"verdicts do not cover candidates {sorted(missing)}")

        self.round_no += 1
        accepted_any = False
        for v in verdicts:
            if v.decision == ACCEPT:
                self._apply(v.candidate)
                self.accepted += 1
                accepted_any = True
            else:
                self._rejected.add((v.candidate.kind, *v.candidate.edge))
        self.history.append(
            {
                "round": self.round_no,
                "phase": self.phase,
                "candidates": [c.ref() for c in batch],
                "decisions": [
                    {**v.candidate.ref(), "decision": v.decision, "source": v.source}
                    for v in verdicts
                ],
            }
        )
        self._current = []
        self._blankets = None if accepted_any else self._blankets
        if not accepted_any:
            self._advance()

    def _apply(self, c: Candidate) -> None:
        u, v = c.edge
        if c.kind in (REMOVE_EDGE, CUT_FOR_CYCLE):
            self.graph.edges.pop((u, v), None)
        elif c.kind == FLIP_EDGE:
            via = self.graph.edges.pop((u, v), ((),))
            self.graph.edges[(v, u)] = via
        elif c.kind == ADD_EDGE:
            self.graph.edges.setdefault((u, v), ((),))

    def run(self, reviewer, max_rounds: int = 50) -> CausalGraph:
        """Drive the session to completion with a reviewer callable
        (batch -> list of Verdict)."""
        for _ in range(max_rounds):
            batch = self.current_candidates()
            if not batch:
                break
            self.apply_verdicts(reviewer(batch))
        return self.graph

    def to_obj(self) -> dict:
        return {
            "phase": self.phase,
            "round": self.round_no,
            "proposed": self.proposed,
            "accepted": self.accepted,
            "history": self.history,
        }


# ---------------------------------------------------------------------------
# Reviewers


def all_reject_reviewer(batch: list[Candidate]) -> list[Verdict]:
    return [Verdict(c, REJECT, "interactive") for c in batch]


def truth_reviewer(truth: CausalGraph):
    """Accepts exactly the candidates that move the graph toward ``truth``."""
    true_edges = truth.edge_set()

    def review(batch: list[Candidate]) -> list[Verdict]:
        out = []
        for c in batch:
            u, v = c.edge
            if c.kind in (REMOVE_EDGE, CUT_FOR_CYCLE):
                ok = (u, v) not in true_edges
            elif c.kind == FLIP_EDGE:
                ok = (v, u) in true_edges and (u, v) not in true_edges
            else:
                ok = (u, v) in true_edges or (not c.direction_known and (v, u) in true_edges)
            out.append(Verdict(c, ACCEPT if ok else REJECT, "auto_truth"))
        return out

    return review


def file_reviewer(decisions: list[dict]):
    """Decisions file reviewer: JSON list of {kind, src, dst, decision};
    unmatched candidates are rejected."""
    table = {
        (d["kind"], d["src"], d["dst"]): d["decision"] for d in decisions
    }

    def review(batch: list[Candidate]) -> list[Verdict]:
        return [
            Verdict(
                c,
                table.get((c.kind, *c.edge), REJECT),
                "file",
            )
            for c in batch
        ]

    return review


def load_decisions_file(path: str) -> list[dict]:
    with open(path) as f:
        return json.load(f)


# ---------------------------------------------------------------------------
# Feedback arc set


def minimum_feedback_arc_set(g: nx.DiGraph, exact_limit: int = 10) -> set[tuple[str, str]]:
    """Union of per-SCC minimal feedback arc sets: exact by enumeration for
    small components, greedy ordering heuristic otherwise."""
    cut: set[tuple[str, str]] = set()
    for comp in nx.strongly_connected_components(g):
        if len(comp) < 2:
            continue
        sub = g.subgraph(comp).copy()
        edges = list(sub.edges())
        if len(edges) <= exact_limit:
            cut |= _exact_fas(sub, edges)
        else:
            cut |= _greedy_fas(sub)
    return cut


def _exact_fas(g: nx.DiGraph, edges) -> set[tuple[str, str]]:
    for size in range(1, len(edges) + 1):
        for subset in combinations(edges, size):
            h = g.copy()
            h.remove_edges_from(subset)
            if nx.is_directed_acyclic_graph(h):
                return set(subset)
    return set(edges)


def _greedy_fas(g: nx.DiGraph) -> set[tuple[str, str]]:
    # Eades-Lin-Smyth greedy vertex ordering; back edges form the arc set.
    h = g.copy()
    left: list = []
    right: list = []
    while h.nodes:
        changed = True
        while changed:
            changed = False
            for n in sorted(h.nodes):
                if h.out_degree(n) == 0:
                    right.insert(0, n)
                    h.remove_node(n)
                    changed = True
                    break
            for n in sorted(h.nodes):
                if h.in_degree(n) == 0:
                    left.append(n)
                    h.remove_node(n)
                    changed = True
                    break
        if h.nodes:
            n = max(sorted(h.nodes), key=lambda v: h.out_degree(v) - h.in_degree(v))
            left.append(n)
            h.remove_node(n)
    order = {n: i for i, n in enumerate(left + right)}
    return {(u, v) for u, v in g.edges() if order[u] > order[v]}


def suggested_pairs_from_verdicts(verdicts: list[tuple]) -> list[tuple[str, str]]:
    """Low-confidence ``none`` verdicts, surfaced as addition suggestions."""
    out = []
    for pair, verdict in verdicts:
        if isinstance(verdict, CausalVerdict) and verdict.low_confidence:
            out.append((pair.a.id, pair.b.id))
    return out
