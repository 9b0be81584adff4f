"""Evaluation harness: graph construction accuracy and localization scoring.

Edge scoring is on directed edges by default, so a reversed edge costs both a
false positive and a false negative; a skeleton mode compares undirected
adjacency instead.  Result matrices aggregate over fault suites and seeds and
can be written as JSON, CSV, or a markdown table.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

from .graphbuild import CausalGraph


@dataclass(frozen=True)
class F1Result:
    precision: float
    recall: float
    f1: float
    tp: int
    fp: int
    fn: int

    def to_obj(self) -> dict:
        return {
            "precision": self.precision, "recall": self.recall, "f1": self.f1,
            "tp": self.tp, "fp": self.fp, "fn": self.fn,
        }


def edge_f1(predicted: CausalGraph | set, truth: CausalGraph | set,
            skeleton: bool = False) -> F1Result:
    pred = predicted.edge_set() if isinstance(predicted, CausalGraph) else set(predicted)
    true = truth.edge_set() if isinstance(truth, CausalGraph) else set(truth)
    if skeleton:
        pred = {frozenset(e) for e in pred}
        true = {frozenset(e) for e in true}
    tp = len(pred & true)
    fp = len(pred - true)
    fn = len(true - pred)
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return F1Result(precision, recall, f1, tp, fp, fn)


@dataclass
class LocalizationRecord:
    graph_name: str
    fault: str
    magnitude: float
    seed: int
    root_cause: str
    ranking: list[str]
    unobserved_culprits: list[str] = field(default_factory=list)
    # For unobserved root causes: best rank of an observed node covering the
    # culprit through a collapsed edge, per the localization credit rule.
    covering_rank: int | None = None

    def rank(self) -> int | None:
        """1-based rank of the true root cause (via unobserved-culprit credit
        when the root cause is not an observed node), None if absent."""
        try:
            return self.ranking.index(self.root_cause) + 1
        except ValueError:
            return self.covering_rank

    def hit(self, k: int) -> bool:
        r = self.rank()
        return r is not None and r <= k


@dataclass
class LocalizationMatrix:
    records: list[LocalizationRecord] = field(default_factory=list)

    def add(self, record: LocalizationRecord) -> None:
        self.records.append(record)

    def top_k_accuracy(self, k: int, fault: str | None = None,
                       graph_name: str | None = None) -> float:
        recs = [
            r for r in self.records
            if (fault is None or r.fault == fault)
            and (graph_name is None or r.graph_name == graph_name)
        ]
        if not recs:
            return 0.0
        return sum(r.hit(k) for r in recs) / len(recs)

    def by_fault(self, k: int) -> dict[str, float]:
        return {f: self.top_k_accuracy(k, fault=f)
                for f in sorted({r.fault for r in self.records})}

    def by_graph(self, k: int) -> dict[str, float]:
        return {g: self.top_k_accuracy(k, graph_name=g)
                for g in sorted({r.graph_name for r in self.records})}

    def rows(self) -> list[dict]:
        return [
            {
                "graph": r.graph_name, "fault": r.fault, "magnitude": r.magnitude,
                "seed": r.seed, "root_cause": r.root_cause, "rank": r.rank(),
                "top1": r.hit(1), "top3": r.hit(3),
            }
            for r in self.records
        ]

    def to_obj(self) -> dict:
        return {
            "records": self.rows(),
            "top1": self.top_k_accuracy(1),
            "top3": self.top_k_accuracy(3),
            "by_fault_top3": self.by_fault(3),
            "by_graph_top3": self.by_graph(3),
        }


@dataclass
class ConstructionRecord:
    scale: str
    stage: str  # oracle | pre_refinement | post_refinement | pc_baseline
    seed: int
    score: F1Result
    accepted: int = 0
    proposed: int = 0

    def row(self) -> dict:
        return {"scale": self.scale, "stage": self.stage, "seed": self.seed,
                "accepted": self.accepted, "proposed": self.proposed,
                **self.score.to_obj()}


@dataclass
class ConstructionMatrix:
    records: list[ConstructionRecord] = field(default_factory=list)

    def add(self, scale, stage, seed, score: F1Result,
            accepted: int = 0, proposed: int = 0) -> None:
        self.records.append(
            ConstructionRecord(scale, stage, seed, score, accepted, proposed))

    def mean_f1(self, stage: str, scale: str | None = None) -> float:
        recs = [r for r in self.records
                if r.stage == stage and (scale is None or r.scale == scale)]
        if not recs:
            return 0.0
        return sum(r.score.f1 for r in recs) / len(recs)

    def rows(self) -> list[dict]:
        return [r.row() for r in self.records]

    def to_obj(self) -> dict:
        stages = sorted({r.stage for r in self.records})
        return {"records": self.rows(),
                "mean_f1": {s: self.mean_f1(s) for s in stages}}


# ---------------------------------------------------------------------------
# Orchestrators


def localization_matrix(scale: str, graphs: dict[str, CausalGraph],
                        seeds: list[int], symptom: str = "Client.latency",
                        top_k: int = 3) -> LocalizationMatrix:
    """Run the full fault suite for a scenario scale against each graph and
    seed.  Normal/anomalous datasets come from the built-in simulator."""
    from . import localize, simulator

    matrix = LocalizationMatrix()
    for seed in seeds:
        normal = simulator.run(
            simulator.ScenarioConfig.for_scenario(scale, seed=seed)).dataset
        for spec in simulator.scenario_suite(scale):
            anomalous = simulator.run(
                simulator.ScenarioConfig.for_scenario(scale, seed=seed + 1000),
                fault=spec,
            ).dataset
            for name, graph in graphs.items():
                report = localize.distribution_change(
                    graph, normal, anomalous, symptom, seed=seed, top_k=top_k
                )
                matrix.add(LocalizationRecord(
                    graph_name=name, fault=spec.fault, magnitude=spec.magnitude,
                    seed=seed, root_cause=spec.root_cause_node,
                    ranking=report.ranking,
                    unobserved_culprits=[c["node"] for c in report.unobserved_culprits],
                    covering_rank=localize.culprit_rank(
                        graph, report.ranking, spec.root_cause_node),
                ))
    return matrix


def construction_matrix(scales: list[str], backend_factory, repetitions: int,
                        refine_with_truth: bool = False) -> ConstructionMatrix:
    """Build a graph per (scale, repetition) via the pairwise-query pipeline
    and score it against the simulator's ground truth.

    ``backend_factory(scale, truth_confounder, seed)`` returns an answer
    backend; with ``refine_with_truth`` the truth-driven reviewer refines the
    built graph and both stages are recorded.
    """
    from . import agents as agents_mod
    from . import graphbuild, oracle, refine, simulator

    matrix = ConstructionMatrix()
    for scale in scales:
        sim = simulator.run(simulator.ScenarioConfig.for_scenario(scale))
        truth_conf = sim.ground_truth.confounder_graph
        truth_causal = sim.ground_truth.causal_graph
        agents, _, pairs = agents_mod.expand(sim.topology)
        agents_by_id = {a.component.instance_id: a for a in agents}
        for rep in range(repetitions):
            backend = backend_factory(scale, truth_conf, rep)
            verdicts = oracle.resolve_all(pairs, backend, agents_by_id)
            conf = graphbuild.assemble(verdicts)
            causal = graphbuild.collapse(conf)
            if not refine_with_truth:
                matrix.add(scale, "oracle", rep, edge_f1(causal, truth_causal))
                continue
            matrix.add(scale, "pre_refinement", rep, edge_f1(causal, truth_causal))
            data = sim.dataset
            session = refine.RefinementSession(
                graph=causal.copy(), data=data, seed=rep,
                suggested_pairs=refine.suggested_pairs_from_verdicts(verdicts),
            )
            refined = session.run(refine.truth_reviewer(truth_causal))
            matrix.add(scale, "post_refinement", rep, edge_f1(refined, truth_causal),
                       accepted=session.accepted, proposed=session.proposed)
    return matrix


# ---------------------------------------------------------------------------
# Output formats


def to_json(obj, path: str | None = None) -> str:
    payload = obj.to_obj() if hasattr(obj, "to_obj") else obj
    text = json.dumps(payload, indent=2, sort_keys=True)
    if path:
        with open(path, "w") as f:
            f.write(text + "\n")
    return text


def rows_to_csv(rows: list[dict], path: str | None = None) -> str:
    buf = io.StringIO()
    if rows:
        writer = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)
    text = buf.getvalue()
    if path:
        with open(path, "w") as f:
            f.write(text)
    return text


def rows_to_markdown(rows: list[dict]) -> str:
    if not rows:
        return "(no records)\n"
    cols = list(rows[0])
    out = ["| " + " | ".join(cols) + " |",
           "| " + " | ".join("---" for _ in cols) + " |"]
    for row in rows:
        out.append("| " + " | ".join(_cell(row[c]) for c in cols) + " |")
    return "\n".join(out) + "\n"


def _cell(v) -> str:
    if isinstance(v, float):
        return f"{v:.4f}"
    return "" if v is None else str(v)
