"""Tests for the evaluation harness: F1 scoring and result matrices."""
from __future__ import annotations

import json
import random

import pytest

from causalops import evalharness, simulator
from causalops.agents import MetricNode
from causalops.evalharness import (
    ConstructionMatrix, F1Result, LocalizationMatrix, LocalizationRecord,
    construction_matrix, edge_f1, localization_matrix, rows_to_csv,
    rows_to_markdown, to_json,
)
from causalops.graphbuild import CausalGraph
from causalops.oracle import GroundTruthBackend
from causalops.simulator import ScenarioConfig


def _node(nid):
    inst, _, metric = nid.partition(".")
    return MetricNode(id=nid, instance_id=inst, metric_name=metric or nid,
                      level="service_level", description="", observed=True)


def _graph(edges, extra_nodes=()):
    ids = {n for e in edges for n in e} | set(extra_nodes)
    g = CausalGraph(nodes={n: _node(n) for n in ids})
    for e in edges:
        g.edges[e] = ((),)
    return g


class TestEdgeF1:
    def test_identity(self):
        g = _graph({("a.x", "b.y"), ("b.y", "c.z")})
        res = edge_f1(g, g)
        assert res == F1Result(1.0, 1.0, 1.0, 2, 0, 0)

    def test_reversed_edge_half(self):
        truth = _graph({("a.x", "b.y"), ("b.y", "c.z")})
        pred = _graph({("a.x", "b.y"), ("c.z", "b.y")})
        res = edge_f1(pred, truth)
        assert (res.precision, res.recall, res.f1) == (0.5, 0.5, 0.5)
        assert (res.tp, res.fp, res.fn) == (1, 1, 1)

    def test_empty_predicted(self):
        truth = _graph({("a.x", "b.y")})
        res = edge_f1(_graph(set()), truth)
        assert res.f1 == 0.0 and res.precision == 0.0 and res.recall == 0.0

    def test_both_empty(self):
        res = edge_f1(set(), set())
        assert res.f1 == 0.0  # 0/0 convention

    def test_count_symmetry(self):
        truth = {("a.x", "b.y"), ("b.y", "c.z"), ("c.z", "d.w")}
        pred = {("a.x", "b.y"), ("d.w", "c.z")}
        fwd = edge_f1(pred, truth)
        rev = edge_f1(truth, pred)
        assert fwd.tp == rev.tp
        assert (fwd.fp, fwd.fn) == (rev.fn, rev.fp)

    def test_skeleton_mode(self):
        truth = {("a.x", "b.y"), ("b.y", "c.z")}
        pred = {("b.y", "a.x"), ("c.z", "b.y")}  # both reversed
        assert edge_f1(pred, truth).f1 == 0.0
        assert edge_f1(pred, truth, skeleton=True).f1 == 1.0

    def test_edge_sets_accepted(self):
        assert edge_f1({("a.x", "b.y")}, {("a.x", "b.y")}).f1 == 1.0


def _record(fault="workload_spike", seed=1, ranking=("n1", "n2", "n3", "n4"),
            root="n1", graph="truth", covering=None):
    return LocalizationRecord(
        graph_name=graph, fault=fault, magnitude=2.0, seed=seed,
        root_cause=root, ranking=list(ranking), covering_rank=covering)


class TestLocalizationMatrix:
    def test_rank_and_hits(self):
        r = _record(root="n3")
        assert r.rank() == 3
        assert not r.hit(1) and r.hit(3)

    def test_covering_rank_credit(self):
        r = _record(root="GPU_0.power", covering=2)
        assert r.rank() == 2 and r.hit(3)
        assert _record(root="GPU_0.power", covering=None).rank() is None

    def test_top1_implies_top3(self):
        for root in ("n1", "n2", "n4", "absent"):
            r = _record(root=root)
            assert not r.hit(1) or r.hit(3)

    def test_aggregation_matches_records(self):
        m = LocalizationMatrix()
        recs = [_record(root="n1"), _record(root="n4", seed=2),
                _record(fault="gpu_throttle", root="n2", seed=3)]
        for r in recs:
            m.add(r)
        assert m.top_k_accuracy(3) == pytest.approx(2 / 3)
        assert m.top_k_accuracy(1) == pytest.approx(1 / 3)
        assert m.by_fault(3) == {"gpu_throttle": 1.0,
                                 "workload_spike": pytest.approx(0.5)}
        assert m.by_graph(3) == {"truth": pytest.approx(2 / 3)}
        # Recomputing aggregates from rows matches the matrix exactly.
        rows = m.rows()
        assert sum(r["top3"] for r in rows) / len(rows) == m.top_k_accuracy(3)

    def test_empty_matrix(self):
        m = LocalizationMatrix()
        assert m.top_k_accuracy(3) == 0.0 and m.rows() == []

    def test_zero_seeds_empty_table(self):
        m = localization_matrix("S", {"truth": _graph(set())}, seeds=[])
        assert m.records == []


class TestConstructionMatrix:
    def test_mean_f1_by_stage(self):
        m = ConstructionMatrix()
        m.add("S", "oracle", 0, F1Result(1.0, 1.0, 1.0, 5, 0, 0))
        m.add("S", "oracle", 1, F1Result(1.0, 0.5, 0.5, 3, 0, 3))
        m.add("M", "oracle", 0, F1Result(1.0, 1.0, 1.0, 9, 0, 0))
        assert m.mean_f1("oracle") == pytest.approx((1.0 + 0.5 + 1.0) / 3)
        assert m.mean_f1("oracle", scale="S") == pytest.approx(0.75)
        assert m.mean_f1("missing") == 0.0

    def test_zero_repetitions_empty(self):
        m = construction_matrix(["S"], lambda *a: None, repetitions=0)
        assert m.records == []

    def test_oracle_backend_perfect(self):
        m = construction_matrix(
            ["S"],
            lambda scale, truth_conf, rep: GroundTruthBackend(truth_conf),
            repetitions=1,
        )
        assert m.mean_f1("oracle") == 1.0


class TestOutputFormats:
    ROWS = [{"scale": "S", "stage": "oracle", "f1": 1.0},
            {"scale": "M", "stage": "oracle", "f1": 0.9}]

    def test_to_json_round_trip(self, tmp_path):
        m = LocalizationMatrix()
        m.add(_record())
        path = tmp_path / "out.json"
        text = to_json(m, str(path))
        assert json.loads(text) == m.to_obj()
        assert json.loads(path.read_text()) == m.to_obj()

    def test_rows_to_csv(self, tmp_path):
        path = tmp_path / "out.csv"
        text = rows_to_csv(self.ROWS, str(path))
        lines = text.strip().split("\n")
        assert lines[0] == "scale,stage,f1"
        assert lines[1] == "S,oracle,1.0"
        assert path.read_text() == text
        assert rows_to_csv([]) == ""

    def test_rows_to_markdown(self):
        text = rows_to_markdown(self.ROWS)
        lines = text.strip().split("\n")
        assert lines[0].startswith("|") and "scale" in lines[0]
        assert set(lines[1].replace("|", "").strip()) <= {"-", " ", ":"}
        assert "oracle" in lines[2]
        assert rows_to_markdown([]) == "(no records)\n"


class TestComparativeLocalization:
    def test_random_graph_scores_below_truth(self):
        cfg = ScenarioConfig.for_scenario("S")
        truth = simulator.ground_truth_graphs(
            cfg, simulator.build_topology(cfg)).causal_graph
        # Shuffle edge endpoints (seeded) while keeping the graph acyclic by
        # rewiring each edge between randomly chosen ordered nodes.
        rng = random.Random(13)
        nodes = sorted(truth.nodes)
        shuffled = CausalGraph(nodes=dict(truth.nodes))
        order = {n: i for i, n in enumerate(rng.sample(nodes, len(nodes)))}
        while len(shuffled.edges) < len(truth.edges):
            a, b = rng.sample(nodes, 2)
            src, dst = (a, b) if order[a] < order[b] else (b, a)
            shuffled.edges.setdefault((src, dst), ((),))
        m = localization_matrix(
            "S", {"truth": truth, "random": shuffled}, seeds=[1, 2])
        truth_acc = m.top_k_accuracy(3, graph_name="truth")
        random_acc = m.top_k_accuracy(3, graph_name="random")
        assert random_acc < truth_acc
