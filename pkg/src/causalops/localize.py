"""Root-cause localization by Shapley attribution of distribution change.

Each observed node gets a linear-Gaussian mechanism (linear in its graph
parents, empirical residuals) fit separately on normal and anomalous
telemetry.  The worth of a coalition of nodes is how far the symptom's
marginal drifts when exactly those nodes use their anomalous mechanisms
during ancestral sampling, measured as the Gaussian-moment KL divergence
from the all-normal symptom marginal.  Shapley values of that game rank the
nodes; collapsed-edge witness paths around the top-ranked nodes surface
unobserved culprit candidates.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .dataset import TelemetryDataset
from .errors import ValidationError
from .graphbuild import CausalGraph

N_SAMPLES = 2000
EXACT_PLAYER_LIMIT = 8
SAMPLED_PERMUTATIONS = 50
VAR_FLOOR = 1e-12


@dataclass
class Mechanism:
    node: str
    parents: tuple[str, ...]
    intercept: float
    coef: np.ndarray  # aligned with parents
    residuals: np.ndarray  # empirical noise pool
    ridge: bool = False  # rank-deficient parent matrix, ridge fallback used

    def sample(self, parent_values: np.ndarray, noise_idx: np.ndarray) -> np.ndarray:
        out = np.full(noise_idx.shape[0], self.intercept)
        if self.parents:
            out += parent_values @ self.coef
        return out + self.residuals[noise_idx]


@dataclass
class MechanismSet:
    order: tuple[str, ...]  # topological
    mechanisms: dict[str, Mechanism]


@dataclass
class AttributionReport:
    symptom: str
    scores: dict[str, float]  # Shapley value per candidate node
    ranking: list[str]  # descending score
    total_change: float  # v(full coalition); equals sum of scores
    method: str  # exact | sampled
    unobserved_culprits: list[dict] = field(default_factory=list)

    def top(self, k: int) -> list[str]:
        return self.ranking[:k]

    def to_obj(self) -> dict:
        return {
            "symptom": self.symptom,
            "scores": self.scores,
            "ranking": self.ranking,
            "total_change": self.total_change,
            "method": self.method,
            "unobserved_culprits": self.unobserved_culprits,
        }


def _topo_order(graph: CausalGraph) -> list[str]:
    indeg = {n: 0 for n in graph.nodes}
    for _, dst in graph.edges:
        indeg[dst] += 1
    frontier = sorted(n for n, d in indeg.items() if d == 0)
    order = []
    while frontier:
        n = frontier.pop(0)
        order.append(n)
        added = False
        for c in graph.children(n):
            indeg[c] -= 1
            if indeg[c] == 0:
                frontier.append(c)
                added = True
        if added:
            frontier.sort()
    if len(order) != len(graph.nodes):
        raise ValidationError(["graph contains a cycle; localization needs a DAG"])
    return order


def _tie_duplicate_columns(x: np.ndarray, coef: np.ndarray) -> np.ndarray:
    """Average coefficients of byte-identical parent columns.

    The ridge minimizer provably assigns equal weights to exactly duplicated
    regressors; the linear solver loses that property to rounding on the
    ill-conditioned gram matrix, so we restore it explicitly.  This keeps
    exact-Shapley symmetry exact for duplicated players.
    """
    coef = coef.copy()
    k = x.shape[1]
    seen: list[list[int]] = []
    for j in range(k):
        for group in seen:
            if np.array_equal(x[:, group[0]], x[:, j]):
                group.append(j)
                break
        else:
            seen.append([j])
    for group in seen:
        if len(group) > 1:
            coef[group] = coef[group].mean()
    return coef


def fit_mechanisms(graph: CausalGraph, data: TelemetryDataset) -> MechanismSet:
    """Least-squares linear mechanism per node given its graph parents."""
    order = _topo_order(graph)
    missing = [n for n in order if n not in data.columns]
    if missing:
        raise ValidationError([f"column missing from dataset: {m}" for m in missing])
    mech = {}
    for node in order:
        parents = tuple(graph.parents(node))
        y = data.column(node)
        if parents:
            x = np.column_stack([data.column(p) for p in parents])
            design = np.column_stack([np.ones(len(y)), x])
            ridge = np.linalg.matrix_rank(design) < design.shape[1]
            if ridge:
                gram = design.T @ design + 1e-6 * np.eye(design.shape[1])
                beta = np.linalg.solve(gram, design.T @ y)
                beta[1:] = _tie_duplicate_columns(x, beta[1:])
            else:
                beta, *_ = np.linalg.lstsq(design, y, rcond=None)
            resid = y - design @ beta
            mech[node] = Mechanism(node, parents, float(beta[0]), beta[1:], resid, ridge)
        else:
            mu = float(np.mean(y))
            mech[node] = Mechanism(node, parents, mu, np.empty(0), y - mu)
    return MechanismSet(order=tuple(order), mechanisms=mech)


def fit_regime_pair(
    graph: CausalGraph,
    normal_data: TelemetryDataset,
    anomalous_data: TelemetryDataset,
) -> tuple[MechanismSet, MechanismSet]:
    """Mechanism pair with slopes pooled over both regimes and residual pools
    per regime.

    A single linear fit on the stacked datasets captures cross-regime
    dependence (e.g. capacity effects invisible within one regime); each
    regime's mechanism shift then lives entirely in its residual
    distribution, so swapping one node's regime propagates through the
    shared slopes.
    """
    order = _topo_order(graph)
    for ds in (normal_data, anomalous_data):
        missing = [n for n in order if n not in ds.columns]
        if missing:
            raise ValidationError([f"column missing from dataset: {m}" for m in missing])
    mech_n, mech_a = {}, {}
    for node in order:
        parents = tuple(graph.parents(node))
        yn = normal_data.column(node)
        ya = anomalous_data.column(node)
        y = np.concatenate([yn, ya])
        if parents:
            xn = np.column_stack([normal_data.column(p) for p in parents])
            xa = np.column_stack([anomalous_data.column(p) for p in parents])
            design = np.column_stack([np.ones(len(y)), np.vstack([xn, xa])])
            ridge = np.linalg.matrix_rank(design) < design.shape[1]
            if ridge:
                gram = design.T @ design + 1e-6 * np.eye(design.shape[1])
                beta = np.linalg.solve(gram, design.T @ y)
                beta[1:] = _tie_duplicate_columns(design[:, 1:], beta[1:])
            else:
                beta, *_ = np.linalg.lstsq(design, y, rcond=None)
            pred_n = design[: len(yn)] @ beta
            pred_a = design[len(yn):] @ beta
            mech_n[node] = Mechanism(node, parents, float(beta[0]), beta[1:],
                                     yn - pred_n, ridge)
            mech_a[node] = Mechanism(node, parents, float(beta[0]), beta[1:],
                                     ya - pred_a, ridge)
        else:
            mu = float(np.mean(y))
            mech_n[node] = Mechanism(node, parents, mu, np.empty(0), yn - mu)
            mech_a[node] = Mechanism(node, parents, mu, np.empty(0), ya - mu)
    order_t = tuple(order)
    return MechanismSet(order_t, mech_n), MechanismSet(order_t, mech_a)


def _ancestral_symptom(
    normal: MechanismSet,
    anomalous: MechanismSet,
    coalition: frozenset,
    symptom: str,
    noise: dict[str, tuple[np.ndarray, np.ndarray]],
) -> np.ndarray:
    values: dict[str, np.ndarray] = {}
    for node in normal.order:
        if node not in noise:
            continue
        swapped = node in coalition
        m = (anomalous if swapped else normal).mechanisms[node]
        idx = noise[node][1 if swapped else 0]
        if m.parents:
            pv = np.column_stack([values[p] for p in m.parents])
        else:
            pv = np.empty((idx.shape[0], 0))
        values[node] = m.sample(pv, idx)
    return values[symptom]


def _gaussian_kl(mu_p: float, var_p: float, mu_q: float, var_q: float) -> float:
    var_p = max(var_p, VAR_FLOOR)
    var_q = max(var_q, VAR_FLOOR)
    return 0.5 * (var_p / var_q + (mu_p - mu_q) ** 2 / var_q - 1.0 + math.log(var_q / var_p))


class _Game:
    """Coalition worth with common random numbers and memoization."""

    def __init__(self, normal, anomalous, symptom, seed, n_samples):
        self.normal = normal
        self.anomalous = anomalous
        self.symptom = symptom
        # relevant = symptom plus its ancestors; other nodes can't move it.
        anc = {symptom}
        changed = True
        parent_map = {n: normal.mechanisms[n].parents for n in normal.order}
        while changed:
            changed = False
            for n, ps in parent_map.items():
                if n in anc:
                    for p in ps:
                        if p not in anc:
                            anc.add(p)
                            changed = True
        self.relevant = [n for n in normal.order if n in anc]
        rng = np.random.default_rng(seed)
        # Common random numbers: a single uniform draw per sample, shared by
        # every node and both regimes.  Each sample therefore resamples one
        # residual row per regime, which (a) preserves cross-node residual
        # dependence, (b) makes identical mechanism fits yield identical
        # symptom samples (v == 0 exactly on identical data), and (c) makes
        # byte-identical players exactly symmetric under the game.
        u = rng.random(n_samples)
        self.noise = {}
        for node in self.relevant:
            pool_n = max(1, len(normal.mechanisms[node].residuals))
            pool_a = max(1, len(anomalous.mechanisms[node].residuals))
            self.noise[node] = (
                (u * pool_n).astype(np.int64),
                (u * pool_a).astype(np.int64),
            )
        base = _ancestral_symptom(normal, anomalous, frozenset(), symptom, self.noise)
        self.mu0 = float(np.mean(base))
        self.var0 = float(np.var(base))
        self._memo: dict[frozenset, float] = {}

    def worth(self, coalition: frozenset) -> float:
        coalition = coalition & set(self.relevant)
        if coalition in self._memo:
            return self._memo[coalition]
        s = _ancestral_symptom(
            self.normal, self.anomalous, coalition, self.symptom, self.noise
        )
        v = _gaussian_kl(float(np.mean(s)), float(np.var(s)), self.mu0, self.var0)
        self._memo[coalition] = v
        return v


def _shapley_exact(game: _Game, players: list[str]) -> dict[str, float]:
    n = len(players)
    values = {p: 0.0 for p in players}
    fact = [math.factorial(i) for i in range(n + 1)]
    for p in players:
        rest = [q for q in players if q != p]
        for k in range(n):
            w = fact[k] * fact[n - k - 1] / fact[n]
            for subset in combinations(rest, k):
                s = frozenset(subset)
                values[p] += w * (game.worth(s | {p}) - game.worth(s))
    return values


def _shapley_sampled(game: _Game, players: list[str], seed: int,
                     n_perms: int = SAMPLED_PERMUTATIONS) -> dict[str, float]:
    rng = np.random.default_rng(seed + 1)
    values = {p: 0.0 for p in players}
    for _ in range(n_perms):
        perm = list(rng.permutation(players))
        acc: frozenset = frozenset()
        prev = game.worth(acc)
        for p in perm:
            acc = acc | {p}
            cur = game.worth(acc)
            values[p] += cur - prev
            prev = cur
    total = game.worth(frozenset(players))
    for p in players:
        values[p] /= n_perms
    # Redistribute the sampling gap so efficiency holds for sampled mode too.
    err = (total - sum(values.values())) / max(1, len(players))
    for p in players:
        values[p] += err
    return values


def distribution_change(
    graph: CausalGraph,
    normal_data: TelemetryDataset,
    anomalous_data: TelemetryDataset,
    symptom: str,
    permutations: int = SAMPLED_PERMUTATIONS,
    seed: int = 0,
    n_samples: int = N_SAMPLES,
    top_k: int = 3,
) -> AttributionReport:
    """Shapley attribution of the symptom's distribution shift to graph
    nodes."""
    if symptom not in graph.nodes:
        raise ValidationError([f"symptom {symptom!r} is not a graph node"])
    if anomalous_data.n_rows == 0:
        raise ValidationError(["anomalous dataset is empty"])
    if normal_data.columns != anomalous_data.columns:
        raise ValidationError(["normal and anomalous datasets must share columns"])
    normal, anomalous = fit_regime_pair(graph, normal_data, anomalous_data)
    game = _Game(normal, anomalous, symptom, seed, n_samples)
    players = list(game.relevant)
    if len(players) <= EXACT_PLAYER_LIMIT:
        values = _shapley_exact(game, players)
        method = "exact"
    else:
        values = _shapley_sampled(game, players, seed, permutations)
        method = "sampled"
    # Scores are reported non-negative; near-zero negatives only arise from
    # sampling noise on null contributors.
    scores = {p: float(max(0.0, values[p])) for p in players}
    ranking = sorted(players, key=lambda p: (-scores[p], p))
    report = AttributionReport(
        symptom=symptom,
        scores=scores,
        ranking=ranking,
        total_change=game.worth(frozenset(players)),
        method=method,
    )
    report.unobserved_culprits = report_unobserved(graph, ranking[:top_k])
    return report


def culprit_rank(graph: CausalGraph, ranking: list[str], unobserved_id: str) -> int | None:
    """Best 1-based rank of an observed node with an incident collapsed edge
    whose witness path contains ``unobserved_id``."""
    covering = set()
    for (src, dst), via in graph.edges.items():
        if any(unobserved_id in path for path in via):
            covering.update((src, dst))
    for i, node in enumerate(ranking):
        if node in covering:
            return i + 1
    return None


def report_unobserved(graph: CausalGraph, top_nodes: list[str]) -> list[dict]:
    """Unobserved nodes sitting on witness paths of edges touching the
    top-ranked nodes."""
    seen: dict[str, dict] = {}
    top = set(top_nodes)
    for (src, dst), via in sorted(graph.edges.items()):
        if src not in top and dst not in top:
            continue
        for path in via:
            for node in path:
                entry = seen.setdefault(
                    node, {"node": node, "edges": [], "paths": []}
                )
                edge = [src, dst]
                if edge not in entry["edges"]:
                    entry["edges"].append(edge)
                p = list(path)
                if p not in entry["paths"]:
                    entry["paths"].append(p)
    return [seen[k] for k in sorted(seen)]
