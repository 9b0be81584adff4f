"""Per-component agents, metric-node enumeration, and candidate pair listing.

Each system component becomes an agent carrying its own description, metric
descriptions, and neighbor list.  Metric nodes are the union of the observed
catalog metrics and the common-metrics corpus entries (marked unobserved).
Candidate pairs are restricted to metrics on the same component or on
components that directly interact.
"""
from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

from .errors import ValidationError
from .ingest import (
    REQUEST,
    RESOURCE,
    SERVICE,
    CommonMetricsCorpus,
    ComponentDescriptor,
    MetricCatalog,
    SystemTopology,
)

REQUEST_INVOKES_SERVICE = "request_invokes_service"
REQUEST_USES_RESOURCE = "request_uses_resource"
SERVICE_USES_RESOURCE = "service_uses_resource"
SERVICE_INVOKES_SERVICE = "service_invokes_service"

SAME_COMPONENT = "same_component"
NEIGHBOR = "neighbor"


@dataclass(frozen=True)
class Interaction:
    kind: str
    caller_id: str
    callee_id: str


@dataclass(frozen=True)
class MetricNode:
    id: str  # "<instance_id>.<metric_name>"
    instance_id: str
    metric_name: str
    level: str
    description: str
    observed: bool


@dataclass
class Agent:
    component: ComponentDescriptor
    own_metrics: list[MetricNode]
    neighbors: list[tuple[Interaction, ComponentDescriptor]]


@dataclass(frozen=True)
class CandidatePair:
    perspective: str  # instance id of the agent whose viewpoint frames the query
    a: MetricNode
    b: MetricNode
    locality: str  # same_component | neighbor
    interaction: Interaction | None = None


def _interaction_kind(caller: ComponentDescriptor, callee: ComponentDescriptor) -> str:
    if caller.component_class == REQUEST:
        return REQUEST_USES_RESOURCE if callee.component_class == RESOURCE else REQUEST_INVOKES_SERVICE
    if callee.component_class == RESOURCE:
        return SERVICE_USES_RESOURCE
    return SERVICE_INVOKES_SERVICE


def instantiate_agents(topology: SystemTopology) -> list[Agent]:
    """One agent per component, with neighbors from callees, resources, and
    (for request-class components) every component on the request path."""
    by_id = {c.instance_id: c for c in topology.components}
    violations = [
        f"request component {c.instance_id!r} may not own resources"
        for c in topology.components
        if c.component_class == REQUEST and c.resources
    ]
    if violations:
        raise ValidationError(violations)

    agents = []
    for c in topology.components:
        neighbor_ids: list[str] = []
        for other in (*c.callees, *c.resources, *c.invoked):
            if other not in neighbor_ids and other != c.instance_id:
                neighbor_ids.append(other)
        neighbors = [
            (Interaction(_interaction_kind(c, by_id[o]), c.instance_id, o), by_id[o])
            for o in neighbor_ids
        ]
        agents.append(
            Agent(
                component=c,
                own_metrics=enumerate_metrics(c, topology.catalog, topology.corpus),
                neighbors=neighbors,
            )
        )
    return agents


def enumerate_metrics(
    component: ComponentDescriptor,
    catalog: MetricCatalog,
    corpus: CommonMetricsCorpus,
) -> list[MetricNode]:
    """Observed catalog metrics first, then corpus metrics not already
    present at the same level and not excluded, marked unobserved."""
    nodes: list[MetricNode] = []
    present: set[tuple[str, str]] = set()
    for m in catalog.for_kind(component.kind):
        nodes.append(
            MetricNode(
                id=f"{component.instance_id}.{m.name}",
                instance_id=component.instance_id,
                metric_name=m.name,
                level=m.level,
                description=m.description,
                observed=True,
            )
        )
        present.add((m.level, m.name))

    corpus_levels = corpus.for_class(component.component_class)
    for level in sorted(corpus_levels):
        for name, description in corpus_levels[level].items():
            if (level, name) in present:
                continue
            if catalog.is_excluded(component.kind, level, name):
                continue
            nodes.append(
                MetricNode(
                    id=f"{component.instance_id}.{name}",
                    instance_id=component.instance_id,
                    metric_name=name,
                    level=level,
                    description=description,
                    observed=False,
                )
            )
            present.add((level, name))
    return nodes


def enumerate_pairs(agents: list[Agent]) -> list[CandidatePair]:
    """All unordered candidate pairs under the locality rule, each once.

    Within-component pairs are emitted from the owning agent's perspective;
    cross-component pairs from the caller side.
    """
    pairs: list[CandidatePair] = []
    metrics_by_id = {a.component.instance_id: a.own_metrics for a in agents}
    for agent in agents:
        for a, b in combinations(agent.own_metrics, 2):
            pairs.append(
                CandidatePair(
                    perspective=agent.component.instance_id,
                    a=a, b=b, locality=SAME_COMPONENT,
                )
            )
    seen: set[frozenset[str]] = set()
    for agent in agents:
        caller_id = agent.component.instance_id
        for interaction, callee in agent.neighbors:
            key = frozenset((caller_id, callee.instance_id))
            if key in seen:
                continue
            seen.add(key)
            for a in metrics_by_id[caller_id]:
                for b in metrics_by_id[callee.instance_id]:
                    pairs.append(
                        CandidatePair(
                            perspective=caller_id,
                            a=a, b=b, locality=NEIGHBOR, interaction=interaction,
                        )
                    )
    return pairs


def expand(topology: SystemTopology) -> tuple[list[Agent], list[MetricNode], list[CandidatePair]]:
    """Agents, all metric nodes (deterministic order), and candidate pairs."""
    agents = instantiate_agents(topology)
    nodes = [n for a in agents for n in a.own_metrics]
    return agents, nodes, enumerate_pairs(agents)


def observed_nodes(topology: SystemTopology) -> list[MetricNode]:
    _, nodes, _ = expand(topology)
    return [n for n in nodes if n.observed]
