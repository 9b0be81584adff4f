"""Parsing of the three input artifacts into a SystemTopology.

The inputs are three JSON files: a trace digest (components, descriptions,
callees, resources), a measurement catalog keyed by component kind, and a
corpus of common metrics per component class.
"""
from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field

from .errors import ParseError, ValidationError

log = logging.getLogger(__name__)

REQUEST = "request"
SERVICE = "service"
RESOURCE = "resource"

LEVELS = ("request_level", "service_level", "resource_level")

_TRAILING_DIGITS = re.compile(r"_\d+$")


def kind_of(instance_id: str) -> str:
    """Instance id minus trailing "_<digits>", per dash-separated segment.

    "Queue_0" -> "Queue"; "Router-Queue_0" -> "Router-Queue";
    "ModelInference_0-Client" -> "ModelInference-Client".
    """
    parts = instance_id.split("-")
    return "-".join(_TRAILING_DIGITS.sub("", p) for p in parts)


@dataclass(frozen=True)
class ComponentDescriptor:
    instance_id: str
    kind: str
    component_class: str  # request | service | resource
    description: str
    resources: dict[str, str] = field(default_factory=dict)
    callees: tuple[str, ...] = ()
    # For request-class components: every component on the request's dotted
    # path, in file order.  Empty for service/resource components.
    invoked: tuple[str, ...] = ()


@dataclass(frozen=True)
class MetricDescriptor:
    component_kind: str
    level: str
    name: str
    description: str
    observed: bool = True


@dataclass
class MetricCatalog:
    """All metric descriptors plus per-kind exclusions."""

    metrics: list[MetricDescriptor] = field(default_factory=list)
    # kind -> level -> set of excluded metric names
    exclusions: dict[str, dict[str, set[str]]] = field(default_factory=dict)

    def for_kind(self, kind: str) -> list[MetricDescriptor]:
        return [m for m in self.metrics if m.component_kind == kind]

    def is_excluded(self, kind: str, level: str, name: str) -> bool:
        return name in self.exclusions.get(kind, {}).get(level, set())

    def to_obj(self) -> dict:
        out: dict = {}
        for m in self.metrics:
            out.setdefault(m.component_kind, {}).setdefault(m.level, {})[m.name] = m.description
        for kind, levels in self.exclusions.items():
            if any(levels.values()):
                out.setdefault(kind, {})["to_exclude"] = {
                    lvl: sorted(names) for lvl, names in levels.items() if names
                }
        return out


@dataclass
class CommonMetricsCorpus:
    # class ("service"/"resource") -> level -> name -> description
    by_class: dict[str, dict[str, dict[str, str]]] = field(default_factory=dict)

    def for_class(self, component_class: str) -> dict[str, dict[str, str]]:
        return self.by_class.get(component_class, {})

    def to_obj(self) -> dict:
        return {k: {lvl: dict(ms) for lvl, ms in v.items()} for k, v in self.by_class.items()}


@dataclass
class SystemTopology:
    components: list[ComponentDescriptor]
    catalog: MetricCatalog
    corpus: CommonMetricsCorpus

    def component(self, instance_id: str) -> ComponentDescriptor:
        for c in self.components:
            if c.instance_id == instance_id:
                return c
        raise KeyError(instance_id)

    @property
    def instance_ids(self) -> list[str]:
        return [c.instance_id for c in self.components]


def _load_json(file_bytes: bytes | str, what: str) -> dict:
    try:
        obj = json.loads(file_bytes)
    except json.JSONDecodeError as e:
        raise ParseError(f"malformed JSON in {what} file at line {e.lineno} col {e.colno}: {e.msg}")
    if not isinstance(obj, dict):
        raise ParseError(f"{what} file must contain a JSON object")
    return obj


def parse_trace(file_bytes: bytes | str) -> list[ComponentDescriptor]:
    """Parse a trace digest into component descriptors.

    Keys are dotted paths like "request.Client.Queue_0".  The first segment
    after "request." names the request-class component; the final segment is
    the instance id of the described component.  Components that appear only
    as resources of other components become resource-class descriptors.
    """
    obj = _load_json(file_bytes, "trace")
    raw: dict[str, dict] = {}
    request_paths: dict[str, list[str]] = {}
    order: list[str] = []

    for key, value in obj.items():
        if not isinstance(value, dict):
            raise ParseError(f"trace entry {key!r} must be an object")
        segments = key.split(".")
        instance_id = segments[-1]
        is_request = segments[0] == REQUEST and len(segments) == 2
        if segments[0] == REQUEST and len(segments) >= 2:
            request_id = segments[1]
            request_paths.setdefault(request_id, [])
            if len(segments) > 2:
                request_paths[request_id].append(instance_id)
        if instance_id in raw:
            raise ValidationError([f"duplicate component instance {instance_id!r}"])
        raw[instance_id] = {
            "description": value.get("service_description", ""),
            "resources": dict(value.get("resources", {})),
            "callees": list(value.get("callees", [])),
            "is_request": is_request,
        }
        order.append(instance_id)

    resource_ids: dict[str, str] = {}
    for instance_id in order:
        for rid, rdesc in raw[instance_id]["resources"].items():
            resource_ids.setdefault(rid, rdesc)

    violations = []
    for instance_id in order:
        for callee in raw[instance_id]["callees"]:
            if callee not in raw and callee not in resource_ids:
                violations.append(
                    f"component {instance_id!r} lists unknown callee {callee!r}"
                )
    if violations:
        raise ValidationError(violations)

    components: list[ComponentDescriptor] = []
    for instance_id in order:
        entry = raw[instance_id]
        if entry["is_request"]:
            component_class = REQUEST
        elif instance_id in resource_ids:
            component_class = RESOURCE
        else:
            component_class = SERVICE
        components.append(
            ComponentDescriptor(
                instance_id=instance_id,
                kind=kind_of(instance_id),
                component_class=component_class,
                description=entry["description"],
                resources=entry["resources"],
                callees=tuple(entry["callees"]),
                invoked=tuple(request_paths.get(instance_id, ())),
            )
        )
    for rid, rdesc in resource_ids.items():
        if rid not in raw:
            components.append(
                ComponentDescriptor(
                    instance_id=rid,
                    kind=kind_of(rid),
                    component_class=RESOURCE,
                    description=rdesc,
                )
            )
    return components


def parse_metrics(file_bytes: bytes | str) -> MetricCatalog:
    """Parse the measurement catalog, keyed by component kind then level."""
    obj = _load_json(file_bytes, "metrics")
    catalog = MetricCatalog()
    violations = []
    for kind, levels in obj.items():
        if not isinstance(levels, dict):
            raise ParseError(f"metrics entry {kind!r} must be an object")
        excluded = levels.get("to_exclude", {})
        if not isinstance(excluded, dict):
            raise ParseError(f"to_exclude for {kind!r} must be an object")
        for level, names in excluded.items():
            if level not in LEVELS:
                violations.append(f"unknown level {level!r} in to_exclude for kind {kind!r}")
                continue
            catalog.exclusions.setdefault(kind, {}).setdefault(level, set()).update(names)
        for level, metrics in levels.items():
            if level == "to_exclude":
                continue
            if level not in LEVELS:
                violations.append(f"unknown level {level!r} for kind {kind!r}")
                continue
            for name, description in metrics.items():
                if catalog.is_excluded(kind, level, name):
                    violations.append(
                        f"metric {name!r} of kind {kind!r} is both listed and excluded"
                    )
                    continue
                catalog.metrics.append(
                    MetricDescriptor(
                        component_kind=kind, level=level, name=name,
                        description=_normalize(description),
                    )
                )
    if violations:
        raise ValidationError(violations)
    seen = set()
    for m in catalog.metrics:
        key = (m.component_kind, m.level, m.name)
        if key in seen:
            raise ValidationError([f"duplicate metric {m.name!r} for kind {m.component_kind!r}"])
        seen.add(key)
    return catalog


def parse_corpus(file_bytes: bytes | str) -> CommonMetricsCorpus:
    """Parse the common-metrics corpus (classes "service" and "resource")."""
    obj = _load_json(file_bytes, "common metrics")
    corpus = CommonMetricsCorpus()
    for component_class in (SERVICE, RESOURCE):
        levels = obj.get(component_class, {})
        if not isinstance(levels, dict):
            raise ParseError(f"corpus entry {component_class!r} must be an object")
        out: dict[str, dict[str, str]] = {}
        for level, metrics in levels.items():
            if level not in LEVELS:
                raise ValidationError([f"unknown level {level!r} in corpus class {component_class!r}"])
            out[level] = {}
            for name, description in metrics.items():
                if not name or not description:
                    raise ValidationError(
                        [f"corpus metric in class {component_class!r} has empty name or description"]
                    )
                if name in out[level]:
                    log.warning("duplicate corpus metric %r in class %s; keeping last", name, component_class)
                out[level][name] = _normalize(description)
        corpus.by_class[component_class] = out
    return corpus


def assemble_topology(
    components: list[ComponentDescriptor],
    catalog: MetricCatalog,
    corpus: CommonMetricsCorpus,
) -> SystemTopology:
    """Validate the parsed inputs and combine them into a SystemTopology."""
    violations = []
    ids = [c.instance_id for c in components]
    if len(set(ids)) != len(ids):
        violations.append("component instance ids are not unique")
    by_id = {c.instance_id: c for c in components}

    for c in components:
        for callee in c.callees:
            if callee not in by_id:
                violations.append(f"component {c.instance_id!r} lists unknown callee {callee!r}")
        for member in c.invoked:
            if member not in by_id:
                violations.append(f"request {c.instance_id!r} path names unknown component {member!r}")
        if c.resources and c.component_class != SERVICE:
            violations.append(
                f"component {c.instance_id!r} ({c.component_class}) may not own resources"
            )
        for rid in c.resources:
            if rid not in by_id:
                violations.append(f"component {c.instance_id!r} owns unknown resource {rid!r}")

    requests = [c for c in components if c.component_class == REQUEST]
    if components and not requests:
        violations.append("topology has no request-class component")

    # Connectivity: every component reachable from a request component in the
    # undirected interaction structure (callees + resources + request paths).
    if components and requests and not violations:
        adj: dict[str, set[str]] = {c.instance_id: set() for c in components}
        for c in components:
            for other in (*c.callees, *c.resources, *c.invoked):
                adj[c.instance_id].add(other)
                adj[other].add(c.instance_id)
        seen: set[str] = set()
        stack = [r.instance_id for r in requests]
        while stack:
            cur = stack.pop()
            if cur in seen:
                continue
            seen.add(cur)
            stack.extend(adj[cur] - seen)
        unreachable = sorted(set(ids) - seen)
        if unreachable:
            violations.append(
                "components not reachable from any request component: " + ", ".join(unreachable)
            )

    if violations:
        raise ValidationError(violations)
    return SystemTopology(components=components, catalog=catalog, corpus=corpus)


def load_topology(trace_bytes, metrics_bytes, corpus_bytes) -> SystemTopology:
    return assemble_topology(
        parse_trace(trace_bytes), parse_metrics(metrics_bytes), parse_corpus(corpus_bytes)
    )


def serialize_trace(components: list[ComponentDescriptor]) -> bytes:
    """Inverse of parse_trace (resource-only components reappear as resources)."""
    obj: dict[str, dict] = {}
    by_id = {c.instance_id: c for c in components}
    for c in components:
        if c.component_class == REQUEST:
            obj[f"{REQUEST}.{c.instance_id}"] = _trace_entry(c)
            for member in c.invoked:
                obj[f"{REQUEST}.{c.instance_id}.{member}"] = _trace_entry(by_id[member])
    return json.dumps(obj, indent=4).encode()


def _trace_entry(c: ComponentDescriptor) -> dict:
    return {
        "service_description": c.description,
        "resources": dict(c.resources),
        "callees": list(c.callees),
    }


def serialize_metrics(catalog: MetricCatalog) -> bytes:
    return json.dumps(catalog.to_obj(), indent=4).encode()


def serialize_corpus(corpus: CommonMetricsCorpus) -> bytes:
    return json.dumps(corpus.to_obj(), indent=4).encode()


def _normalize(text: str) -> str:
    return " ".join(str(text).split())
