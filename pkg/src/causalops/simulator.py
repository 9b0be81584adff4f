"""Deterministic discrete-event simulator of a batched model-serving system.

Requests arrive at a client with exponential interarrivals, pass through a
router that load-balances round-robin over worker queues, wait until a GPU
frees up, execute as a batch of min(queue length, max batch size), and return
over a response link.  The simulator emits the telemetry dataset, the trace
digest of its component topology, the ground-truth graphs derived from its
own mechanism wiring, and fault metadata.
"""
from __future__ import annotations

import json
import random
from bisect import bisect_left, bisect_right
from dataclasses import dataclass, field, replace
from heapq import heappop, heappush
from importlib import resources as importlib_resources

from . import agents as agents_mod
from . import graphbuild
from .dataset import TelemetryDataset
from .errors import ConfigError
from .ingest import SystemTopology, load_topology

FAULT_NONE = "none"
WORKLOAD_SPIKE = "workload_spike"
NETWORK_SLOWDOWN = "network_slowdown"
BATCH_MISCONFIG = "batch_misconfig"
GPU_THROTTLE = "gpu_throttle"

FAULTS = (FAULT_NONE, WORKLOAD_SPIKE, NETWORK_SLOWDOWN, BATCH_MISCONFIG, GPU_THROTTLE)

WINDOW_S = 1.0  # trailing window for rate/utilization metrics


@dataclass(frozen=True)
class ScenarioConfig:
    scenario: str = "S"
    workers: int = 1
    gpus_per_worker: int = 1
    arrival_rate: float = 60.0  # requests / second
    max_batch_size: int = 8
    base_inference_ms: float = 20.0
    per_item_inference_ms: float = 5.0
    client_router_ms: float = 2.0
    router_queue_ms: float = 2.0
    response_ms: float = 2.0
    router_proc_ms: float = 1.0
    gpu_power: float = 1.0  # speed multiplier in (0, 1]
    duration_s: float = 130.0
    warmup_s: float = 10.0
    seed: int = 0
    link_jitter: float = 0.2  # multiplicative exponential jitter on links
    exec_noise: float = 0.03  # lognormal sigma on inference time
    # Additive Gaussian meter noise on the sampled GPU utilization reading
    # (an uncalibrated sensor; the reported value may slightly exceed 1.0).
    util_meter_noise: float = 0.05
    # Dynamic power coupling: effective speed scales with trailing utilization.
    power_base: float = 1.05
    power_util_coeff: float = 0.15
    exponential_service: bool = False  # exponential inference times (queueing checks)

    def __post_init__(self):
        if self.workers < 1 or self.gpus_per_worker < 1:
            raise ConfigError("workers and gpus_per_worker must be >= 1")
        for name in ("arrival_rate", "duration_s", "max_batch_size", "base_inference_ms"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be > 0")
        if not 0.0 < self.gpu_power <= 1.0:
            raise ConfigError("gpu_power must be in (0, 1]")

    @classmethod
    def for_scenario(cls, scenario: str, seed: int = 0, **overrides) -> "ScenarioConfig":
        presets = {
            "S": dict(workers=1, gpus_per_worker=1, arrival_rate=60.0, duration_s=130.0),
            "M": dict(workers=1, gpus_per_worker=4, arrival_rate=200.0, duration_s=45.0),
            "L": dict(workers=2, gpus_per_worker=4, arrival_rate=400.0, duration_s=45.0),
        }
        if scenario not in presets:
            raise ConfigError(f"unknown scenario {scenario!r} (expected S, M, or L)")
        params = dict(presets[scenario])
        params.update(overrides)
        return cls(scenario=scenario, seed=seed, **params)


@dataclass(frozen=True)
class FaultSpec:
    fault: str = FAULT_NONE
    magnitude: float = 1.0
    onset_s: float = 0.0
    root_cause_node: str = ""
    target: str = ""  # instance id the fault applies to (link, batcher, GPU)

    def validate(self, config: ScenarioConfig) -> None:
        if self.fault not in FAULTS:
            raise ConfigError(f"unknown fault {self.fault!r}")
        if self.fault == WORKLOAD_SPIKE and self.magnitude <= 0:
            raise ConfigError("workload_spike magnitude must be > 0")
        if self.fault == NETWORK_SLOWDOWN and self.magnitude <= 0:
            raise ConfigError("network_slowdown magnitude (ms) must be > 0")
        if self.fault == BATCH_MISCONFIG and (
            self.magnitude < 1 or self.magnitude != int(self.magnitude)
        ):
            raise ConfigError("batch_misconfig magnitude must be a positive integer")
        if self.fault == GPU_THROTTLE and not 0.0 < self.magnitude <= 1.0:
            raise ConfigError("gpu_throttle magnitude must be in (0, 1]")

    def to_obj(self) -> dict:
        return {
            "fault": self.fault,
            "magnitude": self.magnitude,
            "onset_s": self.onset_s,
            "root_cause_node": self.root_cause_node,
            "target": self.target,
        }


@dataclass
class GroundTruth:
    confounder_graph: graphbuild.ConfounderGraph
    causal_graph: graphbuild.CausalGraph


@dataclass
class SimResult:
    dataset: TelemetryDataset
    trace_bytes: bytes
    ground_truth: GroundTruth
    fault_meta: dict
    topology: SystemTopology
    warnings: list[str] = field(default_factory=list)
    counters: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# Topology layout


def _mi_index(worker: int, gpu: int, gpus_per_worker: int) -> int:
    return worker * gpus_per_worker + gpu


def build_trace(config: ScenarioConfig) -> bytes:
    """Trace digest of the simulated topology (matches the bundled sample
    for scenario S)."""
    w = config.workers
    obj: dict[str, dict] = {}

    def entry(desc, resources=None, callees=()):
        return {
            "service_description": desc,
            "resources": dict(resources or {}),
            "callees": list(callees),
        }

    obj["request.Client"] = entry(
        "client that sends request to the router", callees=["Client-Router"]
    )
    p = "request.Client."
    obj[p + "Client-Router"] = entry(
        "network communication that send request from client to router",
        callees=["Router"],
    )
    obj[p + "Router"] = entry(
        "router that processes and dispatches request to different servers",
        callees=[f"Router-Queue_{i}" for i in range(w)],
    )
    for i in range(w):
        obj[p + f"Router-Queue_{i}"] = entry(
            "network communication that send request from router to servers",
            callees=[f"Queue_{i}"],
        )
    for i in range(w):
        obj[p + f"Queue_{i}"] = entry(
            "when requests are received at a server, they are buffered in the queue "
            "and waited to be executed. Requests will be dequeued and processed by "
            "the batcher when resources are available",
        )
    for i in range(w):
        obj[p + f"Batcher_{i}"] = entry(
            "when resources are available, the batcher will check the queue and "
            "create a batch of min(available requests, max batch size) requests "
            "and send it to the model inference service",
            callees=[f"Queue_{i}"],
        )
    for worker in range(w):
        for gpu in range(config.gpus_per_worker):
            i = _mi_index(worker, gpu, config.gpus_per_worker)
            obj[p + f"ModelInference_{i}"] = entry(
                "model inference service that runs the model inference on the "
                "batched requests",
                resources={f"GPU_{i}": "A A100 GPU"},
                callees=[f"Batcher_{worker}", f"ModelInference_{i}-Client"],
            )
            obj[p + f"ModelInference_{i}-Client"] = entry(
                "network communication that send the model inference result back "
                "to the client",
            )
    return json.dumps(obj, indent=4).encode()


def _asset(name: str) -> bytes:
    return importlib_resources.files("causalops.assets").joinpath(name).read_bytes()


def build_topology(config: ScenarioConfig) -> SystemTopology:
    return load_topology(
        build_trace(config),
        _asset("metrics_model_serving.json"),
        _asset("common_metrics.json"),
    )


def ground_truth_graphs(config: ScenarioConfig, topology: SystemTopology | None = None) -> GroundTruth:
    """Ground-truth graphs derived from the simulator's mechanism wiring."""
    topology = topology or build_topology(config)
    _, nodes, _ = agents_mod.expand(topology)
    g = graphbuild.ConfounderGraph()
    for n in nodes:
        g.add_node(n)

    def edge(src, dst):
        g.add_edge(src, dst)

    w, gpw = config.workers, config.gpus_per_worker
    stage_instances = ["Client-Router", "Router"]
    for i in range(w):
        stage_instances += [f"Router-Queue_{i}", f"Queue_{i}"]
    mis = [f"ModelInference_{i}" for i in range(w * gpw)]
    stage_instances += mis + [f"{m}-Client" for m in mis]
    for inst in stage_instances:
        edge(f"{inst}.latency", "Client.latency")

    for i in range(w):
        edge("Router.throughput", f"Router-Queue_{i}.throughput")
        edge(f"Router-Queue_{i}.throughput", f"Queue_{i}.enqueueing_rate")
        edge(f"Queue_{i}.enqueueing_rate", f"Queue_{i}.queue_length")
        edge(f"Queue_{i}.dequeueing_rate", f"Queue_{i}.queue_length")
        edge(f"Queue_{i}.queue_length", f"Queue_{i}.latency")
        # Back-pressure: the queue drains at the batcher's effective
        # throughput, which the inference services' throughput determines.
        edge(f"Batcher_{i}.throughput", f"Queue_{i}.dequeueing_rate")

    for worker in range(w):
        for gpu in range(gpw):
            i = _mi_index(worker, gpu, gpw)
            mi = f"ModelInference_{i}"
            edge(f"Batcher_{worker}.max_batch_size", f"{mi}.execution_batch_size")
            edge(f"{mi}.execution_batch_size", f"{mi}.latency")
            edge(f"{mi}.execution_batch_size", f"{mi}.throughput")
            edge(f"{mi}.throughput", f"Batcher_{worker}.throughput")
            edge(f"{mi}.throughput", f"GPU_{i}.utilization")
            edge(f"GPU_{i}.utilization", f"GPU_{i}.power")
            edge(f"GPU_{i}.power", f"{mi}.latency")

    return GroundTruth(confounder_graph=g, causal_graph=graphbuild.collapse(g))


# ---------------------------------------------------------------------------
# Fault suites


def scenario_suite(scenario: str) -> list[FaultSpec]:
    """The per-scenario fault specs (7 / 13 / 24 for S / M / L)."""
    if scenario not in ("S", "M", "L"):
        raise ConfigError(f"unknown scenario {scenario!r}")

    def spike(m):
        return FaultSpec(WORKLOAD_SPIKE, m, 0.0, "Router.throughput", "Router")

    def slow(link, m):
        return FaultSpec(NETWORK_SLOWDOWN, m, 0.0, f"{link}.latency", link)

    def batch(worker, m=1):
        return FaultSpec(
            BATCH_MISCONFIG, m, 0.0, f"Batcher_{worker}.max_batch_size", f"Batcher_{worker}"
        )

    def throttle(gpu, m):
        return FaultSpec(GPU_THROTTLE, m, 0.0, f"GPU_{gpu}.power", f"GPU_{gpu}")

    if scenario == "S":
        return [
            spike(1.5), spike(3.0),
            slow("Client-Router", 20.0), slow("Router-Queue_0", 20.0),
            batch(0),
            throttle(0, 0.65), throttle(0, 0.8),
        ]
    if scenario == "M":
        return [
            spike(1.5), spike(3.0),
            slow("Client-Router", 20.0), slow("Router-Queue_0", 20.0),
            batch(0),
        ] + [throttle(g, m) for g in range(4) for m in (0.65, 0.8)]
    return [
        spike(1.5), spike(3.0),
        slow("Client-Router", 20.0), slow("Router-Queue_0", 20.0),
        slow("Router-Queue_1", 20.0), slow("Router-Queue_0", 50.0),
        batch(0), batch(1),
    ] + [throttle(g, m) for g in range(8) for m in (0.65, 0.8)]


# ---------------------------------------------------------------------------
# Event loop


class _Request:
    __slots__ = (
        "rid", "t_send", "lat_cr", "lat_router", "lat_rq", "t_enqueue", "wait",
        "qlen", "batch", "exec_s", "lat_resp", "worker", "mi",
    )

    def __init__(self, rid, t_send):
        self.rid = rid
        self.t_send = t_send


class _WindowSeries:
    """Timestamps of point events; supports trailing-window counts."""

    def __init__(self):
        self.times: list[float] = []

    def add(self, t: float) -> None:
        self.times.append(t)

    def rate(self, t: float) -> float:
        lo = bisect_right(self.times, t - WINDOW_S)
        hi = bisect_right(self.times, t)
        width = min(WINDOW_S, t) or WINDOW_S
        return (hi - lo) / width


class _BusyTracker:
    """Busy intervals of one GPU; supports trailing utilization."""

    def __init__(self):
        self.intervals: list[tuple[float, float]] = []

    def add(self, start: float, end: float) -> None:
        self.intervals.append((start, end))

    def utilization(self, t: float) -> float:
        w0 = max(0.0, t - WINDOW_S)
        width = t - w0
        if width <= 0:
            return 0.0
        lo = bisect_left(self.intervals, (w0 - 60.0, 0.0))
        busy = 0.0
        for s, e in self.intervals[lo:]:
            if s >= t:
                break
            busy += max(0.0, min(e, t) - max(s, w0))
        return min(1.0, busy / width)


def run(config: ScenarioConfig, fault: FaultSpec | None = None) -> SimResult:
    """Simulate one run.  Identical (config, fault) inputs give bit-identical
    outputs."""
    fault = fault or FaultSpec()
    if fault.fault != FAULT_NONE:
        fault.validate(config)

    topology = build_topology(config)
    truth = ground_truth_graphs(config, topology)
    columns = [n.id for n in agents_mod.observed_nodes(topology)]

    w, gpw = config.workers, config.gpus_per_worker
    n_gpus = w * gpw
    rng = random.Random(config.seed)
    # Separate stream for metric-reading noise so sensor jitter cannot
    # perturb the event dynamics.
    meter_rng = random.Random(config.seed + 0x5EED)

    # Mutable mechanism state (mutated by the fault at onset).
    arrival_rate = config.arrival_rate
    link_extra = {"Client-Router": 0.0}
    for i in range(w):
        link_extra[f"Router-Queue_{i}"] = 0.0
    for i in range(n_gpus):
        link_extra[f"ModelInference_{i}-Client"] = 0.0
    max_batch = {i: config.max_batch_size for i in range(w)}
    throttle_mult = {i: 1.0 for i in range(n_gpus)}
    fault_applied = fault.fault == FAULT_NONE

    def apply_fault():
        nonlocal arrival_rate, fault_applied
        if fault.fault == WORKLOAD_SPIKE:
            arrival_rate = arrival_rate * fault.magnitude
        elif fault.fault == NETWORK_SLOWDOWN:
            if fault.target not in link_extra:
                raise ConfigError(f"network_slowdown target {fault.target!r} is not a link")
            link_extra[fault.target] += fault.magnitude
        elif fault.fault == BATCH_MISCONFIG:
            worker = int(fault.target.rsplit("_", 1)[1]) if fault.target else 0
            max_batch[worker] = int(fault.magnitude)
        elif fault.fault == GPU_THROTTLE:
            gpu = int(fault.target.rsplit("_", 1)[1]) if fault.target else 0
            throttle_mult[gpu] *= fault.magnitude
        fault_applied = True

    if fault.fault != FAULT_NONE and fault.onset_s <= 0.0:
        apply_fault()

    def link_delay(base_ms: float, link: str) -> float:
        base = (base_ms + link_extra[link]) / 1000.0
        return base * (1.0 + config.link_jitter * rng.expovariate(1.0))

    # Telemetry bookkeeping.
    router_forwards = _WindowSeries()
    enq = {i: _WindowSeries() for i in range(w)}
    deq = {i: _WindowSeries() for i in range(w)}
    mi_done = {i: _WindowSeries() for i in range(n_gpus)}
    busy = {i: _BusyTracker() for i in range(n_gpus)}

    queues: dict[int, list[_Request]] = {i: [] for i in range(w)}
    gpu_free_at = {i: 0.0 for i in range(n_gpus)}
    rr_counter = 0

    last_seen: dict[str, float] = {c: 0.0 for c in columns}
    rows: list[list[float]] = []
    counters = {"enqueued": {i: 0 for i in range(w)}, "dequeued": {i: 0 for i in range(w)}}

    events: list = []
    seq = 0

    def push(t, action, payload=None):
        nonlocal seq
        heappush(events, (t, seq, action, payload))
        seq += 1

    push(rng.expovariate(arrival_rate), "arrival", None)
    if fault.fault != FAULT_NONE and fault.onset_s > 0.0:
        push(fault.onset_s, "fault", None)

    rid = 0

    def dispatch(worker: int, t: float) -> None:
        queue = queues[worker]
        while queue:
            gpu = None
            for g in range(worker * gpw, (worker + 1) * gpw):
                if gpu_free_at[g] <= t:
                    gpu = g
                    break
            if gpu is None:
                return
            b = min(len(queue), max_batch[worker])
            batch = queue[:b]
            del queue[:b]
            util = busy[gpu].utilization(t)
            power = (
                config.gpu_power
                * throttle_mult[gpu]
                * (config.power_base - config.power_util_coeff * util)
            )
            mean_exec = (
                (config.base_inference_ms + config.per_item_inference_ms * b) / 1000.0 / power
            )
            if config.exponential_service:
                exec_s = rng.expovariate(1.0 / mean_exec)
            else:
                exec_s = mean_exec * (1.0 + config.exec_noise * rng.gauss(0.0, 1.0))
                exec_s = max(exec_s, 1e-6)
            t_end = t + exec_s
            gpu_free_at[gpu] = t_end
            busy[gpu].add(t, t_end)
            for req in batch:
                req.wait = t - req.t_enqueue
                req.batch = b
                req.exec_s = exec_s
                req.mi = gpu
                deq[worker].add(t)
                counters["dequeued"][worker] += 1
                req.lat_resp = link_delay(config.response_ms, f"ModelInference_{gpu}-Client")
                push(t_end + req.lat_resp, "completion", req)
            mi_done[gpu].add(t_end)
            push(t_end, "gpu_free", worker)

    while events:
        t, _, action, payload = heappop(events)
        if t > config.duration_s:
            break
        if action == "fault":
            apply_fault()
        elif action == "arrival":
            req = _Request(rid, t)
            rid += 1
            req.lat_cr = link_delay(config.client_router_ms, "Client-Router")
            push(t + req.lat_cr, "at_router", req)
            push(t + rng.expovariate(arrival_rate), "arrival", None)
        elif action == "at_router":
            req = payload
            req.lat_router = (config.router_proc_ms / 1000.0) * (
                1.0 + config.link_jitter * rng.expovariate(1.0)
            )
            nonlocal_worker = rr_counter % w
            rr_counter += 1
            req.worker = nonlocal_worker
            router_forwards.add(t)
            req.lat_rq = link_delay(config.router_queue_ms, f"Router-Queue_{nonlocal_worker}")
            push(t + req.lat_router + req.lat_rq, "enqueue", req)
        elif action == "enqueue":
            req = payload
            req.qlen = len(queues[req.worker])
            req.t_enqueue = t
            queues[req.worker].append(req)
            enq[req.worker].add(t)
            counters["enqueued"][req.worker] += 1
            dispatch(req.worker, t)
        elif action == "gpu_free":
            dispatch(payload, t)
        elif action == "completion":
            req = payload
            worker, mi = req.worker, req.mi
            total = (
                req.lat_cr + req.lat_router + req.lat_rq + req.wait + req.exec_s + req.lat_resp
            )
            last_seen["Client.latency"] = total
            last_seen["Client-Router.latency"] = req.lat_cr
            last_seen["Router.latency"] = req.lat_router
            last_seen[f"Router-Queue_{worker}.latency"] = req.lat_rq
            last_seen[f"Queue_{worker}.latency"] = req.wait
            last_seen[f"Queue_{worker}.queue_length"] = float(req.qlen)
            last_seen[f"ModelInference_{mi}.latency"] = req.exec_s
            last_seen[f"ModelInference_{mi}.execution_batch_size"] = float(req.batch)
            last_seen[f"ModelInference_{mi}-Client.latency"] = req.lat_resp
            if t >= config.warmup_s:
                last_seen["Router.throughput"] = router_forwards.rate(t)
                for i in range(w):
                    last_seen[f"Queue_{i}.enqueueing_rate"] = enq[i].rate(t)
                    last_seen[f"Queue_{i}.dequeueing_rate"] = deq[i].rate(t)
                    last_seen[f"Batcher_{i}.max_batch_size"] = float(max_batch[i])
                for i in range(n_gpus):
                    last_seen[f"ModelInference_{i}.throughput"] = mi_done[i].rate(t)
                    last_seen[f"GPU_{i}.utilization"] = busy[i].utilization(
                        t
                    ) + config.util_meter_noise * meter_rng.gauss(0.0, 1.0)
                rows.append([last_seen[c] for c in columns])

    dataset = TelemetryDataset(columns=columns, rows=rows)

    warnings = []
    post_rate = config.arrival_rate * (
        fault.magnitude if fault.fault == WORKLOAD_SPIKE else 1.0
    )
    capacity = 0.0
    for worker in range(w):
        b = max_batch[worker]
        per_batch = (config.base_inference_ms + config.per_item_inference_ms * b) / 1000.0
        for gpu in range(worker * gpw, (worker + 1) * gpw):
            capacity += throttle_mult[gpu] * config.gpu_power * b / per_batch
    if post_rate > capacity:
        warnings.append(
            f"saturated: offered load {post_rate:.1f}/s exceeds service capacity {capacity:.1f}/s"
        )

    counters["remaining"] = {i: len(queues[i]) for i in range(w)}
    return SimResult(
        dataset=dataset,
        trace_bytes=build_trace(config),
        ground_truth=truth,
        fault_meta=fault.to_obj(),
        topology=topology,
        warnings=warnings,
        counters=counters,
    )
