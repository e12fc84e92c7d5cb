"""Discrete-event forwarding of scheduled packets along static routes.

Every node a packet enters adds a delay: a constant processing time plus a
jitter draw, clamped at zero because a node cannot send a packet before it
arrived. Links are queue-free, so large draws can reorder packets. Probe nodes
timestamp each packet of each stream as it leaves their delay stage.
"""

from __future__ import annotations

import heapq
import warnings
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from .errors import InvalidParameterError
from .topology import NodeId, Route, Topology, shortest_path
from .traffic import EmissionSchedule, StegMethod, StreamSpec, schedule_stream

JITTER_KINDS = ("none", "uniform", "normal", "exponential")


class ConfigurationWarning(UserWarning):
    """A scenario is valid but some part of it will produce no data."""


@dataclass(frozen=True)
class Jitter:
    """Random per-packet delay component, parameters in microseconds.

    uniform uses ``a``/``b`` as the bounds, normal uses them as mean/stddev and
    exponential uses ``a`` as the mean.
    """

    kind: str = "none"
    a: float = 0.0
    b: float = 0.0

    def __post_init__(self):
        if self.kind not in JITTER_KINDS:
            raise InvalidParameterError(f"unknown jitter kind {self.kind!r}")
        if self.kind == "uniform" and self.b < self.a:
            raise InvalidParameterError(f"uniform jitter needs lo <= hi, got ({self.a}, {self.b})")
        if self.kind == "normal" and self.b < 0:
            raise InvalidParameterError(f"normal jitter stddev must be >= 0, got {self.b}")
        if self.kind == "exponential" and self.a <= 0:
            raise InvalidParameterError(f"exponential jitter mean must be > 0, got {self.a}")

    @classmethod
    def uniform(cls, lo: float, hi: float) -> Jitter:
        return cls("uniform", lo, hi)

    @classmethod
    def normal(cls, mean: float, stddev: float) -> Jitter:
        return cls("normal", mean, stddev)

    @classmethod
    def exponential(cls, mean: float) -> Jitter:
        return cls("exponential", mean)

    def sample(self, rng: np.random.Generator, size: int | None = None):
        if self.kind == "uniform":
            return rng.uniform(self.a, self.b, size)
        if self.kind == "normal":
            return rng.normal(self.a, self.b, size)
        if self.kind == "exponential":
            return rng.exponential(self.a, size)
        return 0.0 if size is None else np.zeros(size)


@dataclass(frozen=True)
class NoiseModel:
    d_proc: int = 0
    jitter: Jitter = field(default_factory=Jitter)
    rho: float = 0.0

    def __post_init__(self):
        if self.d_proc < 0:
            raise InvalidParameterError(f"processing delay must be >= 0, got {self.d_proc}")
        if not 0 <= self.rho < 1:
            raise InvalidParameterError(f"rho must lie in [0, 1), got {self.rho}")


ZERO_NOISE = NoiseModel()


@dataclass(frozen=True)
class DisturbanceSpec:
    node: NodeId
    model: NoiseModel


@dataclass(frozen=True)
class ProbeRecord:
    probe: NodeId
    stream_id: str
    seq: int
    arrival_time: int


@dataclass(frozen=True)
class StreamConfig:
    spec: StreamSpec
    method: StegMethod


@dataclass(frozen=True)
class ScenarioConfig:
    topology: Topology
    streams: tuple[StreamConfig, ...]
    default_noise: NoiseModel
    disturbances: tuple[DisturbanceSpec, ...]
    probes: tuple[NodeId, ...]
    duration: int
    seed: int
    name: str = "custom"

    def __post_init__(self):
        if self.duration <= 0:
            raise InvalidParameterError("scenario duration must be positive")
        if not self.streams:
            raise InvalidParameterError("scenario has no streams")
        ids = [s.spec.stream_id for s in self.streams]
        if len(set(ids)) != len(ids):
            raise InvalidParameterError("stream ids must be unique")
        for s in self.streams:
            self.topology.check_node(s.spec.source)
            self.topology.check_node(s.spec.destination)
        for d in self.disturbances:
            self.topology.check_node(d.node)
        for p in self.probes:
            self.topology.check_node(p)

    def noise_at(self, node: NodeId) -> NoiseModel:
        model = self.default_noise
        for d in self.disturbances:
            if d.node == node:
                model = d.model
        return model

    def routes(self) -> dict[str, Route]:
        return {
            s.spec.stream_id: shortest_path(self.topology, s.spec.source, s.spec.destination)
            for s in self.streams
        }


@dataclass(frozen=True, eq=False)
class ProbeSeries:
    """Records of one stream at one probe, ordered by sequence number."""

    seq: np.ndarray
    arrival: np.ndarray

    def __len__(self) -> int:
        return len(self.seq)


@dataclass(frozen=True, eq=False)
class RunResult:
    config: ScenarioConfig
    routes: dict[str, Route]
    schedules: dict[str, EmissionSchedule]
    series: dict[tuple[str, NodeId], ProbeSeries]
    node_stats: dict[NodeId, tuple[int, int]]

    @property
    def seed(self) -> int:
        return self.config.seed

    def stream_ids(self) -> list[str]:
        return [s.spec.stream_id for s in self.config.streams]

    def probes_for(self, stream_id: str) -> list[NodeId]:
        return sorted(p for (sid, p) in self.series if sid == stream_id)

    def records(self) -> Iterator[ProbeRecord]:
        """All probe records: stream order of the config, then probe id, then sequence."""
        for sid in self.stream_ids():
            for probe in self.probes_for(sid):
                ps = self.series[(sid, probe)]
                for k, t in zip(ps.seq.tolist(), ps.arrival.tolist()):
                    yield ProbeRecord(probe, sid, k, t)

    def record_count(self) -> int:
        return sum(len(ps) for ps in self.series.values())


def raw_jitter(model: NoiseModel, prev_raw: float | None, rng: np.random.Generator, fresh: float | None = None) -> float:
    """Unclamped jitter draw, optionally autocorrelated with the previous one."""
    sample = model.jitter.sample(rng) if fresh is None else fresh
    if model.rho > 0 and prev_raw is not None:
        return model.rho * prev_raw + (1 - model.rho) * sample
    return float(sample)


def finalize_delay(model: NoiseModel, raw: float) -> int:
    return int(round(max(0.0, raw))) + model.d_proc


def draw_node_delay(model: NoiseModel, prev_draw: float | None, rng: np.random.Generator) -> int:
    """Delay in microseconds added by one node to one packet."""
    return finalize_delay(model, raw_jitter(model, prev_draw, rng))


class _NodeNoise:
    """Stateful delay source for one node; fresh samples are drawn in blocks."""

    BLOCK = 4096

    def __init__(self, model: NoiseModel, rng: np.random.Generator):
        self.model = model
        self.rng = rng
        self.prev: float | None = None
        self.buf = np.empty(0)
        self.pos = 0
        self.draws = 0
        self.clamped = 0
        self.silent = model.jitter.kind == "none"

    def next(self) -> int:
        self.draws += 1
        if self.silent:
            return self.model.d_proc
        if self.pos == len(self.buf):
            self.buf = self.model.jitter.sample(self.rng, self.BLOCK)
            self.pos = 0
        fresh = float(self.buf[self.pos])
        self.pos += 1
        raw = raw_jitter(self.model, self.prev, self.rng, fresh)
        self.prev = raw
        if raw < 0:
            self.clamped += 1
        return finalize_delay(self.model, raw)


def _child_seed(seed: int, *key: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([seed, *key])


def stream_seed(seed: int, stream_index: int) -> int:
    return int(_child_seed(seed, 0, stream_index).generate_state(1)[0])


def run_scenario(config: ScenarioConfig) -> RunResult:
    """Simulate every stream of ``config`` and collect probe records."""
    routes = config.routes()
    probe_set = set(config.probes)
    on_route = set().union(*map(set, routes.values()))
    missing = sorted(probe_set - on_route)
    if missing:
        warnings.warn(f"probes {missing} lie on no stream route and will record nothing", ConfigurationWarning, stacklevel=2)

    schedules: dict[str, EmissionSchedule] = {}
    heap: list[tuple[int, int, int, int]] = []
    stream_routes: list[Route] = []
    for idx, stream in enumerate(config.streams):
        sid = stream.spec.stream_id
        sched = schedule_stream(stream.spec, stream.method, stream_seed(config.seed, idx))
        schedules[sid] = sched
        stream_routes.append(routes[sid])
        heap.extend((t, idx, k, 1) for k, t in enumerate(sched.emit_time.tolist()))
    heapq.heapify(heap)

    nodes: dict[int, _NodeNoise] = {}

    def node_noise(node: int) -> _NodeNoise:
        if node not in nodes:
            rng = np.random.default_rng(_child_seed(config.seed, 1, node))
            nodes[node] = _NodeNoise(config.noise_at(node), rng)
        return nodes[node]

    collected: dict[tuple[int, int], list[tuple[int, int]]] = {}
    pop, push = heapq.heappop, heapq.heappush
    while heap:
        t, idx, k, hop = pop(heap)
        route = stream_routes[idx]
        node = route[hop]
        t_out = t + node_noise(node).next()
        if node in probe_set:
            collected.setdefault((idx, node), []).append((k, t_out))
        if hop + 1 < len(route):
            push(heap, (t_out, idx, k, hop + 1))

    series: dict[tuple[str, NodeId], ProbeSeries] = {}
    for (idx, node), rows in sorted(collected.items()):
        rows.sort()
        arr = np.asarray(rows, dtype=np.int64)
        sid = config.streams[idx].spec.stream_id
        series[(sid, node)] = ProbeSeries(seq=arr[:, 0], arrival=arr[:, 1])

    return RunResult(
        config=config,
        routes=routes,
        schedules=schedules,
        series=series,
        node_stats={n: (nn.draws, nn.clamped) for n, nn in sorted(nodes.items())},
    )
