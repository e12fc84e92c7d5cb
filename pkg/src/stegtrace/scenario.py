"""Scenario documents (YAML) and the canned scenarios.

Scenario files use the units of the original experiment tables: milliseconds
for times, percent for fractions, seconds for the run length. Everything is
converted to integer microseconds here and nowhere else.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from importlib import resources
from pathlib import Path
from typing import Any

import yaml

from .errors import InvalidParameterError, ScenarioParseError
from .simulator import (
    DisturbanceSpec,
    Jitter,
    NoiseModel,
    ScenarioConfig,
    StreamConfig,
    ZERO_NOISE,
)
from .topology import Topology, make_line, make_manhattan
from .traffic import DelayMod, Lack, NoSteg, StreamSpec, bits_from_string, bits_to_string

PRESETS = ("case1", "case2", "case3")

US_PER_MS = 1000
US_PER_S = 1_000_000


class _Map(dict):
    """Mapping that remembers the source line of itself and of each key."""

    line: int | None = None
    key_lines: dict


class _LineLoader(yaml.SafeLoader):
    pass


def _construct_mapping(loader, node, deep=False):
    loader.flatten_mapping(node)
    out = _Map()
    out.line = node.start_mark.line + 1
    out.key_lines = {}
    for key_node, value_node in node.value:
        key = loader.construct_object(key_node, deep=True)
        if key in out:
            raise ScenarioParseError(f"duplicate key {key!r}", key_node.start_mark.line + 1)
        out[key] = loader.construct_object(value_node, deep=True)
        out.key_lines[key] = key_node.start_mark.line + 1
    return out


_LineLoader.add_constructor(yaml.resolver.BaseResolver.DEFAULT_MAPPING_TAG, _construct_mapping)


def _line(doc: Any, key: str | None = None) -> int | None:
    if isinstance(doc, _Map):
        if key is not None and key in doc.key_lines:
            return doc.key_lines[key]
        return doc.line
    return None


def _get(doc: dict, key: str, kind, default: Any = ..., where: str = "") -> Any:
    if not isinstance(doc, dict):
        raise ScenarioParseError(f"{where or 'section'} must be a mapping", _line(doc))
    if key not in doc:
        if default is ...:
            raise ScenarioParseError(f"missing key {key!r}{' in ' + where if where else ''}", _line(doc))
        return default
    value = doc[key]
    ok = isinstance(value, kind) and not (isinstance(value, bool) and bool not in _as_tuple(kind))
    if not ok:
        names = "/".join(k.__name__ for k in _as_tuple(kind))
        raise ScenarioParseError(f"key {key!r} must be {names}, got {value!r}", _line(doc, key))
    return value


def _as_tuple(kind) -> tuple:
    return kind if isinstance(kind, tuple) else (kind,)


NUM = (int, float)


def _ms(value: float) -> int:
    return int(round(value * US_PER_MS))


def _percent(value: float) -> float:
    return value / 100.0


def _check_keys(doc: dict, allowed: set[str], where: str) -> None:
    for key in doc:
        if key not in allowed:
            raise ScenarioParseError(f"unknown key {key!r} in {where}", _line(doc, key))


def _parse_topology(doc: dict) -> Topology:
    kind = _get(doc, "kind", str, where="topology")
    try:
        if kind == "line":
            _check_keys(doc, {"kind", "n"}, "topology")
            return make_line(_get(doc, "n", int, where="topology"))
        if kind == "manhattan":
            _check_keys(doc, {"kind", "w", "h"}, "topology")
            return make_manhattan(_get(doc, "w", int, where="topology"), _get(doc, "h", int, where="topology"))
        if kind == "edges":
            _check_keys(doc, {"kind", "nodes", "edges"}, "topology")
            nodes = _get(doc, "nodes", int, where="topology")
            edges = _get(doc, "edges", list, where="topology")
            pairs = []
            for e in edges:
                if not (isinstance(e, list) and len(e) == 2 and all(isinstance(x, int) for x in e)):
                    raise ScenarioParseError(f"edge {e!r} must be a pair of node ids", _line(doc, "edges"))
                pairs.append((e[0], e[1]))
            return Topology.from_edges(nodes, pairs)
    except InvalidParameterError as exc:
        raise ScenarioParseError(str(exc), _line(doc)) from None
    raise ScenarioParseError(f"unknown topology kind {kind!r}", _line(doc, "kind"))


def _parse_jitter(doc: Any) -> Jitter:
    if doc is None:
        return Jitter()
    kind = _get(doc, "kind", str, where="jitter")
    try:
        if kind == "none":
            _check_keys(doc, {"kind"}, "jitter")
            return Jitter()
        if kind == "uniform":
            _check_keys(doc, {"kind", "lo_ms", "hi_ms"}, "jitter")
            return Jitter.uniform(_ms(_get(doc, "lo_ms", NUM)), _ms(_get(doc, "hi_ms", NUM)))
        if kind == "normal":
            _check_keys(doc, {"kind", "mean_ms", "stddev_ms"}, "jitter")
            return Jitter.normal(_ms(_get(doc, "mean_ms", NUM)), _ms(_get(doc, "stddev_ms", NUM)))
        if kind == "exponential":
            _check_keys(doc, {"kind", "mean_ms"}, "jitter")
            return Jitter.exponential(_ms(_get(doc, "mean_ms", NUM)))
    except InvalidParameterError as exc:
        raise ScenarioParseError(str(exc), _line(doc)) from None
    raise ScenarioParseError(f"unknown jitter kind {kind!r}", _line(doc, "kind"))


def _parse_noise(doc: Any, extra: set[str] = frozenset()) -> NoiseModel:
    if doc is None:
        return ZERO_NOISE
    _check_keys(doc, {"d_proc_ms", "jitter", "rho_percent"} | set(extra), "noise")
    try:
        return NoiseModel(
            d_proc=_ms(_get(doc, "d_proc_ms", NUM, 0)),
            jitter=_parse_jitter(doc.get("jitter")),
            rho=_percent(_get(doc, "rho_percent", NUM, 0)),
        )
    except InvalidParameterError as exc:
        raise ScenarioParseError(str(exc), _line(doc)) from None


def _parse_method(doc: Any):
    if doc is None:
        return NoSteg()
    kind = _get(doc, "kind", str, where="method")
    try:
        if kind == "none":
            _check_keys(doc, {"kind"}, "method")
            return NoSteg()
        if kind == "lack":
            _check_keys(doc, {"kind", "T2_ms", "P_percent"}, "method")
            return Lack(_ms(_get(doc, "T2_ms", NUM)), _percent(_get(doc, "P_percent", NUM)))
        if kind == "delaymod":
            _check_keys(doc, {"kind", "T2_ms", "P_percent", "L", "bits"}, "method")
            bits = _get(doc, "bits", str, None)
            return DelayMod(
                _ms(_get(doc, "T2_ms", NUM)),
                _percent(_get(doc, "P_percent", NUM)),
                _get(doc, "L", int),
                None if bits is None else bits_from_string(bits),
            )
    except InvalidParameterError as exc:
        raise ScenarioParseError(str(exc), _line(doc)) from None
    raise ScenarioParseError(f"unknown method kind {kind!r}", _line(doc, "kind"))


def _parse_probes(doc: dict) -> tuple[int, ...]:
    raw = _get(doc, "probes", (list, str, int))
    items = raw if isinstance(raw, list) else [raw]
    out: list[int] = []
    for item in items:
        if isinstance(item, bool):
            raise ScenarioParseError(f"bad probe entry {item!r}", _line(doc, "probes"))
        if isinstance(item, int):
            out.append(item)
            continue
        if isinstance(item, str):
            lo, sep, hi = item.partition("-")
            try:
                if sep:
                    out.extend(range(int(lo), int(hi) + 1))
                else:
                    out.append(int(lo))
                continue
            except ValueError:
                pass
        raise ScenarioParseError(f"bad probe entry {item!r}", _line(doc, "probes"))
    if len(set(out)) != len(out):
        raise ScenarioParseError("probe list has duplicates", _line(doc, "probes"))
    return tuple(out)


def parse_scenario_dict(doc: Any) -> ScenarioConfig:
    if not isinstance(doc, dict):
        raise ScenarioParseError("scenario must be a mapping", 1)
    _check_keys(doc, {"name", "topology", "streams", "noise", "disturbances", "probes", "duration_s", "seed"}, "scenario")
    name = _get(doc, "name", str, "custom")
    topo = _parse_topology(_get(doc, "topology", dict))
    duration = int(round(_get(doc, "duration_s", NUM) * US_PER_S))
    seed = _get(doc, "seed", int, 0)
    default_noise = _parse_noise(_get(doc, "noise", dict, None))

    streams = []
    stream_docs = _get(doc, "streams", list)
    for i, sdoc in enumerate(stream_docs):
        where = f"stream {i}"
        if not isinstance(sdoc, dict):
            raise ScenarioParseError(f"{where} must be a mapping", _line(doc, "streams"))
        _check_keys(sdoc, {"id", "source", "destination", "T1_ms", "method"}, where)
        try:
            spec = StreamSpec(
                stream_id=str(_get(sdoc, "id", (str, int), f"s{i}", where)),
                source=_get(sdoc, "source", int, where=where),
                destination=_get(sdoc, "destination", int, where=where),
                T1=_ms(_get(sdoc, "T1_ms", NUM, where=where)),
                duration=duration,
            )
        except InvalidParameterError as exc:
            raise ScenarioParseError(str(exc), _line(sdoc)) from None
        for key in ("source", "destination"):
            try:
                topo.check_node(getattr(spec, key))
            except InvalidParameterError as exc:
                raise ScenarioParseError(f"{where} {key}: {exc}", _line(sdoc, key)) from None
        streams.append(StreamConfig(spec, _parse_method(_get(sdoc, "method", dict, None, where))))

    disturbances = []
    for ddoc in _get(doc, "disturbances", list, []):
        node = _get(ddoc, "node", int, where="disturbance")
        if not 0 <= node < topo.node_count:
            raise ScenarioParseError(f"disturbance node {node} is not in the topology", _line(ddoc, "node"))
        disturbances.append(DisturbanceSpec(node, _parse_noise(ddoc, extra={"node"})))

    try:
        return ScenarioConfig(
            topology=topo,
            streams=tuple(streams),
            default_noise=default_noise,
            disturbances=tuple(disturbances),
            probes=_parse_probes(doc),
            duration=duration,
            seed=seed,
            name=name,
        )
    except InvalidParameterError as exc:
        raise ScenarioParseError(str(exc), _line(doc)) from None


def parse_scenario(text: str) -> ScenarioConfig:
    """Parse a YAML scenario document; errors carry the offending line."""
    try:
        doc = yaml.load(text, Loader=_LineLoader)
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark or exc.context_mark
        raise ScenarioParseError(exc.problem or str(exc), mark.line + 1 if mark else None) from None
    return parse_scenario_dict(doc)


def preset_text(name: str) -> str:
    if name not in PRESETS:
        raise ScenarioParseError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
    return resources.files("stegtrace").joinpath("presets").joinpath(f"{name}.yaml").read_text()


def load_preset(name: str) -> ScenarioConfig:
    return parse_scenario(preset_text(name))


def load_scenario(ref: str | Path) -> ScenarioConfig:
    """Load a preset by name or a scenario file by path."""
    if str(ref) in PRESETS:
        return load_preset(str(ref))
    return parse_scenario(Path(ref).read_text())


def with_overrides(config: ScenarioConfig, seed: int | None = None, zero_noise: bool = False) -> ScenarioConfig:
    """Copy of ``config`` with a new seed and/or every noise source removed."""
    changes: dict[str, Any] = {}
    if seed is not None:
        changes["seed"] = seed
    if zero_noise:
        changes["default_noise"] = ZERO_NOISE
        changes["disturbances"] = ()
    return dataclasses.replace(config, **changes)


def _ms_out(us: float) -> int | float:
    value = us / US_PER_MS
    return int(value) if float(value).is_integer() else value


def _s_out(us: int) -> int | float:
    value = us / US_PER_S
    return int(value) if float(value).is_integer() else value


def _pct_out(frac: float) -> int | float:
    value = round(frac * 100, 9)
    return int(value) if float(value).is_integer() else value


def _jitter_dict(j: Jitter) -> dict:
    if j.kind == "uniform":
        return {"kind": "uniform", "lo_ms": _ms_out(j.a), "hi_ms": _ms_out(j.b)}
    if j.kind == "normal":
        return {"kind": "normal", "mean_ms": _ms_out(j.a), "stddev_ms": _ms_out(j.b)}
    if j.kind == "exponential":
        return {"kind": "exponential", "mean_ms": _ms_out(j.a)}
    return {"kind": "none"}


def _noise_dict(n: NoiseModel) -> dict:
    return {"d_proc_ms": _ms_out(n.d_proc), "jitter": _jitter_dict(n.jitter), "rho_percent": _pct_out(n.rho)}


def _method_dict(m) -> dict:
    if isinstance(m, Lack):
        return {"kind": "lack", "T2_ms": _ms_out(m.T2), "P_percent": _pct_out(m.P)}
    if isinstance(m, DelayMod):
        out = {"kind": "delaymod", "T2_ms": _ms_out(m.T2), "P_percent": _pct_out(m.P), "L": m.L}
        if m.bits is not None:
            out["bits"] = bits_to_string(m.bits)
        return out
    return {"kind": "none"}


def _topology_dict(t: Topology) -> dict:
    if t.node_count >= 2 and t == make_line(t.node_count):
        return {"kind": "line", "n": t.node_count}
    if t.name.startswith("manhattan-"):
        w, h = (int(x) for x in t.name.split("-", 1)[1].split("x"))
        if t == make_manhattan(w, h):
            return {"kind": "manhattan", "w": w, "h": h}
    return {"kind": "edges", "nodes": t.node_count, "edges": [list(e) for e in t.sorted_edges()]}


def scenario_to_dict(config: ScenarioConfig) -> dict:
    """Scenario document equivalent to ``config``; parses back to an equal config."""
    return {
        "name": config.name,
        "topology": _topology_dict(config.topology),
        "streams": [
            {
                "id": s.spec.stream_id,
                "source": s.spec.source,
                "destination": s.spec.destination,
                "T1_ms": _ms_out(s.spec.T1),
                "method": _method_dict(s.method),
            }
            for s in config.streams
        ],
        "noise": _noise_dict(config.default_noise),
        "disturbances": [{"node": d.node, **_noise_dict(d.model)} for d in config.disturbances],
        "probes": list(config.probes),
        "duration_s": _s_out(config.duration),
        "seed": config.seed,
    }


def canonical_json(doc: Any) -> str:
    return json.dumps(doc, sort_keys=True, separators=(",", ":"))


def scenario_hash(config: ScenarioConfig) -> str:
    return hashlib.sha256(canonical_json(scenario_to_dict(config)).encode()).hexdigest()
