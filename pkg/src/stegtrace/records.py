"""JSONL record files and CSV exports.

A record file starts with one header object describing the scenario that
produced it, followed by one object per probe record::

    {"format":"stegtrace-records","version":1,"scenario_hash":"…","seed":7,"scenario":{…},"routes":{…}}
    {"probe":1,"stream":"s0","seq":0,"arrival_us":50}
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import IO, Iterable

import numpy as np

from .analysis import StreamAnalysis
from .errors import InsufficientDataError, RecordFormatError
from .scenario import canonical_json, parse_scenario_dict, scenario_hash, scenario_to_dict
from .simulator import ProbeSeries, RunResult

FORMAT = "stegtrace-records"
VERSION = 1
RECORD_KEYS = ("probe", "stream", "seq", "arrival_us")
HIST_COLUMNS = ("stream", "probe", "bin_index", "bin_lower_us", "count")
STATS_COLUMNS = ("stream", "probe", "min_us", "max_us", "mean_us", "stddev_us")


def header_for(run: RunResult) -> dict:
    return {
        "format": FORMAT,
        "version": VERSION,
        "scenario_hash": scenario_hash(run.config),
        "seed": run.config.seed,
        "scenario": scenario_to_dict(run.config),
        "routes": {sid: list(route) for sid, route in run.routes.items()},
    }


def _dump(obj: dict) -> str:
    return json.dumps(obj, separators=(",", ":"))


def write_records(run: RunResult, out: IO[str]) -> int:
    """Write the header and every record; returns the number of records."""
    out.write(_dump(header_for(run)) + "\n")
    n = 0
    for sid in run.stream_ids():
        for probe in run.probes_for(sid):
            ps = run.series[(sid, probe)]
            prefix = f'{{"probe":{probe},"stream":{json.dumps(sid)},"seq":'
            out.writelines(f'{prefix}{k},"arrival_us":{t}}}\n' for k, t in zip(ps.seq.tolist(), ps.arrival.tolist()))
            n += len(ps)
    return n


def save_records(run: RunResult, path: str | Path) -> int:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        return write_records(run, fh)


def _int_field(obj: dict, key: str, lineno: int) -> int:
    value = obj.get(key)
    if not isinstance(value, int) or isinstance(value, bool):
        raise RecordFormatError(f"field {key!r} must be an integer", lineno)
    return value


def read_records(lines: Iterable[str]) -> RunResult:
    """Rebuild a run (without schedules) from a record file's lines."""
    it = iter(lines)
    header = None
    lineno = 0
    for lineno, line in enumerate(it, start=1):
        if line.strip():
            try:
                header = json.loads(line)
            except json.JSONDecodeError as exc:
                raise RecordFormatError(f"header is not JSON: {exc.msg}", lineno) from None
            break
    if header is None:
        raise InsufficientDataError("record file is empty")
    if not isinstance(header, dict) or header.get("format") != FORMAT:
        raise RecordFormatError("missing stegtrace record header", lineno)
    if header.get("version") != VERSION:
        raise RecordFormatError(f"unsupported record version {header.get('version')!r}", lineno)
    scenario_doc = header.get("scenario")
    config = parse_scenario_dict(scenario_doc)
    if canonical_json(scenario_to_dict(config)) != canonical_json(scenario_doc) or scenario_hash(config) != header.get("scenario_hash"):
        raise RecordFormatError("scenario hash does not match the embedded scenario", lineno)
    if header.get("seed") != config.seed:
        raise RecordFormatError("header seed differs from the scenario seed", lineno)
    routes = config.routes()
    if {sid: list(r) for sid, r in routes.items()} != header.get("routes"):
        raise RecordFormatError("recorded routes differ from the scenario's routes", lineno)
    known = set(routes)

    collected: dict[tuple[str, int], list[tuple[int, int]]] = {}
    for lineno, line in enumerate(it, start=lineno + 1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise RecordFormatError(f"not JSON: {exc.msg}", lineno) from None
        if not isinstance(obj, dict) or tuple(obj) != RECORD_KEYS:
            raise RecordFormatError(f"expected keys {', '.join(RECORD_KEYS)}", lineno)
        sid = obj["stream"]
        if sid not in known:
            raise RecordFormatError(f"unknown stream {sid!r}", lineno)
        probe = _int_field(obj, "probe", lineno)
        collected.setdefault((sid, probe), []).append((_int_field(obj, "seq", lineno), _int_field(obj, "arrival_us", lineno)))

    order = {sid: i for i, sid in enumerate(routes)}
    series = {}
    for key in sorted(collected, key=lambda k: (order[k[0]], k[1])):
        rows = sorted(collected[key])
        arr = np.asarray(rows, dtype=np.int64)
        series[key] = ProbeSeries(seq=arr[:, 0], arrival=arr[:, 1])
    return RunResult(config=config, routes=routes, schedules={}, series=series, node_stats={})


def load_records(path: str | Path) -> RunResult:
    with open(path, encoding="utf-8") as fh:
        return read_records(fh)


def write_histogram_csv(analyses: Iterable[StreamAnalysis], out: IO[str]) -> int:
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(HIST_COLUMNS)
    rows = 0
    for a in analyses:
        h = a.histograms
        for probe in h.probes:
            for i, count in enumerate(h.counts[probe].tolist()):
                writer.writerow((a.stream_id, probe, i, f"{h.bin_lower(i):.3f}", count))
                rows += 1
    return rows


def write_stats_csv(analyses: Iterable[StreamAnalysis], out: IO[str]) -> int:
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(STATS_COLUMNS)
    rows = 0
    for a in analyses:
        for probe, s in sorted(a.stats.items()):
            writer.writerow((a.stream_id, probe, s.min, s.max, f"{s.mean:.3f}", f"{s.stddev:.3f}"))
            rows += 1
    return rows
