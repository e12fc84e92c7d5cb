import csv
import io
import json
import textwrap

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stegtrace.analysis import analyze_stream
from stegtrace.errors import InsufficientDataError, RecordFormatError, ScenarioParseError
from stegtrace.records import (
    HIST_COLUMNS,
    STATS_COLUMNS,
    read_records,
    write_histogram_csv,
    write_records,
    write_stats_csv,
)
from stegtrace.scenario import (
    PRESETS,
    canonical_json,
    load_preset,
    parse_scenario,
    parse_scenario_dict,
    scenario_hash,
    scenario_to_dict,
    with_overrides,
)
from stegtrace.simulator import Jitter, NoiseModel
from stegtrace.traffic import DelayMod, Lack, analytic_gap_profile

MINIMAL = textwrap.dedent(
    """\
    name: tiny
    topology: {kind: line, n: 6}
    streams:
      - id: a
        source: 0
        destination: 5
        T1_ms: 20
        method: {kind: lack, T2_ms: 30, P_percent: 10}
    noise:
      d_proc_ms: 0.05
      jitter: {kind: exponential, mean_ms: 0.2}
    probes: [1, 2, "3-4"]
    duration_s: 2
    seed: 4
    """
)


class TestPresets:
    def test_case1(self):
        c = load_preset("case1")
        assert c.topology.node_count == 50 and c.topology.edge_count == 49
        (s,) = c.streams
        assert (s.spec.source, s.spec.destination, s.spec.T1, s.spec.packet_count) == (0, 49, 20_000, 6000)
        assert s.method == Lack(30_000, 0.15)
        assert c.probes == tuple(range(1, 49))
        assert c.default_noise == NoiseModel(50, Jitter.uniform(0, 500))
        assert c.disturbances == ()

    def test_case2(self):
        c = load_preset("case2")
        (s,) = c.streams
        assert s.spec.T1 == 50_000 and s.spec.packet_count == 2400
        assert s.method == DelayMod(25_000, 0.05, 100)
        (d,) = c.disturbances
        assert d.node == 15
        assert d.model == NoiseModel(50, Jitter.normal(30_000, 15_000), 0.0)
        assert c.noise_at(15) == d.model and c.noise_at(14) == c.default_noise

    def test_case3(self):
        c = load_preset("case3")
        assert (c.topology.node_count, c.topology.edge_count) == (36, 60)
        assert [s.spec.stream_id for s in c.streams] == ["s0-5", "s0-35"]
        assert all(s.method == Lack(30_000, 0.05) and s.spec.T1 == 20_000 for s in c.streams)
        assert c.disturbances[0].node == 12
        assert c.disturbances[0].model.rho == pytest.approx(0.15)

    @pytest.mark.parametrize("name", PRESETS)
    def test_round_trip(self, name):
        c = load_preset(name)
        doc = scenario_to_dict(c)
        again = parse_scenario_dict(json.loads(canonical_json(doc)))
        assert scenario_to_dict(again) == doc
        assert scenario_hash(again) == scenario_hash(c)

    def test_hash_tracks_seed(self):
        c = load_preset("case1")
        assert scenario_hash(with_overrides(c, seed=1)) == scenario_hash(c)
        assert scenario_hash(with_overrides(c, seed=2)) != scenario_hash(c)

    def test_zero_noise_override(self):
        c = with_overrides(load_preset("case2"), zero_noise=True)
        assert c.default_noise == NoiseModel() and c.disturbances == ()


class TestParsing:
    def test_minimal(self):
        c = parse_scenario(MINIMAL)
        assert c.name == "tiny" and c.seed == 4 and c.duration == 2_000_000
        assert c.probes == (1, 2, 3, 4)
        assert c.default_noise.jitter == Jitter.exponential(200)

    @pytest.mark.parametrize(
        "old,new,line,message",
        [
            ("T1_ms: 20", "T1_ms: fast", 7, "T1_ms"),
            ("P_percent: 10", "P_percent: 40", 8, "P"),
            ("kind: exponential", "kind: gamma", 11, "gamma"),
            ("seed: 4", "seed: 4\ncolour: red", 15, "colour"),
            ("probes: [1, 2, \"3-4\"]", "probes: [1, 2, \"x-4\"]", 12, "probe"),
            ("destination: 5", "destination: 9", 6, "destination"),
            ("duration_s: 2", "duration_s: [2", 14, None),
        ],
    )
    def test_errors_carry_line(self, old, new, line, message):
        text = MINIMAL.replace(old, new)
        with pytest.raises(ScenarioParseError, match=message) as info:
            parse_scenario(text)
        assert info.value.line == line
        assert str(info.value).startswith(f"line {line}:")

    def test_not_a_mapping(self):
        with pytest.raises(ScenarioParseError):
            parse_scenario("- 1\n- 2\n")

    def test_duplicate_probes(self):
        with pytest.raises(ScenarioParseError, match="duplicates"):
            parse_scenario(MINIMAL.replace('"3-4"', '"2-4"'))

    @settings(max_examples=30, deadline=None)
    @given(
        st.integers(2, 30),
        st.integers(5, 100),
        st.floats(0.0, 0.3),
        st.sampled_from([Jitter(), Jitter.uniform(0, 300), Jitter.normal(1_000, 200), Jitter.exponential(150)]),
        st.integers(0, 2**31),
    )
    def test_generated_round_trip(self, n, T1_ms, P, jitter, seed):
        doc = {
            "name": "gen",
            "topology": {"kind": "line", "n": n},
            "streams": [
                {"id": "x", "source": 0, "destination": n - 1, "T1_ms": T1_ms,
                 "method": {"kind": "lack", "T2_ms": T1_ms * 1.5, "P_percent": round(P * 100, 3)}}
            ],
            "noise": {"d_proc_ms": 0.05, "jitter": scenario_to_dict_jitter(jitter), "rho_percent": 0},
            "disturbances": [],
            "probes": list(range(n)),
            "duration_s": 10,
            "seed": seed,
        }
        c = parse_scenario_dict(doc)
        assert scenario_to_dict(parse_scenario_dict(scenario_to_dict(c))) == scenario_to_dict(c)


def scenario_to_dict_jitter(j):
    if j.kind == "none":
        return {"kind": "none"}
    if j.kind == "uniform":
        return {"kind": "uniform", "lo_ms": j.a / 1000, "hi_ms": j.b / 1000}
    if j.kind == "normal":
        return {"kind": "normal", "mean_ms": j.a / 1000, "stddev_ms": j.b / 1000}
    return {"kind": "exponential", "mean_ms": j.a / 1000}


@pytest.fixture(scope="module")
def tiny_run():
    from stegtrace.simulator import run_scenario

    return run_scenario(parse_scenario(MINIMAL))


def dump(run):
    buf = io.StringIO()
    write_records(run, buf)
    return buf.getvalue()


class TestRecords:
    def test_header_and_order(self, tiny_run):
        lines = dump(tiny_run).splitlines()
        header = json.loads(lines[0])
        assert header["format"] == "stegtrace-records" and header["version"] == 1
        assert header["seed"] == 4
        assert header["routes"] == {"a": [0, 1, 2, 3, 4, 5]}
        assert header["scenario_hash"] == scenario_hash(tiny_run.config)
        recs = [json.loads(x) for x in lines[1:]]
        assert len(recs) == tiny_run.record_count() == 4 * 100
        assert list(recs[0]) == ["probe", "stream", "seq", "arrival_us"]
        assert recs == sorted(recs, key=lambda r: (r["probe"], r["seq"]))

    def test_round_trip_is_byte_identical(self, tiny_run):
        text = dump(tiny_run)
        back = read_records(io.StringIO(text))
        assert dump(back) == text
        assert back.series.keys() == tiny_run.series.keys()

    @pytest.mark.parametrize(
        "mutate,line,message",
        [
            (lambda ls: ls[:3] + ["{not json"] + ls[3:], 4, "not JSON"),
            (lambda ls: ls[:2] + ['{"probe":1,"stream":"a","seq":"x","arrival_us":5}'] + ls[2:], 3, "seq"),
            (lambda ls: ls[:2] + ['{"probe":1,"stream":"zz","seq":0,"arrival_us":5}'] + ls[2:], 3, "zz"),
            (lambda ls: ls[:2] + ['{"probe":1,"seq":0,"arrival_us":5}'] + ls[2:], 3, "keys"),
            (lambda ls: [ls[0].replace('"seed":4', '"seed":5', 1)] + ls[1:], 1, "seed"),
            (lambda ls: [ls[0].replace('"T1_ms":20', '"T1_ms":25', 1)] + ls[1:], 1, "hash"),
            (lambda ls: ls[1:], 1, "header"),
        ],
    )
    def test_malformed(self, tiny_run, mutate, line, message):
        lines = mutate(dump(tiny_run).splitlines())
        with pytest.raises(RecordFormatError, match=message) as info:
            read_records(io.StringIO("\n".join(lines) + "\n"))
        assert info.value.line == line

    def test_empty_file(self):
        with pytest.raises(InsufficientDataError):
            read_records(io.StringIO(""))


class TestCsv:
    @pytest.fixture
    def analysis(self, tiny_run):
        per_probe = {p: tiny_run.series[("a", p)] for p in tiny_run.probes_for("a")}
        return analyze_stream(per_probe, "a", analytic_gap_profile(Lack(30_000, 0.1), 20_000))

    def test_histogram_columns(self, analysis):
        buf = io.StringIO()
        assert write_histogram_csv([analysis], buf) == 400
        rows = list(csv.reader(io.StringIO(buf.getvalue())))
        assert tuple(rows[0]) == HIST_COLUMNS == ("stream", "probe", "bin_index", "bin_lower_us", "count")
        assert rows[1][:3] == ["a", "1", "0"]
        assert float(rows[1][3]) == pytest.approx(analysis.histograms.lower, abs=1e-3)
        per_probe = {}
        for r in rows[1:]:
            per_probe[r[1]] = per_probe.get(r[1], 0) + int(r[4])
        assert per_probe == {str(p): 99 for p in (1, 2, 3, 4)}

    def test_stats_columns(self, analysis):
        buf = io.StringIO()
        assert write_stats_csv([analysis], buf) == 4
        rows = list(csv.DictReader(io.StringIO(buf.getvalue())))
        assert tuple(rows[0]) == STATS_COLUMNS
        s = analysis.stats[2]
        assert rows[1]["min_us"] == str(s.min)
        assert rows[1]["mean_us"] == f"{s.mean:.3f}"
        assert len(rows[1]["stddev_us"].split(".")[1]) == 3
