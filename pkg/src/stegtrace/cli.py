"""Command-line entry point: ``stegtrace {presets,run,analyze,localize}``.

Exit codes: 0 success, 1 usage or parse error, 2 insufficient data, 3 I/O error.
"""

from __future__ import annotations

import argparse
import json
import sys
import warnings
from pathlib import Path

from .analysis import analyze_stream
from .errors import InsufficientDataError, RecordFormatError, ScenarioParseError
from .localization import DEFAULT_ALPHA, DEFAULT_DELTA, DEFAULT_TAU, per_stream_localize
from .records import load_records, save_records, write_histogram_csv, write_stats_csv
from .scenario import PRESETS, load_scenario, preset_text, scenario_hash, with_overrides
from .simulator import ConfigurationWarning, run_scenario
from .traffic import analytic_gap_profile

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_INSUFFICIENT = 2
EXIT_IO = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="stegtrace", description="Simulate timing-steganography streams and locate their source.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sub.add_parser("presets", help="list the canned scenarios")

    run = sub.add_parser("run", help="simulate a scenario and write probe records")
    run.add_argument("scenario", help="preset name or path to a scenario YAML file")
    run.add_argument("--seed", type=int, help="override the scenario seed")
    run.add_argument("--out", type=Path, help="record file (default: <name>_seed<seed>.jsonl)")
    run.add_argument("--zero-noise", action="store_true", help="drop all per-node noise and disturbances")

    analyze = sub.add_parser("analyze", help="export histograms and delay statistics")
    analyze.add_argument("records", type=Path)
    analyze.add_argument("--hist-csv", type=Path, help="histogram CSV (default: <records>.hist.csv)")
    analyze.add_argument("--stats-csv", type=Path, help="statistics CSV (default: <records>.stats.csv)")

    loc = sub.add_parser("localize", help="rank candidate steganography sources")
    loc.add_argument("records", type=Path)
    loc.add_argument("--tau", type=float, default=DEFAULT_TAU, help="minimum top score")
    loc.add_argument("--delta", type=float, default=DEFAULT_DELTA, help="minimum lead over a rival peak")
    loc.add_argument("--alpha", type=float, default=DEFAULT_ALPHA, help="significance level")
    loc.add_argument("--json", type=Path, help="write the report here instead of stdout")
    loc.add_argument("--scenario", help="refuse records not produced by this scenario (preset or path)")
    return parser


def _cmd_presets(args) -> int:
    for name in PRESETS:
        first = preset_text(name).splitlines()[0].lstrip("# ")
        print(f"{name}\t{first}")
    return EXIT_OK


def _cmd_run(args) -> int:
    config = load_scenario(args.scenario)
    config = with_overrides(config, seed=args.seed, zero_noise=args.zero_noise)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", ConfigurationWarning)
        result = run_scenario(config)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    out = args.out or Path(f"{config.name}_seed{config.seed}.jsonl")
    n = save_records(result, out)
    for stream in config.streams:
        sid = stream.spec.stream_id
        print(
            f"stream {sid}: {len(result.schedules[sid])} packets, "
            f"route {'-'.join(map(str, result.routes[sid]))}, probes {len(result.probes_for(sid))}"
        )
    print(f"wrote {n} records to {out} (seed {config.seed})")
    return EXIT_OK


def _analyses(run):
    out = []
    for stream in run.config.streams:
        sid = stream.spec.stream_id
        per_probe = {p: run.series[(sid, p)] for p in run.probes_for(sid)}
        out.append(analyze_stream(per_probe, sid, analytic_gap_profile(stream.method, stream.spec.T1)))
    return out


def _cmd_analyze(args) -> int:
    run = load_records(args.records)
    analyses = _analyses(run)
    hist_path = args.hist_csv or args.records.with_suffix(".hist.csv")
    stats_path = args.stats_csv or args.records.with_suffix(".stats.csv")
    with open(hist_path, "w", newline="") as fh:
        hist_rows = write_histogram_csv(analyses, fh)
    with open(stats_path, "w", newline="") as fh:
        stats_rows = write_stats_csv(analyses, fh)
    print(f"wrote {hist_rows} histogram rows to {hist_path}")
    print(f"wrote {stats_rows} statistics rows to {stats_path}")
    return EXIT_OK


def localization_report(run, tau: float, delta: float, alpha: float) -> dict:
    reports = per_stream_localize(run, tau, delta, alpha)
    if all(r.result is None for r in reports):
        reasons = "; ".join(f"{k}: {v}" for r in reports for k, v in sorted(r.errors.items()))
        raise InsufficientDataError(reasons or "nothing to localize")
    return {
        "scenario_hash": scenario_hash(run.config),
        "seed": run.config.seed,
        "sources": [r.to_dict() for r in reports],
    }


def _cmd_localize(args) -> int:
    run = load_records(args.records)
    if args.scenario is not None:
        expected = with_overrides(load_scenario(args.scenario), seed=run.config.seed)
        if scenario_hash(expected) != scenario_hash(run.config):
            print("error: records were produced by a different scenario", file=sys.stderr)
            return EXIT_USAGE
    report = localization_report(run, args.tau, args.delta, args.alpha)
    text = json.dumps(report, indent=2) + "\n"
    if args.json:
        args.json.write_text(text)
        for src in report["sources"]:
            top = src["ranking"][0] if src["ranking"] else None
            print(f"source {src['source']}: top {top and top['node']} confident={src.get('confident')}")
    else:
        sys.stdout.write(text)
    return EXIT_OK


COMMANDS = {"presets": _cmd_presets, "run": _cmd_run, "analyze": _cmd_analyze, "localize": _cmd_localize}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (ScenarioParseError, RecordFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except InsufficientDataError as exc:
        print(f"insufficient data: {exc}", file=sys.stderr)
        return EXIT_INSUFFICIENT
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
