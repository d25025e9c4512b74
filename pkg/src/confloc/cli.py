"""Command-line interface: ingest, analyze, bench gen, bench eval.

Exit codes are script-friendly: 0 means configuration-fault-free, 10 means
suspects were found, 11 means anomalous but inconclusive, and 64+ are
operational errors (64 usage, 65 bad data, 66 missing input, 69 backend
unavailable, 70 internal).
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from . import __version__, bench
from .anomaly import WeightedTokenSet
from .configs import (
    ConfigEntry,
    ConfigSettings,
    EntrySource,
    HotTermFilter,
    PropertyCatalog,
    build_hot_filter,
    load_settings,
)
from .errors import (
    AuthFailureError,
    BackendError,
    ConflocError,
    ConfigMismatchError,
    CorruptStoreError,
    DuplicatePropertyError,
    EmptySegmentError,
    MalformedConfigError,
    VersionMismatchError,
)
from .llm import (
    DEFAULT_MAX_SUSPECTS,
    DEFAULT_MODEL,
    DEFAULT_SCORE_THRESHOLD,
    HeuristicBackend,
    MockBackend,
    RemoteBackend,
)
from .parsing import ParserConfig, merge_parsed, parse_path
from .pipeline import LLM_HEURISTIC, LLM_MOCK, LLM_REMOTE, PipelineOptions, analyze
from .reporting import render
from .store import TemplateStore

EXIT_USAGE = 64
EXIT_DATA = 65
EXIT_NOINPUT = 66
EXIT_UNAVAILABLE = 69
EXIT_SOFTWARE = 70


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="confloc",
        description="Localize root-cause configuration properties from run-time logs.",
    )
    parser.add_argument("--version", action="version", version=f"confloc {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_parser_flags(cmd: argparse.ArgumentParser) -> None:
        cmd.add_argument("--parser-config", metavar="FILE", help="TOML/JSON parser settings")
        cmd.add_argument("--tree-depth", type=int, metavar="N")
        cmd.add_argument("--similarity", type=float, metavar="X")
        cmd.add_argument("--max-children", type=int, metavar="N")
        cmd.add_argument("--header-pattern", metavar="REGEX")

    ingest = sub.add_parser("ingest", help="parse fault-free logs into a template store")
    ingest.add_argument("--logs", nargs="+", required=True, metavar="PATH")
    ingest.add_argument("--store", required=True, metavar="FILE")
    add_parser_flags(ingest)

    an = sub.add_parser("analyze", help="localize configuration error triggers in may-fault logs")
    an.add_argument("--logs", nargs="+", required=True, metavar="PATH")
    an.add_argument("--config", action="append", required=True, metavar="FILE",
                    help="settings file; repeatable, later files win on duplicates")
    an.add_argument("--descriptions", metavar="FILE", help="property catalog JSON")
    an.add_argument("--store", required=True, metavar="FILE")
    an.add_argument("--tokens", metavar="FILE", help="JSON [token, weight] pairs")
    add_parser_flags(an)
    an.add_argument("--llm", choices=(LLM_MOCK, LLM_REMOTE, LLM_HEURISTIC), default=LLM_MOCK)
    an.add_argument("--fixtures", metavar="DIR", help="scripted mock responses")
    an.add_argument("--fixture-key", metavar="KEY", help="prefix for fixture file names")
    an.add_argument("--no-verify", action="store_true",
                    help="accept direct-inference matches without LLM verification")
    an.add_argument("--verify-threshold", type=int, default=DEFAULT_SCORE_THRESHOLD, metavar="N")
    an.add_argument("--max-suspects", type=int, default=DEFAULT_MAX_SUSPECTS, metavar="N")
    an.add_argument("--hot-k", type=int, default=20, metavar="N")
    an.add_argument("--no-name-match", action="store_true")
    an.add_argument("--no-value-match", action="store_true")
    an.add_argument("--report", metavar="PATH", help="write the report here instead of stdout")
    an.add_argument("--format", choices=("text", "json"), default="text")

    bench_cmd = sub.add_parser("bench", help="benchmark harness")
    bench_sub = bench_cmd.add_subparsers(dest="bench_command", required=True)

    gen = bench_sub.add_parser("gen", help="generate one synthetic benchmark case")
    gen.add_argument("--config", required=True, metavar="FILE", help="base settings file")
    gen.add_argument("--catalog", required=True, metavar="FILE")
    gen.add_argument("--seed", type=int, required=True, metavar="N")
    gen.add_argument("--profile", choices=("direct", "indirect", "clean"), required=True)
    gen.add_argument("--out", required=True, metavar="DIR")

    ev = bench_sub.add_parser("eval", help="evaluate generated cases and emit metrics")
    ev.add_argument("--cases", required=True, metavar="DIR")
    ev.add_argument("--llm", choices=(LLM_MOCK,), default=LLM_MOCK)
    ev.add_argument("--no-verify", action="store_true")
    ev.add_argument("--out", required=True, metavar="FILE")

    return parser


def _load_parser_config(args) -> ParserConfig:
    overrides = {
        key: value
        for key, value in (
            ("depth", args.tree_depth),
            ("similarity", args.similarity),
            ("max_children", args.max_children),
            ("header_pattern", args.header_pattern),
        )
        if value is not None
    }
    if args.parser_config:
        return ParserConfig.from_file(args.parser_config, **overrides)
    return ParserConfig(**overrides)


def _parse_logs(paths: list[str], config: ParserConfig):
    return merge_parsed([parse_path(p, config) for p in paths])


def _merge_config_files(paths: list[str]) -> tuple[ConfigSettings, list[str]]:
    """Merge settings files; later files win on duplicate names, with a warning."""
    warnings: list[str] = []
    merged: dict[str, str] = {}
    for path in paths:
        settings = load_settings(path, source=EntrySource.USER_DEFINED)
        for entry in settings.entries:
            if entry.property in merged:
                warnings.append(f"duplicate property {entry.property!r}; later file wins ({path})")
            merged[entry.property] = entry.value
    return (
        ConfigSettings(
            entries=tuple(
                ConfigEntry(property=name, value=value, source=EntrySource.USER_DEFINED)
                for name, value in merged.items()
            )
        ),
        warnings,
    )


def _cmd_ingest(args) -> int:
    config = _load_parser_config(args)
    store_path = Path(args.store)
    if store_path.exists():
        store = TemplateStore.load(store_path)
    else:
        store = TemplateStore(parser_config_fingerprint=config.fingerprint())
    parsed = _parse_logs(args.logs, config)
    added = store.ingest(parsed)
    store.persist(store_path)
    print(f"ingested {len(parsed.records)} records; {added} new templates; "
          f"store now holds {len(store.entries)}")
    return 0


def _make_backend(args):
    if args.llm == LLM_REMOTE:
        if not os.environ.get("LLM_API_KEY"):
            raise BackendError("remote backend needs LLM_API_KEY in the environment")
        return RemoteBackend()
    if args.llm == LLM_HEURISTIC:
        return HeuristicBackend()
    if not args.fixtures:
        raise BackendError("mock backend needs --fixtures pointing at scripted responses")
    return MockBackend.from_dir(args.fixtures, key=args.fixture_key)


def _cmd_analyze(args) -> int:
    config = _load_parser_config(args)
    store = TemplateStore.load(args.store)
    parsed = _parse_logs(args.logs, config)

    settings, merge_warnings = _merge_config_files(args.config)
    for warning in merge_warnings:
        print(f"warning: {warning}", file=sys.stderr)

    catalog = PropertyCatalog.from_json(args.descriptions) if args.descriptions else PropertyCatalog.empty()
    hot = build_hot_filter(catalog, args.hot_k) if catalog.universe and args.hot_k > 0 else HotTermFilter.empty()
    tokens = WeightedTokenSet.from_file(args.tokens) if args.tokens else WeightedTokenSet.default()
    backend = _make_backend(args)

    options = PipelineOptions(
        llm_mode=args.llm,
        no_verify=args.no_verify,
        verify_threshold=args.verify_threshold,
        max_suspects=args.max_suspects,
        model_id=os.environ.get("LLM_MODEL", DEFAULT_MODEL),
        use_name_match=not args.no_name_match,
        use_value_match=not args.no_value_match,
    )
    result = analyze(parsed, store, settings, catalog, tokens, hot, backend, options)

    payload = render(result.report, args.format)
    if args.report:
        Path(args.report).write_bytes(payload)
    else:
        sys.stdout.buffer.write(payload)
    return result.exit_code


def _cmd_bench_gen(args) -> int:
    base = load_settings(args.config, source=EntrySource.USER_DEFINED)
    catalog = PropertyCatalog.from_json(args.catalog)
    case_dir = bench.gen_case(
        base, catalog, args.seed, bench.SymptomProfile(args.profile), args.out
    )
    print(f"wrote case {case_dir}")
    return 0


def _cmd_bench_eval(args) -> int:
    outcomes = bench.eval_cases(args.cases, no_verify=args.no_verify)
    Path(args.out).write_text(bench.metrics_to_json(outcomes), encoding="utf-8")
    correct = sum(1 for o in outcomes if o.result.stage1_correct and o.result.stage2_correct)
    print(f"evaluated {len(outcomes)} cases; {correct} fully correct; metrics in {args.out}")
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors; keep the sysexits convention.
        return EXIT_USAGE if exc.code not in (0, None) else 0

    try:
        if args.command == "ingest":
            return _cmd_ingest(args)
        if args.command == "analyze":
            return _cmd_analyze(args)
        if args.command == "bench":
            if args.bench_command == "gen":
                return _cmd_bench_gen(args)
            return _cmd_bench_eval(args)
        raise AssertionError(f"unhandled command {args.command}")
    except FileNotFoundError as exc:
        print(f"confloc: missing input: {exc}", file=sys.stderr)
        return EXIT_NOINPUT
    except (
        MalformedConfigError,
        DuplicatePropertyError,
        EmptySegmentError,
        CorruptStoreError,
        VersionMismatchError,
        ConfigMismatchError,
    ) as exc:
        print(f"confloc: bad input data: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (AuthFailureError, BackendError) as exc:
        print(f"confloc: LLM backend unavailable: {exc}", file=sys.stderr)
        return EXIT_UNAVAILABLE
    except OSError as exc:
        print(f"confloc: i/o failure: {exc}", file=sys.stderr)
        return EXIT_NOINPUT
    except ConflocError as exc:
        print(f"confloc: {exc}", file=sys.stderr)
        return EXIT_SOFTWARE


if __name__ == "__main__":
    raise SystemExit(main())
