"""Command-line entry point: ``interlink {validate,crawl,harvest,analyze,export}``."""

from __future__ import annotations

import argparse
import logging
import sys
import warnings

from . import __version__
from .errors import ClassificationWarning, CapabilityWarning, ConfigError, InterlinkError, PartialResultWarning
from .pipeline import PipelineConfig, Run, validate

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RUNTIME = 2
EXIT_PARTIAL = 3

_PARTIAL = (PartialResultWarning, CapabilityWarning, ClassificationWarning)
FORMATS = ("edgelist", "dot", "gexf")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="interlink", description="Build and analyze hyperlink interlinking networks.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="pipeline configuration (JSON)")
    common.add_argument("--out", help="output directory (overrides output_dir)")
    common.add_argument("--strict", action="store_true", help="exit 3 when any data are partial")
    common.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("validate", parents=[common], help="check configuration and inputs")
    sub.add_parser("crawl", parents=[common], help="crawl the seed sites")
    sub.add_parser("harvest", parents=[common], help="crawl, derive samples and collect link data sets")
    sub.add_parser("analyze", parents=[common], help="run the full pipeline and write tables")
    exp = sub.add_parser("export", parents=[common], help="write network files only")
    exp.add_argument("--format", action="append", choices=FORMATS, help="repeatable; default all")
    return parser


def _print_findings(findings) -> bool:
    for f in findings:
        print(f, file=sys.stderr if f.level == "error" else sys.stdout)
    return any(f.level == "error" for f in findings)


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = PipelineConfig.load(args.config, args.out)
    except ConfigError as exc:
        print(f"ERROR [config] {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    findings = validate(cfg)
    if args.command == "validate":
        failed = _print_findings(findings)
        if not failed:
            print("configuration ok")
        return EXIT_VALIDATION if failed else EXIT_OK
    if any(f.level == "error" for f in findings):
        _print_findings([f for f in findings if f.level == "error"])
        return EXIT_VALIDATION

    strict = args.strict or False
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        try:
            run = Run(cfg, log_fn=lambda m: print(m, file=sys.stderr))
            if args.command == "crawl":
                status = run.crawl()
                for label, state in sorted(status.items()):
                    print(f"{label}\t{state}")
                code = EXIT_OK if all(v == "ok" for v in status.values()) else EXIT_RUNTIME
                run.manifest("ok" if code == EXIT_OK else "failed")
                return code
            if args.command == "harvest":
                run.harvest()
            elif args.command == "analyze":
                run.analyze()
            else:
                run.export(tuple(args.format or FORMATS))
        except (InterlinkError, OSError) as exc:
            print(f"ERROR {exc}", file=sys.stderr)
            return EXIT_RUNTIME
        partial = [w for w in caught if issubclass(w.category, _PARTIAL)]
        for w in caught:
            print(f"WARNING {w.category.__name__}: {w.message}", file=sys.stderr)
        status = "partial" if partial else "ok"
        run.manifest(status)
    if partial and strict:
        return EXIT_PARTIAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
