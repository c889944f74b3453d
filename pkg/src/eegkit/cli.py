"""``eegkit`` command line.

Exit codes: 0 success, 1 usage or config error, 2 runtime failure,
3 acceptance failure (study: a planted effect was missed or a null effect
came out significant).
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .config import ConfigError, dump_config, load_config
from .core import EEGKitError

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME, EXIT_ACCEPTANCE = 0, 1, 2, 3

log = logging.getLogger("eegkit")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(EXIT_USAGE)


def _common(p, out=True):
    p.add_argument("--config", type=Path, help="TOML config file (defaults apply to missing keys)")
    p.add_argument("--seed", type=int, help="override study.seed")
    p.add_argument("--jobs", type=int, help="worker processes (override study.jobs)")
    if out:
        p.add_argument("--out", type=Path, required=True, help="output directory")


def build_parser():
    p = _Parser(prog="eegkit", description="Synthetic headband EEG studies.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("simulate", help="write synthetic recordings")
    _common(s)

    s = sub.add_parser("serve", help="stream one recording over TCP")
    s.add_argument("recording", type=Path)
    s.add_argument("--endpoint", help="HOST:PORT (default $EEGKIT_ENDPOINT or 127.0.0.1:8372)")
    s.add_argument("--factor", type=float, default=1.0, help="realtime factor, 0 = as fast as possible")
    s.add_argument("--chunk", type=int, default=100, help="samples per frame")
    s.add_argument("--max-clients", type=int, default=1, help="exit after this many sessions (0 = never)")

    s = sub.add_parser("record", help="record one stream into a recording directory")
    s.add_argument("--endpoint")
    s.add_argument("--out", type=Path, required=True)
    s.add_argument("--timeout", type=float, default=10.0)

    s = sub.add_parser("preprocess", help="run the cleaning pipeline on recordings")
    s.add_argument("input", type=Path, help="recording directory or a tree of them")
    _common(s)

    s = sub.add_parser("analyze", help="group cluster statistics")
    s.add_argument("input", type=Path, help="preprocess output directory")
    _common(s)

    s = sub.add_parser("report", help="figures and markdown summary")
    s.add_argument("input", type=Path, help="analyze output directory")
    s.add_argument("--out", type=Path, required=True)

    s = sub.add_parser("study", help="simulate, stream, preprocess, analyze and report")
    _common(s)

    s = sub.add_parser("config", help="print the configuration")
    s.add_argument("--default", action="store_true", help="print the full default config")
    s.add_argument("--config", type=Path)
    return p


def _config(args):
    cfg = load_config(getattr(args, "config", None))
    study = cfg.study
    if getattr(args, "seed", None) is not None:
        study = replace(study, seed=args.seed)
    if getattr(args, "jobs", None) is not None:
        if args.jobs < 1:
            raise ConfigError("--jobs must be at least 1")
        study = replace(study, jobs=args.jobs)
    return replace(cfg, study=study)


def _endpoint(text):
    from .stream import default_endpoint, parse_endpoint

    return parse_endpoint(text) if text else default_endpoint()


def run(args):
    from . import study as st

    if args.command == "config":
        cfg = load_config(None if args.default else args.config)
        sys.stdout.write(dump_config(cfg))
        return EXIT_OK
    if args.command == "simulate":
        dirs = st.cmd_simulate(_config(args), args.out)
        print(f"wrote {len(dirs)} recordings under {args.out}")
        return EXIT_OK
    if args.command == "serve":
        from .io import load_recording
        from .stream import serve

        rec = load_recording(args.recording)
        ep = _endpoint(args.endpoint)
        summary = serve(rec, ep, args.factor, args.chunk, args.max_clients or None,
                        ready=lambda e: print(f"serving on {e[0]}:{e[1]}", flush=True))
        print(json.dumps(summary, sort_keys=True))
        return EXIT_OK
    if args.command == "record":
        from .stream import record

        rec = record(_endpoint(args.endpoint), args.out, args.timeout)
        print(f"recorded {rec.n_samples} samples, {len(rec.markers)} markers to {args.out}")
        return EXIT_OK
    if args.command == "preprocess":
        res = st.cmd_preprocess(_config(args), args.input, args.out)
        print(f"preprocessed {len(res['completed'])}, failed {len(res['failed'])}")
        for rel, err in res["failed"].items():
            print(f"  FAILED {rel}: {err}", file=sys.stderr)
        return EXIT_RUNTIME if res["failed"] else EXIT_OK
    if args.command == "analyze":
        summary = st.cmd_analyze(_config(args), args.input, args.out)
        _print_tasks(summary)
        return EXIT_OK
    if args.command == "report":
        from .report import cmd_report

        files = cmd_report(args.input, args.out)
        print(f"wrote {len(files)} files under {args.out}")
        return EXIT_OK
    if args.command == "study":
        summary = st.cmd_study(_config(args), args.out)
        _print_tasks(summary)
        return EXIT_OK if summary["all_planted_detected"] else EXIT_ACCEPTANCE
    raise AssertionError(args.command)


def _print_tasks(summary):
    for task, t in summary["tasks"].items():
        state = "detected" if t["detected"] else "not detected"
        print(f"{task:9s} {t['effect']:6s} {state:13s} min p = {t['min_p']:.4f} "
              f"({t['n_significant']} significant clusters)")


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return run(args)
    except ConfigError as exc:
        print(f"eegkit: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except EEGKitError as exc:
        print(f"eegkit: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except OSError as exc:
        print(f"eegkit: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
