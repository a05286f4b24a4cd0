"""Command-line entry point: ``rabicat <experiment> [options]``.

Exit codes: 0 success, 2 invalid configuration, 3 numerical failure.
"""

import argparse
import json
import logging
import re
import sys

from .config import EXPERIMENTS, PRESETS, from_sections, load_config
from .errors import ConfigError, NumericalError
from .runner import plan, run

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3


def _overrides(pairs):
    out = {}
    for item in pairs or []:
        key, sep, val = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        out[key.strip()] = val.strip()
    return out


def build_parser():
    ap = argparse.ArgumentParser(prog="rabicat", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="experiment", required=True)
    for name in EXPERIMENTS + ("run",):
        sp = sub.add_parser(name, help="run a config file" if name == "run" else f"{name} experiment")
        if name == "run":
            sp.add_argument("config", help="path to a .cfg file")
        else:
            sp.add_argument("--config", help="optional .cfg file layered over the preset")
            sp.add_argument("--preset", choices=PRESETS, default=None)
        if name == "toy":
            sp.add_argument("--b", help="quadratic coefficient(s), comma separated")
            sp.add_argument("--c", help="linear coefficient")
            sp.add_argument("--scan-b", metavar="A:B:N", help="N evenly spaced b values from A to B")
        sp.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE",
                        help="override one config value (repeatable)")
        sp.add_argument("--output-dir")
        sp.add_argument("--cache-dir")
        sp.add_argument("--jobs", type=int)
        sp.add_argument("--precision-bits", type=int)
        sp.add_argument("--dry-run", action="store_true",
                        help="print the planned diagonalization count and memory, then exit")
    return ap


def _scan(spec):
    try:
        a, b, n = spec.split(":")
        n = int(n)
        if n < 1:
            raise ValueError
    except ValueError:
        raise ConfigError(f"--scan-b expects A:B:N, got {spec!r}") from None
    a, b = float(a), float(b)
    if n == 1:
        return [a]
    return [a + (b - a) * k / (n - 1) for k in range(n)]


def config_from_args(args):
    ov = _overrides(args.set)
    if args.experiment == "toy":
        bs = []
        if args.b is not None:
            bs.append(args.b)
        if args.scan_b is not None:
            bs.extend(repr(v) for v in _scan(args.scan_b))
        if bs:
            ov["toy.b"] = ",".join(bs)
        if args.c is not None:
            ov["toy.c"] = args.c
    for flag, key in (("output_dir", "run.output_dir"), ("cache_dir", "run.cache_dir"),
                      ("jobs", "run.jobs"), ("precision_bits", "run.precision_bits")):
        val = getattr(args, flag)
        if val is not None:
            ov[key] = str(val)
    if args.experiment == "run":
        return load_config(args.config, ov)
    if getattr(args, "preset", None):
        ov["run.preset"] = args.preset
    if args.config:
        cfg = load_config(args.config, ov)
        if cfg.experiment != args.experiment:
            raise ConfigError(f"config is for {cfg.experiment!r}, not {args.experiment!r}")
        return cfg
    return from_sections({"run": {"experiment": args.experiment}}, ov)


def _glue_negative_values(argv):
    # argparse reads "--scan-b -3:1:5" as two options; "--scan-b=-3:1:5" parses fine
    out, i = [], 0
    while i < len(argv):
        tok = argv[i]
        if (tok.startswith("--") and "=" not in tok and i + 1 < len(argv)
                and re.match(r"-\.?\d", argv[i + 1])):
            out.append(f"{tok}={argv[i + 1]}")
            i += 2
        else:
            out.append(tok)
            i += 1
    return out


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    args = build_parser().parse_args(_glue_negative_values(argv))
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = config_from_args(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.dry_run:
        print(json.dumps(plan(cfg), indent=2))
        return EXIT_OK

    def progress(step, total, g):
        logging.getLogger("rabicat").info("step %d/%d g=%.6f", step, total, g)

    try:
        manifest = run(cfg, progress=progress)
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(json.dumps({"config_hash": manifest["config_hash"],
                      "files": [f["name"] for f in manifest["files"]],
                      "wall_time_s": manifest["wall_time_s"]}, indent=2))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
