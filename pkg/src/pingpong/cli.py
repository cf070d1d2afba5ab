"""Command-line front end.

Subcommands::

    pingpong run       Monte Carlo experiment -> stats JSON (+ optional JSONL transcript)
    pingpong sweep     exact (d, n) survival table -> CSV or JSON
    pingpong analytic  survival after n rounds for a given p (or attack d)
    pingpong verify    built-in invariant checks

Exit codes follow sysexits: 0 ok, 2 intrusion detected in --stop-on-intrusion
mode, 64 usage error, 74 output could not be written.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import analysis
from .adversary import StrategyError
from .verify import run_checks

EXIT_OK = 0
EXIT_INTRUSION = 2
EXIT_USAGE = 64
EXIT_IOERR = 74

NUMBER_FORMATS = """\
numeric output: JSON uses shortest round-trip floats; CSV writes p_detect with 12
decimals and log10_survival with 10 decimals; survival probabilities print as
<mantissa with 3 significant figures>e<exponent> (e.g. 9.33e-302). Output never
depends on locale.
"""


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def text_to_bits(text: str) -> list[int]:
    """UTF-8 bytes, most significant bit first."""
    return [(byte >> shift) & 1 for byte in text.encode("utf-8") for shift in range(7, -1, -1)]


def bits_to_text(bits: Sequence[int]) -> str:
    """Inverse of :func:`text_to_bits`; a trailing partial byte is dropped."""
    out = bytearray()
    for i in range(0, len(bits) - len(bits) % 8, 8):
        byte = 0
        for b in bits[i:i + 8]:
            byte = (byte << 1) | b
        out.append(byte)
    return out.decode("utf-8", errors="replace")


def _parse_list(text: str, cast) -> list:
    """Comma-separated values; ``start:stop:step`` expands inclusively."""
    out = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if ":" in part:
            pieces = part.split(":")
            if len(pieces) != 3:
                raise UsageError(f"range {part!r} must be start:stop:step")
            start, stop, step = (float(p) for p in pieces)
            if step <= 0:
                raise UsageError("range step must be positive")
            count = int(round((stop - start) / step))
            out.extend(cast(round(start + i * step, 12)) for i in range(count + 1))
        else:
            out.append(cast(part))
    if not out:
        raise UsageError("empty value list")
    return out


def _read_config(path: str) -> dict:
    """``key = value`` lines; ``#`` comments; keys use the long flag names."""
    values = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from None
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise UsageError(f"{path}:{lineno}: expected key = value")
        values[key.strip().replace("-", "_")] = value.strip()
    return values


def _coerce_config(values: dict, parser: argparse.ArgumentParser) -> dict:
    actions = {a.dest: a for a in parser._actions}
    out = {}
    for key, raw in values.items():
        action = actions.get(key)
        if action is None:
            raise UsageError(f"unknown config key {key!r}")
        if isinstance(action, argparse._StoreTrueAction):
            out[key] = raw.lower() in ("1", "true", "yes", "on")
        elif action.type is not None:
            try:
                out[key] = action.type(raw)
            except ValueError:
                raise UsageError(f"bad value for {key}: {raw!r}") from None
        else:
            out[key] = raw
    return out


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="pingpong", description=__doc__,
                     formatter_class=argparse.RawDescriptionHelpFormatter, epilog=NUMBER_FORMATS)
    parser.add_argument("--config", help="key = value file; command-line flags override it")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    run = sub.add_parser("run", help="run a Monte Carlo experiment", epilog=NUMBER_FORMATS)
    run.add_argument("--strategy", default="none",
                     help="none | ancilla:d=<x>[,chi=orthonormal|overlap:<c>] | "
                          "intercept_resend[:basis=computational|diagonal]")
    run.add_argument("--rounds", type=int, default=1000, help="rounds per trial")
    run.add_argument("--trials", type=int, default=1)
    run.add_argument("--seed", type=int, default=analysis.DEFAULT_SEED,
                     help=f"master seed (default {analysis.DEFAULT_SEED})")
    run.add_argument("--message", help="UTF-8 text to send; sets the bits and the round count")
    run.add_argument("--bits", help="fixed 0/1 pattern, cycled (default: random bits)")
    run.add_argument("--stop-on-intrusion", action="store_true")
    run.add_argument("--output", "-o", help="stats destination (default stdout)")
    run.add_argument("--transcript", help="write per-round JSONL here")
    run.add_argument("--format", choices=("json", "jsonl"), default="json",
                     help="json: stats object; jsonl: round transcript to --output")

    sweep = sub.add_parser("sweep", help="exact survival table over d and n", epilog=NUMBER_FORMATS)
    sweep.add_argument("--d", default="0,0.25,0.5", help="comma list or start:stop:step")
    sweep.add_argument("--n", default="1,10,100,1000", help="comma list or start:stop:step")
    sweep.add_argument("--chi", default="orthonormal")
    sweep.add_argument("--output", "-o")
    sweep.add_argument("--format", choices=("csv", "json"), default="csv")

    an = sub.add_parser("analytic", help="survival probability after n rounds", epilog=NUMBER_FORMATS)
    an.add_argument("--n", type=int, required=False, default=1000)
    group = an.add_mutually_exclusive_group()
    group.add_argument("--p", type=float, help="per-round detection probability")
    group.add_argument("--d", type=float, help="ancilla attack parameter; p from the exact oracle")

    sub.add_parser("verify", help="run the built-in invariant checks")
    return parser


def _emit(text: str, path: Optional[str]) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
        return
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def cmd_run(args) -> int:
    bit_source = "random"
    rounds = args.rounds
    if args.message is not None and args.bits is not None:
        raise UsageError("--message and --bits are mutually exclusive")
    if args.message is not None:
        bits = text_to_bits(args.message)
        if not bits:
            raise UsageError("message is empty")
        bit_source = "pattern:" + "".join(map(str, bits))
        rounds = len(bits)
    elif args.bits is not None:
        bit_source = "pattern:" + args.bits
    cfg = analysis.ExperimentConfig(
        n_rounds=rounds, strategy=args.strategy, bit_source=bit_source,
        stop_on_intrusion=args.stop_on_intrusion, master_seed=args.seed, trials=args.trials,
    )
    transcript_lines: list[str] = []
    first_trial: list = []
    want_transcript = args.transcript is not None or args.format == "jsonl"

    def sink(trial, rec):
        if want_transcript:
            line = rec.to_dict()
            line = {"trial": trial, **line} if cfg.trials > 1 else line
            transcript_lines.append(json.dumps(line, separators=(",", ":")))
        if trial == 0:
            first_trial.append(rec)

    stats = analysis.run_experiment(cfg, on_record=sink)
    if args.message is not None:
        decoded = []
        for rec in first_trial:
            if rec.decoded.is_intrusion:
                break
            decoded.append(rec.decoded.bit)
        stats.decoded_message = bits_to_text(decoded)
    out = stats.to_dict()
    if args.message is not None:
        out["message_complete"] = len(decoded) == rounds

    transcript = "".join(line + "\n" for line in transcript_lines)
    if args.transcript is not None:
        _emit(transcript, args.transcript)
    if args.format == "jsonl":
        _emit(transcript, args.output)
    else:
        _emit(json.dumps(out, indent=2) + "\n", args.output)
    if cfg.stop_on_intrusion and stats.intrusions:
        return EXIT_INTRUSION
    return EXIT_OK


def cmd_sweep(args) -> int:
    d_grid = _parse_list(args.d, float)
    n_grid = _parse_list(args.n, lambda v: int(float(v)))
    rows = analysis.success_curve(d_grid, n_grid, chi=args.chi)
    if args.format == "csv":
        text = analysis.curve_to_csv(rows)
    else:
        text = json.dumps([{"d": r.d, "n": r.n, "p_detect": r.p_detect,
                            "log10_survival": r.log10_survival} for r in rows], indent=2) + "\n"
    _emit(text, args.output)
    return EXIT_OK


def cmd_analytic(args) -> int:
    if args.p is None and args.d is None:
        p = 0.5
    elif args.p is not None:
        p = args.p
    else:
        p = analysis.detection_probability_for_d(args.d)
    log10_d = analysis.survival_probability(analysis.SurvivalQuery(args.n, p))
    lines = [f"n               {args.n}", f"p_detect        {p:.12g}"]
    if args.d is not None:
        lines.insert(1, f"d               {args.d:.12g}")
    lines.append(f"log10_survival  {log10_d:.10f}")
    lines.append(f"survival        {analysis.format_log10(log10_d)}")
    sys.stdout.write("\n".join(lines) + "\n")
    return EXIT_OK


def cmd_verify(args) -> int:
    results = run_checks()
    width = max(len(r.name) for r in results)
    for r in results:
        sys.stdout.write(f"{'PASS' if r.passed else 'FAIL'}  {r.name:<{width}}  {r.detail}\n")
    failed = sum(not r.passed for r in results)
    sys.stdout.write(f"{len(results) - failed}/{len(results)} checks passed\n")
    return EXIT_OK if failed == 0 else 1


COMMANDS = {"run": cmd_run, "sweep": cmd_sweep, "analytic": cmd_analytic, "verify": cmd_verify}


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        pre, _ = parser.parse_known_args(argv)
        if pre.config:
            subparser = parser._subparsers._group_actions[0].choices[pre.command]
            subparser.set_defaults(**_coerce_config(_read_config(pre.config), subparser))
        args = parser.parse_args(argv)
        return COMMANDS[args.command](args)
    except (UsageError, StrategyError, analysis.ExperimentError, ValueError) as exc:
        sys.stderr.write(f"pingpong: error: {exc}\n")
        return EXIT_USAGE
    except OSError as exc:
        sys.stderr.write(f"pingpong: cannot write output: {exc}\n")
        return EXIT_IOERR


if __name__ == "__main__":
    sys.exit(main())
