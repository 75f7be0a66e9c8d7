"""Command-line front end.

The CLI is a thin shell over the library: every behavior here is
reachable through ``ingest``/``correlator``/``report`` calls. Exit
codes: 0 clean run, 1 report produced but with warnings, 2 structural
or tool errors, 64 usage errors.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import __version__, backup_crypto, forge, ingest, report as report_mod
from .correlator import analyze, backup_diff
from .errors import WadroidError
from .log_parser import DEFAULT_GRAMMAR, LogGrammar
from .model import parse_tz_offset, render_epoch_ms

EXIT_OK = 0
EXIT_WARNINGS = 1
EXIT_ERROR = 2
EXIT_USAGE = 64


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _hex_key(text: str) -> bytes:
    try:
        key = bytes.fromhex(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"not a hex key: {exc}") from exc
    if len(key) not in (16, 24, 32):
        raise argparse.ArgumentTypeError("AES key must be 16/24/32 bytes of hex")
    return key


def _tz(text: str) -> int:
    try:
        return parse_tz_offset(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc


def build_parser() -> _Parser:
    parser = _Parser(prog="wadroid", description=__doc__)
    parser.add_argument("--version", action="version", version=f"wadroid {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def evidence_options(p):
        p.add_argument("--in", dest="in_path", required=True, help="evidence directory")
        p.add_argument("--grammar", help="log grammar JSON file")
        p.add_argument("--key", type=_hex_key, help="backup AES key override (hex)")

    p_ingest = sub.add_parser("ingest", help="parse an evidence directory and summarize it")
    evidence_options(p_ingest)
    p_ingest.add_argument("--out", help="write the summary JSON here instead of stdout")

    p_report = sub.add_parser("report", help="full analysis report (canonical JSON)")
    evidence_options(p_report)
    p_report.add_argument("--out", help="report file (default: stdout)")
    p_report.add_argument("--tz", type=_tz, default=0, help="display offset, e.g. +01:00")
    p_report.add_argument("--sim", help="phone number of the SIM found in the device")
    p_report.add_argument(
        "--format",
        choices=("json", "csv"),
        default="json",
        help="csv additionally writes the timeline CSV next to --out",
    )
    p_report.add_argument(
        "--verify-readonly",
        action="store_true",
        help="assert that no evidence file changed during the run",
    )

    p_decrypt = sub.add_parser("decrypt", help="decrypt one backup file")
    p_decrypt.add_argument("--in", dest="in_path", required=True, help="encrypted backup")
    p_decrypt.add_argument("--out", required=True, help="plaintext database destination")
    p_decrypt.add_argument("--key", type=_hex_key, help="backup AES key override (hex)")

    p_diff = sub.add_parser("diff", help="messages present in backups but not live")
    evidence_options(p_diff)
    p_diff.add_argument("--out", help="write the diff JSON here instead of stdout")
    p_diff.add_argument("--tz", type=_tz, default=0)

    p_timeline = sub.add_parser("timeline", help="group/chat chronologies")
    evidence_options(p_timeline)
    p_timeline.add_argument("--out", help="output file (default: stdout)")
    p_timeline.add_argument("--tz", type=_tz, default=0)
    p_timeline.add_argument("--format", choices=("json", "csv"), default="json")

    p_forge = sub.add_parser("forge", help="generate a synthetic evidence bundle")
    p_forge.add_argument("--script", required=True, help="scenario script (JSON)")
    p_forge.add_argument("--out", required=True, help="output directory")
    p_forge.add_argument("--seed", type=int, help="override the script's seed")
    return parser


def _load_grammar(path: str | None) -> LogGrammar:
    return LogGrammar.from_json_file(path) if path else DEFAULT_GRAMMAR


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _bundle(args):
    return ingest.load_case_bundle(
        args.in_path, _load_grammar(args.grammar), getattr(args, "key", None)
    )


def _cmd_ingest(args) -> int:
    bundle = _bundle(args)
    summary = {
        "bundle_summary": report_mod.bundle_summary(bundle),
        "warnings": [{"source": w.source, "message": w.message} for w in bundle.warnings],
    }
    _emit(json.dumps(summary, indent=2, sort_keys=True) + "\n", args.out)
    return EXIT_WARNINGS if bundle.warnings else EXIT_OK


def _cmd_report(args) -> int:
    before = ingest.snapshot_tree(args.in_path) if args.verify_readonly else None
    bundle = _bundle(args)
    analysis = analyze(bundle, args.sim)
    doc = report_mod.build_report(
        bundle, args.tz, args.sim, tool_version=__version__, analysis=analysis
    )
    _emit(report_mod.render_report_json(doc), args.out)
    if args.format == "csv":
        if not args.out:
            raise WadroidError("--format csv needs --out to place the timeline CSV")
        csv_path = Path(args.out).with_suffix(".timeline.csv")
        csv_path.write_text(report_mod.render_timeline_csv(analysis, args.tz), encoding="utf-8")
    if args.verify_readonly:
        after = ingest.snapshot_tree(args.in_path)
        if before != after:
            changed = sorted(
                set(before) ^ set(after)
                | {p for p in set(before) & set(after) if before[p] != after[p]}
            )
            print(
                "read-only verification FAILED; changed: " + ", ".join(changed),
                file=sys.stderr,
            )
            return EXIT_ERROR
    return EXIT_WARNINGS if doc["warnings"] else EXIT_OK


def _cmd_decrypt(args) -> int:
    plain = backup_crypto.decrypt_backup(args.in_path, args.key)
    info = backup_crypto.CryptBackup(
        path=str(args.in_path), ciphertext_length=len(plain), decrypted=plain
    )
    Path(args.out).write_bytes(info.decrypted)
    print(
        f"decrypted {info.ciphertext_length} bytes from {info.path} to {args.out}",
        file=sys.stderr,
    )
    return EXIT_OK


def _cmd_diff(args) -> int:
    bundle = _bundle(args)
    out = {"backups": []}
    for backup in bundle.backups:
        recovered = backup_diff(bundle.messages, backup.messages)
        out["backups"].append(
            {
                "name": backup.name,
                "recovered_count": len(recovered),
                "recovered": [
                    {
                        "record_id": r.id,
                        "conversation": r.key_remote_jid.raw,
                        "key": r.key_id_raw,
                        "direction": "outgoing" if r.from_me else "incoming",
                        "timestamp": r.timestamp,
                        "timestamp_local": render_epoch_ms(r.timestamp, args.tz),
                        "data": r.data,
                        "media_wa_type": r.media_wa_type,
                    }
                    for r in recovered
                ],
            }
        )
    _emit(json.dumps(out, indent=2, sort_keys=True) + "\n", args.out)
    return EXIT_WARNINGS if bundle.warnings else EXIT_OK


def _cmd_timeline(args) -> int:
    bundle = _bundle(args)
    analysis = analyze(bundle)
    if args.format == "csv":
        _emit(report_mod.render_timeline_csv(analysis, args.tz), args.out)
    else:
        doc = {
            "groups": [report_mod._timeline_json(t, args.tz) for t in analysis.timelines],
            "chats": [
                {
                    "partner": jid,
                    "messages": [
                        report_mod._history_entry_json(e, args.tz) for e in entries
                    ],
                }
                for jid, entries in analysis.histories.items()
            ],
        }
        _emit(json.dumps(doc, indent=2, sort_keys=True, ensure_ascii=False) + "\n", args.out)
    return EXIT_WARNINGS if bundle.warnings else EXIT_OK


def _cmd_forge(args) -> int:
    script = forge.script_from_json(Path(args.script).read_text(encoding="utf-8"))
    if args.seed is not None:
        script = forge.ScenarioScript(
            owner=script.owner,
            actors=script.actors,
            actions=script.actions,
            seed=args.seed,
            tz_offset_minutes=script.tz_offset_minutes,
        )
    result = forge.generate_bundle(script, args.out)
    summary = {
        "root": str(result.root),
        "contacts": len(result.bundle.contacts),
        "messages": len(result.bundle.messages),
        "log_events": len(result.bundle.log_events),
        "backups": [b.name for b in result.bundle.backups],
        "media_files": len(result.bundle.media_inventory),
    }
    sys.stdout.write(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return EXIT_OK


_COMMANDS = {
    "ingest": _cmd_ingest,
    "report": _cmd_report,
    "decrypt": _cmd_decrypt,
    "diff": _cmd_diff,
    "timeline": _cmd_timeline,
    "forge": _cmd_forge,
}


def run(argv) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    try:
        return _COMMANDS[args.command](args)
    except WadroidError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_ERROR


def main() -> None:
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
