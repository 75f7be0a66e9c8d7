"""Tokenizes application log files into classified event streams.

The on-device logs record contact synchronization, block/unblock
operations, message traffic with its acknowledgements, message
deletions, and group lifecycle operations. The exact line syntax varies
between application builds, so classification is driven by a grammar: a
line pattern splitting timestamp from body, plus an ordered rule list
mapping body patterns to event kinds. The DEFAULT grammar below encodes
the event taxonomy this toolkit relies on; a user-supplied grammar file
(JSON, versioned) adapts the parser to other builds without touching
the analysis code.

Recognized capture group names in rules: ``jid`` (also ``to``/``from``),
``key``, ``gid``, ``subject``. The timestamp format is either a strptime
pattern (naive times are taken as UTC) or the literal ``epoch_s`` /
``epoch_ms`` for logs that stamp lines with raw epoch integers.

Parsing is total: every input line yields exactly one event; lines that
match no rule (or whose timestamp cannot be read) are preserved as
kind=other.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from datetime import datetime, timedelta, timezone
from pathlib import Path

from .errors import BadGrammar, UnreadableFile
from .model import (
    EventKind,
    KEY_BEARING_KINDS,
    LogEvent,
    WarningLog,
    classify_jid,
    parse_group_id,
    parse_message_key,
    warn_to,
)

GRAMMAR_FORMAT_VERSION = 1

_DEFAULT_LINE_PATTERN = (
    r"^(?P<ts>\d{4}-\d{2}-\d{2} \d{2}:\d{2}:\d{2}\.\d{3} [+-]\d{4}) (?P<body>.*)$"
)
_DEFAULT_TIMESTAMP_FORMAT = "%Y-%m-%d %H:%M:%S.%f %z"

_DEFAULT_RULES = (
    (EventKind.MESSAGE_DELETED, r"^msgstore/delete key=(?P<key>\S+)$"),
    (EventKind.MESSAGE_SENT, r"^msgstore/send key=(?P<key>\S+) to=(?P<to>\S+)$"),
    (EventKind.MESSAGE_RECEIVED, r"^msgstore/recv key=(?P<key>\S+) from=(?P<from>\S+)$"),
    (EventKind.SERVER_ACK, r"^msgstore/ack/server key=(?P<key>\S+)$"),
    (EventKind.DEVICE_ACK, r"^msgstore/ack/device key=(?P<key>\S+)$"),
    (EventKind.CONTACT_NOT_IN_DB, r"^contact/sync/missing jid=(?P<jid>\S+)$"),
    (EventKind.CONTACT_QUERY, r"^contact/query/\w+ jid=(?P<jid>\S+)$"),
    (EventKind.AVATAR_DOWNLOADED, r"^contact/avatar/downloaded jid=(?P<jid>\S+)$"),
    (EventKind.CONTACT_BLOCKED, r"^contact/block jid=(?P<jid>\S+)$"),
    # Unblocks are anonymous and cumulative: the line never names who
    # was unblocked, and one line may cover several contacts.
    (EventKind.CONTACT_UNBLOCKED, r"^contact/unblock/completed$"),
    (EventKind.GROUP_CREATED, r"^group/create gid=(?P<gid>\S+) subject=(?P<subject>.*)$"),
    (EventKind.GROUP_ADD_REQUESTED, r"^group/add/request gid=(?P<gid>\S+) jids=(?P<jids>\S+)$"),
    (EventKind.GROUP_MEMBER_ADDED, r"^group/add gid=(?P<gid>\S+) jid=(?P<jid>\S+)$"),
    (EventKind.GROUP_MEMBER_LEFT, r"^group/leave gid=(?P<gid>\S+) jid=(?P<jid>\S+)$"),
)


@dataclass(frozen=True)
class GrammarRule:
    kind: EventKind
    pattern: re.Pattern


@dataclass(frozen=True)
class LogGrammar:
    """Line-splitting pattern plus an ordered first-match-wins rule list."""

    line_pattern: re.Pattern
    timestamp_format: str
    rules: tuple[GrammarRule, ...]
    version: int = GRAMMAR_FORMAT_VERSION

    @classmethod
    def from_dict(cls, spec: dict) -> "LogGrammar":
        try:
            version = int(spec.get("version", GRAMMAR_FORMAT_VERSION))
            line_pattern = re.compile(spec["line_pattern"])
            ts_format = spec["timestamp_format"]
            rules = tuple(
                GrammarRule(kind=EventKind(rule["kind"]), pattern=re.compile(rule["pattern"]))
                for rule in spec["rules"]
            )
        except (KeyError, ValueError, re.error) as exc:
            raise BadGrammar(f"invalid grammar: {exc}") from exc
        if "ts" not in line_pattern.groupindex or "body" not in line_pattern.groupindex:
            raise BadGrammar("line_pattern must define 'ts' and 'body' groups")
        return cls(
            line_pattern=line_pattern,
            timestamp_format=ts_format,
            rules=rules,
            version=version,
        )

    @classmethod
    def from_json_file(cls, path: str | Path) -> "LogGrammar":
        try:
            spec = json.loads(Path(path).read_text(encoding="utf-8"))
        except OSError as exc:
            raise UnreadableFile(f"cannot read grammar file {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise BadGrammar(f"grammar file {path} is not valid JSON: {exc}") from exc
        return cls.from_dict(spec)

    def to_dict(self) -> dict:
        return {
            "version": self.version,
            "line_pattern": self.line_pattern.pattern,
            "timestamp_format": self.timestamp_format,
            "rules": [
                {"kind": rule.kind.value, "pattern": rule.pattern.pattern}
                for rule in self.rules
            ],
        }


DEFAULT_GRAMMAR = LogGrammar(
    line_pattern=re.compile(_DEFAULT_LINE_PATTERN),
    timestamp_format=_DEFAULT_TIMESTAMP_FORMAT,
    rules=tuple(GrammarRule(kind=k, pattern=re.compile(p)) for k, p in _DEFAULT_RULES),
)


def _parse_timestamp(text: str, fmt: str) -> int:
    if fmt == "epoch_ms":
        return int(text)
    if fmt == "epoch_s":
        return int(text) * 1000
    stamp = datetime.strptime(text, fmt)
    if stamp.tzinfo is None:
        stamp = stamp.replace(tzinfo=timezone.utc)
    return int(round(stamp.timestamp() * 1000))


def _other(line: str, source: str, number: int, occurred_at: int | None = None) -> LogEvent:
    return LogEvent(
        occurred_at=occurred_at,
        kind=EventKind.OTHER,
        subject_jid=None,
        message_key=None,
        group_id=None,
        group_subject=None,
        raw_line=line,
        source_file=source,
        line_number=number,
    )


def _classify_line(
    line: str,
    source: str,
    number: int,
    grammar: LogGrammar,
    warn: WarningLog | None,
) -> LogEvent:
    where = f"{source}:{number}"
    if not line.strip():
        return _other(line, source, number)
    m = grammar.line_pattern.match(line)
    if not m:
        warn_to(warn, where, "line does not match the grammar line pattern")
        return _other(line, source, number)
    try:
        occurred_at = _parse_timestamp(m.group("ts"), grammar.timestamp_format)
    except ValueError:
        warn_to(warn, where, f"unparsable timestamp {m.group('ts')!r}")
        return _other(line, source, number)

    body = m.group("body")
    for rule in grammar.rules:
        bm = rule.pattern.match(body)
        if not bm:
            continue
        groups = bm.groupdict()
        jid_text = groups.get("jid") or groups.get("to") or groups.get("from")
        subject_jid = classify_jid(jid_text, warn, where) if jid_text else None
        # The unblock operation is anonymous on-device; never attach a jid.
        if rule.kind is EventKind.CONTACT_UNBLOCKED:
            subject_jid = None
        key = None
        if groups.get("key"):
            try:
                key = parse_message_key(groups["key"])
            except Exception:
                warn_to(warn, where, f"malformed message key {groups['key']!r}")
        if rule.kind in KEY_BEARING_KINDS and key is None:
            warn_to(warn, where, f"{rule.kind.value} line lacks a message key; kept as other")
            return _other(line, source, number, occurred_at)
        gid = None
        if groups.get("gid"):
            try:
                gid = parse_group_id(groups["gid"])
            except Exception:
                warn_to(warn, where, f"malformed group id {groups['gid']!r}")
        return LogEvent(
            occurred_at=occurred_at,
            kind=rule.kind,
            subject_jid=subject_jid,
            message_key=key,
            group_id=gid,
            group_subject=groups.get("subject"),
            raw_line=line,
            source_file=source,
            line_number=number,
        )
    return _other(line, source, number, occurred_at)


def parse_log_lines(
    lines,
    source_name: str,
    grammar: LogGrammar = DEFAULT_GRAMMAR,
    warn: WarningLog | None = None,
) -> list[LogEvent]:
    """Classify an iterable of lines; output length equals input length."""
    return [
        _classify_line(line.rstrip("\n"), source_name, number, grammar, warn)
        for number, line in enumerate(lines, start=1)
    ]


def parse_log_file(
    path: str | Path,
    grammar: LogGrammar = DEFAULT_GRAMMAR,
    warn: WarningLog | None = None,
    source_name: str | None = None,
) -> list[LogEvent]:
    """Parse one log file into events, preserving file order and line numbers."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8", errors="replace")
    except OSError as exc:
        raise UnreadableFile(f"cannot read log file {path}: {exc}") from exc
    return parse_log_lines(
        text.splitlines(), source_name or path.name, grammar, warn
    )


def merge_events(*event_lists) -> list[LogEvent]:
    """Merge per-file event lists by time, then (source_file, line_number).

    Undated events sort after dated ones from the same merge so nothing
    is lost.
    """
    merged = [event for events in event_lists for event in events]
    merged.sort(
        key=lambda e: (
            e.occurred_at is None,
            e.occurred_at if e.occurred_at is not None else 0,
            e.source_file,
            e.line_number,
        )
    )
    return merged


def classify_block_events(events) -> tuple[list[tuple], list[int]]:
    """Extract block operations and anonymous unblock times.

    Returns ``(blocks, unblock_times)`` where blocks are ``(jid, at_ms)``
    pairs. Unblocks never carry an identity: the log only proves that
    *some* currently-blocked contacts were unblocked at that time.
    """
    blocks = []
    unblock_times = []
    for event in events:
        if event.kind is EventKind.CONTACT_BLOCKED and event.subject_jid is not None:
            blocks.append((event.subject_jid, event.occurred_at))
        elif event.kind is EventKind.CONTACT_UNBLOCKED and event.occurred_at is not None:
            unblock_times.append(event.occurred_at)
    return blocks, unblock_times


# --- canonical line bodies -------------------------------------------------
#
# The fixture forge emits log lines through these helpers so the DEFAULT
# grammar and the generated fixtures cannot drift apart.


def format_line(occurred_at_ms: int, body: str, tz_offset_minutes: int = 0) -> str:
    """Render one log line in the DEFAULT grammar's line format."""
    local = datetime(1970, 1, 1, tzinfo=timezone.utc) + timedelta(
        milliseconds=occurred_at_ms, minutes=tz_offset_minutes
    )
    sign = "-" if tz_offset_minutes < 0 else "+"
    mins = abs(tz_offset_minutes)
    stamp = (
        f"{local.year:04d}-{local.month:02d}-{local.day:02d} "
        f"{local.hour:02d}:{local.minute:02d}:{local.second:02d}"
        f".{local.microsecond // 1000:03d} {sign}{mins // 60:02d}{mins % 60:02d}"
    )
    return f"{stamp} {body}"


def body_message_deleted(key: str) -> str:
    return f"msgstore/delete key={key}"


def body_message_sent(key: str, to_jid: str) -> str:
    return f"msgstore/send key={key} to={to_jid}"


def body_message_received(key: str, from_jid: str) -> str:
    return f"msgstore/recv key={key} from={from_jid}"


def body_server_ack(key: str) -> str:
    return f"msgstore/ack/server key={key}"


def body_device_ack(key: str) -> str:
    return f"msgstore/ack/device key={key}"


def body_contact_missing(jid: str) -> str:
    return f"contact/sync/missing jid={jid}"


def body_contact_query(jid: str, what: str = "profile") -> str:
    return f"contact/query/{what} jid={jid}"


def body_avatar_downloaded(jid: str) -> str:
    return f"contact/avatar/downloaded jid={jid}"


def body_contact_blocked(jid: str) -> str:
    return f"contact/block jid={jid}"


def body_contact_unblocked() -> str:
    return "contact/unblock/completed"


def body_group_created(gid: str, subject: str) -> str:
    return f"group/create gid={gid} subject={subject}"


def body_group_add_requested(gid: str, jids) -> str:
    return f"group/add/request gid={gid} jids={','.join(jids)}"


def body_group_member_added(gid: str, jid: str) -> str:
    return f"group/add gid={gid} jid={jid}"


def body_group_member_left(gid: str, jid: str) -> str:
    return f"group/leave gid={gid} jid={jid}"
