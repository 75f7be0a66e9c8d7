"""Correlation procedures over a parsed evidence bundle.

Each operation here combines databases, logs, backups, and file
inventories to answer one investigative question: conversation
chronology, message delivery state, communication partners, group
membership over time, deleted messages/contacts, media linkage, and
registered-identity checks.

Every inference carries a confidence note and cites the records and log
lines it was derived from: the log-based procedures are only as good as
the surviving log window, and findings must surface that caveat rather
than hide it. Device timestamps come from the local clock, so absolute
times from different devices are never treated as comparable ground
truth.

All functions are pure over an immutable CaseBundle; independent
analyses may run concurrently and findings merge deterministically by
(category, subject, time).
"""

from __future__ import annotations

import base64
import binascii
from dataclasses import dataclass, field
from enum import Enum

from .log_parser import classify_block_events
from .model import (
    CaseBundle,
    CONTACT_ADDITION_KINDS,
    EventKind,
    GroupId,
    JidKind,
    MessageRecord,
    WaJid,
    WarningLog,
    parse_group_id,
    ts_present,
    warn_to,
)

# --- message state ----------------------------------------------------------


class StateCode(Enum):
    RECEIVED_INCOMING = "received"
    PENDING_LOCAL = "pending-local"
    ON_SERVER = "on-server"
    DELIVERED_TO_DEVICE = "delivered"
    CONTROL = "control"
    UNKNOWN = "unknown"


@dataclass(frozen=True)
class MessageState:
    """Delivery state of one message with its state-change timestamps.

    Outgoing messages progress pending-local -> on-server -> delivered;
    the two receipt timestamps record when each acknowledgement arrived.
    """

    code: StateCode
    status_code: int
    sent_at: int | None = None
    server_ack_at: int | None = None
    device_ack_at: int | None = None
    received_at: int | None = None

    def label(self) -> str:
        if self.code is StateCode.UNKNOWN:
            return f"UnknownStatus({self.status_code})"
        return self.code.value


def message_state(record: MessageRecord) -> MessageState:
    """Map (direction, status) to the delivery state machine.

    Codebook: outgoing status 0 = still waiting on the local device,
    4 = delivered to the central server only, 5 = delivered to the
    recipient's device; status 6 = group control message regardless of
    direction; incoming status 0 = received. Anything else is preserved
    as UnknownStatus(n).
    """
    status = record.status_code
    if status == MessageRecord.STATUS_CONTROL:
        return MessageState(code=StateCode.CONTROL, status_code=status)
    if record.from_me:
        code = {
            0: StateCode.PENDING_LOCAL,
            MessageRecord.STATUS_ON_SERVER: StateCode.ON_SERVER,
            MessageRecord.STATUS_DELIVERED: StateCode.DELIVERED_TO_DEVICE,
        }.get(status, StateCode.UNKNOWN)
        server_ack = record.receipt_server_timestamp
        device_ack = record.receipt_device_timestamp
        server_ack = server_ack if ts_present(server_ack) else None
        device_ack = device_ack if ts_present(device_ack) else None
        if code is StateCode.PENDING_LOCAL:
            server_ack = device_ack = None
        elif code is StateCode.ON_SERVER:
            device_ack = None
        return MessageState(
            code=code,
            status_code=status,
            sent_at=record.timestamp,
            server_ack_at=server_ack,
            device_ack_at=device_ack,
        )
    code = StateCode.RECEIVED_INCOMING if status == 0 else StateCode.UNKNOWN
    received = (
        record.received_timestamp
        if ts_present(record.received_timestamp)
        else record.timestamp
    )
    return MessageState(code=code, status_code=status, received_at=received)


# --- message content --------------------------------------------------------


@dataclass(frozen=True)
class TextContent:
    text: str
    kind = "text"


@dataclass(frozen=True)
class MediaContent:
    kind_name: str  # "image" / "audio" / "video"
    mime: str | None
    name: str | None
    size: int | None
    duration: int | None
    hash_b64: str | None
    server_filename: str | None
    thumbnail: bytes | None
    kind = "media"


@dataclass(frozen=True)
class ContactCardContent:
    vcard: str
    display_name: str | None
    kind = "vcard"


@dataclass(frozen=True)
class GeoContent:
    latitude: float
    longitude: float
    map_thumbnail: bytes | None
    kind = "geo"


_MEDIA_KIND_NAMES = {1: "image", 2: "audio", 3: "video"}


def server_filename(media_url: str | None) -> str | None:
    """Trailing path component of the upload URL: the server-side file name."""
    if not media_url:
        return None
    tail = media_url.rstrip("/").rsplit("/", 1)[-1]
    return tail or None


def extract_content(record: MessageRecord, warn: WarningLog | None = None):
    """Decode the typed content of one message row.

    Inconsistent rows (e.g. a geo message without coordinates) degrade
    to text content with a warning instead of failing.
    """
    source = f"messages:_id={record.id}"
    mtype = record.media_wa_type
    if mtype == 0:
        return TextContent(text=record.data or "")
    if mtype in _MEDIA_KIND_NAMES:
        return MediaContent(
            kind_name=_MEDIA_KIND_NAMES[mtype],
            mime=record.media_mime_type,
            name=record.media_name or None,
            size=record.media_size,
            # durations only mean something for audio/video
            duration=record.media_duration if mtype in (2, 3) else None,
            hash_b64=record.media_hash,
            server_filename=server_filename(record.media_url),
            thumbnail=record.raw_data if mtype in (1, 3) else None,
        )
    if mtype == 4:
        return ContactCardContent(vcard=record.data or "", display_name=record.media_name)
    if mtype == 5:
        lat, lon = record.latitude, record.longitude
        if (
            lat is None
            or lon is None
            or not (-90.0 <= lat <= 90.0)
            or not (-180.0 <= lon <= 180.0)
        ):
            warn_to(warn, source, "geo message without usable coordinates; kept as text")
            return TextContent(text=record.data or "")
        return GeoContent(latitude=lat, longitude=lon, map_thumbnail=record.raw_data)
    warn_to(warn, source, f"unknown media_wa_type {mtype}; kept as text")
    return TextContent(text=record.data or "")


# --- findings ---------------------------------------------------------------


class FindingCategory(str, Enum):
    CONVERSATION = "conversation"
    DELETED_CONTACT = "deleted_contact"
    DELETED_MESSAGE = "deleted_message"
    BLOCK_STATUS = "block_status"
    GROUP_MEMBERSHIP = "group_membership"
    MEDIA_CORRELATION = "media_correlation"
    IDENTITY_CHECK = "identity_check"
    CONTACT_ADDED = "contact_added"


@dataclass(frozen=True)
class Finding:
    """One analytical conclusion with its supporting evidence.

    ``evidence`` cites the record ids / log line numbers the conclusion
    was derived from; ``confidence_note`` records which ambiguity rules
    applied.
    """

    category: FindingCategory
    subject: str
    summary: str
    confidence_note: str
    evidence: tuple[str, ...] = ()
    payload: dict = field(default_factory=dict)
    at_ms: int | None = None


def sort_findings(findings) -> list[Finding]:
    return sorted(
        findings,
        key=lambda f: (f.category.value, f.subject, f.at_ms if f.at_ms is not None else -1),
    )


def _coverage_note(bundle: CaseBundle) -> str:
    first, last = bundle.log_coverage()
    if first is None:
        return "no dated log events available"
    return f"log coverage window {first}..{last} ms; conclusions hold only within it"


# --- chat history -----------------------------------------------------------

LIVE = "live"
RECOVERED = "recovered-from-backup"


@dataclass(frozen=True)
class HistoryEntry:
    record: MessageRecord
    direction: str  # "incoming" / "outgoing"
    effective_time: int | None
    state: MessageState
    content: object
    source: str  # LIVE or RECOVERED


def backup_recovered_records(bundle: CaseBundle) -> list[MessageRecord]:
    """Backup rows absent from the live store, deduplicated across backups."""
    live = {(m.key_remote_jid.raw, m.key_id_raw) for m in bundle.messages}
    seen = set(live)
    recovered = []
    for backup in bundle.backups:
        for record in backup.messages:
            pair = (record.key_remote_jid.raw, record.key_id_raw)
            if pair in seen:
                continue
            seen.add(pair)
            recovered.append(record)
    return recovered


def backup_diff(live_messages, backup_messages) -> list[MessageRecord]:
    """Rows present in a backup but not in the live store.

    Identity is the (conversation jid, key) pair: the key alone is shared
    by every fan-out row of a broadcast, so it cannot identify a row.
    """
    live = {(m.key_remote_jid.raw, m.key_id_raw) for m in live_messages}
    return [
        record
        for record in backup_messages
        if (record.key_remote_jid.raw, record.key_id_raw) not in live
    ]


def reconstruct_history(
    bundle: CaseBundle,
    include_recovered: bool = True,
    warn: WarningLog | None = None,
) -> dict[str, list[HistoryEntry]]:
    """Group messages per conversation and order them chronologically.

    Ordering uses the effective time (receipt time for incoming rows,
    send time for outgoing ones) with the row id as tie-break. Rows that
    only survive in backups are merged in, tagged recovered-from-backup.
    """
    pool: list[tuple[MessageRecord, str]] = [(m, LIVE) for m in bundle.messages]
    if include_recovered:
        pool.extend((m, RECOVERED) for m in backup_recovered_records(bundle))
    conversations: dict[str, list[HistoryEntry]] = {}
    for record, source in pool:
        # Group rows have been observed storing the receipt time in
        # `timestamp`; when the two fields disagree, receipt time is
        # taken from received_timestamp and the discrepancy is surfaced.
        if (
            not record.from_me
            and record.key_remote_jid.raw.endswith("@g.us")
            and ts_present(record.received_timestamp)
            and ts_present(record.timestamp)
            and record.received_timestamp != record.timestamp
        ):
            warn_to(
                warn,
                f"messages:_id={record.id}",
                "incoming group message stores different timestamp and "
                "received_timestamp; ordering uses received_timestamp",
            )
        entry = HistoryEntry(
            record=record,
            direction="outgoing" if record.from_me else "incoming",
            effective_time=record.effective_time,
            state=message_state(record),
            content=extract_content(record, warn),
            source=source,
        )
        conversations.setdefault(record.key_remote_jid.raw, []).append(entry)
    for entries in conversations.values():
        entries.sort(
            key=lambda e: (
                e.effective_time is None,
                e.effective_time if e.effective_time is not None else 0,
                e.record.id,
                e.source,
            )
        )
    return dict(sorted(conversations.items()))


# --- communication partners -------------------------------------------------


@dataclass(frozen=True)
class PartnerResolution:
    record_id: int
    conversation: str
    key_raw: str
    kind: str  # direct / broadcast-sent / broadcast-received / group / group-control
    partners: frozenset[str]
    originator: str | None = None
    authored_by_owner: bool = False


@dataclass(frozen=True)
class BroadcastGroup:
    key_raw: str
    destinations: frozenset[str]
    recipient_count: int | None
    self_record_id: int | None
    record_ids: tuple[int, ...]
    count_mismatch: bool


@dataclass(frozen=True)
class PartnerAnalysis:
    per_message: dict
    broadcasts: tuple[BroadcastGroup, ...]


def _split_jid_set(raw: str | None) -> list[str]:
    if not raw:
        return []
    return [part for part in (p.strip() for p in raw.split(",")) if part]


def resolve_partners(bundle: CaseBundle, warn: WarningLog | None = None) -> PartnerAnalysis:
    """Determine, per message, the set of users it was exchanged with.

    Broadcast fan-outs are grouped by their shared key: destinations come
    from each row's conversation jid plus the destination set stored in
    remote_resource, with the sender's own row marked by the broadcast
    keyword. A group row with no originator and an on-server status was
    authored by the device owner.
    """
    per_message: dict[int, PartnerResolution] = {}
    broadcast_rows: dict[str, list[MessageRecord]] = {}

    for record in bundle.messages:
        conversation = record.key_remote_jid.raw
        if record.is_control and conversation.endswith("@g.us"):
            member = record.remote_resource_raw or None
            if member is None:
                member = _group_creator_raw(conversation)
            per_message[record.id] = PartnerResolution(
                record_id=record.id,
                conversation=conversation,
                key_raw=record.key_id_raw,
                kind="group-control",
                partners=frozenset({conversation}),
                originator=member,
            )
        elif record.is_broadcast_receipt:
            per_message[record.id] = PartnerResolution(
                record_id=record.id,
                conversation=conversation,
                key_raw=record.key_id_raw,
                kind="broadcast-received",
                partners=frozenset({conversation}),
                originator=conversation,
            )
        elif record.is_broadcast_sender_row:
            broadcast_rows.setdefault(record.key_id_raw, []).append(record)
        elif record.key_remote_jid.kind is JidKind.GROUP or conversation.endswith("@g.us"):
            authored = record.remote_resource_raw in (None, "") and (
                record.status_code == MessageRecord.STATUS_ON_SERVER or record.from_me
            )
            per_message[record.id] = PartnerResolution(
                record_id=record.id,
                conversation=conversation,
                key_raw=record.key_id_raw,
                kind="group",
                partners=frozenset({conversation}),
                originator=record.remote_resource_raw or None,
                authored_by_owner=authored,
            )
        else:
            per_message[record.id] = PartnerResolution(
                record_id=record.id,
                conversation=conversation,
                key_raw=record.key_id_raw,
                kind="direct",
                partners=frozenset({conversation}),
            )

    broadcasts = []
    for key_raw in sorted(broadcast_rows):
        rows = sorted(broadcast_rows[key_raw], key=lambda r: r.id)
        destinations: set[str] = set()
        self_record_id = None
        recipient_count = None
        for row in rows:
            if row.key_remote_jid.kind is JidKind.BROADCAST:
                self_record_id = row.id
            else:
                destinations.add(row.key_remote_jid.raw)
            destinations.update(_split_jid_set(row.remote_resource_raw))
            if recipient_count is None and row.recipient_count is not None:
                recipient_count = row.recipient_count
        fanout_rows = [r for r in rows if r.key_remote_jid.kind is not JidKind.BROADCAST]
        mismatch = recipient_count is not None and len(fanout_rows) != recipient_count
        if mismatch:
            warn_to(
                warn,
                f"messages:key_id={key_raw}",
                f"broadcast stores {len(fanout_rows)} recipient rows but "
                f"recipient_count={recipient_count} (evidence may be partial)",
            )
        group = BroadcastGroup(
            key_raw=key_raw,
            destinations=frozenset(destinations),
            recipient_count=recipient_count,
            self_record_id=self_record_id,
            record_ids=tuple(r.id for r in rows),
            count_mismatch=mismatch,
        )
        broadcasts.append(group)
        for row in rows:
            per_message[row.id] = PartnerResolution(
                record_id=row.id,
                conversation=row.key_remote_jid.raw,
                key_raw=key_raw,
                kind="broadcast-sent",
                partners=group.destinations,
                authored_by_owner=True,
            )
    return PartnerAnalysis(per_message=per_message, broadcasts=tuple(broadcasts))


def _group_creator_raw(gid_raw: str) -> str | None:
    try:
        return parse_group_id(gid_raw).creator.raw
    except Exception:
        return None


# --- group membership timelines ----------------------------------------------


class GroupEventKind(str, Enum):
    CREATED = "created"
    JOINED = "joined"
    LEFT = "left"


_CONTROL_OPS = {1: GroupEventKind.CREATED, 4: GroupEventKind.JOINED, 5: GroupEventKind.LEFT}
_EVENT_ORDER = {GroupEventKind.CREATED: 0, GroupEventKind.JOINED: 1, GroupEventKind.LEFT: 2}


@dataclass(frozen=True)
class GroupEvent:
    at_ms: int | None
    kind: GroupEventKind
    member_raw: str | None
    source: str  # "db" (control record) or "log" (backfilled)
    evidence: str


@dataclass(frozen=True)
class GroupTimeline:
    """Ordered membership events of one group chat."""

    group_raw: str
    group: GroupId | None
    group_name: str | None
    events: tuple[GroupEvent, ...]

    def created_at_ms(self) -> int | None:
        for event in self.events:
            if event.kind is GroupEventKind.CREATED:
                return event.at_ms
        if self.group is not None:
            return self.group.creation_time * 1000
        return None

    def membership_at(self, at_ms: int) -> frozenset[str]:
        """Replay events up to (and including) ``at_ms``."""
        members: set[str] = set()
        for event in self.events:
            if event.at_ms is not None and event.at_ms > at_ms:
                break
            if event.kind is GroupEventKind.CREATED:
                creator = self.group.creator.raw if self.group else event.member_raw
                if creator:
                    members.add(creator)
            elif event.kind is GroupEventKind.JOINED and event.member_raw:
                members.add(event.member_raw)
            elif event.kind is GroupEventKind.LEFT and event.member_raw:
                members.discard(event.member_raw)
        return frozenset(members)


def group_membership_timeline(
    bundle: CaseBundle, warn: WarningLog | None = None
) -> list[GroupTimeline]:
    """Rebuild each group's membership history from control records.

    Control rows encode the operation in media_size (1=create with the
    group name in data, 4=join, 5=leave; the member sits in
    remote_resource). Where control rows were deleted, matching log
    events backfill the timeline and are flagged as log-sourced.
    """
    per_group: dict[str, list[GroupEvent]] = {}
    names: dict[str, str] = {}

    db_seen: set[tuple[str, str, str | None, int | None]] = set()
    for record in bundle.messages:
        gid_raw = record.key_remote_jid.raw
        if not record.is_control or not gid_raw.endswith("@g.us"):
            continue
        op = _CONTROL_OPS.get(record.media_size or 0)
        evidence = f"messages:_id={record.id}"
        if op is None:
            warn_to(
                warn,
                evidence,
                f"control record with unknown operation code media_size={record.media_size}",
            )
            continue
        member = record.remote_resource_raw or None
        if op is GroupEventKind.CREATED:
            member = member or _group_creator_raw(gid_raw)
            if record.data:
                names.setdefault(gid_raw, record.data)
        event = GroupEvent(
            at_ms=record.timestamp,
            kind=op,
            member_raw=member,
            source="db",
            evidence=evidence,
        )
        per_group.setdefault(gid_raw, []).append(event)
        db_seen.add((gid_raw, op.value, member, record.timestamp))

    log_ops = {
        EventKind.GROUP_CREATED: GroupEventKind.CREATED,
        EventKind.GROUP_MEMBER_ADDED: GroupEventKind.JOINED,
        EventKind.GROUP_MEMBER_LEFT: GroupEventKind.LEFT,
    }
    for event in bundle.log_events:
        op = log_ops.get(event.kind)
        if op is None or event.group_id is None:
            continue
        gid_raw = event.group_id.raw
        member = event.subject_jid.raw if event.subject_jid else None
        if op is GroupEventKind.CREATED:
            member = member or event.group_id.creator.raw
            if event.group_subject:
                names.setdefault(gid_raw, event.group_subject)
        if (gid_raw, op.value, member, event.occurred_at) in db_seen:
            continue  # the control record survived; the log line is corroboration
        per_group.setdefault(gid_raw, []).append(
            GroupEvent(
                at_ms=event.occurred_at,
                kind=op,
                member_raw=member,
                source="log",
                evidence=event.evidence_ref,
            )
        )

    timelines = []
    for gid_raw in sorted(per_group):
        events = sorted(
            per_group[gid_raw],
            key=lambda e: (
                e.at_ms if e.at_ms is not None else -1,
                _EVENT_ORDER[e.kind],
                e.member_raw or "",
                e.source,
            ),
        )
        gid = None
        try:
            gid = parse_group_id(gid_raw)
        except Exception:
            warn_to(warn, f"group:{gid_raw}", "group id does not parse; creator unknown")
        # A leave without a preceding join is kept, but flagged.
        members: set[str] = set()
        for event in events:
            if event.kind is GroupEventKind.CREATED:
                creator = gid.creator.raw if gid else event.member_raw
                if creator:
                    members.add(creator)
            elif event.kind is GroupEventKind.JOINED and event.member_raw:
                members.add(event.member_raw)
            elif event.kind is GroupEventKind.LEFT:
                if event.member_raw and event.member_raw not in members:
                    warn_to(
                        warn,
                        event.evidence,
                        f"{event.member_raw} leaves {gid_raw} without a recorded join",
                    )
                if event.member_raw:
                    members.discard(event.member_raw)
        timelines.append(
            GroupTimeline(
                group_raw=gid_raw,
                group=gid,
                group_name=names.get(gid_raw),
                events=tuple(events),
            )
        )
    return timelines


# --- blocked contacts ---------------------------------------------------------

BLOCKED = "blocked"
UNBLOCKED = "unblocked"
UNKNOWN = "unknown"


def block_statuses(blocks, unblock_times) -> dict[str, tuple[str, int]]:
    """Final block status per contact from block events and anonymous unblocks.

    A contact is *blocked* when no unblock event follows its block;
    *unblocked* when an unblock fired while it was the only contact that
    could have been blocked; *unknown* otherwise, because an unblock
    line is cumulative and does not say who it covered.

    Returns ``jid_raw -> (status, at_ms)`` where the time is the event
    that established the status.
    """
    timeline: list[tuple[int, int, str | None]] = []
    for jid, at_ms in blocks:
        raw = jid.raw if isinstance(jid, WaJid) else str(jid)
        timeline.append((at_ms if at_ms is not None else 0, 0, raw))
    for at_ms in unblock_times:
        timeline.append((at_ms, 1, None))
    timeline.sort(key=lambda item: (item[0], item[1]))

    state: dict[str, tuple[str, int]] = {}
    for at_ms, _, raw in timeline:
        if raw is not None:
            state[raw] = (BLOCKED, at_ms)
            continue
        certain = [j for j, (s, _) in state.items() if s == BLOCKED]
        possible = [j for j, (s, _) in state.items() if s == UNKNOWN]
        if len(certain) == 1 and not possible:
            state[certain[0]] = (UNBLOCKED, at_ms)
        else:
            for j in certain + possible:
                state[j] = (UNKNOWN, at_ms)
    return state


def infer_block_status(bundle: CaseBundle) -> list[Finding]:
    """Block-status findings for every contact that was ever blocked."""
    blocks, unblock_times = classify_block_events(bundle.log_events)
    statuses = block_statuses(blocks, unblock_times)
    evidence_by_jid: dict[str, list[str]] = {}
    unblock_refs = []
    for event in bundle.log_events:
        if event.kind is EventKind.CONTACT_BLOCKED and event.subject_jid:
            evidence_by_jid.setdefault(event.subject_jid.raw, []).append(event.evidence_ref)
        elif event.kind is EventKind.CONTACT_UNBLOCKED:
            unblock_refs.append(event.evidence_ref)
    notes = {
        BLOCKED: "no unblock event follows the block",
        UNBLOCKED: "an unblock fired while this was the only blocked contact",
        UNKNOWN: (
            "a cumulative unblock fired while several contacts may have been "
            "blocked; it cannot be told which ones it covered"
        ),
    }
    findings = []
    for raw in sorted(statuses):
        status, at_ms = statuses[raw]
        evidence = tuple(evidence_by_jid.get(raw, ()))
        if status != BLOCKED:
            evidence = evidence + tuple(unblock_refs)
        findings.append(
            Finding(
                category=FindingCategory.BLOCK_STATUS,
                subject=raw,
                summary=f"{raw}: {status}",
                confidence_note=f"{notes[status]}; {_coverage_note(bundle)}",
                evidence=evidence,
                payload={"jid": raw, "status": status, "at_ms": at_ms},
                at_ms=at_ms,
            )
        )
    return findings


# --- contact addition / deletion ----------------------------------------------


def contact_addition_times(bundle: CaseBundle) -> list[tuple[WaJid, int]]:
    """Earliest addition-evidence time per contact, from the logs.

    The database does not store when a contact was added; the discovery,
    profile-query, and avatar-download events written at addition time
    do.
    """
    earliest: dict[str, tuple[WaJid, int]] = {}
    for event in bundle.log_events:
        if event.kind not in CONTACT_ADDITION_KINDS:
            continue
        if event.subject_jid is None or not event.subject_jid.is_parsed:
            continue
        if event.occurred_at is None:
            continue
        raw = event.subject_jid.raw
        if raw not in earliest or event.occurred_at < earliest[raw][1]:
            earliest[raw] = (event.subject_jid, event.occurred_at)
    return [earliest[raw] for raw in sorted(earliest)]


def contact_added_findings(bundle: CaseBundle) -> list[Finding]:
    additions = contact_addition_times(bundle)
    refs: dict[str, list[str]] = {}
    for event in bundle.log_events:
        if event.kind in CONTACT_ADDITION_KINDS and event.subject_jid:
            refs.setdefault(event.subject_jid.raw, []).append(event.evidence_ref)
    return [
        Finding(
            category=FindingCategory.CONTACT_ADDED,
            subject=jid.raw,
            summary=f"{jid.raw} added to contacts at {at_ms} ms",
            confidence_note=_coverage_note(bundle),
            evidence=tuple(refs.get(jid.raw, ())),
            payload={"jid": jid.raw, "added_at_ms": at_ms},
            at_ms=at_ms,
        )
        for jid, at_ms in additions
    ]


def infer_deleted_contacts(bundle: CaseBundle) -> list[Finding]:
    """Contacts evidenced by the logs but absent from the contacts table.

    The deletion time itself is unrecoverable: contact deletions log no
    identifier. Orphaned avatar files corroborate a deletion, because
    deleting a contact row does not delete the downloaded avatar.
    """
    if not bundle.log_events:
        return [
            Finding(
                category=FindingCategory.DELETED_CONTACT,
                subject="",
                summary="no deleted-contact inference possible",
                confidence_note="no log files available; the log/database set "
                "difference cannot be computed",
                payload={"no_log_coverage": True},
            )
        ]
    current = {c.jid.raw for c in bundle.contacts}
    additions = {jid.raw: at_ms for jid, at_ms in contact_addition_times(bundle)}
    refs: dict[str, list[str]] = {}
    for event in bundle.log_events:
        if event.kind in CONTACT_ADDITION_KINDS and event.subject_jid:
            refs.setdefault(event.subject_jid.raw, []).append(event.evidence_ref)
    orphan_avatars: dict[str, list[str]] = {}
    for avatar in bundle.avatar_inventory:
        if avatar.jid_raw not in current:
            orphan_avatars.setdefault(avatar.jid_raw, []).append(avatar.path)

    findings = []
    for raw in sorted(set(additions) - current):
        paths = orphan_avatars.pop(raw, [])
        note = (
            "added per log evidence but missing from the contacts table; "
            f"deletion time is unrecoverable; {_coverage_note(bundle)}"
        )
        if paths:
            note += "; an orphaned avatar file corroborates the deletion"
        findings.append(
            Finding(
                category=FindingCategory.DELETED_CONTACT,
                subject=raw,
                summary=f"{raw} was deleted from contacts",
                confidence_note=note,
                evidence=tuple(refs.get(raw, ())) + tuple(paths),
                payload={
                    "jid": raw,
                    "added_at_ms": additions[raw],
                    "deletion_time": None,
                    "orphan_avatars": sorted(paths),
                },
                at_ms=additions[raw],
            )
        )
    # Avatars without any contact row or log trace still hint at a deletion.
    for raw in sorted(orphan_avatars):
        paths = sorted(orphan_avatars[raw])
        findings.append(
            Finding(
                category=FindingCategory.DELETED_CONTACT,
                subject=raw,
                summary=f"orphaned avatar for {raw} suggests a deleted contact",
                confidence_note="avatar file exists without a contact row; no log "
                "evidence of the addition survives",
                evidence=tuple(paths),
                payload={
                    "jid": raw,
                    "added_at_ms": None,
                    "deletion_time": None,
                    "orphan_avatars": paths,
                },
            )
        )
    return findings


# --- deleted messages ---------------------------------------------------------


def infer_deleted_messages(bundle: CaseBundle) -> list[Finding]:
    """Messages that once existed but are gone from the live store.

    Three independent sources are combined: explicit deletion log events
    (which give the deletion time), message/ack log events whose key no
    longer matches any row, and backup copies holding rows the live
    database lost. Content is unrecoverable from logs; a backup copy, if
    any, is referenced instead.
    """
    live_keys = {m.key_id_raw for m in bundle.messages}

    deletes: dict[str, tuple[int, list[str]]] = {}
    sent: dict[str, tuple[int, list[str]]] = {}
    received: dict[str, tuple[int, list[str]]] = {}
    partners: dict[str, set[str]] = {}
    acks: dict[str, dict[str, int]] = {}
    for event in bundle.log_events:
        if event.message_key is None or event.occurred_at is None:
            continue
        key = event.message_key.raw
        ref = event.evidence_ref
        if event.kind is EventKind.MESSAGE_DELETED:
            at, refs = deletes.get(key, (event.occurred_at, []))
            deletes[key] = (max(at, event.occurred_at), refs + [ref])
        elif event.kind is EventKind.MESSAGE_SENT:
            at, refs = sent.get(key, (event.occurred_at, []))
            sent[key] = (min(at, event.occurred_at), refs + [ref])
            if event.subject_jid:
                partners.setdefault(key, set()).add(event.subject_jid.raw)
        elif event.kind is EventKind.MESSAGE_RECEIVED:
            at, refs = received.get(key, (event.occurred_at, []))
            received[key] = (min(at, event.occurred_at), refs + [ref])
            if event.subject_jid:
                partners.setdefault(key, set()).add(event.subject_jid.raw)
        elif event.kind is EventKind.SERVER_ACK:
            acks.setdefault(key, {})["server"] = event.occurred_at
        elif event.kind is EventKind.DEVICE_ACK:
            acks.setdefault(key, {})["device"] = event.occurred_at

    backup_hits: dict[str, list[str]] = {}
    for backup in bundle.backups:
        for record in backup.messages:
            if record.key_id_raw not in live_keys:
                hits = backup_hits.setdefault(record.key_id_raw, [])
                if backup.name not in hits:
                    hits.append(backup.name)

    candidates = (set(deletes) | set(sent) | set(received) | set(acks)) - live_keys
    candidates |= set(backup_hits)

    findings = []
    for key in sorted(candidates):
        deleted_at, delete_refs = deletes.get(key, (None, []))
        sent_at, sent_refs = sent.get(key, (None, []))
        received_at, recv_refs = received.get(key, (None, []))
        key_acks = acks.get(key, {})
        if "device" in key_acks:
            last_state = StateCode.DELIVERED_TO_DEVICE.value
            state_ref = f"device ack at {key_acks['device']} ms"
        elif "server" in key_acks:
            last_state = StateCode.ON_SERVER.value
            state_ref = f"server ack at {key_acks['server']} ms"
        elif sent_at is not None:
            last_state = StateCode.PENDING_LOCAL.value
            state_ref = "sent with no acknowledgement in the logs"
        elif received_at is not None:
            last_state = StateCode.RECEIVED_INCOMING.value
            state_ref = "received"
        else:
            last_state = None
            state_ref = "no exchange events survive"
        recovered = sorted(backup_hits.get(key, []))
        note_parts = [
            "message contents are unrecoverable from logs"
            if not recovered
            else f"a backup copy retains the full record ({', '.join(recovered)})",
            state_ref,
            _coverage_note(bundle),
        ]
        findings.append(
            Finding(
                category=FindingCategory.DELETED_MESSAGE,
                subject=key,
                summary=f"message {key} was deleted"
                if deleted_at is not None
                else f"message {key} is missing from the live store",
                confidence_note="; ".join(note_parts),
                evidence=tuple(delete_refs + sent_refs + recv_refs),
                payload={
                    "key": key,
                    "deleted_at_ms": deleted_at,
                    "sent_at_ms": sent_at,
                    "received_at_ms": received_at,
                    "partners": sorted(partners.get(key, set())),
                    "last_state": last_state,
                    "server_ack_at_ms": key_acks.get("server"),
                    "device_ack_at_ms": key_acks.get("device"),
                    "recovered_from_backup": bool(recovered),
                    "backups": recovered,
                },
                at_ms=deleted_at if deleted_at is not None else (sent_at or received_at),
            )
        )
    return findings


# --- media correlation ----------------------------------------------------------


def _hash_to_hex(hash_b64: str | None) -> str | None:
    if not hash_b64:
        return None
    try:
        digest = base64.b64decode(hash_b64, validate=True)
    except (binascii.Error, ValueError):
        return None
    if len(digest) != 32:
        return None
    return digest.hex()


def _media_records(records):
    return [r for r in records if r.media_wa_type in (1, 2, 3)]


def correlate_media(sender_records, recipient_records, media_inventory) -> list[Finding]:
    """Correlate transferred files across records and the media directories.

    A sender/recipient record pair is a full-confidence match only when
    both the server-assigned file name and the content hash agree;
    agreement on just one of the two is reported at lower confidence.
    Files on disk are identified by recomputed content hash, never by
    name alone, because the receiving side stores no local file name.
    """
    findings = []
    senders = _media_records(sender_records)
    recipients = _media_records(recipient_records)

    for s_rec in sorted(senders, key=lambda r: r.id):
        s_name = server_filename(s_rec.media_url)
        s_hash = s_rec.media_hash
        for r_rec in sorted(recipients, key=lambda r: r.id):
            r_name = server_filename(r_rec.media_url)
            r_hash = r_rec.media_hash
            name_match = s_name is not None and s_name == r_name
            hash_match = s_hash is not None and s_hash == r_hash
            if not name_match and not hash_match:
                continue
            if name_match and hash_match:
                match, note = "full", (
                    "server file name and content hash both agree; the records "
                    "describe the same transferred file"
                )
            elif name_match:
                match, note = "name-only", (
                    "server file name agrees but the content hash differs; "
                    "lower confidence, the payloads are not identical"
                )
            else:
                match, note = "hash-only", (
                    "content hash agrees but the server file name differs; "
                    "lower confidence, possibly a re-upload of the same file"
                )
            findings.append(
                Finding(
                    category=FindingCategory.MEDIA_CORRELATION,
                    subject=s_name or s_hash or "",
                    summary=f"sender record {s_rec.id} / recipient record {r_rec.id}: "
                    f"{match} match",
                    confidence_note=note,
                    evidence=(f"messages:_id={s_rec.id}", f"messages:_id={r_rec.id}"),
                    payload={
                        "match": match,
                        "sender_record_id": s_rec.id,
                        "recipient_record_id": r_rec.id,
                        "server_filename": s_name if name_match else None,
                        "media_hash": s_hash if hash_match else None,
                    },
                )
            )

    by_hash: dict[str, list] = {}
    for media in media_inventory:
        by_hash.setdefault(media.sha256, []).append(media)
    for record in sorted(recipients + senders, key=lambda r: r.id):
        hex_digest = _hash_to_hex(record.media_hash)
        if hex_digest is None:
            continue
        for media in by_hash.get(hex_digest, []):
            findings.append(
                Finding(
                    category=FindingCategory.MEDIA_CORRELATION,
                    subject=media.path,
                    summary=f"local file {media.path} carries the content of record "
                    f"{record.id}",
                    confidence_note="recomputed SHA-256 of the file equals the hash "
                    "stored in the record",
                    evidence=(f"messages:_id={record.id}", media.path),
                    payload={
                        "match": "local-file",
                        "record_id": record.id,
                        "path": media.path,
                        "sha256": media.sha256,
                    },
                )
            )
    return findings


# --- identity -------------------------------------------------------------------


def _digits(number: str | None) -> str:
    return "".join(ch for ch in (number or "") if ch.isdigit())


def identity_check(bundle: CaseBundle, sim_number: str | None = None) -> Finding:
    """Compare the registered number against the SIM currently in the device.

    The registration survives SIM swaps, so a mismatch means the device
    is using an account registered to a different number (possible
    impersonation).
    """
    registered = bundle.registered_number
    if registered is None:
        return Finding(
            category=FindingCategory.IDENTITY_CHECK,
            subject="",
            summary="registered number unavailable",
            confidence_note="the settings file holding the registered number is missing",
            payload={"registered_number": None, "sim_number": sim_number, "match": None},
        )
    if sim_number is None:
        return Finding(
            category=FindingCategory.IDENTITY_CHECK,
            subject=registered,
            summary=f"registered number {registered}; no SIM number supplied",
            confidence_note="supply the SIM number to check for impersonation",
            evidence=("me",),
            payload={"registered_number": registered, "sim_number": None, "match": None},
        )
    match = _digits(registered) == _digits(sim_number)
    return Finding(
        category=FindingCategory.IDENTITY_CHECK,
        subject=registered,
        summary="registered number matches the SIM"
        if match
        else f"registered number {registered} differs from SIM {sim_number}",
        confidence_note="numbers compared digit-for-digit"
        if match
        else "the account was registered with a different SIM: possible impersonation",
        evidence=("me",),
        payload={"registered_number": registered, "sim_number": sim_number, "match": match},
    )


# --- orchestration ----------------------------------------------------------------


@dataclass
class Analysis:
    histories: dict
    timelines: list[GroupTimeline]
    partners: PartnerAnalysis
    findings: list[Finding]
    warnings: WarningLog


def analyze(bundle: CaseBundle, sim_number: str | None = None) -> Analysis:
    """Run every correlation over a bundle and merge the findings."""
    warn = WarningLog()
    histories = reconstruct_history(bundle, warn=warn)
    timelines = group_membership_timeline(bundle, warn)
    partners = resolve_partners(bundle, warn)

    findings: list[Finding] = []
    for jid_raw, entries in histories.items():
        times = [e.effective_time for e in entries if e.effective_time is not None]
        findings.append(
            Finding(
                category=FindingCategory.CONVERSATION,
                subject=jid_raw,
                summary=f"{len(entries)} messages exchanged with {jid_raw}",
                confidence_note="device-local clock; times from other devices are "
                "not comparable as ground truth",
                evidence=tuple(f"messages:_id={e.record.id}" for e in entries[:20]),
                payload={
                    "jid": jid_raw,
                    "message_count": len(entries),
                    "first_ms": min(times) if times else None,
                    "last_ms": max(times) if times else None,
                    "recovered_count": sum(1 for e in entries if e.source == RECOVERED),
                },
                at_ms=min(times) if times else None,
            )
        )
    for timeline in timelines:
        last = timeline.events[-1].at_ms if timeline.events else None
        findings.append(
            Finding(
                category=FindingCategory.GROUP_MEMBERSHIP,
                subject=timeline.group_raw,
                summary=f"group {timeline.group_raw}: {len(timeline.events)} membership events",
                confidence_note="log-sourced events are flagged per event",
                evidence=tuple(e.evidence for e in timeline.events),
                payload={
                    "group": timeline.group_raw,
                    "name": timeline.group_name,
                    "event_count": len(timeline.events),
                    "members_at_end": sorted(timeline.membership_at(last))
                    if last is not None
                    else [],
                },
                at_ms=timeline.created_at_ms(),
            )
        )
    findings.extend(contact_added_findings(bundle))
    findings.extend(infer_block_status(bundle))
    findings.extend(infer_deleted_contacts(bundle))
    findings.extend(infer_deleted_messages(bundle))
    findings.extend(
        correlate_media(
            [m for m in bundle.messages if m.from_me],
            [m for m in bundle.messages if not m.from_me],
            bundle.media_inventory,
        )
    )
    findings.append(identity_check(bundle, sim_number))
    return Analysis(
        histories=histories,
        timelines=timelines,
        partners=partners,
        findings=sort_findings(findings),
        warnings=warn,
    )
