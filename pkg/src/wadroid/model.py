"""Domain types and primitive decoders shared across the toolkit.

WhatsApp identifiers (user/group/broadcast jids, message keys) and the
epoch timestamps used throughout the evidence databases are decoded
here. All types are immutable after construction and every decoder is a
pure function, so values may be shared freely between concurrent
readers.

Timestamps are stored internally as UTC epoch integers; converting to a
display timezone is strictly a report-rendering concern (see
``render_epoch_ms`` and the ``--tz`` CLI option).
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from enum import Enum
from typing import Mapping

from .errors import MalformedGroupId, MalformedJid, MalformedKey

USER_JID_SUFFIX = "@s.whatsapp.net"
GROUP_JID_SUFFIX = "@g.us"
BROADCAST_JID = "broadcast"

#: Sentinel used by the chat database for "no value yet".
ABSENT = -1

# Phone numbers may carry 'x' characters: evidence shared publicly (and
# some anonymized exports) masks tail digits, and the parser must keep
# accepting those identifiers instead of rejecting the record.
_USER_JID_RE = re.compile(r"^(?P<phone>[0-9][0-9x]*)@s\.whatsapp\.net$")
_GROUP_JID_RE = re.compile(r"^(?P<creator>[0-9][0-9x]*)-(?P<epoch>[0-9]+)@g\.us$")
_MESSAGE_KEY_RE = re.compile(r"^(?P<bc>%~)?(?P<start>[0-9]+)-(?P<seq>[0-9]+)$")

_EPOCH = datetime(1970, 1, 1, tzinfo=timezone.utc)

#: Group ids whose embedded creation epoch falls before this bound are
#: implausible for real evidence (the service did not exist).
MIN_PLAUSIBLE_GROUP_EPOCH = 1230768000  # 2009-01-01T00:00:00Z


@dataclass(frozen=True)
class ParseWarning:
    """One non-fatal problem found while decoding evidence.

    ``source`` pinpoints the offending artifact, e.g. ``wa.db:wa_contacts#3``
    or ``whatsapp.log:17``.
    """

    source: str
    message: str


class WarningLog:
    """Accumulates parse/consistency warnings.

    Forensic parsing never aborts on malformed values; problems are
    recorded here and surfaced in reports instead.
    """

    def __init__(self) -> None:
        self._items: list[ParseWarning] = []

    def add(self, source: str, message: str) -> None:
        self._items.append(ParseWarning(source, message))

    def extend(self, items) -> None:
        self._items.extend(items)

    @property
    def items(self) -> tuple[ParseWarning, ...]:
        return tuple(self._items)

    def __len__(self) -> int:
        return len(self._items)

    def __iter__(self):
        return iter(self._items)

    def __repr__(self) -> str:
        return f"WarningLog({len(self._items)} warnings)"


def warn_to(warn: WarningLog | None, source: str, message: str) -> None:
    """Record a warning if a sink was provided; no-op otherwise."""
    if warn is not None:
        warn.add(source, message)


class JidKind(str, Enum):
    USER = "user"
    GROUP = "group"
    BROADCAST = "broadcast"
    #: Not a spec'd jid shape; used to retain records whose identifier
    #: could not be parsed (they are never silently dropped).
    OTHER = "other"


@dataclass(frozen=True)
class WaJid:
    """A WhatsApp identifier.

    Users are ``<phone>@s.whatsapp.net``, groups are
    ``<creator>-<epoch>@g.us`` and the literal ``broadcast`` names the
    sender's own row of a broadcast fan-out. ``phone_number`` is the
    user's phone for user jids and the creator's phone for group jids.
    """

    raw: str
    phone_number: str
    kind: JidKind

    def rebuild(self) -> str:
        """Reassemble the canonical string form (identity on well-formed input)."""
        if self.kind is JidKind.USER:
            return self.phone_number + USER_JID_SUFFIX
        if self.kind is JidKind.BROADCAST:
            return BROADCAST_JID
        return self.raw

    @property
    def is_parsed(self) -> bool:
        return self.kind is not JidKind.OTHER


@dataclass(frozen=True)
class GroupId:
    """A parsed group identifier: creator plus creation time (epoch seconds)."""

    raw: str
    creator: WaJid
    creation_time: int

    def rebuild(self) -> str:
        return f"{self.creator.phone_number}-{self.creation_time}{GROUP_JID_SUFFIX}"

    def plausible_creation(self, now_s: int | None = None) -> bool:
        """True when the embedded epoch is a credible creation time."""
        if self.creation_time < MIN_PLAUSIBLE_GROUP_EPOCH:
            return False
        if len(str(self.creation_time)) != 10:
            return False
        if now_s is not None and self.creation_time > now_s:
            return False
        return True


@dataclass(frozen=True)
class MessageKey:
    """A message identifier assigned by the sending device.

    The value concatenates the epoch second of the sender's last
    application start with a per-session message counter. Records stored
    on the receiving side of a broadcast carry a ``%~`` prefix.
    """

    raw: str
    session_start: int
    sequence: int
    broadcast_received: bool

    def rebuild(self) -> str:
        prefix = "%~" if self.broadcast_received else ""
        return f"{prefix}{self.session_start}-{self.sequence}"


def parse_jid(raw: str) -> WaJid:
    """Parse a jid string, raising MalformedJid when no pattern matches."""
    if not raw:
        raise MalformedJid("empty jid")
    if raw == BROADCAST_JID:
        return WaJid(raw=raw, phone_number="", kind=JidKind.BROADCAST)
    m = _USER_JID_RE.match(raw)
    if m:
        return WaJid(raw=raw, phone_number=m.group("phone"), kind=JidKind.USER)
    if raw.endswith(GROUP_JID_SUFFIX):
        gid = parse_group_id(raw)
        return WaJid(raw=raw, phone_number=gid.creator.phone_number, kind=JidKind.GROUP)
    raise MalformedJid(f"unrecognized jid: {raw!r}")


def classify_jid(raw: str | None, warn: WarningLog | None = None, source: str = "") -> WaJid:
    """Lenient jid decoding for record loaders.

    Returns a kind=OTHER placeholder (raw preserved) instead of raising,
    so malformed identifiers never drop evidence rows.
    """
    text = raw if raw is not None else ""
    try:
        return parse_jid(text)
    except MalformedJid as exc:
        warn_to(warn, source, f"malformed jid kept verbatim: {exc}")
        return WaJid(raw=text, phone_number="", kind=JidKind.OTHER)


def parse_group_id(raw: str) -> GroupId:
    """Parse ``<creator>-<epoch>@g.us``; raises MalformedGroupId otherwise."""
    m = _GROUP_JID_RE.match(raw)
    if not m:
        raise MalformedGroupId(f"group id missing creator/epoch structure: {raw!r}")
    creator = WaJid(
        raw=m.group("creator") + USER_JID_SUFFIX,
        phone_number=m.group("creator"),
        kind=JidKind.USER,
    )
    return GroupId(raw=raw, creator=creator, creation_time=int(m.group("epoch")))


def parse_message_key(raw: str) -> MessageKey:
    """Parse ``[%~]<epoch>-<sequence>``; raises MalformedKey otherwise."""
    if not raw:
        raise MalformedKey("empty message key")
    m = _MESSAGE_KEY_RE.match(raw)
    if not m:
        raise MalformedKey(f"unrecognized message key: {raw!r}")
    return MessageKey(
        raw=raw,
        session_start=int(m.group("start")),
        sequence=int(m.group("seq")),
        broadcast_received=m.group("bc") is not None,
    )


class EpochUnit(Enum):
    SECONDS = "seconds"
    MILLIS = "millis"


def ts_present(value: int | None) -> bool:
    """True when an epoch field holds an actual timestamp (not NULL / -1 / 0)."""
    return value is not None and value > 0


def decode_epoch(
    value: int | None,
    unit: EpochUnit,
    warn: WarningLog | None = None,
    source: str = "",
) -> datetime | None:
    """Decode an epoch integer to a UTC datetime.

    The sentinel -1 (and SQL NULL) maps to None. Other negative values
    also map to None, with a warning: they are not valid artifact
    timestamps.
    """
    if value is None or value == ABSENT:
        return None
    if value < 0:
        warn_to(warn, source, f"negative epoch value {value} treated as absent")
        return None
    ms = value if unit is EpochUnit.MILLIS else value * 1000
    try:
        return _EPOCH + timedelta(milliseconds=ms)
    except OverflowError:
        warn_to(warn, source, f"epoch value {value} out of datetime range")
        return None


def parse_tz_offset(text: str) -> int:
    """Parse a ``+HH:MM`` / ``-HH:MM`` / ``Z`` offset into minutes."""
    if text in ("Z", "z", ""):
        return 0
    m = re.match(r"^(?P<sign>[+-])(?P<h>\d{2}):?(?P<m>\d{2})$", text)
    if not m:
        raise ValueError(f"bad timezone offset {text!r}; expected +HH:MM")
    minutes = int(m.group("h")) * 60 + int(m.group("m"))
    return -minutes if m.group("sign") == "-" else minutes


def format_tz_offset(offset_minutes: int) -> str:
    sign = "-" if offset_minutes < 0 else "+"
    mins = abs(offset_minutes)
    return f"{sign}{mins // 60:02d}:{mins % 60:02d}"


def render_epoch_ms(value_ms: int | None, offset_minutes: int = 0) -> str | None:
    """Render an epoch-millisecond value in the given display offset.

    Format: ``YYYY-MM-DD HH:MM:SS.mmm +HH:MM``. Returns None for absent
    values.
    """
    if value_ms is None or value_ms < 0:
        return None
    local = _EPOCH + timedelta(milliseconds=value_ms, minutes=offset_minutes)
    return (
        f"{local.year:04d}-{local.month:02d}-{local.day:02d} "
        f"{local.hour:02d}:{local.minute:02d}:{local.second:02d}"
        f".{local.microsecond // 1000:03d} {format_tz_offset(offset_minutes)}"
    )


@dataclass(frozen=True)
class ContactRecord:
    """One decoded row of the contacts table.

    WhatsApp-sourced fields are decoded; the phonebook-sourced fields are
    retained verbatim in ``phonebook`` without interpretation. ``photo_ts``
    is kept verbatim and never interpreted.
    """

    id: int
    jid: WaJid
    is_whatsapp_user: bool
    unseen_msg_count: int
    photo_ts: int | None
    thumb_ts: int | None
    photo_id_timestamp: int | None
    wa_name: str | None
    status_line: str | None
    phonebook: Mapping[str, object] = field(default_factory=dict)


@dataclass(frozen=True)
class MessageRecord:
    """One decoded row of the chat-store messages table.

    Timestamp semantics follow the on-device schema: ``timestamp`` is the
    send time for outgoing rows and the record insertion time for
    incoming ones; ``received_timestamp`` is the receipt time for
    incoming rows (for an outgoing row it holds the insertion time only
    while the message is still pending locally). The ``receipt_*`` pair
    tracks the server/device acknowledgements of outgoing messages; -1
    means "no ack yet".
    """

    id: int
    key_remote_jid: WaJid
    key_id_raw: str
    key_id: MessageKey | None
    from_me: bool
    status_code: int
    timestamp: int | None
    received_timestamp: int | None
    receipt_server_timestamp: int | None
    receipt_device_timestamp: int | None
    send_timestamp: int | None  # unused on-device; retained verbatim
    needs_push: int
    recipient_count: int | None
    remote_resource_raw: str | None
    remote_resource: WaJid | None
    media_wa_type: int
    data: str | None
    raw_data: bytes | None
    media_hash: str | None
    media_url: str | None
    media_mime_type: str | None
    media_size: int | None
    media_name: str | None
    media_duration: int | None
    latitude: float | None
    longitude: float | None
    thumb_image: bytes | None  # housekeeping blob; retained, never examined

    STATUS_RECEIVED = 0
    STATUS_ON_SERVER = 4
    STATUS_DELIVERED = 5
    STATUS_CONTROL = 6

    @property
    def is_control(self) -> bool:
        return self.status_code == self.STATUS_CONTROL

    @property
    def is_broadcast_sender_row(self) -> bool:
        return self.needs_push == 2 or self.key_remote_jid.kind is JidKind.BROADCAST

    @property
    def is_broadcast_receipt(self) -> bool:
        return self.key_id_raw.startswith("%~")

    @property
    def effective_time(self) -> int | None:
        """Ordering timestamp: receipt time for incoming, send time for outgoing."""
        if not self.from_me and ts_present(self.received_timestamp):
            return self.received_timestamp
        return self.timestamp


@dataclass(frozen=True)
class ChatListRecord:
    """One conversation entry; points at the last message of the thread."""

    id: int
    key_remote_jid: WaJid
    message_table_id: int


class EventKind(str, Enum):
    CONTACT_NOT_IN_DB = "contact_not_in_db"
    CONTACT_QUERY = "contact_query"
    AVATAR_DOWNLOADED = "avatar_downloaded"
    CONTACT_BLOCKED = "contact_blocked"
    CONTACT_UNBLOCKED = "contact_unblocked"
    MESSAGE_SENT = "message_sent"
    MESSAGE_RECEIVED = "message_received"
    SERVER_ACK = "server_ack"
    DEVICE_ACK = "device_ack"
    MESSAGE_DELETED = "message_deleted"
    GROUP_CREATED = "group_created"
    GROUP_ADD_REQUESTED = "group_add_requested"
    GROUP_MEMBER_ADDED = "group_member_added"
    GROUP_MEMBER_LEFT = "group_member_left"
    OTHER = "other"


#: Kinds that must carry a message key to be classified at all.
KEY_BEARING_KINDS = frozenset(
    {
        EventKind.MESSAGE_SENT,
        EventKind.MESSAGE_RECEIVED,
        EventKind.SERVER_ACK,
        EventKind.DEVICE_ACK,
        EventKind.MESSAGE_DELETED,
    }
)

#: Kinds giving evidence that a contact was added to the database.
CONTACT_ADDITION_KINDS = frozenset(
    {
        EventKind.CONTACT_NOT_IN_DB,
        EventKind.CONTACT_QUERY,
        EventKind.AVATAR_DOWNLOADED,
    }
)


@dataclass(frozen=True)
class LogEvent:
    """One classified line of an application log file.

    Unblock events are anonymous and cumulative on-device, so
    ``subject_jid`` is always None for them; ``group_subject`` carries
    the group name announced by creation events.
    """

    occurred_at: int | None  # epoch ms; None when the line had no parsable time
    kind: EventKind
    subject_jid: WaJid | None
    message_key: MessageKey | None
    group_id: GroupId | None
    group_subject: str | None
    raw_line: str
    source_file: str
    line_number: int

    @property
    def evidence_ref(self) -> str:
        return f"{self.source_file}:{self.line_number}"


@dataclass(frozen=True)
class MediaFile:
    """One file found under the media directories; hash always computed."""

    path: str  # POSIX path relative to the evidence root
    size_bytes: int
    sha256: str


@dataclass(frozen=True)
class AvatarFile:
    jid_raw: str
    path: str


@dataclass(frozen=True)
class BackupSet:
    """Messages recovered from one decrypted chat-database backup."""

    name: str
    messages: tuple[MessageRecord, ...]


@dataclass(frozen=True)
class CaseBundle:
    """The parsed evidence set of one device."""

    contacts: tuple[ContactRecord, ...] = ()
    messages: tuple[MessageRecord, ...] = ()
    chat_list: tuple[ChatListRecord, ...] = ()
    log_events: tuple[LogEvent, ...] = ()
    registered_number: str | None = None
    own_avatar_present: bool = False
    media_inventory: tuple[MediaFile, ...] = ()
    avatar_inventory: tuple[AvatarFile, ...] = ()
    backups: tuple[BackupSet, ...] = ()
    warnings: tuple[ParseWarning, ...] = ()

    def log_coverage(self) -> tuple[int | None, int | None]:
        """(first, last) event time in ms; (None, None) without dated events."""
        times = [e.occurred_at for e in self.log_events if e.occurred_at is not None]
        if not times:
            return (None, None)
        return (min(times), max(times))

    def owner_jid(self) -> WaJid | None:
        """The device owner's user jid, derived from the registered number."""
        if not self.registered_number:
            return None
        return WaJid(
            raw=self.registered_number + USER_JID_SUFFIX,
            phone_number=self.registered_number,
            kind=JidKind.USER,
        )
