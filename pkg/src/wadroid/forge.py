"""Synthetic evidence bundles generated from declarative scenario scripts.

The forge plays a scenario on one simulated device (the "owner") and
writes the complete artifact layout: contacts and chat databases,
encrypted backup snapshots, log files in the parser's DEFAULT grammar,
media files with consistent hash/URL linkage, avatar placeholders, and
the settings files. Because the same simulation also derives the
expected parse result and the expected analytical conclusions, a forged
bundle is the ground-truth oracle for every correlation test.

Determinism contract: identical (script, seed) pairs produce
byte-identical bundles, and every generated artifact passes its parser
with zero warnings (the sole expected warnings are chat-list rows left
dangling by message deletions, which the generator predicts).

Scenario scripts are JSON (see ``script_from_json``), format version 1:

    {
      "version": 1,
      "owner": "393401234567",
      "actors": ["393401234567", "393481111111"],
      "tz": "+00:00",
      "seed": 7,
      "actions": [
        {"at": "2013-02-13 06:59:09.000 +00:00", "do": "add_contact",
         "number": "393481111111"},
        {"at": "2013-02-13 07:00:23.000 +00:00", "do": "send_text",
         "sender": "393401234567", "to": "393481111111", "text": "hi",
         "label": "m1"},
        {"at": "2013-02-14 07:00:00.000 +00:00", "do": "delete_message",
         "target": "m1"}
      ]
    }

Action times must strictly increase; actions may only reference actors,
groups, and message labels introduced earlier. Group chats are always
created by the owner (the device under examination sees the full
control-message history only for groups it belonged to from creation).
"""

from __future__ import annotations

import hashlib
import json
import random
import re
import sqlite3
import tempfile
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from pathlib import Path

from . import db_reader, layout, log_parser
from .backup_crypto import encrypt_fixture
from .errors import InvalidScript
from .model import (
    BROADCAST_JID,
    BackupSet,
    CaseBundle,
    ChatListRecord,
    ContactRecord,
    EventKind,
    LogEvent,
    MediaFile,
    AvatarFile,
    MessageRecord,
    USER_JID_SUFFIX,
    WarningLog,
    classify_jid,
    format_tz_offset,
    parse_group_id,
    parse_message_key,
    parse_tz_offset,
)

SCRIPT_FORMAT_VERSION = 1

SERVER_ACK_DELTA_MS = 1500
DEVICE_ACK_DELTA_MS = 3000

_PENDING, _SERVER, _DELIVERED = "pending", "server", "delivered"
_DELIVERY_CHOICES = (_PENDING, _SERVER, _DELIVERED)


# --- scenario actions -------------------------------------------------------


@dataclass(frozen=True)
class AddContact:
    at_ms: int
    number: str
    wa_name: str | None = None
    status_line: str | None = None
    is_whatsapp_user: bool = True


@dataclass(frozen=True)
class BlockContact:
    at_ms: int
    number: str


@dataclass(frozen=True)
class UnblockAll:
    at_ms: int


@dataclass(frozen=True)
class SendText:
    at_ms: int
    sender: str
    to: str  # actor number or group label
    text: str
    label: str | None = None
    delivery: str = _DELIVERED
    # explicit acknowledgement times; defaults derive from at_ms
    server_ack_at_ms: int | None = None
    device_ack_at_ms: int | None = None


@dataclass(frozen=True)
class SendMedia:
    at_ms: int
    sender: str
    to: str
    media_kind: str = "image"  # image / audio / video
    content: bytes | None = None
    name: str | None = None
    duration: int | None = None
    server_filename: str | None = None
    label: str | None = None
    delivery: str = _DELIVERED


@dataclass(frozen=True)
class SendVCard:
    at_ms: int
    sender: str
    to: str
    display_name: str
    vcard: str | None = None
    label: str | None = None
    delivery: str = _DELIVERED


@dataclass(frozen=True)
class SendGeo:
    at_ms: int
    sender: str
    to: str
    latitude: float
    longitude: float
    label: str | None = None
    delivery: str = _DELIVERED


@dataclass(frozen=True)
class Broadcast:
    at_ms: int
    sender: str
    recipients: tuple[str, ...]
    text: str
    label: str | None = None
    delivery: str = _DELIVERED


@dataclass(frozen=True)
class CreateGroup:
    at_ms: int
    name: str
    label: str


@dataclass(frozen=True)
class AddToGroup:
    at_ms: int
    group: str
    member: str


@dataclass(frozen=True)
class LeaveGroup:
    at_ms: int
    group: str
    member: str


@dataclass(frozen=True)
class DeleteMessage:
    at_ms: int
    target: str  # message label or raw key


@dataclass(frozen=True)
class DeleteContact:
    at_ms: int
    number: str


@dataclass(frozen=True)
class SnapshotBackup:
    at_ms: int


@dataclass(frozen=True)
class ScenarioScript:
    owner: str
    actors: tuple[str, ...]
    actions: tuple = ()
    seed: int = 0
    tz_offset_minutes: int = 0


# --- ground truth -----------------------------------------------------------


@dataclass(frozen=True)
class ExpectedAnalytics:
    """Normalized analytical ground truth derived from the simulation."""

    histories: dict  # jid_raw -> tuple[HistoryLine, ...]
    partners: dict  # record_id -> (kind, partners, originator, authored_by_owner)
    broadcasts: tuple  # (key, destinations, recipient_count, self_row_present)
    group_timelines: dict  # gid_raw -> (name, tuple[(ms, kind, member, source), ...])
    deleted_messages: frozenset  # (key, deleted, sent, received, partners, state, recovered)
    deleted_contacts: frozenset  # (jid_raw, added_at_ms)
    addition_times: dict  # jid_raw -> earliest addition-evidence ms


@dataclass(frozen=True)
class ForgeResult:
    root: Path
    bundle: CaseBundle
    expected: ExpectedAnalytics


# --- simulation internals ----------------------------------------------------


@dataclass
class _SimContact:
    row_id: int
    number: str
    jid_raw: str
    added_ms: int
    wa_name: str
    status_line: str
    is_whatsapp_user: bool
    deleted: bool = False


@dataclass
class _SimMessage:
    id: int
    jid_raw: str
    key_raw: str
    from_me: bool
    final_status: int
    insert_ms: int
    received_ms: int | None = None
    server_ack_ms: int | None = None
    device_ack_ms: int | None = None
    delete_ms: int | None = None
    media_type: int = 0
    data: str | None = None
    raw_data: bytes | None = None
    media_hash: str | None = None
    media_url: str | None = None
    media_mime: str | None = None
    media_size: int | None = None
    media_name: str | None = None
    media_duration: int | None = None
    latitude: float | None = None
    longitude: float | None = None
    needs_push: int = 0
    recipient_count: int | None = None
    remote_resource: str | None = None

    def final_event_ms(self) -> int:
        return max(
            self.insert_ms,
            self.server_ack_ms or 0,
            self.device_ack_ms or 0,
            self.received_ms or 0,
        )

    def materialize(self, as_of_ms: int | None = None) -> dict:
        """Column values as they stood at ``as_of_ms`` (None = final state)."""
        t = as_of_ms if as_of_ms is not None else self.final_event_ms()
        if self.final_status == 6:
            status = 6
            server = device = -1
            received = self.received_ms if not self.from_me else -1
        elif not self.from_me:
            status = self.final_status
            server = device = -1
            received = self.received_ms
        else:
            if self.server_ack_ms is None or t < self.server_ack_ms:
                status = 0
            elif self.device_ack_ms is None or t < self.device_ack_ms:
                status = 4
            else:
                status = 5
            server = self.server_ack_ms if status >= 4 else -1
            device = self.device_ack_ms if status >= 5 else -1
            received = self.insert_ms if status == 0 else -1
        return {
            "_id": self.id,
            "key_remote_jid": self.jid_raw,
            "key_from_me": 1 if self.from_me else 0,
            "key_id": self.key_raw,
            "status": status,
            "needs_push": self.needs_push,
            "data": self.data,
            "timestamp": self.insert_ms,
            "media_url": self.media_url,
            "media_mime_type": self.media_mime,
            "media_wa_type": self.media_type,
            "media_size": self.media_size,
            "media_name": self.media_name,
            "media_hash": self.media_hash,
            "media_duration": self.media_duration,
            "latitude": self.latitude,
            "longitude": self.longitude,
            "thumb_image": None,
            "remote_resource": self.remote_resource,
            "received_timestamp": received if received is not None else -1,
            "send_timestamp": -1,
            "receipt_server_timestamp": server if server is not None else -1,
            "receipt_device_timestamp": device if device is not None else -1,
            "raw_data": self.raw_data,
            "recipient_count": self.recipient_count,
        }


@dataclass
class _SimGroup:
    label: str
    gid_raw: str
    name: str
    creator: str
    members: set = field(default_factory=set)
    events: list = field(default_factory=list)  # (ms, kind, member_raw, key_raw)


def _user_jid(number: str) -> str:
    return number + USER_JID_SUFFIX


_MEDIA_PRESETS = {
    "image": (1, "image/jpeg", "IMG", ".jpg"),
    "audio": (2, "audio/mp4", "AUD", ".m4a"),
    "video": (3, "video/mp4", "VID", ".mp4"),
}


class _Simulator:
    def __init__(self, script: ScenarioScript):
        self.script = script
        self.rng = random.Random(script.seed)
        self.owner = script.owner
        self.contacts: list[_SimContact] = []
        self.contact_by_number: dict[str, _SimContact] = {}
        self.messages: list[_SimMessage] = []
        self.by_key: dict[str, list[_SimMessage]] = {}
        self.labels: dict[str, str] = {}  # label -> key_raw
        self.chat_rows: dict[str, list[int]] = {}  # jid -> [chat_id, last_msg_id]
        self.groups: dict[str, _SimGroup] = {}
        self.group_by_gid: dict[str, _SimGroup] = {}
        self.log: list[tuple[int, int, str]] = []  # (ms, emit_seq, body)
        self.snapshots: list[tuple[str, int]] = []  # (file name, as_of_ms)
        self.media_files: dict[str, bytes] = {}
        self.avatar_jids: list[str] = []
        self.sessions: dict[str, list[int]] = {}  # number -> [session_s, next_seq]
        self.used_sessions: set[int] = set()
        self.used_server_names: set[str] = set()
        self.blocked: set[str] = set()
        self.block_log: list[tuple[str, int]] = []
        self.deleted_keys: dict[str, dict] = {}
        self.addition_times: dict[str, int] = {}
        self._next_contact_id = 1
        self._next_msg_id = 1
        self._next_chat_id = 1
        self._media_counter = 0
        self._emit_seq = 0
        self._last_ms: int | None = None
        self._index = 0

    # -- helpers

    def fail(self, message: str):
        raise InvalidScript(f"action #{self._index}: {message}")

    def emit(self, ms: int, body: str) -> None:
        self.log.append((ms, self._emit_seq, body))
        self._emit_seq += 1

    def next_key(self, number: str) -> str:
        state = self.sessions.get(number)
        if state is None:
            session = self._last_ms // 1000 if self._last_ms else 0
            while session in self.used_sessions:
                session += 1
            self.used_sessions.add(session)
            state = [session, 1]
            self.sessions[number] = state
        key = f"{state[0]}-{state[1]}"
        state[1] += 1
        return key

    def resolve_target(self, target: str) -> str:
        if target in self.labels:
            return self.labels[target]
        if target in self.by_key:
            return target
        self.fail(f"delete_message target {target!r} matches no known message")

    def insert_message(self, sim: _SimMessage, label: str | None) -> None:
        self.messages.append(sim)
        self.by_key.setdefault(sim.key_raw, []).append(sim)
        if label is not None:
            if label in self.labels:
                self.fail(f"duplicate message label {label!r}")
            self.labels[label] = sim.key_raw
        row = self.chat_rows.get(sim.jid_raw)
        if row is None:
            self.chat_rows[sim.jid_raw] = [self._next_chat_id, sim.id]
            self._next_chat_id += 1
        else:
            row[1] = sim.id

    def new_msg_id(self) -> int:
        value = self._next_msg_id
        self._next_msg_id += 1
        return value

    def check_actor(self, number: str) -> None:
        if number not in self.script.actors:
            self.fail(f"unknown actor {number!r}")

    def delivery_times(self, at_ms: int, delivery: str):
        if delivery not in _DELIVERY_CHOICES:
            self.fail(f"unknown delivery state {delivery!r}")
        if delivery == _PENDING:
            return 0, None, None
        if delivery == _SERVER:
            return 4, at_ms + SERVER_ACK_DELTA_MS, None
        return 5, at_ms + SERVER_ACK_DELTA_MS, at_ms + DEVICE_ACK_DELTA_MS

    # -- actions

    def run(self) -> None:
        for index, action in enumerate(self.script.actions, start=1):
            self._index = index
            at = action.at_ms
            if self._last_ms is not None and at <= self._last_ms:
                self.fail(f"time {at} does not increase (previous {self._last_ms})")
            self._last_ms = at
            handler = getattr(self, "do_" + type(action).__name__.lower(), None)
            if handler is None:
                self.fail(f"unsupported action {type(action).__name__}")
            handler(action)

    def do_addcontact(self, action: AddContact) -> None:
        number = action.number
        self.check_actor(number)
        if number == self.owner:
            self.fail("the owner is not a contact of itself")
        existing = self.contact_by_number.get(number)
        if existing is not None and not existing.deleted:
            self.fail(f"contact {number} already present")
        jid = _user_jid(number)
        contact = _SimContact(
            row_id=self._next_contact_id,
            number=number,
            jid_raw=jid,
            added_ms=action.at_ms,
            wa_name=action.wa_name or f"User{number[-4:]}",
            status_line=action.status_line or "available",
            is_whatsapp_user=action.is_whatsapp_user,
        )
        self._next_contact_id += 1
        self.contacts.append(contact)
        self.contact_by_number[number] = contact
        self.addition_times.setdefault(jid, action.at_ms)
        t = action.at_ms
        self.emit(t, log_parser.body_contact_missing(jid))
        self.emit(t + 400, log_parser.body_contact_query(jid, "profile"))
        self.emit(t + 800, log_parser.body_contact_query(jid, "status"))
        self.emit(t + 1200, log_parser.body_contact_query(jid, "avatar"))
        self.emit(t + 2000, log_parser.body_avatar_downloaded(jid))
        if jid not in self.avatar_jids:
            self.avatar_jids.append(jid)

    def do_blockcontact(self, action: BlockContact) -> None:
        self.check_actor(action.number)
        jid = _user_jid(action.number)
        if jid in self.blocked:
            self.fail(f"{action.number} is already blocked")
        self.blocked.add(jid)
        self.block_log.append((jid, action.at_ms))
        self.emit(action.at_ms, log_parser.body_contact_blocked(jid))

    def do_unblockall(self, action: UnblockAll) -> None:
        if not self.blocked:
            self.fail("unblock with no blocked contacts")
        self.blocked.clear()
        self.emit(action.at_ms, log_parser.body_contact_unblocked())

    def _send_common(self, action, build) -> None:
        sender, to = action.sender, action.to
        self.check_actor(sender)
        if to in self.groups:
            self._send_group(action, build)
            return
        self.check_actor(to)
        if sender == to:
            self.fail("sender and recipient are the same actor")
        if self.owner not in (sender, to):
            self.fail("a direct message must involve the device owner")
        outgoing = sender == self.owner
        key = self.next_key(sender)
        partner = to if outgoing else sender
        partner_jid = _user_jid(partner)
        sim = _SimMessage(
            id=self.new_msg_id(),
            jid_raw=partner_jid,
            key_raw=key,
            from_me=outgoing,
            final_status=0,
            insert_ms=action.at_ms,
        )
        build(sim, action)
        if outgoing:
            status, server, device = self.delivery_times(action.at_ms, action.delivery)
            explicit_server = getattr(action, "server_ack_at_ms", None)
            explicit_device = getattr(action, "device_ack_at_ms", None)
            if explicit_server is not None and server is not None:
                if explicit_server <= action.at_ms:
                    self.fail("server ack must come after the send time")
                server = explicit_server
            if explicit_device is not None and device is not None:
                if explicit_device <= (server or action.at_ms):
                    self.fail("device ack must come after the server ack")
                device = explicit_device
            sim.final_status = status
            sim.server_ack_ms = server
            sim.device_ack_ms = device
            self.emit(action.at_ms, log_parser.body_message_sent(key, partner_jid))
            if server is not None:
                self.emit(server, log_parser.body_server_ack(key))
            if device is not None:
                self.emit(device, log_parser.body_device_ack(key))
        else:
            sim.received_ms = action.at_ms
            self.emit(action.at_ms, log_parser.body_message_received(key, partner_jid))
        self.insert_message(sim, action.label)

    def _send_group(self, action, build) -> None:
        group = self.groups[action.to]
        sender = action.sender
        sender_jid = _user_jid(sender)
        if sender_jid not in group.members:
            self.fail(f"{sender} is not a member of group {action.to!r}")
        if _user_jid(self.owner) not in group.members:
            self.fail("the owner is no longer a member of this group")
        outgoing = sender == self.owner
        key = self.next_key(sender)
        sim = _SimMessage(
            id=self.new_msg_id(),
            jid_raw=group.gid_raw,
            key_raw=key,
            from_me=outgoing,
            final_status=0,
            insert_ms=action.at_ms,
        )
        build(sim, action)
        if outgoing:
            # Group fan-out never yields a per-member device ack; the
            # sender's own record stays at the on-server state.
            delivery = _SERVER if action.delivery == _DELIVERED else action.delivery
            status, server, device = self.delivery_times(action.at_ms, delivery)
            sim.final_status = status
            sim.server_ack_ms = server
            sim.device_ack_ms = device
            sim.remote_resource = None
            self.emit(action.at_ms, log_parser.body_message_sent(key, group.gid_raw))
            if server is not None:
                self.emit(server, log_parser.body_server_ack(key))
        else:
            sim.received_ms = action.at_ms
            sim.remote_resource = sender_jid
            self.emit(action.at_ms, log_parser.body_message_received(key, group.gid_raw))
        self.insert_message(sim, action.label)

    def do_sendtext(self, action: SendText) -> None:
        def build(sim, act):
            sim.media_type = 0
            sim.data = act.text

        self._send_common(action, build)

    def do_sendmedia(self, action: SendMedia) -> None:
        preset = _MEDIA_PRESETS.get(action.media_kind)
        if preset is None:
            self.fail(f"unknown media kind {action.media_kind!r}")
        mtype, mime, prefix, ext = preset
        content = action.content
        if content is None:
            content = self.rng.randbytes(self.rng.randrange(120, 400))
        digest = hashlib.sha256(content).digest()
        server_name = action.server_filename
        if server_name is None:
            server_name = f"{self.rng.getrandbits(48):012x}{ext}"
            while server_name in self.used_server_names:
                server_name = f"{self.rng.getrandbits(48):012x}{ext}"
        self.used_server_names.add(server_name)
        outgoing = action.sender == self.owner
        day = (datetime(1970, 1, 1, tzinfo=timezone.utc) + timedelta(milliseconds=action.at_ms))
        local_name = action.name or (
            f"{prefix}-{day.year:04d}{day.month:02d}{day.day:02d}-WA{self._media_counter:04d}{ext}"
        )
        self._media_counter += 1
        duration = action.duration
        if duration is None:
            duration = 0 if mtype == 1 else self.rng.randrange(3, 180)

        def build(sim, act):
            import base64

            sim.media_type = mtype
            sim.media_mime = mime
            sim.media_size = len(content)
            sim.media_hash = base64.b64encode(digest).decode("ascii")
            sim.media_url = f"https://mms402.whatsapp.net/d/{server_name}"
            sim.media_name = local_name if outgoing else ""
            sim.media_duration = duration
            if mtype in (1, 3):
                sim.raw_data = self.rng.randbytes(24)

        self._send_common(action, build)
        if outgoing:
            self.media_files[f"{layout.MEDIA_SENT_DIR}/{local_name}"] = content
        else:
            self.media_files[f"{layout.MEDIA_DIR}/{server_name}"] = content

    def do_sendvcard(self, action: SendVCard) -> None:
        vcard = action.vcard or (
            f"BEGIN:VCARD\nVERSION:3.0\nFN:{action.display_name}\nEND:VCARD"
        )

        def build(sim, act):
            sim.media_type = 4
            sim.data = vcard
            sim.media_name = act.display_name

        self._send_common(action, build)

    def do_sendgeo(self, action: SendGeo) -> None:
        if not (-90.0 <= action.latitude <= 90.0 and -180.0 <= action.longitude <= 180.0):
            self.fail("geo coordinates out of range")

        def build(sim, act):
            sim.media_type = 5
            sim.latitude = act.latitude
            sim.longitude = act.longitude
            sim.raw_data = self.rng.randbytes(24)

        self._send_common(action, build)

    def do_broadcast(self, action: Broadcast) -> None:
        sender = action.sender
        self.check_actor(sender)
        recipients = list(action.recipients)
        if len(set(recipients)) != len(recipients) or not recipients:
            self.fail("broadcast recipients must be unique and non-empty")
        for number in recipients:
            self.check_actor(number)
        if sender == self.owner:
            if self.owner in recipients:
                self.fail("the owner cannot be its own broadcast recipient")
            key = self.next_key(sender)
            status, server, device = self.delivery_times(action.at_ms, action.delivery)
            recipient_jids = [_user_jid(n) for n in recipients]
            destination_set = ",".join(recipient_jids)
            first_label = action.label
            for jid in recipient_jids + [BROADCAST_JID]:
                sim = _SimMessage(
                    id=self.new_msg_id(),
                    jid_raw=jid,
                    key_raw=key,
                    from_me=True,
                    final_status=status,
                    insert_ms=action.at_ms,
                    server_ack_ms=server,
                    device_ack_ms=device,
                    media_type=0,
                    data=action.text,
                    needs_push=2,
                    recipient_count=len(recipients),
                    remote_resource=destination_set,
                )
                self.insert_message(sim, first_label)
                first_label = None
            for jid in recipient_jids:
                self.emit(action.at_ms, log_parser.body_message_sent(key, jid))
            if server is not None:
                self.emit(server, log_parser.body_server_ack(key))
            if device is not None:
                self.emit(device, log_parser.body_device_ack(key))
        else:
            if self.owner not in recipients:
                self.fail("an incoming broadcast must include the owner")
            key = "%~" + self.next_key(sender)
            sender_jid = _user_jid(sender)
            sim = _SimMessage(
                id=self.new_msg_id(),
                jid_raw=sender_jid,
                key_raw=key,
                from_me=False,
                final_status=0,
                insert_ms=action.at_ms,
                received_ms=action.at_ms,
                media_type=0,
                data=action.text,
            )
            self.emit(action.at_ms, log_parser.body_message_received(key, sender_jid))
            self.insert_message(sim, action.label)

    def do_creategroup(self, action: CreateGroup) -> None:
        if action.label in self.groups:
            self.fail(f"duplicate group label {action.label!r}")
        if not action.name:
            self.fail("group name must not be empty")
        creator_jid = _user_jid(self.owner)
        gid_raw = f"{self.owner}-{action.at_ms // 1000}@g.us"
        if gid_raw in self.group_by_gid:
            self.fail("a group with this creation second already exists")
        key = self.next_key(self.owner)
        group = _SimGroup(
            label=action.label,
            gid_raw=gid_raw,
            name=action.name,
            creator=creator_jid,
            members={creator_jid},
        )
        self.groups[action.label] = group
        self.group_by_gid[gid_raw] = group
        sim = _SimMessage(
            id=self.new_msg_id(),
            jid_raw=gid_raw,
            key_raw=key,
            from_me=True,
            final_status=6,
            insert_ms=action.at_ms,
            media_type=0,
            data=action.name,
            media_size=1,
        )
        self.insert_message(sim, None)
        group.events.append((action.at_ms, "created", creator_jid, key))
        self.emit(action.at_ms, log_parser.body_group_created(gid_raw, action.name))

    def do_addtogroup(self, action: AddToGroup) -> None:
        group = self.groups.get(action.group)
        if group is None:
            self.fail(f"unknown group {action.group!r}")
        self.check_actor(action.member)
        member_jid = _user_jid(action.member)
        if member_jid in group.members:
            self.fail(f"{action.member} is already a group member")
        group.members.add(member_jid)
        key = self.next_key(action.member)
        sim = _SimMessage(
            id=self.new_msg_id(),
            jid_raw=group.gid_raw,
            key_raw=key,
            from_me=False,
            final_status=6,
            insert_ms=action.at_ms,
            received_ms=action.at_ms,
            media_type=0,
            media_size=4,
            remote_resource=member_jid,
        )
        self.insert_message(sim, None)
        group.events.append((action.at_ms, "joined", member_jid, key))
        self.emit(action.at_ms, log_parser.body_group_add_requested(group.gid_raw, [member_jid]))
        self.emit(action.at_ms, log_parser.body_group_member_added(group.gid_raw, member_jid))

    def do_leavegroup(self, action: LeaveGroup) -> None:
        group = self.groups.get(action.group)
        if group is None:
            self.fail(f"unknown group {action.group!r}")
        member_jid = _user_jid(action.member)
        if action.member == self.owner:
            self.fail("the owner leaving its own evidence device is not modeled")
        if member_jid not in group.members:
            self.fail(f"{action.member} is not a group member")
        group.members.discard(member_jid)
        key = self.next_key(action.member)
        sim = _SimMessage(
            id=self.new_msg_id(),
            jid_raw=group.gid_raw,
            key_raw=key,
            from_me=False,
            final_status=6,
            insert_ms=action.at_ms,
            received_ms=action.at_ms,
            media_type=0,
            media_size=5,
            remote_resource=member_jid,
        )
        self.insert_message(sim, None)
        group.events.append((action.at_ms, "left", member_jid, key))
        self.emit(action.at_ms, log_parser.body_group_member_left(group.gid_raw, member_jid))

    def do_deletemessage(self, action: DeleteMessage) -> None:
        key = self.resolve_target(action.target)
        rows = [m for m in self.by_key.get(key, []) if m.delete_ms is None]
        if not rows:
            self.fail(f"message {action.target!r} is already deleted")
        latest = max(m.final_event_ms() for m in rows)
        if action.at_ms <= latest:
            self.fail(
                f"delete at {action.at_ms} precedes the message's last "
                f"delivery event at {latest}"
            )
        for sim in rows:
            sim.delete_ms = action.at_ms
        self.deleted_keys[key] = {"deleted_ms": action.at_ms, "rows": rows}
        self.emit(action.at_ms, log_parser.body_message_deleted(key))

    def do_deletecontact(self, action: DeleteContact) -> None:
        contact = self.contact_by_number.get(action.number)
        if contact is None or contact.deleted:
            self.fail(f"contact {action.number} is not present")
        contact.deleted = True
        # Contact deletions log no identifier; the avatar files survive.
        self.emit(action.at_ms, "contact/delete completed")

    def do_snapshotbackup(self, action: SnapshotBackup) -> None:
        stamp = datetime(1970, 1, 1, tzinfo=timezone.utc) + timedelta(
            milliseconds=action.at_ms
        )
        base = f"msgstore-{stamp.year:04d}-{stamp.month:02d}-{stamp.day:02d}"
        name = f"{base}.crypt"
        counter = 2
        taken = {n for n, _ in self.snapshots}
        while name in taken:
            name = f"{base}.{counter}.crypt"
            counter += 1
        self.snapshots.append((name, action.at_ms))


# --- bundle materialization ---------------------------------------------------

_WA_SCHEMA = """
CREATE TABLE android_metadata (locale TEXT);
CREATE TABLE wa_contacts (
    _id INTEGER PRIMARY KEY AUTOINCREMENT,
    jid TEXT NOT NULL,
    is_whatsapp_user INTEGER,
    status TEXT,
    number TEXT,
    raw_contact_id INTEGER,
    display_name TEXT,
    phone_type INTEGER,
    phone_label TEXT,
    unseen_msg_count INTEGER,
    photo_ts INTEGER,
    thumb_ts INTEGER,
    photo_id_timestamp INTEGER,
    given_name TEXT,
    family_name TEXT,
    wa_name TEXT,
    sort_name TEXT
);
"""

_MSGSTORE_SCHEMA = """
CREATE TABLE messages (
    _id INTEGER PRIMARY KEY AUTOINCREMENT,
    key_remote_jid TEXT NOT NULL,
    key_from_me INTEGER,
    key_id TEXT NOT NULL,
    status INTEGER,
    needs_push INTEGER,
    data TEXT,
    timestamp INTEGER,
    media_url TEXT,
    media_mime_type TEXT,
    media_wa_type INTEGER,
    media_size INTEGER,
    media_name TEXT,
    media_hash TEXT,
    media_duration INTEGER,
    latitude REAL,
    longitude REAL,
    thumb_image BLOB,
    remote_resource TEXT,
    received_timestamp INTEGER,
    send_timestamp INTEGER,
    receipt_server_timestamp INTEGER,
    receipt_device_timestamp INTEGER,
    raw_data BLOB,
    recipient_count INTEGER
);
CREATE TABLE chat_list (
    _id INTEGER PRIMARY KEY AUTOINCREMENT,
    key_remote_jid TEXT,
    message_table_id INTEGER
);
"""

_MSG_COLUMNS = (
    "_id",
    "key_remote_jid",
    "key_from_me",
    "key_id",
    "status",
    "needs_push",
    "data",
    "timestamp",
    "media_url",
    "media_mime_type",
    "media_wa_type",
    "media_size",
    "media_name",
    "media_hash",
    "media_duration",
    "latitude",
    "longitude",
    "thumb_image",
    "remote_resource",
    "received_timestamp",
    "send_timestamp",
    "receipt_server_timestamp",
    "receipt_device_timestamp",
    "raw_data",
    "recipient_count",
)


def _contact_columns(contact: _SimContact) -> dict:
    number = contact.number
    return {
        "_id": contact.row_id,
        "jid": contact.jid_raw,
        "is_whatsapp_user": 1 if contact.is_whatsapp_user else 0,
        "status": contact.status_line,
        "number": f"+{number}",
        "raw_contact_id": contact.row_id,
        "display_name": f"Contact {number[-4:]}",
        "phone_type": 2,
        "phone_label": "mobile",
        "unseen_msg_count": 0,
        "photo_ts": 0,
        "thumb_ts": contact.added_ms // 1000 - 86400,
        "photo_id_timestamp": contact.added_ms + 2000,
        "given_name": f"Given{number[-4:]}",
        "family_name": f"Family{number[-4:]}",
        "wa_name": contact.wa_name,
        "sort_name": f"Contact {number[-4:]}",
    }


def _write_sqlite(path: Path, schema: str, inserts) -> None:
    if path.exists():
        path.unlink()
    conn = sqlite3.connect(path)
    try:
        conn.execute("PRAGMA journal_mode=MEMORY")
        conn.executescript(schema)
        for table, rows in inserts:
            for row in rows:
                columns = list(row)
                sql = (
                    f"INSERT INTO {table} ({', '.join(columns)}) "
                    f"VALUES ({', '.join('?' for _ in columns)})"
                )
                conn.execute(sql, [row[c] for c in columns])
        conn.commit()
    finally:
        conn.close()


def _write_wa_db(path: Path, contact_rows) -> None:
    _write_sqlite(
        path,
        _WA_SCHEMA,
        [("android_metadata", [{"locale": "en_US"}]), ("wa_contacts", contact_rows)],
    )


def _write_msgstore(path: Path, message_rows, chat_rows) -> None:
    _write_sqlite(
        path,
        _MSGSTORE_SCHEMA,
        [("messages", message_rows), ("chat_list", chat_rows)],
    )


def _expected_message(columns: dict) -> MessageRecord:
    key_raw = columns["key_id"]
    try:
        key = parse_message_key(key_raw)
    except Exception:
        key = None
    rr_raw = columns["remote_resource"]
    rr_jid = None
    if rr_raw:
        candidate = classify_jid(rr_raw)
        if candidate.is_parsed:
            rr_jid = candidate
    return MessageRecord(
        id=columns["_id"],
        key_remote_jid=classify_jid(columns["key_remote_jid"]),
        key_id_raw=key_raw,
        key_id=key,
        from_me=bool(columns["key_from_me"]),
        status_code=columns["status"],
        timestamp=columns["timestamp"],
        received_timestamp=columns["received_timestamp"],
        receipt_server_timestamp=columns["receipt_server_timestamp"],
        receipt_device_timestamp=columns["receipt_device_timestamp"],
        send_timestamp=columns["send_timestamp"],
        needs_push=columns["needs_push"],
        recipient_count=columns["recipient_count"],
        remote_resource_raw=rr_raw,
        remote_resource=rr_jid,
        media_wa_type=columns["media_wa_type"],
        data=columns["data"],
        raw_data=columns["raw_data"],
        media_hash=columns["media_hash"],
        media_url=columns["media_url"],
        media_mime_type=columns["media_mime_type"],
        media_size=columns["media_size"],
        media_name=columns["media_name"],
        media_duration=columns["media_duration"],
        latitude=columns["latitude"],
        longitude=columns["longitude"],
        thumb_image=columns["thumb_image"],
    )


def _expected_contact(columns: dict) -> ContactRecord:
    return ContactRecord(
        id=columns["_id"],
        jid=classify_jid(columns["jid"]),
        is_whatsapp_user=bool(columns["is_whatsapp_user"]),
        unseen_msg_count=columns["unseen_msg_count"],
        photo_ts=columns["photo_ts"],
        thumb_ts=columns["thumb_ts"],
        photo_id_timestamp=columns["photo_id_timestamp"],
        wa_name=columns["wa_name"],
        status_line=columns["status"],
        phonebook={c: columns[c] for c in db_reader.PHONEBOOK_COLUMNS},
    )


def _expected_log_event(
    ms: int, body: str, line: str, number: int, source: str
) -> LogEvent:
    kind = EventKind.OTHER
    subject = None
    key = None
    gid = None
    group_subject = None
    patterns = [
        (EventKind.MESSAGE_DELETED, r"^msgstore/delete key=(?P<key>\S+)$"),
        (EventKind.MESSAGE_SENT, r"^msgstore/send key=(?P<key>\S+) to=(?P<jid>\S+)$"),
        (EventKind.MESSAGE_RECEIVED, r"^msgstore/recv key=(?P<key>\S+) from=(?P<jid>\S+)$"),
        (EventKind.SERVER_ACK, r"^msgstore/ack/server key=(?P<key>\S+)$"),
        (EventKind.DEVICE_ACK, r"^msgstore/ack/device key=(?P<key>\S+)$"),
        (EventKind.CONTACT_NOT_IN_DB, r"^contact/sync/missing jid=(?P<jid>\S+)$"),
        (EventKind.CONTACT_QUERY, r"^contact/query/\w+ jid=(?P<jid>\S+)$"),
        (EventKind.AVATAR_DOWNLOADED, r"^contact/avatar/downloaded jid=(?P<jid>\S+)$"),
        (EventKind.CONTACT_BLOCKED, r"^contact/block jid=(?P<jid>\S+)$"),
        (EventKind.CONTACT_UNBLOCKED, r"^contact/unblock/completed$"),
        (EventKind.GROUP_CREATED, r"^group/create gid=(?P<gid>\S+) subject=(?P<subject>.*)$"),
        (EventKind.GROUP_ADD_REQUESTED, r"^group/add/request gid=(?P<gid>\S+) jids=\S+$"),
        (EventKind.GROUP_MEMBER_ADDED, r"^group/add gid=(?P<gid>\S+) jid=(?P<jid>\S+)$"),
        (EventKind.GROUP_MEMBER_LEFT, r"^group/leave gid=(?P<gid>\S+) jid=(?P<jid>\S+)$"),
    ]
    for candidate, pattern in patterns:
        m = re.match(pattern, body)
        if not m:
            continue
        kind = candidate
        groups = m.groupdict()
        if groups.get("jid") and kind is not EventKind.CONTACT_UNBLOCKED:
            subject = classify_jid(groups["jid"])
        if groups.get("key"):
            key = parse_message_key(groups["key"])
        if groups.get("gid"):
            gid = parse_group_id(groups["gid"])
        group_subject = groups.get("subject")
        break
    return LogEvent(
        occurred_at=ms,
        kind=kind,
        subject_jid=subject,
        message_key=key,
        group_id=gid,
        group_subject=group_subject,
        raw_line=line,
        source_file=source,
        line_number=number,
    )


def _avatar_bytes(jid_raw: str) -> bytes:
    return b"\xff\xd8\xff\xe0" + jid_raw.encode("ascii", "replace") + b"\x00" * 8


def _content_sig(columns: dict) -> tuple:
    mtype = columns["media_wa_type"]
    if mtype in (1, 2, 3):
        return ("media", columns["media_mime_type"], columns["media_hash"])
    if mtype == 4:
        return ("vcard", columns["media_name"] or "")
    if mtype == 5:
        return ("geo", f"{columns['latitude']:.6f}", f"{columns['longitude']:.6f}")
    return ("text", columns["data"] or "")


def generate_bundle(script: ScenarioScript, out_dir: str | Path) -> ForgeResult:
    """Play a scenario and write the full artifact tree under ``out_dir``.

    Returns the expected parse result (a CaseBundle equal to what the
    readers must produce from the files) together with the expected
    analytical ground truth.
    """
    if script.owner not in script.actors:
        raise InvalidScript("the owner must be listed among the actors")
    if len(set(script.actors)) != len(script.actors):
        raise InvalidScript("actor numbers must be unique")
    for number in script.actors:
        if not number.isdigit():
            raise InvalidScript(f"actor {number!r} is not a plain phone number")

    sim = _Simulator(script)
    sim.run()

    root = Path(out_dir)
    for rel in (
        layout.DB_DIR,
        layout.AVATARS_DIR,
        layout.LOGS_DIR,
        layout.BACKUPS_DIR,
        layout.PROFILE_PICTURES_DIR,
        layout.MEDIA_SENT_DIR,
    ):
        (root / rel).mkdir(parents=True, exist_ok=True)

    # contacts database
    live_contacts = [c for c in sim.contacts if not c.deleted]
    contact_rows = [_contact_columns(c) for c in live_contacts]
    _write_wa_db(root / layout.WA_DB, contact_rows)

    # chat database (live rows) plus snapshots
    live_messages = [m for m in sim.messages if m.delete_ms is None]
    live_rows = [m.materialize(None) for m in live_messages]
    chat_rows = [
        {"_id": pair[0], "key_remote_jid": jid, "message_table_id": pair[1]}
        for jid, pair in sorted(sim.chat_rows.items(), key=lambda kv: kv[1][0])
    ]
    _write_msgstore(root / layout.MSGSTORE_DB, live_rows, chat_rows)

    expected_backups = []
    with tempfile.TemporaryDirectory() as tmp:
        for name, as_of in sorted(sim.snapshots, key=lambda s: s[0]):
            rows = [
                m.materialize(as_of)
                for m in sim.messages
                if m.insert_ms <= as_of and (m.delete_ms is None or m.delete_ms > as_of)
            ]
            # chat_list as it stood at snapshot time: last message inserted
            # per conversation, for conversations that already existed
            last_at: dict[str, int] = {}
            for m in sim.messages:
                if m.insert_ms <= as_of:
                    last_at[m.jid_raw] = m.id
            snapshot_chats = sorted(
                (
                    {
                        "_id": sim.chat_rows[jid][0],
                        "key_remote_jid": jid,
                        "message_table_id": last,
                    }
                    for jid, last in last_at.items()
                ),
                key=lambda row: row["_id"],
            )
            tmp_db = Path(tmp) / name.replace(".crypt", ".db")
            _write_msgstore(tmp_db, rows, snapshot_chats)
            plain = tmp_db.read_bytes()
            (root / layout.BACKUPS_DIR / name).write_bytes(encrypt_fixture(plain))
            expected_backups.append(
                BackupSet(name=name, messages=tuple(_expected_message(r) for r in rows))
            )

    # log file
    ordered_log = sorted(sim.log, key=lambda item: (item[0], item[1]))
    lines = [
        log_parser.format_line(ms, body, script.tz_offset_minutes)
        for ms, _, body in ordered_log
    ]
    log_path = root / layout.MAIN_LOG
    log_path.write_text("".join(line + "\n" for line in lines), encoding="utf-8")
    expected_events = tuple(
        _expected_log_event(ms, body, line, number, "whatsapp.log")
        for number, ((ms, _, body), line) in enumerate(zip(ordered_log, lines), start=1)
    )

    # avatars, media, settings
    for jid_raw in sim.avatar_jids:
        data = _avatar_bytes(jid_raw)
        (root / layout.AVATARS_DIR / f"{jid_raw}{layout.AVATAR_SUFFIX}").write_bytes(data)
        (root / layout.PROFILE_PICTURES_DIR / f"{jid_raw}{layout.AVATAR_SUFFIX}").write_bytes(data)
    for rel_path, content in sorted(sim.media_files.items()):
        target = root / rel_path
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_bytes(content)
    (root / layout.ME_FILE).write_text(script.owner, encoding="ascii")
    (root / layout.ME_AVATAR).write_bytes(_avatar_bytes(_user_jid(script.owner)))

    # expected parse result
    expected_contacts = tuple(_expected_contact(row) for row in contact_rows)
    expected_messages = tuple(_expected_message(row) for row in live_rows)
    expected_chat_list = tuple(
        ChatListRecord(
            id=row["_id"],
            key_remote_jid=classify_jid(row["key_remote_jid"]),
            message_table_id=row["message_table_id"],
        )
        for row in chat_rows
    )
    predicted = WarningLog()
    db_reader.check_chat_list_consistency(
        expected_chat_list, expected_messages, predicted, "msgstore.db"
    )
    media_inventory = tuple(
        MediaFile(
            path=path,
            size_bytes=len(content),
            sha256=hashlib.sha256(content).hexdigest(),
        )
        for path, content in sorted(sim.media_files.items())
    )
    avatar_inventory = tuple(
        sorted(
            [
                AvatarFile(jid_raw=jid, path=f"{layout.AVATARS_DIR}/{jid}{layout.AVATAR_SUFFIX}")
                for jid in sim.avatar_jids
            ]
            + [
                AvatarFile(
                    jid_raw=jid,
                    path=f"{layout.PROFILE_PICTURES_DIR}/{jid}{layout.AVATAR_SUFFIX}",
                )
                for jid in sim.avatar_jids
            ],
            key=lambda a: (a.jid_raw, a.path),
        )
    )
    bundle = CaseBundle(
        contacts=expected_contacts,
        messages=expected_messages,
        chat_list=expected_chat_list,
        log_events=expected_events,
        registered_number=script.owner,
        own_avatar_present=True,
        media_inventory=media_inventory,
        avatar_inventory=avatar_inventory,
        backups=tuple(expected_backups),
        warnings=predicted.items,
    )
    expected = _expected_analytics(sim, script, expected_backups)
    return ForgeResult(root=root, bundle=bundle, expected=expected)


def _expected_analytics(sim: _Simulator, script: ScenarioScript, backups) -> ExpectedAnalytics:
    backup_keys = set()
    for backup in backups:
        backup_keys.update(record.key_id_raw for record in backup.messages)
    live_keys = {m.key_raw for m in sim.messages if m.delete_ms is None}

    # histories: live rows plus rows only a backup retains
    recovered_pairs = set()
    entries: dict[str, list] = {}

    def add_entry(columns: dict, source: str) -> None:
        from_me = bool(columns["key_from_me"])
        received = columns["received_timestamp"]
        effective = (
            received
            if not from_me and received is not None and received > 0
            else columns["timestamp"]
        )
        line = (
            columns["key_id"],
            "outgoing" if from_me else "incoming",
            effective,
            _content_sig(columns),
            source,
        )
        entries.setdefault(columns["key_remote_jid"], []).append(
            (effective, columns["_id"], line)
        )

    for m in sim.messages:
        if m.delete_ms is None:
            add_entry(m.materialize(None), "live")
    for backup in backups:
        for record in backup.messages:
            pair = (record.key_remote_jid.raw, record.key_id_raw)
            if pair in recovered_pairs:
                continue
            sims = [
                s
                for s in sim.by_key.get(record.key_id_raw, [])
                if s.jid_raw == record.key_remote_jid.raw
            ]
            if not sims or sims[0].delete_ms is None:
                continue
            recovered_pairs.add(pair)
            add_entry(sims[0].materialize(None), "recovered-from-backup")
    histories = {
        jid: tuple(line for _, _, line in sorted(rows, key=lambda r: (r[0], r[1])))
        for jid, rows in sorted(entries.items())
    }

    # partner resolution for live rows
    partners: dict[int, tuple] = {}
    broadcast_rows: dict[str, list[_SimMessage]] = {}
    for m in sim.messages:
        if m.delete_ms is not None:
            continue
        if m.final_status == 6:
            member = m.remote_resource or sim.group_by_gid[m.jid_raw].creator
            partners[m.id] = ("group-control", frozenset({m.jid_raw}), member, False)
        elif m.key_raw.startswith("%~"):
            partners[m.id] = ("broadcast-received", frozenset({m.jid_raw}), m.jid_raw, False)
        elif m.needs_push == 2 or m.jid_raw == BROADCAST_JID:
            broadcast_rows.setdefault(m.key_raw, []).append(m)
        elif m.jid_raw.endswith("@g.us"):
            partners[m.id] = (
                "group",
                frozenset({m.jid_raw}),
                m.remote_resource,
                m.remote_resource is None,
            )
        else:
            partners[m.id] = ("direct", frozenset({m.jid_raw}), None, False)
    broadcasts = []
    for key in sorted(broadcast_rows):
        rows = broadcast_rows[key]
        destinations = set()
        self_present = False
        count = None
        for row in rows:
            if row.jid_raw == BROADCAST_JID:
                self_present = True
            else:
                destinations.add(row.jid_raw)
            if row.remote_resource:
                destinations.update(row.remote_resource.split(","))
            count = row.recipient_count if count is None else count
        destinations = frozenset(destinations)
        broadcasts.append((key, destinations, count, self_present))
        for row in rows:
            partners[row.id] = ("broadcast-sent", destinations, None, True)

    # group timelines (db events unless the control row was deleted)
    timelines = {}
    for gid_raw in sorted(sim.group_by_gid):
        group = sim.group_by_gid[gid_raw]
        events = []
        for at_ms, kind, member, key in group.events:
            row = next(s for s in sim.by_key[key] if s.jid_raw == gid_raw)
            source = "db" if row.delete_ms is None else "log"
            events.append((at_ms, kind, member, source))
        timelines[gid_raw] = (group.name, tuple(events))

    # deleted messages
    deleted = set()
    for key, info in sim.deleted_keys.items():
        if key in live_keys:
            continue
        rows = info["rows"]
        sample = rows[0]
        partner_set: set[str] = set()
        sent_ms = received_ms = None
        state = None
        if sample.final_status == 6:
            pass  # control traffic is logged through group events only
        elif sample.from_me:
            sent_ms = sample.insert_ms
            partner_set = {
                r.jid_raw for r in rows if r.jid_raw != BROADCAST_JID
            }
            if sample.needs_push == 2 and sample.remote_resource:
                partner_set.update(sample.remote_resource.split(","))
            if sample.device_ack_ms is not None:
                state = "delivered"
            elif sample.server_ack_ms is not None:
                state = "on-server"
            else:
                state = "pending-local"
        else:
            received_ms = sample.received_ms
            partner_set = {sample.jid_raw}
            state = "received"
        deleted.add(
            (
                key,
                info["deleted_ms"],
                sent_ms,
                received_ms,
                frozenset(partner_set),
                state,
                key in backup_keys,
            )
        )

    deleted_contacts = frozenset(
        (c.jid_raw, sim.addition_times[c.jid_raw])
        for c in sim.contacts
        if c.deleted and not any(
            o.number == c.number and not o.deleted for o in sim.contacts
        )
    )
    return ExpectedAnalytics(
        histories=histories,
        partners=partners,
        broadcasts=tuple(broadcasts),
        group_timelines=timelines,
        deleted_messages=frozenset(deleted),
        deleted_contacts=deleted_contacts,
        addition_times=dict(sim.addition_times),
    )


# --- script serialization ------------------------------------------------------

_ACTION_NAMES = {
    AddContact: "add_contact",
    BlockContact: "block_contact",
    UnblockAll: "unblock_all",
    SendText: "send_text",
    SendMedia: "send_media",
    SendVCard: "send_vcard",
    SendGeo: "send_geo",
    Broadcast: "broadcast",
    CreateGroup: "create_group",
    AddToGroup: "add_to_group",
    LeaveGroup: "leave_group",
    DeleteMessage: "delete_message",
    DeleteContact: "delete_contact",
    SnapshotBackup: "snapshot_backup",
}
_ACTIONS_BY_NAME = {name: cls for cls, name in _ACTION_NAMES.items()}


def _parse_at(value, tz_offset_minutes: int) -> int:
    if isinstance(value, int):
        return value
    text = str(value).strip()
    m = re.match(
        r"^(\d{4})-(\d{2})-(\d{2})[ T](\d{2}):(\d{2}):(\d{2})(?:\.(\d{1,3}))?"
        r"(?: ?([+-]\d{2}):?(\d{2})|Z)?$",
        text,
    )
    if not m:
        raise InvalidScript(f"unparsable action time {value!r}")
    year, month, day, hour, minute, second = (int(m.group(i)) for i in range(1, 7))
    millis = int((m.group(7) or "0").ljust(3, "0"))
    if m.group(8) is not None:
        offset = int(m.group(8)) * 60 + (int(m.group(9)) if int(m.group(8)) >= 0 else -int(m.group(9)))
    elif text.endswith("Z"):
        offset = 0
    else:
        offset = tz_offset_minutes
    stamp = datetime(year, month, day, hour, minute, second, millis * 1000, tzinfo=timezone.utc)
    return int(stamp.timestamp() * 1000) - offset * 60_000


def script_from_json(source: str | dict) -> ScenarioScript:
    """Load a scenario script from JSON text or an already-parsed dict."""
    spec = json.loads(source) if isinstance(source, str) else source
    version = spec.get("version", SCRIPT_FORMAT_VERSION)
    if version != SCRIPT_FORMAT_VERSION:
        raise InvalidScript(f"unsupported script version {version}")
    try:
        owner = spec["owner"]
        actors = tuple(spec["actors"])
    except KeyError as exc:
        raise InvalidScript(f"script lacks required field {exc}") from exc
    tz_offset = parse_tz_offset(spec.get("tz", "+00:00"))
    actions = []
    for index, entry in enumerate(spec.get("actions", []), start=1):
        entry = dict(entry)
        try:
            name = entry.pop("do")
            at = _parse_at(entry.pop("at"), tz_offset)
        except KeyError as exc:
            raise InvalidScript(f"action #{index} lacks {exc}") from exc
        cls = _ACTIONS_BY_NAME.get(name)
        if cls is None:
            raise InvalidScript(f"action #{index}: unknown action {name!r}")
        if "recipients" in entry:
            entry["recipients"] = tuple(entry["recipients"])
        if "content_hex" in entry:
            entry["content"] = bytes.fromhex(entry.pop("content_hex"))
        if "kind" in entry and cls is SendMedia:
            entry["media_kind"] = entry.pop("kind")
        try:
            actions.append(cls(at_ms=at, **entry))
        except TypeError as exc:
            raise InvalidScript(f"action #{index}: {exc}") from exc
    return ScenarioScript(
        owner=owner,
        actors=actors,
        actions=tuple(actions),
        seed=int(spec.get("seed", 0)),
        tz_offset_minutes=tz_offset,
    )


def script_to_json(script: ScenarioScript) -> str:
    """Serialize a script back to its JSON form (epoch times, version 1)."""
    actions = []
    for action in script.actions:
        entry = {"do": _ACTION_NAMES[type(action)], "at": action.at_ms}
        for key, value in vars(action).items():
            if key == "at_ms" or value is None:
                continue
            if isinstance(value, bytes):
                entry["content_hex"] = value.hex()
            elif isinstance(value, tuple):
                entry[key] = list(value)
            else:
                entry[key] = value
        actions.append(entry)
    return json.dumps(
        {
            "version": SCRIPT_FORMAT_VERSION,
            "owner": script.owner,
            "actors": list(script.actors),
            "tz": format_tz_offset(script.tz_offset_minutes),
            "seed": script.seed,
            "actions": actions,
        },
        indent=2,
        sort_keys=True,
    )


# --- random scenario generation ---------------------------------------------------


def random_script(seed: int, max_actions: int = 200) -> ScenarioScript:
    """A reproducible, valid scenario: same seed, same script."""
    rng = random.Random(seed)

    def number() -> str:
        return "39" + "".join(str(rng.randrange(10)) for _ in range(9))

    owner = number()
    others = []
    while len(others) < rng.randrange(3, 6):
        n = number()
        if n != owner and n not in others:
            others.append(n)
    actors = (owner, *others)

    t = 1370073600000 + rng.randrange(0, 30) * 86_400_000  # around mid-2013
    actions: list = []
    added: set[str] = set()
    removable: set[str] = set()
    blocked: set[str] = set()
    groups: dict[str, set[str]] = {}
    group_seq = 0
    live_msgs: list[tuple[str, int]] = []  # (label, final_event_ms)
    label_seq = 0

    def next_label() -> str:
        nonlocal label_seq
        label_seq += 1
        return f"m{label_seq}"

    n_actions = rng.randrange(max(5, max_actions // 2), max_actions + 1)
    for _ in range(n_actions):
        t += rng.randrange(10_000, 900_000)
        choices: list[tuple[str, int]] = [("send_text", 8)]
        if len(added) < len(others):
            choices.append(("add_contact", 4))
        if added:
            choices.append(("delete_contact", 1))
        unblocked = [n for n in others if n not in blocked]
        if unblocked:
            choices.append(("block_contact", 1))
        if blocked:
            choices.append(("unblock_all", 1))
        if len(groups) < 2:
            choices.append(("create_group", 1))
        if any(set(others) - members for members in groups.values()):
            choices.append(("add_to_group", 2))
        if any(len(members) > 1 for members in groups.values()):
            choices.append(("leave_group", 1))
        deletable = [lab for lab, final in live_msgs if final < t]
        if deletable:
            choices.append(("delete_message", 2))
        choices.extend([("send_media", 2), ("send_vcard", 1), ("send_geo", 1)])
        if len(others) >= 2:
            choices.append(("broadcast", 1))
        choices.append(("snapshot_backup", 1))

        kind = rng.choices([c for c, _ in choices], weights=[w for _, w in choices])[0]
        if kind == "add_contact":
            candidates = sorted(set(others) - added)
            n = rng.choice(candidates)
            actions.append(AddContact(at_ms=t, number=n))
            added.add(n)
        elif kind == "delete_contact":
            n = rng.choice(sorted(added))
            actions.append(DeleteContact(at_ms=t, number=n))
            added.discard(n)
        elif kind == "block_contact":
            n = rng.choice(sorted(unblocked))
            actions.append(BlockContact(at_ms=t, number=n))
            blocked.add(n)
        elif kind == "unblock_all":
            actions.append(UnblockAll(at_ms=t))
            blocked.clear()
        elif kind == "create_group":
            group_seq += 1
            label = f"g{group_seq}"
            actions.append(CreateGroup(at_ms=t, name=f"group {group_seq}", label=label))
            groups[label] = {owner}
        elif kind == "add_to_group":
            label = rng.choice(
                sorted(l for l, members in groups.items() if set(others) - members)
            )
            candidates = sorted(set(others) - groups[label])
            member = rng.choice(candidates)
            actions.append(AddToGroup(at_ms=t, group=label, member=member))
            groups[label].add(member)
        elif kind == "leave_group":
            label = rng.choice(sorted(l for l, members in groups.items() if len(members) > 1))
            member = rng.choice(sorted(groups[label] - {owner}))
            actions.append(LeaveGroup(at_ms=t, group=label, member=member))
            groups[label].discard(member)
        elif kind == "delete_message":
            target = rng.choice(sorted(deletable))
            actions.append(DeleteMessage(at_ms=t, target=target))
            live_msgs = [(lab, fin) for lab, fin in live_msgs if lab != target]
        elif kind == "snapshot_backup":
            actions.append(SnapshotBackup(at_ms=t))
        elif kind == "broadcast":
            if rng.random() < 0.7:
                recipients = tuple(rng.sample(others, rng.randrange(2, min(4, len(others) + 1))))
                actions.append(
                    Broadcast(at_ms=t, sender=owner, recipients=recipients, text=f"bc {t}")
                )
            else:
                sender = rng.choice(others)
                actions.append(
                    Broadcast(at_ms=t, sender=sender, recipients=(owner,), text=f"bc {t}")
                )
        else:
            # some flavor of message exchange, direct or into a group
            group_targets = [
                label for label, members in groups.items() if len(members) > 1
            ]
            use_group = group_targets and rng.random() < 0.3
            label = next_label()
            if use_group:
                to = rng.choice(sorted(group_targets))
                member_pool = sorted(groups[to] - {owner})
                sender = owner if rng.random() < 0.5 else rng.choice(member_pool)
            else:
                other = rng.choice(others)
                sender, to = (owner, other) if rng.random() < 0.5 else (other, owner)
            delivery = rng.choices(_DELIVERY_CHOICES, weights=[1, 2, 7])[0]
            final = t + (
                0
                if delivery == _PENDING
                else SERVER_ACK_DELTA_MS
                if delivery == _SERVER
                else DEVICE_ACK_DELTA_MS
            )
            if kind == "send_media":
                actions.append(
                    SendMedia(
                        at_ms=t,
                        sender=sender,
                        to=to,
                        media_kind=rng.choice(("image", "audio", "video")),
                        label=label,
                        delivery=delivery,
                    )
                )
            elif kind == "send_vcard":
                actions.append(
                    SendVCard(
                        at_ms=t,
                        sender=sender,
                        to=to,
                        display_name=f"Card {label}",
                        label=label,
                        delivery=delivery,
                    )
                )
            elif kind == "send_geo":
                actions.append(
                    SendGeo(
                        at_ms=t,
                        sender=sender,
                        to=to,
                        latitude=round(rng.uniform(-89.0, 89.0), 6),
                        longitude=round(rng.uniform(-179.0, 179.0), 6),
                        label=label,
                        delivery=delivery,
                    )
                )
            else:
                actions.append(
                    SendText(
                        at_ms=t,
                        sender=sender,
                        to=to,
                        text=f"message {label}",
                        label=label,
                        delivery=delivery,
                    )
                )
            live_msgs.append((label, final))
    return ScenarioScript(owner=owner, actors=actors, actions=tuple(actions), seed=seed)
