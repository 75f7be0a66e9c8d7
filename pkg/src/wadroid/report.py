"""Report document assembly and serialization.

JSON is the canonical output: stable key order, every timestamp emitted
both as the raw epoch integer and as a rendered string in the requested
display offset, so the same bundle always serializes to the same bytes
(modulo the tool version field). The timeline CSV export is a
convenience view for humans.
"""

from __future__ import annotations

import csv
import io
import json

from . import __version__
from .correlator import (
    Analysis,
    GeoContent,
    ContactCardContent,
    MediaContent,
    TextContent,
    analyze,
)
from .model import CaseBundle, render_epoch_ms


def _ts(value_ms: int | None, tz: int) -> dict | None:
    if value_ms is None or value_ms < 0:
        return None
    return {"epoch_ms": value_ms, "local": render_epoch_ms(value_ms, tz)}


def _content_json(content) -> dict:
    if isinstance(content, TextContent):
        return {"type": "text", "text": content.text}
    if isinstance(content, MediaContent):
        return {
            "type": content.kind_name,
            "mime": content.mime,
            "name": content.name,
            "size": content.size,
            "duration_s": content.duration,
            "sha256_b64": content.hash_b64,
            "server_filename": content.server_filename,
            "has_thumbnail": content.thumbnail is not None,
        }
    if isinstance(content, ContactCardContent):
        return {
            "type": "contact_card",
            "display_name": content.display_name,
            "vcard": content.vcard,
        }
    if isinstance(content, GeoContent):
        return {
            "type": "geo",
            "latitude": content.latitude,
            "longitude": content.longitude,
            "has_map_thumbnail": content.map_thumbnail is not None,
        }
    return {"type": "unknown"}


def _history_entry_json(entry, tz: int) -> dict:
    record = entry.record
    state = entry.state
    return {
        "record_id": record.id,
        "key": record.key_id_raw,
        "direction": entry.direction,
        "effective": _ts(entry.effective_time, tz),
        "state": state.label(),
        "sent": _ts(state.sent_at, tz),
        "server_ack": _ts(state.server_ack_at, tz),
        "device_ack": _ts(state.device_ack_at, tz),
        "received": _ts(state.received_at, tz),
        "content": _content_json(entry.content),
        "source": entry.source,
    }


def _finding_json(finding, tz: int) -> dict:
    return {
        "category": finding.category.value,
        "subject": finding.subject,
        "summary": finding.summary,
        "confidence_note": finding.confidence_note,
        "evidence": list(finding.evidence),
        "payload": finding.payload,
        "at": _ts(finding.at_ms, tz),
    }


def _timeline_json(timeline, tz: int) -> dict:
    last = timeline.events[-1].at_ms if timeline.events else None
    return {
        "group": timeline.group_raw,
        "name": timeline.group_name,
        "creator": timeline.group.creator.raw if timeline.group else None,
        "created": _ts(timeline.created_at_ms(), tz),
        "events": [
            {
                "at": _ts(event.at_ms, tz),
                "kind": event.kind.value,
                "member": event.member_raw,
                "source": event.source,
                "evidence": event.evidence,
            }
            for event in timeline.events
        ],
        "final_members": sorted(timeline.membership_at(last)) if last is not None else [],
    }


def bundle_summary(bundle: CaseBundle, tz: int = 0) -> dict:
    first, last = bundle.log_coverage()
    return {
        "contacts": len(bundle.contacts),
        "messages": len(bundle.messages),
        "conversations": len(bundle.chat_list),
        "log_events": len(bundle.log_events),
        "media_files": len(bundle.media_inventory),
        "avatar_files": len(bundle.avatar_inventory),
        "backups": [b.name for b in bundle.backups],
        "registered_number": bundle.registered_number,
        "own_avatar_present": bundle.own_avatar_present,
        "log_coverage": {"first": _ts(first, tz), "last": _ts(last, tz)},
    }


def build_report(
    bundle: CaseBundle,
    tz_offset_minutes: int = 0,
    sim_number: str | None = None,
    tool_version: str = __version__,
    analysis: Analysis | None = None,
) -> dict:
    """Run the full analysis and assemble the canonical report document."""
    analysis = analysis if analysis is not None else analyze(bundle, sim_number)
    tz = tz_offset_minutes
    warnings = [
        {"source": w.source, "message": w.message}
        for w in (*bundle.warnings, *analysis.warnings)
    ]
    return {
        "tool_version": tool_version,
        "display_offset_minutes": tz,
        "bundle_summary": bundle_summary(bundle, tz),
        "conversations": [
            {
                "partner": jid_raw,
                "messages": [_history_entry_json(e, tz) for e in entries],
            }
            for jid_raw, entries in analysis.histories.items()
        ],
        "group_timelines": [_timeline_json(t, tz) for t in analysis.timelines],
        "broadcasts": [
            {
                "key": b.key_raw,
                "destinations": sorted(b.destinations),
                "recipient_count": b.recipient_count,
                "self_record_id": b.self_record_id,
                "record_ids": list(b.record_ids),
                "count_mismatch": b.count_mismatch,
            }
            for b in analysis.partners.broadcasts
        ],
        "findings": [_finding_json(f, tz) for f in analysis.findings],
        "warnings": warnings,
        "clock_caveat": "all timestamps come from the local device clock and are "
        "not comparable across devices as ground truth",
    }


def render_report_json(report: dict) -> str:
    return json.dumps(report, indent=2, sort_keys=True, ensure_ascii=False) + "\n"


TIMELINE_COLUMNS = ("scope", "subject", "epoch_ms", "local_time", "event", "participant", "detail")


def timeline_rows(analysis: Analysis, tz: int = 0) -> list[tuple]:
    """Flat chronology rows (groups and chats) for the CSV export."""
    rows = []
    for timeline in analysis.timelines:
        for event in timeline.events:
            rows.append(
                (
                    "group",
                    timeline.group_raw,
                    event.at_ms if event.at_ms is not None else "",
                    render_epoch_ms(event.at_ms, tz) or "",
                    event.kind.value,
                    event.member_raw or "",
                    f"source={event.source}",
                )
            )
    for jid_raw, entries in analysis.histories.items():
        for entry in entries:
            content = _content_json(entry.content)
            detail = content["type"]
            if content["type"] == "text" and content["text"]:
                detail += ":" + content["text"][:40]
            rows.append(
                (
                    "chat",
                    jid_raw,
                    entry.effective_time if entry.effective_time is not None else "",
                    render_epoch_ms(entry.effective_time, tz) or "",
                    f"message-{entry.direction}",
                    entry.record.key_id_raw,
                    detail,
                )
            )
    rows.sort(key=lambda r: (r[2] == "", r[2] if r[2] != "" else 0, r[0], r[1], r[4], r[5]))
    return rows


def render_timeline_csv(analysis: Analysis, tz: int = 0) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(TIMELINE_COLUMNS)
    writer.writerows(timeline_rows(analysis, tz))
    return buffer.getvalue()
