"""Identifier grammars and epoch decoding."""

import random
from datetime import datetime, timezone

import pytest

from wadroid.errors import MalformedGroupId, MalformedJid, MalformedKey
from wadroid.model import (
    EpochUnit,
    JidKind,
    WarningLog,
    classify_jid,
    decode_epoch,
    format_tz_offset,
    parse_group_id,
    parse_jid,
    parse_message_key,
    parse_tz_offset,
    render_epoch_ms,
)


def test_user_jid():
    jid = parse_jid("39348xxxxxxx@s.whatsapp.net")
    assert jid.kind is JidKind.USER
    assert jid.phone_number == "39348xxxxxxx"
    assert jid.rebuild() == "39348xxxxxxx@s.whatsapp.net"


def test_broadcast_jid():
    jid = parse_jid("broadcast")
    assert jid.kind is JidKind.BROADCAST
    assert jid.phone_number == ""


def test_empty_jid_is_malformed():
    with pytest.raises(MalformedJid):
        parse_jid("")


@pytest.mark.parametrize("raw", ["hello", "@s.whatsapp.net", "x39@s.whatsapp.net", "39@g.us"])
def test_malformed_jids(raw):
    with pytest.raises(MalformedJid):
        parse_jid(raw)


def test_classify_jid_keeps_malformed_records():
    warn = WarningLog()
    jid = classify_jid("not-a-jid", warn, "wa.db:wa_contacts#1")
    assert jid.kind is JidKind.OTHER
    assert jid.raw == "not-a-jid"
    assert len(warn) == 1


def test_group_id():
    gid = parse_group_id("3933xxxxxxx-1363078943@g.us")
    assert gid.creator.phone_number == "3933xxxxxxx"
    assert gid.creation_time == 1363078943
    when = decode_epoch(gid.creation_time, EpochUnit.SECONDS)
    assert when == datetime(2013, 3, 12, 9, 2, 23, tzinfo=timezone.utc)
    assert gid.plausible_creation()


def test_group_id_epoch_zero():
    gid = parse_group_id("1-0@g.us")
    assert gid.creator.phone_number == "1"
    assert gid.creation_time == 0
    assert decode_epoch(0, EpochUnit.SECONDS) == datetime(1970, 1, 1, tzinfo=timezone.utc)
    assert not gid.plausible_creation()


def test_group_id_missing_epoch():
    with pytest.raises(MalformedGroupId):
        parse_group_id("abc@g.us")


def test_jid_parse_delegates_group():
    jid = parse_jid("3933xxxxxxx-1363078943@g.us")
    assert jid.kind is JidKind.GROUP
    assert jid.phone_number == "3933xxxxxxx"
    with pytest.raises(MalformedJid):
        parse_jid("abc@g.us")


def test_message_key():
    key = parse_message_key("1363253484-1")
    assert (key.session_start, key.sequence, key.broadcast_received) == (1363253484, 1, False)


def test_message_key_broadcast_prefix():
    plain = parse_message_key("1363253484-1")
    prefixed = parse_message_key("%~1363253484-1")
    assert prefixed.broadcast_received
    assert (prefixed.session_start, prefixed.sequence) == (plain.session_start, plain.sequence)


@pytest.mark.parametrize("raw", ["x-y", "", "123", "12-34-56x", "%~x-1"])
def test_malformed_keys(raw):
    with pytest.raises(MalformedKey):
        parse_message_key(raw)


def test_decode_epoch_millis_reference():
    when = decode_epoch(1381932937884, EpochUnit.MILLIS)
    assert when == datetime(2013, 10, 16, 14, 15, 37, 884000, tzinfo=timezone.utc)


def test_decode_epoch_absent_sentinel():
    assert decode_epoch(-1, EpochUnit.MILLIS) is None
    assert decode_epoch(None, EpochUnit.SECONDS) is None


def test_decode_epoch_negative_warns():
    warn = WarningLog()
    assert decode_epoch(-5, EpochUnit.SECONDS, warn, "here") is None
    assert len(warn) == 1


def test_render_epoch_offsets():
    assert render_epoch_ms(1381932937884, 0) == "2013-10-16 14:15:37.884 +00:00"
    assert render_epoch_ms(1381932937884, 120) == "2013-10-16 16:15:37.884 +02:00"
    assert render_epoch_ms(1381932937884, -330) == "2013-10-16 08:45:37.884 -05:30"
    assert render_epoch_ms(None, 0) is None


def test_tz_offset_parsing():
    assert parse_tz_offset("+01:00") == 60
    assert parse_tz_offset("-05:30") == -330
    assert parse_tz_offset("Z") == 0
    assert format_tz_offset(-330) == "-05:30"
    with pytest.raises(ValueError):
        parse_tz_offset("1:00")


def test_decode_epoch_monotone():
    rng = random.Random(7)
    for unit in (EpochUnit.SECONDS, EpochUnit.MILLIS):
        values = sorted(rng.randrange(0, 4_000_000_000) for _ in range(500))
        decoded = [decode_epoch(v, unit) for v in values]
        for (v1, d1), (v2, d2) in zip(zip(values, decoded), zip(values[1:], decoded[1:])):
            if v1 == v2:
                continue
            assert d1 < d2


def _random_user(rng):
    return "".join(rng.choice("0123456789") for _ in range(rng.randrange(8, 14)))


def test_roundtrip_properties():
    rng = random.Random(20130312)
    for _ in range(1000):
        phone = _random_user(rng)
        raw = f"{phone}@s.whatsapp.net"
        assert parse_jid(raw).rebuild() == raw

        epoch = rng.randrange(1230768000, 1999999999)
        gid_raw = f"{phone}-{epoch}@g.us"
        gid = parse_group_id(gid_raw)
        assert gid.rebuild() == gid_raw
        assert parse_jid(gid_raw).kind is JidKind.GROUP

        prefix = "%~" if rng.random() < 0.5 else ""
        key_raw = f"{prefix}{rng.randrange(1, 2_000_000_000)}-{rng.randrange(0, 100000)}"
        key = parse_message_key(key_raw)
        assert key.rebuild() == key_raw
        assert key.broadcast_received == bool(prefix)
