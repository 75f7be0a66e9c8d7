"""Backup encryption layer: golden vectors, inverses, failure modes."""

import random

import pytest

from wadroid.backup_crypto import (
    DEFAULT_BACKUP_KEY,
    SQLITE_MAGIC,
    decrypt_backup,
    decrypt_bytes,
    encrypt_fixture,
)
from wadroid.errors import BadBlockLength, MagicMismatch, UnreadableFile

# Pinned with an independent AES implementation (FIPS-197 reference
# rounds, validated against the App. C.2 vector) over the fixed key.
GOLDEN_ZERO_BLOCK = bytes.fromhex("8d1bebc51923f0f4f21a278c2a8d4d92")
GOLDEN_MAGIC_BLOCK = bytes.fromhex("49ef23aefff9750ec6cd5ca0a59f2d35")


def test_encrypt_zero_block_golden():
    assert encrypt_fixture(bytes(16)) == GOLDEN_ZERO_BLOCK


def test_encrypt_magic_block_golden():
    assert encrypt_fixture(SQLITE_MAGIC) == GOLDEN_MAGIC_BLOCK


def test_encrypt_is_deterministic():
    data = bytes(range(16)) * 4
    assert encrypt_fixture(data) == encrypt_fixture(data)


def test_encrypt_empty_is_empty():
    assert encrypt_fixture(b"") == b""


def test_encrypt_rejects_partial_block():
    with pytest.raises(BadBlockLength):
        encrypt_fixture(b"x" * 15)


def test_roundtrip_random_inputs():
    rng = random.Random(42)
    for _ in range(200):
        plaintext = SQLITE_MAGIC + rng.randbytes(16 * rng.randrange(0, 16))
        assert decrypt_bytes(encrypt_fixture(plaintext)) == plaintext


def test_decrypt_rejects_bad_length():
    with pytest.raises(BadBlockLength):
        decrypt_bytes(b"x" * 17)
    with pytest.raises(BadBlockLength):
        decrypt_bytes(b"")


def test_decrypt_random_data_fails_magic():
    rng = random.Random(7)
    for _ in range(50):
        with pytest.raises(MagicMismatch):
            decrypt_bytes(rng.randbytes(32))


def test_decrypt_wrong_key_fails_magic():
    ciphertext = encrypt_fixture(SQLITE_MAGIC + bytes(16))
    wrong = bytes(24)
    with pytest.raises(MagicMismatch):
        decrypt_bytes(ciphertext, wrong)


def test_decrypt_never_returns_unvalidated_plaintext():
    # valid length, garbage content: must raise, not return bytes
    with pytest.raises(MagicMismatch):
        decrypt_bytes(bytes(16))


def test_decrypt_backup_file(tmp_path):
    plaintext = SQLITE_MAGIC + bytes(48)
    path = tmp_path / "msgstore.db.crypt"
    path.write_bytes(encrypt_fixture(plaintext))
    assert decrypt_backup(path) == plaintext


def test_decrypt_backup_missing_file(tmp_path):
    with pytest.raises(UnreadableFile):
        decrypt_backup(tmp_path / "nope.crypt")


def test_key_length_validation():
    with pytest.raises(ValueError):
        encrypt_fixture(bytes(16), key=b"short")
    assert len(DEFAULT_BACKUP_KEY) == 24
