"""Encrypted Content-Encoding for HTTP: the "aes128gcm" coding of RFC 8188.

Wire format produced and consumed here is byte-exact:

    +-----------+--------+-----------+---------------+
    | salt (16) | rs (4) | idlen (1) | keyid (idlen) |
    +-----------+--------+-----------+---------------+
    | AEAD records, each rs octets (final may be shorter)

Key schedule (SHA-256 extract-then-expand):

    PRK   = HMAC(salt, ikm)
    CEK   = HMAC(PRK, "Content-Encoding: aes128gcm" || 0x00 || 0x01)[:16]
    NONCE = HMAC(PRK, "Content-Encoding: nonce"     || 0x00 || 0x01)[:12]

Record i is sealed with AES-128-GCM under nonce NONCE xor be96(i).  Each
record's plaintext is a chunk of content followed by a padding delimiter
(0x01 for non-final records, 0x02 for the final one) and optional zero
padding.  Bodies are processed whole; streaming is out of scope.
"""

from __future__ import annotations

import hmac
import hashlib
import struct
from dataclasses import dataclass
from typing import Callable, Mapping, Optional, Sequence, Union

from cryptography.exceptions import InvalidTag
from cryptography.hazmat.primitives.ciphers.aead import AESGCM

from .errors import (
    AuthenticationFailure,
    FramingError,
    InvalidRecordSize,
    UnknownKeyId,
)
from .sim import SECOND, SimTime

SALT_LEN = 16
TAG_LEN = 16
MIN_RECORD_SIZE = 18
DEFAULT_RECORD_SIZE = 4096
HEADER_BASE_LEN = 21

CEK_INFO = b"Content-Encoding: aes128gcm\x00"
NONCE_INFO = b"Content-Encoding: nonce\x00"

DELIM_MID = 0x01
DELIM_FINAL = 0x02


def hkdf_extract(salt: bytes, ikm: bytes) -> bytes:
    if not salt:
        salt = bytes(32)
    return hmac.new(salt, ikm, hashlib.sha256).digest()


def hkdf_expand(prk: bytes, info: bytes, length: int) -> bytes:
    out = b""
    block = b""
    counter = 1
    while len(out) < length:
        block = hmac.new(prk, block + info + bytes([counter]), hashlib.sha256).digest()
        out += block
        counter += 1
    return out[:length]


def derive_record_keys(ikm: bytes, salt: bytes) -> tuple[bytes, bytes]:
    """(CEK, nonce base) for one body."""
    prk = hkdf_extract(salt, ikm)
    cek = hkdf_expand(prk, CEK_INFO, 16)
    nonce_base = hkdf_expand(prk, NONCE_INFO, 12)
    return cek, nonce_base


def record_nonce(nonce_base: bytes, seq: int) -> bytes:
    mask = seq.to_bytes(12, "big")
    return bytes(a ^ b for a, b in zip(nonce_base, mask))


@dataclass(frozen=True)
class EceHeader:
    salt: bytes
    record_size: int
    keyid: bytes = b""

    def __post_init__(self):
        if len(self.salt) != SALT_LEN:
            raise FramingError(f"salt must be {SALT_LEN} octets")
        if self.record_size < MIN_RECORD_SIZE:
            raise InvalidRecordSize(f"rs {self.record_size} below minimum {MIN_RECORD_SIZE}")
        if len(self.keyid) > 255:
            raise FramingError("keyid longer than 255 octets")

    def encode(self) -> bytes:
        return self.salt + struct.pack(">IB", self.record_size, len(self.keyid)) + self.keyid

    def __len__(self) -> int:
        return HEADER_BASE_LEN + len(self.keyid)

    @classmethod
    def parse(cls, data: bytes) -> tuple["EceHeader", int]:
        if len(data) < HEADER_BASE_LEN:
            raise FramingError("body shorter than fixed header")
        salt = data[:SALT_LEN]
        rs, idlen = struct.unpack(">IB", data[SALT_LEN:HEADER_BASE_LEN])
        end = HEADER_BASE_LEN + idlen
        if len(data) < end:
            raise FramingError("truncated keyid")
        return cls(salt=salt, record_size=rs, keyid=data[HEADER_BASE_LEN:end]), end


@dataclass(frozen=True)
class EceBody:
    header: EceHeader
    records: tuple

    def encode(self) -> bytes:
        return self.header.encode() + b"".join(self.records)

    def __len__(self) -> int:
        return len(self.header) + sum(len(r) for r in self.records)

    @classmethod
    def parse(cls, data: bytes) -> "EceBody":
        header, offset = EceHeader.parse(data)
        rs = header.record_size
        blob = data[offset:]
        if not blob:
            raise FramingError("body carries no records")
        records = []
        for start in range(0, len(blob), rs):
            rec = blob[start:start + rs]
            if len(rec) < TAG_LEN + 1:
                raise FramingError("record shorter than delimiter plus tag")
            records.append(rec)
        return cls(header=header, records=tuple(records))


@dataclass(frozen=True)
class RawKeyMaterial:
    """Codec-level key: any-length input keying material plus its identifier."""

    keyid: bytes
    ikm: bytes


@dataclass(frozen=True)
class ContentKey:
    """Input keying material shared by the origin and authorized terminals.

    The architecture distributes exactly 16 octets per epoch; the codec
    itself accepts any RawKeyMaterial.
    """

    keyid: bytes
    ikm: bytes
    epoch: int = 0
    valid_from: SimTime = 0
    valid_to: SimTime = 0

    def __post_init__(self):
        if len(self.ikm) != 16:
            raise FramingError("content key ikm must be 16 octets")


def _chunk_plaintext(plaintext: bytes, rs: int,
                     record_padding: Sequence[int]) -> list[tuple[bytes, int]]:
    """Split content into (data, pad) pairs, one per record.

    Without an explicit padding plan, every non-final record carries exactly
    rs-17 octets and the final record carries the remainder, so the record
    count is always floor(len/(rs-17)) + 1 and a final record exists even for
    empty content.  With a plan, record i yields pad octets of its capacity
    to zero padding, and the final record may be exactly full.
    """
    data_per_record = rs - TAG_LEN - 1
    if not record_padding:
        full, _ = divmod(len(plaintext), data_per_record)
        chunks = [plaintext[i * data_per_record:(i + 1) * data_per_record]
                  for i in range(full)]
        chunks.append(plaintext[full * data_per_record:])
        return [(c, 0) for c in chunks]

    out = []
    offset = 0
    i = 0
    while True:
        pad = record_padding[i] if i < len(record_padding) else 0
        cap = data_per_record - pad
        if cap < 0:
            raise InvalidRecordSize("padding exceeds record capacity")
        remaining = len(plaintext) - offset
        if remaining <= cap:
            out.append((plaintext[offset:], pad))
            return out
        out.append((plaintext[offset:offset + cap], pad))
        offset += cap
        i += 1


def ece_encrypt(plaintext: bytes, key: "KeyLike", rs: int = DEFAULT_RECORD_SIZE,
                salt: bytes = b"", *, record_padding: Sequence[int] = ()) -> EceBody:
    """Seal plaintext into an aes128gcm body under the key's ikm.

    The salt must be 16 octets and should be fresh per body; reusing
    (salt, key) on equal plaintexts yields equal bodies, which is exactly the
    distinguishability caveat of shared-key encodings.
    """
    if rs < MIN_RECORD_SIZE:
        raise InvalidRecordSize(f"rs {rs} below minimum {MIN_RECORD_SIZE}")
    header = EceHeader(salt=salt, record_size=rs, keyid=key.keyid)
    cek, nonce_base = derive_record_keys(key.ikm, salt)
    aead = AESGCM(cek)
    chunks = _chunk_plaintext(plaintext, rs, record_padding)
    records = []
    last = len(chunks) - 1
    for i, (data, pad) in enumerate(chunks):
        delim = DELIM_FINAL if i == last else DELIM_MID
        record_plain = data + bytes([delim]) + bytes(pad)
        records.append(aead.encrypt(record_nonce(nonce_base, i), record_plain, None))
    return EceBody(header=header, records=tuple(records))


KeyLike = Union[ContentKey, RawKeyMaterial]
KeyLookup = Union[KeyLike, Mapping[bytes, KeyLike], Callable[[bytes], Optional[KeyLike]]]


def _resolve_key(lookup: KeyLookup, keyid: bytes) -> KeyLike:
    if hasattr(lookup, "ikm"):
        if lookup.keyid != keyid:
            raise UnknownKeyId(f"body keyid {keyid!r} does not match {lookup.keyid!r}")
        return lookup
    if isinstance(lookup, Mapping):
        key = lookup.get(keyid)
    else:
        key = lookup(keyid)
    if key is None:
        raise UnknownKeyId(f"no key for keyid {keyid!r}")
    return key


def ece_decrypt(body: Union[EceBody, bytes], lookup: KeyLookup) -> bytes:
    """Open an aes128gcm body, validating framing strictly.

    Every record must authenticate; after stripping trailing zero padding,
    non-final records must end with 0x01 and the final record with 0x02.  A
    non-final record shorter than rs, an all-zero record, or a missing final
    delimiter is a FramingError.
    """
    if isinstance(body, (bytes, bytearray, memoryview)):
        body = EceBody.parse(bytes(body))
    if not body.records:
        raise FramingError("body carries no records")
    header = body.header
    key = _resolve_key(lookup, header.keyid)
    cek, nonce_base = derive_record_keys(key.ikm, header.salt)
    aead = AESGCM(cek)
    out = []
    last = len(body.records) - 1
    for i, record in enumerate(body.records):
        if i != last and len(record) != header.record_size:
            raise FramingError("non-final record is not exactly rs octets")
        if len(record) > header.record_size:
            raise FramingError("record longer than rs octets")
        if len(record) < TAG_LEN + 1:
            raise FramingError("record shorter than delimiter plus tag")
        try:
            plain = aead.decrypt(record_nonce(nonce_base, i), bytes(record), None)
        except InvalidTag as exc:
            raise AuthenticationFailure(f"record {i} failed AEAD verification") from exc
        stripped = plain.rstrip(b"\x00")
        if not stripped:
            raise FramingError(f"record {i} contains no padding delimiter")
        delim = stripped[-1]
        expected = DELIM_FINAL if i == last else DELIM_MID
        if delim != expected:
            raise FramingError(
                f"record {i} delimiter 0x{delim:02x}, expected 0x{expected:02x}")
        out.append(stripped[:-1])
    return b"".join(out)


def encrypted_length(plaintext_len: int, rs: int, keyid_len: int = 0) -> int:
    """Wire length of a default-chunked body: header + records."""
    n_records = plaintext_len // (rs - TAG_LEN - 1) + 1
    return HEADER_BASE_LEN + keyid_len + plaintext_len + n_records * (TAG_LEN + 1)


CONTENT_KEY_INFO = b"content key epoch\x00"


def rotate_content_key(master: bytes, epoch: int, *,
                       epoch_len: SimTime = 3600 * SECOND) -> ContentKey:
    """Derive the shared content key for an epoch from the long-lived secret.

    Every holder of the master secret derives an identical key; the keyid
    encodes the epoch so bodies name the key that sealed them.
    """
    prk = hkdf_extract(b"", master)
    ikm = hkdf_expand(prk, CONTENT_KEY_INFO + struct.pack(">Q", epoch), 16)
    return ContentKey(
        keyid=b"epoch-%d" % epoch,
        ikm=ikm,
        epoch=epoch,
        valid_from=epoch * epoch_len,
        valid_to=(epoch + 1) * epoch_len,
    )
