"""Binary checkpoints holding student, teacher, head and probe weights.

Layout (little-endian)::

    b"TSMC" | u32 version | u64 payload_len | payload | u32 crc32(payload)

The payload is a sequence of sections. Each section is a length-prefixed
name followed by ``u32 n_arrays`` and that many entries of
``name | u32 ndim | u32[ndim] shape | float64[prod(shape)]``. A final
``meta`` section stores a JSON blob instead of arrays.
"""

from __future__ import annotations

import json
import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import BadMagicError, FormatError, SizeMismatchError
from .encoder import EncoderParams
from .recon import ReconParams

MAGIC = b"TSMC"
VERSION = 1
ARRAY_SECTIONS = ("student", "teacher", "recon", "classifier")
_HEAD = struct.Struct("<4sIQ")
_U32 = struct.Struct("<I")
_MAX_NDIM = 8


class VersionError(FormatError):
    pass


class ChecksumError(FormatError):
    pass


@dataclass
class Checkpoint:
    student: EncoderParams
    teacher: EncoderParams
    recon: ReconParams
    classifier: dict[str, np.ndarray] = field(default_factory=dict)
    meta: dict = field(default_factory=dict)


def _name(s: str) -> bytes:
    raw = s.encode("utf-8")
    return _U32.pack(len(raw)) + raw


def _pack_arrays(arrays: dict[str, np.ndarray]) -> bytes:
    parts = [_U32.pack(len(arrays))]
    for key, arr in arrays.items():
        arr = np.ascontiguousarray(arr, dtype="<f8")
        parts.append(_name(key))
        parts.append(_U32.pack(arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(arr.tobytes())
    return b"".join(parts)


def to_bytes(ckpt: Checkpoint) -> bytes:
    sections = {
        "student": ckpt.student.state_dict(),
        "teacher": ckpt.teacher.state_dict(),
        "recon": ckpt.recon.state_dict(),
        "classifier": ckpt.classifier,
    }
    meta = dict(ckpt.meta, n_heads=ckpt.student.n_heads)
    payload = b"".join(_name(k) + _pack_arrays(v) for k, v in sections.items())
    blob = json.dumps(meta, sort_keys=True).encode("utf-8")
    payload += _name("meta") + _U32.pack(len(blob)) + blob
    return _HEAD.pack(MAGIC, VERSION, len(payload)) + payload + _U32.pack(zlib.crc32(payload))


def save_checkpoint(ckpt: Checkpoint, path) -> None:
    Path(path).write_bytes(to_bytes(ckpt))


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, n: int) -> bytes:
        if n < 0 or self.pos + n > len(self.buf):
            raise FormatError(f"section overruns payload at offset {self.pos}")
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def u32(self) -> int:
        return _U32.unpack(self.take(4))[0]

    def name(self) -> str:
        try:
            return self.take(self.u32()).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise FormatError(f"undecodable name: {exc}") from None

    def arrays(self) -> dict[str, np.ndarray]:
        out = {}
        for _ in range(self.u32()):
            key = self.name()
            ndim = self.u32()
            if ndim > _MAX_NDIM:
                raise FormatError(f"{key}: implausible ndim {ndim}")
            shape = struct.unpack(f"<{ndim}I", self.take(4 * ndim))
            count = int(np.prod(shape, dtype=np.int64))
            out[key] = np.frombuffer(self.take(8 * count), dtype="<f8").reshape(shape).astype(np.float64)
        return out


def from_bytes(buf: bytes) -> Checkpoint:
    if len(buf) < _HEAD.size:
        raise SizeMismatchError(f"expected at least {_HEAD.size} header bytes, got {len(buf)}")
    magic, version, n = _HEAD.unpack_from(buf)
    if magic != MAGIC:
        raise BadMagicError(f"bad magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise VersionError(f"unsupported checkpoint version {version} (this build reads {VERSION})")
    expected = _HEAD.size + n + 4
    if len(buf) != expected:
        raise SizeMismatchError(f"expected {expected} bytes from header, got {len(buf)}")
    payload = buf[_HEAD.size:_HEAD.size + n]
    stored = _U32.unpack_from(buf, _HEAD.size + n)[0]
    if zlib.crc32(payload) != stored:
        raise ChecksumError("payload checksum mismatch")

    r = _Reader(payload)
    sections: dict[str, dict] = {}
    for want in ARRAY_SECTIONS:
        got = r.name()
        if got != want:
            raise FormatError(f"expected section {want!r}, found {got!r}")
        sections[want] = r.arrays()
    if r.name() != "meta":
        raise FormatError("missing meta section")
    try:
        meta = json.loads(r.take(r.u32()).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"bad meta blob: {exc}") from None
    if r.pos != len(payload):
        raise FormatError(f"{len(payload) - r.pos} trailing payload bytes")
    try:
        n_heads = int(meta["n_heads"])
        student = EncoderParams.from_state_dict(sections["student"], n_heads=n_heads)
        teacher = EncoderParams.from_state_dict(sections["teacher"], n_heads=n_heads)
        recon = ReconParams.from_state_dict(sections["recon"])
    except (KeyError, ValueError, TypeError) as exc:
        raise FormatError(f"inconsistent parameter sections: {exc}") from None
    return Checkpoint(student, teacher, recon, sections["classifier"], meta)


def load_checkpoint(path) -> Checkpoint:
    return from_bytes(Path(path).read_bytes())
