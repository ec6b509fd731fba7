"""Time-tag stream container and file formats.

Binary layout (little-endian): magic ``ADTG`` (4 bytes), format version u16,
config hash (32 bytes), tag count u64, then one record per tag of
``trial_id u64, trial_kind u8, channel u8, time_ns u64``. The text format is
``#``-prefixed header lines followed by ``trial_id,kind,channel,time_ns``
per tag.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import (
    CHANNEL_ANTISTOKES,
    CHANNEL_STOKES,
    KIND_CONDITIONAL,
    KIND_UNCONDITIONAL,
)
from .errors import TagFormatError, TagVersionError

MAGIC = b"ADTG"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sH32sQ")

TAG_DTYPE = np.dtype(
    [
        ("trial_id", "<u8"),
        ("kind", "u1"),
        ("channel", "u1"),
        ("time_ns", "<u8"),
    ]
)

_KIND_NAMES = {KIND_CONDITIONAL: "conditional", KIND_UNCONDITIONAL: "unconditional"}
_CHANNEL_NAMES = {CHANNEL_STOKES: "stokes", CHANNEL_ANTISTOKES: "antistokes"}


@dataclass(frozen=True)
class TimeTag:
    """One detection event, time in ns from the trial origin.

    Stokes times count from the write pulse, anti-Stokes times from the read
    pulse.
    """

    trial_id: int
    trial_kind: int
    channel: int
    time_ns: int


@dataclass
class TagStream:
    """Ordered detection events plus the hash of the generating config."""

    config_hash: bytes
    tags: np.ndarray

    def __post_init__(self):
        self.tags = np.asarray(self.tags, dtype=TAG_DTYPE)
        if len(self.config_hash) != 32:
            raise ValueError("config_hash must be 32 bytes")

    def __len__(self):
        return len(self.tags)

    def __eq__(self, other):
        return (
            isinstance(other, TagStream)
            and self.config_hash == other.config_hash
            and np.array_equal(self.tags, other.tags)
        )

    def sort(self):
        order = np.lexsort(
            (self.tags["time_ns"], self.tags["channel"], self.tags["trial_id"])
        )
        self.tags = self.tags[order]
        return self

    def is_ordered(self) -> bool:
        t = self.tags
        if len(t) < 2:
            return True
        tid, ch, tm = t["trial_id"], t["channel"], t["time_ns"]
        ok = (tid[:-1] < tid[1:]) | (
            (tid[:-1] == tid[1:])
            & (
                (ch[:-1] < ch[1:])
                | ((ch[:-1] == ch[1:]) & (tm[:-1] <= tm[1:]))
            )
        )
        return bool(ok.all())

    def as_timetags(self):
        return [
            TimeTag(int(r["trial_id"]), int(r["kind"]), int(r["channel"]),
                    int(r["time_ns"]))
            for r in self.tags
        ]


def empty_tags(n: int = 0) -> np.ndarray:
    return np.zeros(n, dtype=TAG_DTYPE)


def write_tags(stream: TagStream, path, fmt: str = "binary") -> None:
    if fmt == "binary":
        _write_binary(stream, path)
    elif fmt == "text":
        _write_text(stream, path)
    else:
        raise ValueError(f"unknown tag format {fmt!r}")


def read_tags(path) -> TagStream:
    """Read a tag file, auto-detecting binary vs text by the magic bytes."""
    with open(path, "rb") as fh:
        head = fh.read(4)
    if head[:1] == b"#":
        return _read_text(path)
    return _read_binary(path)


def _write_binary(stream: TagStream, path) -> None:
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, FORMAT_VERSION, stream.config_hash,
                              len(stream.tags)))
        fh.write(stream.tags.tobytes())


def _read_binary(path) -> TagStream:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise TagFormatError("file shorter than header", offset=len(data))
    magic, version, chash, count = _HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise TagVersionError(f"bad magic {magic!r}, expected {MAGIC!r}", offset=0)
    if version != FORMAT_VERSION:
        raise TagVersionError(
            f"unsupported format version {version}, expected {FORMAT_VERSION}",
            offset=4,
        )
    body = data[_HEADER.size:]
    expected = count * TAG_DTYPE.itemsize
    if len(body) != expected:
        raise TagFormatError(
            f"expected {expected} record bytes for {count} tags, got {len(body)}",
            offset=_HEADER.size + min(len(body), expected),
        )
    tags = np.frombuffer(body, dtype=TAG_DTYPE).copy()
    return TagStream(config_hash=chash, tags=tags)


def _write_text(stream: TagStream, path) -> None:
    lines = [
        "# dlczsim tag stream",
        f"# version: {FORMAT_VERSION}",
        f"# config_hash: {stream.config_hash.hex()}",
        f"# tags: {len(stream.tags)}",
        "# columns: trial_id,kind,channel,time_ns",
    ]
    for r in stream.tags:
        lines.append(f"{r['trial_id']},{r['kind']},{r['channel']},{r['time_ns']}")
    Path(path).write_text("\n".join(lines) + "\n")


def _read_text(path) -> TagStream:
    chash = None
    version = None
    count = None
    rows = []
    offset = 0
    with open(path, "rb") as fh:
        for raw in fh:
            line = raw.decode("ascii", errors="replace").strip()
            if line.startswith("#"):
                body = line[1:].strip()
                if body.startswith("version:"):
                    version = int(body.split(":", 1)[1])
                elif body.startswith("config_hash:"):
                    chash = bytes.fromhex(body.split(":", 1)[1].strip())
                elif body.startswith("tags:"):
                    count = int(body.split(":", 1)[1])
            elif line:
                parts = line.split(",")
                if len(parts) != 4:
                    raise TagFormatError(
                        f"expected 4 comma-separated fields, got {len(parts)}",
                        offset=offset,
                    )
                try:
                    rows.append(tuple(int(p) for p in parts))
                except ValueError as exc:
                    raise TagFormatError(f"bad tag record: {exc}", offset=offset)
            offset += len(raw)
    if version is None or chash is None:
        raise TagVersionError("missing version or config_hash header", offset=0)
    if version != FORMAT_VERSION:
        raise TagVersionError(f"unsupported format version {version}", offset=0)
    if count is not None and count != len(rows):
        raise TagFormatError(
            f"header declares {count} tags, found {len(rows)}", offset=offset
        )
    tags = empty_tags(len(rows))
    for i, row in enumerate(rows):
        tags[i] = row
    return TagStream(config_hash=chash, tags=tags)


def kind_name(kind: int) -> str:
    return _KIND_NAMES[kind]


def channel_name(channel: int) -> str:
    return _CHANNEL_NAMES[channel]
