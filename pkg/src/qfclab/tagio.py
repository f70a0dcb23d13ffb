"""Tag-stream file formats.

Binary (.qtag), little-endian:
    magic   4 bytes  b"QTAG"
    version u16      currently 1
    channel u16
    duration_ps u64
    count   u64
    count * u64 timestamps in ps

CSV: two columns (channel, timestamp_ps) after a single comment line
carrying the duration, so binary -> csv -> binary round-trips bit-exactly.
A CSV file may hold several channels; rows must be grouped per channel and
time-ordered within each group.
"""

import struct
from pathlib import Path

import numpy as np

from .montecarlo import TagStream

MAGIC = b"QTAG"
VERSION = 1
_HEADER = struct.Struct("<4sHHQQ")
_PS = 1_000_000_000_000


class TagFormatError(ValueError):
    pass


def write_qtag(path, stream):
    duration_ps = int(round(stream.duration_s * _PS))
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, stream.channel, duration_ps,
                              len(stream.tags)))
        fh.write(stream.tags.astype("<u8").tobytes())
    return Path(path)


def read_qtag(path):
    with open(path, "rb") as fh:
        head = fh.read(_HEADER.size)
        if len(head) < _HEADER.size:
            raise TagFormatError(f"{path}: truncated header")
        magic, version, channel, duration_ps, count = _HEADER.unpack(head)
        if magic != MAGIC:
            raise TagFormatError(f"{path}: bad magic {magic!r}")
        if version != VERSION:
            raise TagFormatError(f"{path}: unsupported version {version}")
        data = np.frombuffer(fh.read(8 * count), dtype="<u8")
        if len(data) != count:
            raise TagFormatError(f"{path}: expected {count} tags, found {len(data)}")
    return TagStream(channel, data.astype(np.int64), duration_ps / _PS,
                     meta={"source": str(path)})


def write_csv(path, streams):
    """Write one or more streams as (channel, timestamp_ps) rows."""
    if isinstance(streams, TagStream):
        streams = [streams]
    duration_ps = max(int(round(s.duration_s * _PS)) for s in streams)
    with open(path, "w", newline="") as fh:
        fh.write(f"# qtag-csv v{VERSION} duration_ps={duration_ps}\n")
        fh.write("channel,timestamp_ps\n")
        for s in streams:
            ch = s.channel
            for t in s.tags:
                fh.write(f"{ch},{t}\n")
    return Path(path)


def read_csv(path):
    """Read a tag CSV back into a list of TagStreams (one per channel)."""
    duration_ps = None
    channels = []
    tags = []
    with open(path) as fh:
        first = fh.readline()
        if first.startswith("#"):
            for token in first.split():
                if token.startswith("duration_ps="):
                    duration_ps = int(token.split("=", 1)[1])
            header = fh.readline()
        else:
            header = first
        if header.strip() != "channel,timestamp_ps":
            raise TagFormatError(f"{path}: unexpected CSV header {header.strip()!r}")
        for line in fh:
            line = line.strip()
            if not line:
                continue
            ch, t = line.split(",")
            channels.append(int(ch))
            tags.append(int(t))
    channels = np.array(channels, dtype=np.int64)
    tags = np.array(tags, dtype=np.int64)
    if duration_ps is None:
        duration_ps = int(tags.max()) + 1 if len(tags) else _PS
    streams = []
    for ch in dict.fromkeys(channels.tolist()):  # preserve file order
        sel = tags[channels == ch]
        streams.append(TagStream(int(ch), sel, duration_ps / _PS,
                                 meta={"source": str(path)}))
    return streams
