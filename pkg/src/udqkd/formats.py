"""On-disk formats: key=value blocks, pulse CSV, raw sample streams."""

import csv
import io
import struct

import numpy as np


class FormatError(ValueError):
    """Input file does not follow the documented layout."""


# ---------------------------------------------------------------------------
# key=value text blocks
# ---------------------------------------------------------------------------

def dumps_kv(mapping):
    lines = []
    for key, value in mapping.items():
        if isinstance(value, float):
            value = repr(value)
        lines.append(f"{key}={value}")
    return "\n".join(lines) + "\n"


def loads_kv(text):
    """Parse ``key=value`` lines; ``#`` starts a comment, blank lines are skipped."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise FormatError(f"line {lineno}: expected key=value, got {raw!r}")
        key, value = line.split("=", 1)
        key = key.strip()
        if not key:
            raise FormatError(f"line {lineno}: empty key")
        out[key] = value.strip()
    return out


def read_kv(path):
    with open(path, encoding="utf-8") as fh:
        return loads_kv(fh.read())


def write_kv(path, mapping):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps_kv(mapping))


# ---------------------------------------------------------------------------
# Pulse CSV: index,role,basis,alice_x,bob_value
# ---------------------------------------------------------------------------

PULSE_COLUMNS = ("index", "role", "basis", "alice_x", "bob_value")


def write_pulse_csv(path_or_buf, index, role, basis, alice_x, bob_value):
    """Write pulse columns; floats use ``repr`` so they round-trip exactly."""
    own = isinstance(path_or_buf, (str, bytes)) or hasattr(path_or_buf, "__fspath__")
    fh = open(path_or_buf, "w", newline="", encoding="utf-8") if own else path_or_buf
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(PULSE_COLUMNS)
        for row in zip(index, role, basis, alice_x, bob_value):
            w.writerow((int(row[0]), row[1], row[2], repr(float(row[3])), repr(float(row[4]))))
    finally:
        if own:
            fh.close()


def read_pulse_csv(path_or_buf):
    own = isinstance(path_or_buf, (str, bytes)) or hasattr(path_or_buf, "__fspath__")
    fh = open(path_or_buf, newline="", encoding="utf-8") if own else path_or_buf
    try:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != PULSE_COLUMNS:
            raise FormatError(f"pulse CSV header must be {','.join(PULSE_COLUMNS)}")
        rows = list(reader)
    finally:
        if own:
            fh.close()
    try:
        index = np.array([int(r[0]) for r in rows], dtype=np.int64)
        role = np.array([r[1] for r in rows], dtype=object)
        basis = np.array([r[2] for r in rows], dtype=object)
        alice = np.array([float(r[3]) for r in rows])
        bob = np.array([float(r[4]) for r in rows])
    except (IndexError, ValueError) as exc:
        raise FormatError(f"malformed pulse CSV row: {exc}") from exc
    return {"index": index, "role": role, "basis": basis, "alice_x": alice, "bob_value": bob}


# ---------------------------------------------------------------------------
# Raw sample streams: 16-byte header + little-endian float64 payload
# ---------------------------------------------------------------------------

SAMPLE_MAGIC = b"UDQS"
SAMPLE_VERSION = 1
_HEADER = struct.Struct("<4sIII")  # magic, version, sample_rate_hz, count


def encode_samples(samples, sample_rate_hz):
    samples = np.asarray(samples, dtype="<f8")
    header = _HEADER.pack(SAMPLE_MAGIC, SAMPLE_VERSION, int(sample_rate_hz), samples.size)
    return header + samples.tobytes()


def decode_samples(blob):
    """Return ``(samples, sample_rate_hz)`` from a raw sample stream."""
    if len(blob) < _HEADER.size:
        raise FormatError("sample stream shorter than its 16-byte header")
    magic, version, rate, count = _HEADER.unpack_from(blob)
    if magic != SAMPLE_MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {SAMPLE_MAGIC!r}")
    if version != SAMPLE_VERSION:
        raise FormatError(f"unsupported sample stream version {version}")
    payload = blob[_HEADER.size:]
    if len(payload) != 8 * count:
        raise FormatError(f"header announces {count} samples, payload holds {len(payload) / 8:g}")
    return np.frombuffer(payload, dtype="<f8").astype(np.float64), rate


def write_samples(path, samples, sample_rate_hz):
    with open(path, "wb") as fh:
        fh.write(encode_samples(samples, sample_rate_hz))


def read_samples(path):
    with open(path, "rb") as fh:
        return decode_samples(fh.read())


def csv_text(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow(["" if v is None else (repr(v) if isinstance(v, float) else v) for v in row])
    return buf.getvalue()
