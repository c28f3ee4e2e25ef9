"""Bit-exact interchange formats: activation files, stats files, TSV tables.

Activation files carry per-sentence token matrices plus a label so that
extraction (possibly on another machine) and scoring can be decoupled.
Stats files carry the finalized second-moment summaries, which is all the
scoring pipeline ever needs after one pass over the activations.

Layouts (all integers little-endian, u32 unless noted):

    activation file:  magic b"NTPS" | version=1 | d | c | n (u64) | layer
                      then n records of: ell | label | ell*d float32,
                      row-major
    stats file:       magic b"NTSS" | version=1 | d | c | n (u64) | layer
                      then float64 payload: mean_xx (d*d), mean_xy (d*c),
                      cov0 (d*d), cov1 (d*d), sum_xx (d*d), sum_xy (d*c),
                      yy_trace (1)

Both readers are strict: a short read raises FormatError naming the byte
offset, and bytes past the declared payload are an error, so two files with
equal contents are byte-identical and vice versa.

The metrics table is a UTF-8 TSV with a mandatory ``dataset, metric_name,
value`` header row, tab separators, and "\\n" line endings.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .stats import Moments, SentenceSample

ACTIVATION_MAGIC = b"NTPS"
STATS_MAGIC = b"NTSS"
FORMAT_VERSION = 1

_HEADER = struct.Struct("<4sIIIQI")  # magic, version, d, c, n, layer
_RECORD_PREFIX = struct.Struct("<II")  # ell, label

METRICS_COLUMNS = ("dataset", "metric_name", "value")


class FormatError(Exception):
    """Raised when a file does not conform to one of the formats above."""


@dataclass(frozen=True)
class FileHeader:
    """Header shared by activation and stats files."""

    d: int
    c: int
    n: int
    layer: int


@dataclass(frozen=True)
class MetricsRow:
    dataset: str
    metric_name: str
    value: float


def _read_exact(f, count: int, path: str, what: str) -> bytes:
    offset = f.tell()
    blob = f.read(count)
    if len(blob) != count:
        raise FormatError(
            f"{path}: truncated {what}: needed {count} bytes at byte offset "
            f"{offset}, found {len(blob)}"
        )
    return blob


def _check_no_trailing(f, path: str) -> None:
    offset = f.tell()
    if f.read(1):
        raise FormatError(
            f"{path}: trailing bytes after declared payload at byte offset {offset}"
        )


def _read_header(f, path: str, magic: bytes, kind: str) -> FileHeader:
    blob = _read_exact(f, _HEADER.size, path, f"{kind} header")
    got_magic, version, d, c, n, layer = _HEADER.unpack(blob)
    if got_magic != magic:
        raise FormatError(
            f"{path}: bad magic {got_magic!r} (expected {magic!r}); not a valid {kind} file"
        )
    if version != FORMAT_VERSION:
        raise FormatError(
            f"{path}: unsupported {kind} version {version} (supported: {FORMAT_VERSION})"
        )
    if d < 1 or c < 1:
        raise FormatError(f"{path}: invalid header dimensions d={d}, c={c}")
    return FileHeader(d=d, c=c, n=n, layer=layer)


def write_activations(path, samples, c: int, layer: int) -> None:
    """Write sentences to an activation file; token payload is float32."""
    samples = list(samples)
    if not samples:
        raise ValueError("cannot write an activation file with no samples")
    d = samples[0].tokens.shape[1]
    with open(path, "wb") as f:
        f.write(_HEADER.pack(ACTIVATION_MAGIC, FORMAT_VERSION, d, c, len(samples), layer))
        for i, sample in enumerate(samples):
            ell, width = sample.tokens.shape
            if width != d:
                raise ValueError(f"sample {i} has {width} columns, expected {d}")
            if sample.label >= c:
                raise ValueError(f"sample {i} label {sample.label} >= class count {c}")
            f.write(_RECORD_PREFIX.pack(ell, sample.label))
            f.write(np.ascontiguousarray(sample.tokens, dtype="<f4").tobytes())


def read_activation_header(path) -> FileHeader:
    with open(path, "rb") as f:
        return _read_header(f, str(path), ACTIVATION_MAGIC, "activation")


def iter_activations(path) -> Iterator[SentenceSample]:
    """Stream the records of an activation file, validating strictly."""
    path_str = str(path)
    with open(path, "rb") as f:
        header = _read_header(f, path_str, ACTIVATION_MAGIC, "activation")
        for i in range(header.n):
            prefix = _read_exact(f, _RECORD_PREFIX.size, path_str, f"record {i} header")
            ell, label = _RECORD_PREFIX.unpack(prefix)
            if ell < 2:
                raise FormatError(f"{path_str}: record {i} has length {ell} < 2")
            if label >= header.c:
                raise FormatError(
                    f"{path_str}: record {i} label {label} >= class count {header.c}"
                )
            blob = _read_exact(f, 4 * ell * header.d, path_str, f"record {i} payload")
            tokens = np.frombuffer(blob, dtype="<f4").reshape(ell, header.d)
            try:
                yield SentenceSample(tokens=tokens.astype(np.float64), label=label)
            except ValueError as exc:
                raise FormatError(f"{path_str}: record {i}: {exc}") from None
        _check_no_trailing(f, path_str)


def read_activations(path) -> tuple[FileHeader, list[SentenceSample]]:
    return read_activation_header(path), list(iter_activations(path))


def _stats_arrays(moments: Moments) -> tuple[np.ndarray, ...]:
    return (
        moments.mean_xx,
        moments.mean_xy,
        moments.cov0,
        moments.cov1,
        moments.sum_xx,
        moments.sum_xy,
        np.array([moments.yy_trace]),
    )


def write_stats(path, moments: Moments, layer: int) -> None:
    """Serialize finalized stats; equal moments give byte-identical files."""
    with open(path, "wb") as f:
        f.write(
            _HEADER.pack(STATS_MAGIC, FORMAT_VERSION, moments.d, moments.c, moments.n, layer)
        )
        for block in _stats_arrays(moments):
            f.write(np.ascontiguousarray(block, dtype="<f8").tobytes())


def read_stats(path) -> tuple[FileHeader, Moments]:
    path_str = str(path)
    with open(path, "rb") as f:
        header = _read_header(f, path_str, STATS_MAGIC, "stats")
        d, c = header.d, header.c
        blocks = []
        for name, shape in (
            ("mean_xx", (d, d)),
            ("mean_xy", (d, c)),
            ("cov0", (d, d)),
            ("cov1", (d, d)),
            ("sum_xx", (d, d)),
            ("sum_xy", (d, c)),
            ("yy_trace", (1,)),
        ):
            count = int(np.prod(shape))
            blob = _read_exact(f, 8 * count, path_str, f"stats block '{name}'")
            blocks.append(np.frombuffer(blob, dtype="<f8").reshape(shape).copy())
        _check_no_trailing(f, path_str)
    moments = Moments(
        mean_xx=blocks[0],
        mean_xy=blocks[1],
        cov0=blocks[2],
        cov1=blocks[3],
        sum_xx=blocks[4],
        sum_xy=blocks[5],
        yy_trace=float(blocks[6][0]),
        n=header.n,
    )
    return header, moments


def read_metrics(path) -> list[MetricsRow]:
    """Read a metrics TSV; the header row is mandatory, values must be finite."""
    path_str = str(path)
    with open(path, "r", encoding="utf-8", newline="") as f:
        lines = f.read().split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise FormatError(f"{path_str}: empty metrics table (missing header row)")
    header = tuple(lines[0].split("\t"))
    if header != METRICS_COLUMNS:
        raise FormatError(
            f"{path_str}: bad metrics header {header!r}, expected {METRICS_COLUMNS!r}"
        )
    rows = []
    for lineno, line in enumerate(lines[1:], start=2):
        fields = line.split("\t")
        if len(fields) != 3:
            raise FormatError(
                f"{path_str}: line {lineno}: expected 3 tab-separated fields, "
                f"got {len(fields)}"
            )
        try:
            value = float(fields[2])
        except ValueError:
            raise FormatError(
                f"{path_str}: line {lineno}: value {fields[2]!r} is not a number"
            ) from None
        if not np.isfinite(value):
            raise FormatError(f"{path_str}: line {lineno}: value {fields[2]!r} is not finite")
        rows.append(MetricsRow(dataset=fields[0], metric_name=fields[1], value=value))
    return rows


def write_metrics(path, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write("\t".join(METRICS_COLUMNS) + "\n")
        for row in rows:
            f.write(f"{row.dataset}\t{row.metric_name}\t{row.value!r}\n")
