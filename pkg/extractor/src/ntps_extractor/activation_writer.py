"""Writer for the ntps activation file format.

The layout is the scoring library's public interchange contract
(little-endian; u32 unless noted):

    magic b"NTPS" | version=1 | d | c | n (u64) | layer
    then n records of: ell | label | ell*d float32, row-major

The record count and class count are only known once the dataset has been
streamed, so the writer emits a placeholder header and patches it on
close. Closing twice is an error; abandoning a writer without closing
leaves a file with n=0 that a strict reader will reject for trailing
bytes, which is the right failure mode for an interrupted run.
"""

from __future__ import annotations

import struct

import numpy as np

ACTIVATION_MAGIC = b"NTPS"
FORMAT_VERSION = 1

_HEADER = struct.Struct("<4sIIIQI")  # magic, version, d, c, n, layer
_RECORD_PREFIX = struct.Struct("<II")  # ell, label


class LayerFileWriter:
    """Streams one layer's records; header is finalized by close()."""

    def __init__(self, path, d: int, layer: int) -> None:
        if d < 1:
            raise ValueError(f"hidden dimension must be >= 1, got {d}")
        self.path = str(path)
        self.d = d
        self.layer = layer
        self.n = 0
        self.max_label = -1
        self._f = open(self.path, "wb")
        self._f.write(_HEADER.pack(ACTIVATION_MAGIC, FORMAT_VERSION, d, 1, 0, layer))

    def add(self, tokens: np.ndarray, label: int) -> None:
        tokens = np.ascontiguousarray(tokens, dtype="<f4")
        if tokens.ndim != 2 or tokens.shape[1] != self.d:
            raise ValueError(
                f"tokens must be (ell, {self.d}), got shape {tokens.shape}"
            )
        ell = tokens.shape[0]
        if ell < 2:
            raise ValueError(f"records need at least 2 tokens, got {ell}")
        if label < 0:
            raise ValueError(f"label must be nonnegative, got {label}")
        if not np.all(np.isfinite(tokens)):
            raise ValueError("tokens have non-finite entries")
        self._f.write(_RECORD_PREFIX.pack(ell, label))
        self._f.write(tokens.tobytes())
        self.n += 1
        self.max_label = max(self.max_label, label)

    def close(self, c: int) -> None:
        if self._f is None:
            raise RuntimeError(f"{self.path} already closed")
        if c <= self.max_label:
            raise ValueError(
                f"class count {c} does not cover largest label {self.max_label}"
            )
        self._f.seek(0)
        self._f.write(
            _HEADER.pack(ACTIVATION_MAGIC, FORMAT_VERSION, self.d, c, self.n, self.layer)
        )
        self._f.close()
        self._f = None
