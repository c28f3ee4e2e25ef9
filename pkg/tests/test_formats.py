"""Byte-level contracts of the activation, stats, and metrics files."""

import struct

import numpy as np
import pytest

from ntps.formats import (
    ACTIVATION_MAGIC,
    FORMAT_VERSION,
    STATS_MAGIC,
    FormatError,
    MetricsRow,
    iter_activations,
    read_activation_header,
    read_activations,
    read_metrics,
    read_stats,
    write_activations,
    write_metrics,
    write_stats,
)
from ntps.stats import SentenceSample, SufficientStats
from ntps.synth import SynthConfig, corpus_moments, generate

HEADER = struct.Struct("<4sIIIQI")
RECORD = struct.Struct("<II")


def _two_samples():
    return [
        SentenceSample(tokens=np.array([[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]]), label=1),
        SentenceSample(
            tokens=np.array([[0.5, -1.0, 2.5], [7.0, 8.0, 9.0], [-0.25, 0.0, 1.0]]),
            label=0,
        ),
    ]


def _expected_activation_bytes(samples, c, layer):
    d = samples[0].tokens.shape[1]
    blob = HEADER.pack(ACTIVATION_MAGIC, FORMAT_VERSION, d, c, len(samples), layer)
    for sample in samples:
        blob += RECORD.pack(sample.tokens.shape[0], sample.label)
        blob += sample.tokens.astype("<f4").tobytes()
    return blob


# --- activation files --------------------------------------------------------


def test_activation_write_matches_hand_packed_bytes(tmp_path):
    samples = _two_samples()
    path = tmp_path / "a.act"
    write_activations(path, samples, c=2, layer=5)
    assert path.read_bytes() == _expected_activation_bytes(samples, c=2, layer=5)


def test_activation_read_from_hand_packed_bytes(tmp_path):
    samples = _two_samples()
    path = tmp_path / "a.act"
    path.write_bytes(_expected_activation_bytes(samples, c=2, layer=5))

    header = read_activation_header(path)
    assert (header.d, header.c, header.n, header.layer) == (3, 2, 2, 5)

    header2, got = read_activations(path)
    assert header2 == header
    assert [s.label for s in got] == [1, 0]
    for original, loaded in zip(samples, got):
        assert loaded.tokens.dtype == np.float64
        # float32 quantization is the only permitted change
        assert np.array_equal(loaded.tokens, original.tokens.astype("<f4").astype(np.float64))


def test_activation_round_trip_and_byte_identity(tmp_path):
    config = SynthConfig(d=6, c=4, k_true=3, overlap=0.4, n=25, seed=8)
    samples = generate(config)
    first = tmp_path / "one.act"
    write_activations(first, samples, c=4, layer=2)
    _, loaded = read_activations(first)

    second = tmp_path / "two.act"
    write_activations(second, loaded, c=4, layer=2)
    assert first.read_bytes() == second.read_bytes()


def test_activation_writer_validation(tmp_path):
    path = tmp_path / "bad.act"
    with pytest.raises(ValueError, match="no samples"):
        write_activations(path, [], c=2, layer=0)
    ragged = [
        SentenceSample(tokens=np.zeros((2, 3)), label=0),
        SentenceSample(tokens=np.zeros((2, 4)), label=0),
    ]
    with pytest.raises(ValueError, match="4 columns, expected 3"):
        write_activations(path, ragged, c=2, layer=0)
    with pytest.raises(ValueError, match="label 5 >= class count 2"):
        write_activations(
            path, [SentenceSample(tokens=np.zeros((2, 3)), label=5)], c=2, layer=0
        )


def test_activation_header_errors(tmp_path):
    path = tmp_path / "f.act"

    path.write_bytes(b"NTPS" + b"\x00" * 6)
    with pytest.raises(FormatError, match=r"needed 28 bytes at byte offset 0, found 10"):
        read_activation_header(path)

    path.write_bytes(HEADER.pack(b"XXXX", 1, 3, 2, 0, 0))
    with pytest.raises(FormatError, match="bad magic"):
        read_activation_header(path)

    # a stats file is not an activation file
    path.write_bytes(HEADER.pack(STATS_MAGIC, 1, 3, 2, 0, 0))
    with pytest.raises(FormatError, match="not a valid activation file"):
        read_activation_header(path)

    path.write_bytes(HEADER.pack(ACTIVATION_MAGIC, 2, 3, 2, 0, 0))
    with pytest.raises(FormatError, match="unsupported activation version 2"):
        read_activation_header(path)

    path.write_bytes(HEADER.pack(ACTIVATION_MAGIC, 1, 0, 2, 0, 0))
    with pytest.raises(FormatError, match="invalid header dimensions"):
        read_activation_header(path)


def test_activation_record_errors(tmp_path):
    path = tmp_path / "f.act"
    head = HEADER.pack(ACTIVATION_MAGIC, 1, 2, 3, 1, 0)

    path.write_bytes(head)  # declares one record, provides none
    with pytest.raises(FormatError, match=r"record 0 header.*at byte offset 28"):
        list(iter_activations(path))

    full = np.ones((2, 2), dtype="<f4").tobytes()
    path.write_bytes(head + RECORD.pack(2, 0) + full[:9])
    with pytest.raises(FormatError, match=r"record 0 payload: needed 16 bytes at byte offset 36, found 9"):
        list(iter_activations(path))

    path.write_bytes(head + RECORD.pack(1, 0) + full[:8])
    with pytest.raises(FormatError, match="record 0 has length 1 < 2"):
        list(iter_activations(path))

    path.write_bytes(head + RECORD.pack(2, 3) + full)
    with pytest.raises(FormatError, match="record 0 label 3 >= class count 3"):
        list(iter_activations(path))

    nan_payload = np.array([[1.0, np.nan], [0.0, 0.0]], dtype="<f4").tobytes()
    path.write_bytes(head + RECORD.pack(2, 0) + nan_payload)
    with pytest.raises(FormatError, match="record 0: tokens have non-finite"):
        list(iter_activations(path))

    path.write_bytes(head + RECORD.pack(2, 0) + full + b"\x99")
    with pytest.raises(FormatError, match=r"trailing bytes.*at byte offset 52"):
        list(iter_activations(path))


# --- stats files --------------------------------------------------------------


def _some_moments():
    config = SynthConfig(d=5, c=3, k_true=2, overlap=0.7, n=40, seed=12)
    return corpus_moments(generate(config))


def test_stats_round_trip_is_bitwise(tmp_path):
    moments = _some_moments()
    path = tmp_path / "m.stats"
    write_stats(path, moments, layer=7)

    header, loaded = read_stats(path)
    assert (header.d, header.c, header.n, header.layer) == (5, 3, 40, 7)
    assert loaded.n == moments.n
    assert loaded.yy_trace == moments.yy_trace
    for name in ("mean_xx", "mean_xy", "cov0", "cov1", "sum_xx", "sum_xy"):
        assert np.array_equal(getattr(loaded, name), getattr(moments, name)), name

    again = tmp_path / "m2.stats"
    write_stats(again, loaded, layer=7)
    assert path.read_bytes() == again.read_bytes()


def test_stats_errors(tmp_path):
    moments = _some_moments()
    path = tmp_path / "m.stats"
    write_stats(path, moments, layer=0)
    blob = path.read_bytes()

    bad = tmp_path / "bad.stats"
    bad.write_bytes(blob[: HEADER.size + 8 * 25 + 8 * 15 + 11])
    with pytest.raises(FormatError, match="stats block 'cov0'"):
        read_stats(bad)

    bad.write_bytes(blob + b"\x00")
    with pytest.raises(FormatError, match="trailing bytes"):
        read_stats(bad)

    bad.write_bytes(HEADER.pack(ACTIVATION_MAGIC, 1, 5, 3, 40, 0) + blob[HEADER.size :])
    with pytest.raises(FormatError, match="not a valid stats file"):
        read_stats(bad)


# --- metrics tables -----------------------------------------------------------


def test_metrics_round_trip(tmp_path):
    rows = [
        MetricsRow(dataset="sst2", metric_name="accuracy", value=0.8125),
        MetricsRow(dataset="ag_news", metric_name="accuracy", value=1.0 / 3.0),
        MetricsRow(dataset="odd name", metric_name="f1", value=-2.5e-8),
    ]
    path = tmp_path / "metrics.tsv"
    write_metrics(path, rows)
    text = path.read_text(encoding="utf-8")
    assert text.startswith("dataset\tmetric_name\tvalue\n")
    assert read_metrics(path) == rows  # repr round-trips floats exactly


def test_metrics_errors(tmp_path):
    path = tmp_path / "metrics.tsv"

    path.write_text("", encoding="utf-8")
    with pytest.raises(FormatError, match="empty metrics table"):
        read_metrics(path)

    path.write_text("dataset\tvalue\n", encoding="utf-8")
    with pytest.raises(FormatError, match="bad metrics header"):
        read_metrics(path)

    path.write_text("dataset\tmetric_name\tvalue\na\tacc\n", encoding="utf-8")
    with pytest.raises(FormatError, match="line 2: expected 3 tab-separated fields"):
        read_metrics(path)

    path.write_text("dataset\tmetric_name\tvalue\na\tacc\toops\n", encoding="utf-8")
    with pytest.raises(FormatError, match="line 2: value 'oops' is not a number"):
        read_metrics(path)

    path.write_text("dataset\tmetric_name\tvalue\na\tacc\tinf\n", encoding="utf-8")
    with pytest.raises(FormatError, match="line 2: value 'inf' is not finite"):
        read_metrics(path)

    path.write_text("dataset\tmetric_name\tvalue\n", encoding="utf-8")
    assert read_metrics(path) == []
