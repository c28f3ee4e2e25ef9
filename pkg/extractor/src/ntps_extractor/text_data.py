"""Labeled text sources: local TSV/JSONL files or hub datasets.

Every source yields (text, label) pairs in dataset order; labels must be
nonnegative integers. Local files keep the extractor usable offline:

    .tsv    header row with `text` and `label` columns (tab-separated)
    .jsonl  one JSON object per line with "text" and "label" keys

Anything else is treated as a hub dataset identifier and needs the
optional `datasets` package.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Iterator


class DatasetError(Exception):
    """Raised when a dataset cannot be resolved or a row is malformed."""


def _check_row(text, label, where: str) -> tuple[str, int]:
    if not isinstance(text, str):
        raise DatasetError(f"{where}: text is not a string")
    if isinstance(label, bool) or not isinstance(label, int):
        try:
            as_int = int(label)
        except (TypeError, ValueError):
            raise DatasetError(f"{where}: label {label!r} is not an integer") from None
        if isinstance(label, float) and label != as_int:
            raise DatasetError(f"{where}: label {label!r} is not an integer")
        label = as_int
    if label < 0:
        raise DatasetError(f"{where}: label {label} is negative")
    return text, label


def _iter_tsv(path: Path) -> Iterator[tuple[str, int]]:
    with open(path, "r", encoding="utf-8", newline="") as f:
        lines = f.read().split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise DatasetError(f"{path}: empty file (missing header row)")
    header = lines[0].split("\t")
    try:
        text_col = header.index("text")
        label_col = header.index("label")
    except ValueError:
        raise DatasetError(
            f"{path}: header must contain 'text' and 'label' columns, got {header}"
        ) from None
    for lineno, line in enumerate(lines[1:], start=2):
        fields = line.split("\t")
        if len(fields) != len(header):
            raise DatasetError(
                f"{path}: line {lineno}: expected {len(header)} fields, got {len(fields)}"
            )
        where = f"{path}: line {lineno}"
        try:
            label = int(fields[label_col])
        except ValueError:
            raise DatasetError(
                f"{where}: label {fields[label_col]!r} is not an integer"
            ) from None
        yield _check_row(fields[text_col], label, where)


def _iter_jsonl(path: Path) -> Iterator[tuple[str, int]]:
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            where = f"{path}: line {lineno}"
            try:
                row = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetError(f"{where}: bad JSON: {exc}") from None
            if not isinstance(row, dict) or "text" not in row or "label" not in row:
                raise DatasetError(f"{where}: object needs 'text' and 'label' keys")
            yield _check_row(row["text"], row["label"], where)


def _iter_hub(identifier: str, split: str) -> Iterator[tuple[str, int]]:
    try:
        from datasets import load_dataset
    except ImportError:
        raise DatasetError(
            f"{identifier!r} is not a local .tsv/.jsonl file and the optional "
            f"'datasets' package is not installed"
        ) from None
    try:
        rows = load_dataset(identifier, split=split)
    except Exception as exc:
        raise DatasetError(f"cannot load dataset {identifier!r}: {exc}") from None
    for i, row in enumerate(rows):
        if "text" not in row or "label" not in row:
            raise DatasetError(
                f"{identifier} row {i}: needs 'text' and 'label' fields, got "
                f"{sorted(row)}"
            )
        yield _check_row(row["text"], row["label"], f"{identifier} row {i}")


def iter_rows(dataset: str, split: str = "train") -> Iterator[tuple[str, int]]:
    """Yield (text, label) pairs from a local file or a hub identifier."""
    path = Path(dataset)
    if path.suffix == ".tsv" or path.suffix == ".jsonl":
        if not path.is_file():
            raise DatasetError(f"{dataset}: no such file")
        return _iter_tsv(path) if path.suffix == ".tsv" else _iter_jsonl(path)
    return _iter_hub(dataset, split)


def dataset_stem(dataset: str) -> str:
    """Name used in output files: local stem or sanitized identifier."""
    path = Path(dataset)
    if path.suffix in (".tsv", ".jsonl"):
        stem = path.stem
    else:
        stem = dataset.replace("/", "_")
    # the scoring CLI splits dataset names from filenames at the first dot
    return stem.split(".")[0].replace(" ", "_") or "dataset"
