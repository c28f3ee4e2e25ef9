"""Per-layer hidden-state extraction from a pretrained transformer.

One forward pass per batch with hidden-state capture; every selected
layer's token matrix (attention-masked positions excluded, upcast to
float32) is appended to that layer's activation file. Sample order in the
output matches dataset order; samples that tokenize to fewer than 2 tokens
are skipped and counted. Inference runs in eval mode with gradients off,
so re-running a job produces byte-identical files.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import torch

from .activation_writer import LayerFileWriter
from .text_data import DatasetError, dataset_stem, iter_rows


class ExtractionError(Exception):
    """Raised for model-side failures: loading, bad layer ids, bad config."""


@dataclass(frozen=True)
class ExtractionJob:
    """What to extract: checkpoint, dataset, layers, and output location.

    layers is either None (the default span: embedding layer through the
    penultimate block) or an explicit tuple of hidden-state indices, where
    0 is the embedding output and block_count is the final block.
    """

    model: str
    dataset: str
    layers: tuple[int, ...] | None
    max_len: int
    out_dir: str
    batch_size: int = 8
    split: str = "train"
    classes: int | None = None

    def __post_init__(self) -> None:
        if self.max_len < 2:
            raise ValueError(f"max_len must be >= 2, got {self.max_len}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.classes is not None and self.classes < 2:
            raise ValueError(f"classes must be >= 2, got {self.classes}")
        if self.layers is not None:
            if not self.layers:
                raise ValueError("explicit layer selection is empty")
            if any(layer < 0 for layer in self.layers):
                raise ValueError(f"layer ids must be >= 0, got {self.layers}")
            if len(set(self.layers)) != len(self.layers):
                raise ValueError(f"duplicate layer ids in {self.layers}")


@dataclass(frozen=True)
class ExtractionReport:
    files: dict[int, str]
    n_written: int
    n_skipped: int
    c: int


def _load(job: ExtractionJob):
    from transformers import AutoModel, AutoTokenizer

    try:
        tokenizer = AutoTokenizer.from_pretrained(job.model)
        model = AutoModel.from_pretrained(job.model)
    except Exception as exc:
        raise ExtractionError(f"cannot load model {job.model!r}: {exc}") from None
    model.eval()
    return tokenizer, model


def _resolve_layers(job: ExtractionJob, block_count: int) -> list[int]:
    if job.layers is None:
        # embedding output through the penultimate block
        return list(range(block_count))
    bad = [layer for layer in job.layers if layer > block_count]
    if bad:
        raise ExtractionError(
            f"layer ids {bad} outside this model's hidden states 0..{block_count}"
        )
    return list(job.layers)


def run(job: ExtractionJob) -> ExtractionReport:
    tokenizer, model = _load(job)
    block_count = int(model.config.num_hidden_layers)
    d = int(model.config.hidden_size)
    layers = _resolve_layers(job, block_count)

    batch_size = job.batch_size
    if tokenizer.pad_token is None:
        if tokenizer.eos_token is not None:
            tokenizer.pad_token = tokenizer.eos_token  # mask excludes pads anyway
        else:
            batch_size = 1  # no padding available; feed one sample at a time

    out_dir = Path(job.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    stem = dataset_stem(job.dataset)
    writers = {
        layer: LayerFileWriter(out_dir / f"{stem}.layer{layer:02d}.act", d, layer)
        for layer in layers
    }

    n_written = 0
    n_skipped = 0
    max_label = -1
    batch_texts: list[str] = []
    batch_labels: list[int] = []

    def flush() -> None:
        nonlocal n_written, n_skipped, max_label
        if not batch_texts:
            return
        encoded = tokenizer(
            batch_texts,
            truncation=True,
            max_length=job.max_len,
            padding=len(batch_texts) > 1,
            return_tensors="pt",
        )
        with torch.no_grad():
            output = model(**encoded, output_hidden_states=True)
        states = output.hidden_states
        if len(states) != block_count + 1:
            raise ExtractionError(
                f"model produced {len(states)} hidden states, expected "
                f"{block_count + 1}"
            )
        mask = encoded["attention_mask"].bool()
        for i, label in enumerate(batch_labels):
            if int(mask[i].sum()) < 2:
                n_skipped += 1
                continue
            if job.classes is not None and label >= job.classes:
                raise DatasetError(
                    f"label {label} >= --classes {job.classes}"
                )
            for layer in layers:
                tokens = states[layer][i][mask[i]].to(torch.float32).cpu().numpy()
                writers[layer].add(tokens, label)
            max_label = max(max_label, label)
            n_written += 1
        batch_texts.clear()
        batch_labels.clear()

    for text, label in iter_rows(job.dataset, split=job.split):
        batch_texts.append(text)
        batch_labels.append(label)
        if len(batch_texts) >= batch_size:
            flush()
    flush()

    if n_written == 0:
        raise DatasetError(
            f"{job.dataset}: no usable samples "
            f"({n_skipped} skipped as shorter than 2 tokens)"
        )
    c = job.classes if job.classes is not None else max(2, max_label + 1)
    for writer in writers.values():
        writer.close(c)
    return ExtractionReport(
        files={layer: writers[layer].path for layer in layers},
        n_written=n_written,
        n_skipped=n_skipped,
        c=c,
    )
