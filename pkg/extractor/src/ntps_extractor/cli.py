"""Command-line extractor: checkpoint + labeled texts -> activation files.

    ntps-extract --model ID --dataset ID --layers all --max-len 512 --out DIR

--model and --dataset take hub identifiers or local paths (datasets:
.tsv with text/label columns, or .jsonl with text/label keys). --layers
is `all` (embedding output through the penultimate block) or a
comma-separated list of hidden-state indices. Exit codes: 0 success,
1 usage error, 2 data or model error.
"""

from __future__ import annotations

import argparse
import sys

from .extract import ExtractionError, ExtractionJob, run
from .text_data import DatasetError


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _parse_layers(text: str) -> tuple[int, ...] | None:
    if text.strip().lower() == "all":
        return None
    try:
        layers = tuple(int(part) for part in text.split(","))
    except ValueError:
        raise _UsageError(
            f"--layers must be 'all' or comma-separated integers, got {text!r}"
        ) from None
    return layers


def _build_parser() -> _Parser:
    parser = _Parser(prog="ntps-extract", description=__doc__.split("\n\n")[0])
    parser.add_argument("--model", required=True, metavar="ID")
    parser.add_argument("--dataset", required=True, metavar="ID")
    parser.add_argument("--layers", default="all", metavar="all|I,J,...")
    parser.add_argument("--max-len", type=int, default=512, metavar="N")
    parser.add_argument("--out", required=True, metavar="DIR")
    parser.add_argument("--batch-size", type=int, default=8, metavar="N")
    parser.add_argument("--split", default="train", metavar="NAME")
    parser.add_argument("--classes", type=int, default=None, metavar="N",
                        help="class count for the file headers "
                             "(default: largest label + 1)")
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        try:
            job = ExtractionJob(
                model=args.model,
                dataset=args.dataset,
                layers=_parse_layers(args.layers),
                max_len=args.max_len,
                out_dir=args.out,
                batch_size=args.batch_size,
                split=args.split,
                classes=args.classes,
            )
        except ValueError as exc:
            raise _UsageError(str(exc)) from None
        report = run(job)
    except _UsageError as exc:
        sys.stderr.write(f"ntps-extract: usage error: {exc}\n")
        return 1
    except (DatasetError, ExtractionError, OSError) as exc:
        sys.stderr.write(f"ntps-extract: error: {exc}\n")
        return 2
    sys.stderr.write(
        f"wrote {report.n_written} samples x {len(report.files)} layer(s), "
        f"c={report.c}, skipped {report.n_skipped} short sample(s)\n"
    )
    for layer in sorted(report.files):
        sys.stdout.write(f"{layer}\t{report.files[layer]}\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())
