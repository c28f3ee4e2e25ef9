"""Command-line front end for the overlap-scoring pipeline.

Subcommands:

    accumulate   activation file(s) -> one finalized stats file
    score        stats file -> one overlap score at a chosen rank
    sweep        directory of stats files -> TSV over a k-proportion grid,
                 optionally rank-correlated against a metrics table
    validate     run the synthetic-corpus guarantee suite, emit JSON
    predict-gain rank datasets by adaptation headroom (lowest score first)

Exit codes are a stable contract: 0 success, 1 usage error, 2 data/format
error, 3 validation failure. The environment variable NTPS_THREADS caps
sweep parallelism (0 or unset = one worker per CPU).

Stats files produced by `accumulate` are named freely, but `sweep` reads
every `*.stats` file in its directory and takes the dataset name from the
filename stem up to the first dot (`sst2.layer3.stats` -> dataset `sst2`);
the layer id comes from the stats header.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import analysis, synth
from .formats import (
    FormatError,
    iter_activations,
    read_activation_header,
    read_metrics,
    read_stats,
    write_stats,
)
from .stats import SufficientStats
from .subspace import POOLINGS, k_from_proportion

DEFAULT_K_GRID = "0.05:0.95:0.05"


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with status 2 on bad flags; the exit-code contract
    # reserves 2 for data errors, so route parse failures through main().
    def error(self, message):
        raise _UsageError(message)


def _parse_grid(text: str, what: str) -> list[float]:
    parts = text.split(":")
    if len(parts) != 3:
        raise _UsageError(f"{what} grid must look like start:stop:step, got {text!r}")
    try:
        start, stop, step = (float(p) for p in parts)
    except ValueError:
        raise _UsageError(f"{what} grid has non-numeric parts: {text!r}") from None
    if step <= 0 or start > stop:
        raise _UsageError(f"{what} grid needs step > 0 and start <= stop, got {text!r}")
    values = []
    i = 0
    while True:
        value = round(start + i * step, 10)
        if value > stop + 1e-9:
            break
        values.append(value)
        i += 1
    return values


def _write_lines(out_path, lines) -> None:
    text = "\n".join(lines) + "\n"
    if out_path is None:
        sys.stdout.write(text)
    else:
        with open(out_path, "w", encoding="utf-8", newline="") as f:
            f.write(text)


def _metric_dict(rows, path, preferred=None) -> dict[str, float]:
    """One value per dataset from a metrics table.

    Uses the rows named `preferred` when present, otherwise requires the
    table to carry a single distinct metric name.
    """
    names = sorted({row.metric_name for row in rows})
    if preferred is not None and preferred in names:
        chosen = preferred
    elif len(names) == 1:
        chosen = names[0]
    else:
        wanted = f" and none is named {preferred!r}" if preferred else ""
        raise FormatError(f"{path}: table mixes metrics {names}{wanted}")
    values: dict[str, float] = {}
    for row in rows:
        if row.metric_name != chosen:
            continue
        if row.dataset in values:
            raise FormatError(f"{path}: duplicate rows for dataset {row.dataset!r}")
        values[row.dataset] = row.value
    if not values:
        raise FormatError(f"{path}: no rows named {chosen!r}")
    return values


def cmd_accumulate(args) -> int:
    acc = None
    first = None
    for path in args.inputs:
        header = read_activation_header(path)
        if acc is None:
            first, first_path = header, path
            acc = SufficientStats(header.d, header.c)
        elif (header.d, header.c) != (first.d, first.c):
            raise FormatError(
                f"{path}: dimensions d={header.d}, c={header.c} do not match "
                f"{first_path} (d={first.d}, c={first.c})"
            )
        elif header.layer != first.layer:
            raise FormatError(
                f"{path}: layer {header.layer} does not match {first_path} "
                f"(layer {first.layer}); stats files are per-layer"
            )
        for sample in iter_activations(path):
            acc.accumulate(sample)
    try:
        moments = acc.finalize()
    except ValueError:
        raise FormatError(
            f"empty input: no samples across {len(args.inputs)} file(s)"
        ) from None
    write_stats(args.out, moments, first.layer)
    return 0


def cmd_score(args) -> int:
    if not 0.0 < args.k_prop <= 1.0:
        raise _UsageError(f"--k-prop must lie in (0, 1], got {args.k_prop}")
    header, moments = read_stats(args.stats)
    k = k_from_proportion(args.k_prop, moments.d)
    score = analysis.score_stats(moments, args.k_prop, pooling=args.pooling)
    sys.stdout.write(f"{header.layer}\t{k}\t{score!r}\n")
    return 0


def cmd_sweep(args) -> int:
    k_grid = _parse_grid(args.grid, "k proportion")
    if any(not 0.0 < k <= 1.0 for k in k_grid):
        raise _UsageError(f"k proportions must lie in (0, 1], got {args.grid!r}")
    stats_dir = Path(args.stats_dir)
    if not stats_dir.is_dir():
        raise _UsageError(f"{stats_dir} is not a directory")
    paths = sorted(stats_dir.glob("*.stats"))
    if not paths:
        raise FormatError(f"no .stats files in {stats_dir}")

    entries = []
    for path in paths:
        header, moments = read_stats(path)
        entries.append((path.name.split(".")[0], header.layer, moments))

    if args.metrics is None:
        per_layer = {}
        for dataset, layer, moments in entries:
            if layer in per_layer:
                raise FormatError(
                    f"{stats_dir}: two stats files for layer {layer}; pass "
                    f"--metrics to sweep several datasets jointly"
                )
            per_layer[layer] = moments
        result = analysis.sweep(per_layer, k_grid, pooling=args.pooling)
        lines = ["layer\tk_prop\tntps"]
        for cell in result.cells:
            lines.append(f"{cell.layer}\t{cell.k_prop!r}\t{cell.ntps!r}")
        _write_lines(args.out, lines)
        return 0

    metric_values = _metric_dict(read_metrics(args.metrics), args.metrics)
    keyed = {}
    for dataset, layer, moments in entries:
        if (dataset, layer) in keyed:
            raise FormatError(
                f"{stats_dir}: two stats files for dataset {dataset!r} layer {layer}"
            )
        keyed[(dataset, layer)] = moments
    result = analysis.sweep(keyed, k_grid, metrics=metric_values, pooling=args.pooling)
    lines = ["dataset\tlayer\tk_prop\tntps\tspearman_r"]
    for cell in result.cells:
        r = result.spearman_by_config[(cell.layer, cell.k_prop)]
        lines.append(f"{cell.dataset}\t{cell.layer}\t{cell.k_prop!r}\t{cell.ntps!r}\t{r!r}")
    _write_lines(args.out, lines)
    if result.best_config is not None:
        layer, k_prop = result.best_config
        r = result.spearman_by_config[result.best_config]
        sys.stderr.write(f"best config: layer {layer}, k_prop {k_prop!r}, r {r!r}\n")
    return 0


def cmd_validate(args) -> int:
    if args.seeds < 1:
        raise _UsageError(f"--seeds must be >= 1, got {args.seeds}")
    if args.grid is None:
        configs = None
    else:
        dims = []
        for value in _parse_grid(args.grid, "dimension"):
            if value != int(value) or value < 1:
                raise _UsageError(f"dimension grid must be positive integers, got {args.grid!r}")
            dims.append(int(value))
        try:
            configs = synth.default_grid(dims=tuple(dims))
        except ValueError as exc:
            raise _UsageError(f"invalid validation grid: {exc}") from None
    try:
        report = synth.theorem_suite(configs, seeds=args.seeds)
    except ValueError as exc:
        # the suite's own argument guards (grid too thin, bad seed count)
        raise _UsageError(str(exc)) from None
    _write_lines(args.out, [json.dumps(report, indent=2, sort_keys=True, default=float)])
    return 0 if report["all_pass"] else 3


def cmd_predict_gain(args) -> int:
    scores = _metric_dict(read_metrics(args.ntps_table), args.ntps_table, preferred="ntps")
    observed = None
    if args.observed is not None:
        observed = _metric_dict(read_metrics(args.observed), args.observed, preferred="gain")
    try:
        prediction = analysis.predict_lora_gain(scores, observed=observed)
    except ValueError as exc:
        raise FormatError(str(exc)) from None
    if observed is None:
        lines = ["rank\tdataset\tntps"]
        for rank, entry in enumerate(prediction.ranking, start=1):
            lines.append(f"{rank}\t{entry.dataset}\t{entry.ntps!r}")
    else:
        r_text = "" if prediction.spearman_r is None else repr(prediction.spearman_r)
        lines = ["rank\tdataset\tntps\tobserved_gain\tspearman_r"]
        for rank, entry in enumerate(prediction.ranking, start=1):
            gain = "" if entry.observed_gain is None else repr(entry.observed_gain)
            lines.append(f"{rank}\t{entry.dataset}\t{entry.ntps!r}\t{gain}\t{r_text}")
    _write_lines(args.out, lines)
    return 0


def _build_parser() -> _Parser:
    parser = _Parser(prog="ntps", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", metavar="command")

    p = sub.add_parser("accumulate", help="reduce activation files to a stats file")
    p.add_argument("inputs", nargs="+", metavar="ACTIVATIONS")
    p.add_argument("--out", required=True, metavar="PATH")
    p.set_defaults(func=cmd_accumulate)

    p = sub.add_parser("score", help="overlap score for one stats file")
    p.add_argument("stats", metavar="STATS")
    p.add_argument("--k-prop", type=float, required=True, metavar="REAL")
    p.add_argument("--pooling", choices=sorted(POOLINGS), default="mean")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("sweep", help="score a grid of ranks over per-layer stats")
    p.add_argument("stats_dir", metavar="STATS_DIR")
    p.add_argument("--grid", default=DEFAULT_K_GRID, metavar="START:STOP:STEP")
    p.add_argument("--metrics", default=None, metavar="PATH")
    p.add_argument("--pooling", choices=sorted(POOLINGS), default="mean")
    p.add_argument("--out", default=None, metavar="PATH")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("validate", help="run the synthetic guarantee suite")
    p.add_argument("--seeds", type=int, default=1, metavar="N")
    p.add_argument("--grid", default=None, metavar="START:STOP:STEP",
                   help="dimension grid for the synthetic corpora "
                        "(default: d in 8, 16, 32)")
    p.add_argument("--out", default=None, metavar="PATH")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("predict-gain", help="rank datasets by adaptation headroom")
    p.add_argument("ntps_table", metavar="NTPS_TSV")
    p.add_argument("--observed", default=None, metavar="PATH")
    p.add_argument("--out", default=None, metavar="PATH")
    p.set_defaults(func=cmd_predict_gain)
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if getattr(args, "func", None) is None:
            raise _UsageError("a subcommand is required (see --help)")
        return args.func(args)
    except _UsageError as exc:
        sys.stderr.write(f"ntps: usage error: {exc}\n")
        return 1
    except FormatError as exc:
        sys.stderr.write(f"ntps: data error: {exc}\n")
        return 2
    except (ValueError, OSError) as exc:
        sys.stderr.write(f"ntps: data error: {exc}\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())
