"""Command-line front end.

Subcommands: generate, compress, prune, pipeline, budget, plan, sweep,
heatmap.  All file outputs are written atomically (temp file in the target
directory, then rename), so a failed run leaves nothing behind.  Report
subcommands writing to a file also render a PNG figure next to it unless
--no-plot is given.

Exit codes: 0 success, 2 usage, 3 tensor I/O, 4 config/shape mismatch,
5 internal error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from pathlib import Path

import numpy as np

from . import plots
from .budget import (
    DEFAULT_D_MODEL,
    average_tokens,
    budget_records,
    plan_entry_tokens,
)
from .errors import (
    ConfigError,
    EngineError,
    TensorFormatError,
    UsageError,
)
from .prune import parse_selector, run_prune, trace_entries
from .schedule import KIND_ABSOLUTE, KIND_MULTIPLICATIVE, parse_schedule
from .sim import (
    SWEEP_AXES,
    SWEEP_METRICS,
    SimConfig,
    SweepSpec,
    generate,
    pipeline_entries,
    run_pipeline,
    run_sweep,
)
from .tensorio import (
    _atomic_write_bytes,
    archive_get,
    load_archive,
    save_archive,
)
from .vision import CompressionConfig, compress_from_archive, result_entries

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_TENSOR = 3
EXIT_CONFIG = 4
EXIT_INTERNAL = 5


def _fmt(v: float) -> str:
    return format(v, ".6g")


def _add_schedule_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--schedule", default="16:0.5,24:0",
                   help="comma list of LAYER:RATIO stages")
    p.add_argument("--layers", type=int, default=32, help="total decoder layers")
    p.add_argument("--schedule-kind", choices=[KIND_ABSOLUTE, KIND_MULTIPLICATIVE],
                   default=KIND_ABSOLUTE,
                   help="ratios of n0 (absolute) or of the previous count")


def _add_compress_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--k1", type=int, required=True, help="dominant tokens kept")
    p.add_argument("--k2", type=int, required=True, help="contextual clusters")
    p.add_argument("--w", type=int, default=4, help="cluster width")
    p.add_argument("--disjoint", action="store_true",
                   help="each residual token joins at most one cluster")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="duet",
        description="dual-stage visual token compression toolkit",
    )
    sub = parser.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("generate", help="fabricate a synthetic input archive")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n", type=int, default=64, help="visual tokens")
    p.add_argument("--d", type=int, default=16, help="feature dim")
    p.add_argument("--m", type=int, default=8, help="text tokens")
    p.add_argument("--stages", type=int, default=2, help="attention pairs to emit")
    p.add_argument("--hotspots", type=int, default=1)
    p.add_argument("--noise", type=float, default=0.05)

    p = sub.add_parser("compress", help="single-shot compression of an archive")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--out", required=True)
    _add_compress_flags(p)

    p = sub.add_parser("prune", help="stage-wise pruning of a compressed archive")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--selector", default="last", help="last, all, or topk:<s>")
    _add_schedule_flags(p)

    p = sub.add_parser("pipeline", help="compress, prune, and report in one pass")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--out", required=True)
    _add_compress_flags(p)
    p.add_argument("--selector", default="last")
    _add_schedule_flags(p)
    p.add_argument("--base", type=int, default=None,
                   help="token count reductions are measured against")
    p.add_argument("--d-model", type=int, default=DEFAULT_D_MODEL)

    p = sub.add_parser("budget", help="per-layer token counts and averages")
    p.add_argument("--n0", type=int, required=True, help="entry token count")
    _add_schedule_flags(p)
    p.add_argument("--base", type=int, default=None)
    p.add_argument("--d-model", type=int, default=DEFAULT_D_MODEL)
    p.add_argument("--out", default=None, help="JSON-lines path; default stdout")
    p.add_argument("--no-plot", action="store_true")

    p = sub.add_parser("plan", help="smallest n0 meeting a target average")
    p.add_argument("--target", type=float, required=True)
    _add_schedule_flags(p)

    p = sub.add_parser("sweep", help="metric over one varied axis")
    p.add_argument("--in", dest="inp", required=True)
    _add_compress_flags(p)
    p.add_argument("--selector", default="last")
    _add_schedule_flags(p)
    p.add_argument("--sweep-axis", required=True, choices=list(SWEEP_AXES))
    p.add_argument("--sweep-values", required=True,
                   help="comma-separated values; stage_layout uses ';'")
    p.add_argument("--metric", default="avg_tokens", choices=list(SWEEP_METRICS))
    p.add_argument("--out", default=None, help="CSV path; default stdout")
    p.add_argument("--no-plot", action="store_true")

    p = sub.add_parser("heatmap", help="per-stage salient attention heat")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--out", required=True, help="archive path for heat matrices")
    p.add_argument("--selector", default="last")
    _add_schedule_flags(p)
    p.add_argument("--no-plot", action="store_true")

    return parser


def _schedule_from(args: argparse.Namespace):
    return parse_schedule(
        args.schedule, total_layers=args.layers, kind=args.schedule_kind
    )


def _cc_from(args: argparse.Namespace) -> CompressionConfig:
    return CompressionConfig(
        k1=args.k1, k2=args.k2, w=args.w, disjoint=args.disjoint
    )


def _cmd_generate(args) -> int:
    cfg = SimConfig(
        seed=args.seed,
        n_tokens=args.n,
        d=args.d,
        m_text=args.m,
        n_stages=args.stages,
        hotspot_count=args.hotspots,
        noise_scale=args.noise,
    )
    entries = generate(cfg)
    save_archive(args.out, entries)
    print(f"wrote {args.out}: n={args.n} d={args.d} m={args.m} stages={args.stages}")
    return EXIT_OK


def _cmd_compress(args) -> int:
    entries = load_archive(args.inp)
    cc = _cc_from(args)
    result = compress_from_archive(entries, cc)
    save_archive(args.out, result_entries(result, cc))
    print(
        f"compressed {result.scores.shape[0]} -> {result.out_tokens.shape[0]} tokens "
        f"(dominant={len(result.dominant)} clusters={len(result.clusters)} "
        f"dropped={len(result.dropped)})"
    )
    return EXIT_OK


def _cmd_prune(args) -> int:
    entries = load_archive(args.inp)
    schedule = _schedule_from(args)
    selector = parse_selector(args.selector)
    n0 = archive_get(entries, "x_out").shape[0]
    stage_attn = [
        (
            archive_get(entries, f"attn_text_{i}"),
            archive_get(entries, f"attn_t2v_{i}"),
        )
        for i in range(len(schedule.stages))
    ]
    trace = run_prune(n0, stage_attn, schedule, selector)
    save_archive(args.out, trace_entries(trace))
    counts = ",".join(str(c) for c in trace.counts)
    print(f"pruned {n0} -> [{counts}] at layers {list(schedule.boundaries)}")
    return EXIT_OK


def _cmd_pipeline(args) -> int:
    entries = load_archive(args.inp)
    cc = _cc_from(args)
    schedule = _schedule_from(args)
    selector = parse_selector(args.selector)
    trace = run_pipeline(
        entries, cc, schedule, selector,
        base_tokens=args.base, d_model=args.d_model,
    )
    save_archive(args.out, pipeline_entries(trace, cc))
    b = trace.budget
    print(
        f"pipeline: n0={b.n0} avg={_fmt(b.average)} "
        f"reduction={_fmt(b.reduction_pct)}% flops={_fmt(b.flop_proxy)}"
    )
    return EXIT_OK


def _write_report(out: str | None, payload: str, png: bytes | None) -> None:
    """Payload to stdout or to a file; figure lands next to the file."""
    if out is None:
        sys.stdout.write(payload)
        return
    _atomic_write_bytes(out, payload.encode("utf-8"))
    if png is not None:
        _atomic_write_bytes(str(Path(out).with_suffix(".png")), png)


def _cmd_budget(args) -> int:
    schedule = _schedule_from(args)
    report = average_tokens(
        args.n0, schedule, base_tokens=args.base, d_model=args.d_model
    )
    lines = []
    for row in budget_records(report):
        clean = {
            k: (float(_fmt(v)) if isinstance(v, float) else v)
            for k, v in row.items()
        }
        lines.append(json.dumps(clean, separators=(",", ":")))
    payload = "\n".join(lines) + "\n"
    png = None
    if args.out is not None and not args.no_plot:
        png = plots.budget_figure(report)
    _write_report(args.out, payload, png)
    if args.out is not None:
        print(f"wrote {args.out}: avg={_fmt(report.average)}")
    return EXIT_OK


def _cmd_plan(args) -> int:
    schedule = _schedule_from(args)
    print(plan_entry_tokens(args.target, schedule))
    return EXIT_OK


def _cmd_sweep(args) -> int:
    entries = load_archive(args.inp)
    sep = ";" if args.sweep_axis == "stage_layout" else ","
    values = tuple(v.strip() for v in args.sweep_values.split(sep) if v.strip())
    spec = SweepSpec(
        axis=args.sweep_axis,
        values=values,
        cc=_cc_from(args),
        schedule=_schedule_from(args),
        selector=parse_selector(args.selector),
        metric=args.metric,
    )
    rows = run_sweep(entries, spec)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow([spec.axis, spec.metric, "error"])
    for row in rows:
        writer.writerow(
            [row.value, "" if row.metric is None else _fmt(row.metric), row.error]
        )
    png = None
    if args.out is not None and not args.no_plot:
        png = plots.sweep_figure(spec.axis, rows, spec.metric)
    _write_report(args.out, buf.getvalue(), png)
    failed = sum(1 for r in rows if r.metric is None)
    if args.out is not None:
        print(f"wrote {args.out}: {len(rows)} rows, {failed} failed")
    return EXIT_OK


def _cmd_heatmap(args) -> int:
    entries = load_archive(args.inp)
    schedule = _schedule_from(args)
    selector = parse_selector(args.selector)
    n0 = archive_get(entries, "x_out").shape[0]
    stage_attn = [
        (
            archive_get(entries, f"attn_text_{i}"),
            archive_get(entries, f"attn_t2v_{i}"),
        )
        for i in range(len(schedule.stages))
    ]
    trace = run_prune(n0, stage_attn, schedule, selector)
    out_entries: dict[str, np.ndarray] = {}
    figures: list[tuple[str, bytes]] = []
    stem = Path(args.out)
    for i, st in enumerate(trace.stages):
        if st.heat.size == 0:
            continue
        out_entries[f"heat_{i}"] = st.heat
        if not args.no_plot:
            title = f"stage {i} (layer {st.layer}), salient rows {list(st.salient)}"
            figures.append(
                (
                    str(stem.with_name(f"{stem.stem}_stage{i}.png")),
                    plots.heatmap_figure(st.heat, title),
                )
            )
    if not out_entries:
        raise ConfigError("no non-empty stages to export")
    save_archive(args.out, out_entries)
    for path, png in figures:
        _atomic_write_bytes(path, png)
    print(f"wrote {args.out}: {len(out_entries)} stage heatmaps")
    return EXIT_OK


_COMMANDS = {
    "generate": _cmd_generate,
    "compress": _cmd_compress,
    "prune": _cmd_prune,
    "pipeline": _cmd_pipeline,
    "budget": _cmd_budget,
    "plan": _cmd_plan,
    "sweep": _cmd_sweep,
    "heatmap": _cmd_heatmap,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse handles usage and --help itself
        return int(exc.code or 0)
    try:
        return _COMMANDS[args.cmd](args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except TensorFormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_TENSOR
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_TENSOR
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except EngineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except Exception as exc:  # noqa: BLE001  anything else is an internal bug
        print(f"internal error: {exc!r}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    raise SystemExit(main())
