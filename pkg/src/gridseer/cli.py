"""``gridseer`` command line.

Exit status: 0 ok, 1 runtime failure, 2 invalid input, 3 registry failure,
4 verification failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import bundle as bundle_mod
from .catalog import QuestionId, aggregate_cluster, merge_models, resolve_question, summarize, summary_csv, surface
from .errors import GridseerError, InvalidInput
from .models import Metrics
from .pipeline import default_config, train_question
from .registry import RegistryClient, RegistryServer, RegistryStore
from .synth import SynthConfig, write_synth
from .telemetry import (
    Agg,
    Resolution,
    ZScore,
    build_series,
    flag_outliers,
    format_number,
    format_timestamp,
    infer_interval,
    node_ids,
    parse_csv,
    parse_timestamp,
    resample,
)

log = logging.getLogger("gridseer")


class Output:
    def __init__(self, as_json: bool):
        self.as_json = as_json

    def emit(self, doc: dict, text: str) -> None:
        if self.as_json:
            print(json.dumps(doc, sort_keys=True))
        else:
            print(text)


def _read(path: str) -> bytes:
    try:
        return Path(path).read_bytes()
    except FileNotFoundError:
        raise InvalidInput(f"no such file: {path}") from None
    except IsADirectoryError:
        raise InvalidInput(f"is a directory: {path}") from None


def _metrics_text(label: str, m: Metrics | None) -> str:
    if m is None:
        return f"{label}: no ground truth"
    return f"{label}: MAE={m.mae:.4f} MSE={m.mse:.4f} n={m.n}"


def _registry_url(args) -> str:
    url = args.registry or os.environ.get("GRIDSEER_REGISTRY")
    if not url:
        raise InvalidInput("no registry URL: pass --registry or set GRIDSEER_REGISTRY")
    return url


# ---------------------------------------------------------------------------
# commands


def cmd_validate(args, out: Output) -> int:
    records = parse_csv(_read(args.input))
    nodes = []
    for node in node_ids(records):
        interval = infer_interval(records, node)
        series = build_series(records, node, interval)
        mask = flag_outliers(series, ZScore(args.zscore))
        ts = series.timestamps
        nodes.append(
            {
                "node_id": node,
                "rows": sum(1 for r in records if r.node_id == node),
                "interval": interval,
                "first": format_timestamp(ts[0]),
                "last": format_timestamp(ts[-1]),
                "outliers_flagged": mask.count,
            }
        )
    lines = [f"{args.input}: {len(records)} rows, {len(nodes)} node(s), valid"]
    for n in nodes:
        lines.append(
            f"  {n['node_id']}: {n['rows']} rows every {n['interval']} s, {n['first']} .. {n['last']}, "
            f"{n['outliers_flagged']} row(s) beyond {args.zscore} sd"
        )
    out.emit({"rows": len(records), "nodes": nodes, "valid": True}, "\n".join(lines))
    return 0


def cmd_train(args, out: Output) -> int:
    spec = resolve_question(args.question, args.target)
    records = parse_csv(_read(args.input))
    node = args.node
    interval = args.interval or infer_interval(records, node)
    series = build_series(records, node, interval)
    if args.resolution and Resolution(args.resolution) is not Resolution.RAW:
        series = resample(series, Resolution(args.resolution), Agg.MEAN)
        spec = replace(spec, resolution=Resolution(args.resolution))
    overrides = {"seed": args.seed}
    if args.epochs is not None:
        overrides["epochs"] = args.epochs
    if args.learning_rate is not None:
        overrides["learning_rate"] = args.learning_rate
    config = default_config(spec.model_family, **overrides)
    init = bundle_mod.load_bundle(args.init_from) if args.init_from else None
    outcome = train_question(spec, series, config, init=init, publisher=args.publisher)
    blob = bundle_mod.save_bundle(outcome.bundle, args.out)
    bundle_id = bundle_mod.bundle_digest(blob)
    doc = {
        "bundle": args.out,
        "bundle_id": bundle_id,
        "question": spec.id.value,
        "target": spec.target,
        "train_rows": outcome.n_train,
        "test_rows": outcome.n_test,
        "epochs_run": len(outcome.history),
        "test": outcome.test_metrics.as_dict(),
        "test_normalized": outcome.test_metrics_normalized.as_dict(),
        "test_r2": outcome.test_r2,
        "baseline_persistence": outcome.baseline_metrics.as_dict() if outcome.baseline_metrics else None,
    }
    lines = [
        f"trained {spec.id.value} -> {spec.target} on {outcome.n_train} rows, tested on {outcome.n_test}",
        _metrics_text("test", outcome.test_metrics) + f" R2={outcome.test_r2:.4f}",
    ]
    if outcome.baseline_metrics:
        lines.append(_metrics_text("persistence baseline", outcome.baseline_metrics))
    lines.append(f"wrote {args.out} ({bundle_id})")
    out.emit(doc, "\n".join(lines))
    return 0


def cmd_run(args, out: Output) -> int:
    b = bundle_mod.unpack(_read(args.bundle))
    report = bundle_mod.run_bundle(b, args.input_dir, args.output_dir)
    doc = {
        "rows_read": report.rows_read,
        "predictions_written": report.predictions_written,
        "metrics": report.metrics.as_dict() if report.metrics else None,
        "wall_time": report.wall_time,
    }
    text = (
        f"read {report.rows_read} rows, wrote {report.predictions_written} predictions to {args.output_dir}\n"
        + _metrics_text("metrics", report.metrics)
    )
    out.emit(doc, text)
    return 0


def read_predictions(path: str) -> tuple[str, list[int], list[str], np.ndarray]:
    lines = _read(path).decode("utf-8").splitlines()
    if not lines:
        raise InvalidInput(f"{path}: empty predictions file")
    header = lines[0].split(",")
    if len(header) != 3 or header[:2] != ["timestamp", "node_id"] or not header[2].startswith("predicted_"):
        raise InvalidInput(f"{path}: expected header timestamp,node_id,predicted_<target>")
    ts, nodes, vals = [], [], []
    for i, line in enumerate(lines[1:], start=1):
        cells = line.split(",")
        if len(cells) != 3:
            raise InvalidInput(f"{path}: row {i} has {len(cells)} cells")
        try:
            ts.append(parse_timestamp(cells[0]))
            vals.append(float(cells[2]))
        except ValueError as exc:
            raise InvalidInput(f"{path}: row {i}: {exc}") from None
        nodes.append(cells[1])
    return header[2], ts, nodes, np.array(vals)


def cmd_summarize(args, out: Output) -> int:
    _, ts, nodes, vals = read_predictions(args.predictions)
    distinct = list(dict.fromkeys(nodes))
    if args.node:
        keep = [n == args.node for n in nodes]
        ts = [t for t, k in zip(ts, keep) if k]
        vals = vals[np.array(keep, dtype=bool)]
    elif len(distinct) > 1:
        raise InvalidInput(f"predictions cover {len(distinct)} nodes; pick one with --node or aggregate first")
    rows = summarize(vals, ts, Resolution(args.resolution))
    body = summary_csv(rows)
    if args.out:
        Path(args.out).write_text(body)
    doc = {"rows": [{"period_start": format_timestamp(r.period_start), "min": r.min, "avg": r.avg, "max": r.max} for r in rows]}
    out.emit(doc, body.rstrip("\n") if not args.out else f"wrote {len(rows)} rows to {args.out}")
    return 0


def cmd_surface(args, out: Output) -> int:
    b = bundle_mod.unpack(_read(args.bundle))
    stats = b.norm_stats
    x_range = args.x_range or (float(stats.min[0]), float(stats.max[0]))
    y_range = args.y_range or (float(stats.min[1]), float(stats.max[1]))
    grid = surface(b.params, stats, x_range, y_range, args.n)
    Path(args.out).write_text(grid.to_csv())
    out.emit(
        {"out": args.out, "x": grid.x_axis_name, "y": grid.y_axis_name, "n": args.n,
         "z_min": float(grid.z.min()), "z_max": float(grid.z.max())},
        f"wrote {args.n}x{args.n} {b.spec.target} surface over {grid.x_axis_name} x {grid.y_axis_name} to {args.out}",
    )
    return 0


def cmd_aggregate(args, out: Output) -> int:
    columns, series_ts, preds = set(), None, []
    for path in args.inputs:
        column, ts, nodes, vals = read_predictions(path)
        if len(set(nodes)) > 1:
            raise InvalidInput(f"{path} holds several nodes; aggregate one file per node")
        if series_ts is not None and ts != series_ts:
            raise InvalidInput(f"{path}: timestamps are not aligned with {args.inputs[0]}")
        columns.add(column)
        series_ts = ts
        preds.append(vals)
    if len(columns) > 1:
        raise InvalidInput(f"inputs predict different targets: {sorted(columns)}")
    total = aggregate_cluster(preds)
    lines = [f"timestamp,node_id,{columns.pop()}"]
    lines += [f"{format_timestamp(t)},{args.node_id},{format_number(v)}" for t, v in zip(series_ts, total)]
    Path(args.out).write_text("\n".join(lines) + "\n")
    out.emit({"out": args.out, "nodes": len(preds), "rows": len(total)}, f"summed {len(preds)} node(s) into {args.out}")
    return 0


def cmd_publish(args, out: Output) -> int:
    blob = _read(args.bundle)
    bundle_mod.unpack(blob)
    entry = RegistryClient(_registry_url(args)).publish(blob)
    out.emit(entry.to_dict(), f"published {entry.bundle_id} as {entry.question} v{entry.version} by {entry.publisher}")
    return 0


def cmd_pull(args, out: Output) -> int:
    blob = RegistryClient(_registry_url(args)).fetch(args.id)
    bundle_mod.unpack(blob)
    Path(args.out).write_bytes(blob)
    out.emit({"bundle_id": args.id, "out": args.out, "size_bytes": len(blob)}, f"pulled {args.id} to {args.out}")
    return 0


def cmd_list(args, out: Output) -> int:
    entries = RegistryClient(_registry_url(args)).list(args.question)
    lines = [f"{e.bundle_id[:12]}  {e.question:<14} v{e.version:<3} {e.publisher}  {e.created_at}" for e in entries]
    out.emit({"entries": [e.to_dict() for e in entries]}, "\n".join(lines) or "(no bundles)")
    return 0


def cmd_serve(args, out: Output) -> int:
    root = args.dir or os.environ.get("GRIDSEER_REGISTRY_DIR") or "registry"
    server = RegistryServer(RegistryStore(root), args.host, args.port)
    print(f"serving {root} at {server.url}", flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
    return 0


def cmd_synth(args, out: Output) -> int:
    data = json.loads(_read(args.config)) if args.config else {}
    try:
        config = SynthConfig.from_dict(data)
    except (TypeError, ValueError) as exc:
        raise InvalidInput(f"bad synth config: {exc}") from None
    csv_path, gt_path = write_synth(config, args.out_dir)
    out.emit(
        {"telemetry": str(csv_path), "groundtruth": str(gt_path), "nodes": config.nodes, "rows_per_node": config.n_samples},
        f"wrote {config.nodes} node(s) x {config.n_samples} rows to {csv_path}",
    )
    return 0


def cmd_merge(args, out: Output) -> int:
    bundles = [bundle_mod.unpack(_read(p)) for p in args.inputs]
    weights = args.weights or [1.0] * len(bundles)
    if len(weights) != len(bundles):
        raise InvalidInput("need one weight per input bundle")
    first = bundles[0]
    for b in bundles[1:]:
        if (b.manifest.question, b.manifest.target_column) != (first.manifest.question, first.manifest.target_column):
            raise InvalidInput("bundles answer different questions")
        if b.norm_stats != first.norm_stats:
            raise InvalidInput("bundles use different normalization; train members with --init-from a shared base")
    merged = merge_models([b.params for b in bundles], weights)
    ids = [bundle_mod.bundle_digest(_read(p))[:16] for p in args.inputs]
    note = "merged " + " ".join(f"{i}*{format_number(w)}" for i, w in zip(ids, weights))
    manifest = replace(
        first.manifest,
        publisher=args.publisher,
        created_at=max(b.manifest.created_at for b in bundles),
        train_fingerprint=note[: bundle_mod.MAX_FINGERPRINT],
        bundle_id="",
    )
    blob = bundle_mod.save_bundle(bundle_mod.ModelBundle(manifest, first.norm_stats, merged), args.out)
    bundle_id = bundle_mod.bundle_digest(blob)
    out.emit({"out": args.out, "bundle_id": bundle_id, "inputs": len(bundles)}, f"merged {len(bundles)} bundles into {args.out} ({bundle_id})")
    return 0


# ---------------------------------------------------------------------------
# parser


def _range(text: str) -> tuple[float, float]:
    try:
        lo, hi = (float(v) for v in text.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError("range must look like LO:HI") from None
    return lo, hi


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gridseer", description="Telemetry forecasting models that travel to the data.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help):
        p = sub.add_parser(name, help=help)
        p.add_argument("--json", action="store_true", help="machine-readable output")
        p.set_defaults(func=func)
        return p

    p = add("validate", cmd_validate, "check a telemetry CSV")
    p.add_argument("--input", required=True)
    p.add_argument("--zscore", type=float, default=6.0, help="outlier report threshold (sd)")

    p = add("train", cmd_train, "train a model for one question and pack it")
    p.add_argument("--question", required=True, choices=[q.value for q in QuestionId])
    p.add_argument("--input", required=True)
    p.add_argument("--node", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epochs", type=int)
    p.add_argument("--learning-rate", type=float)
    p.add_argument("--resolution", choices=[r.value for r in Resolution], default=Resolution.RAW.value)
    p.add_argument("--target", help="ResourceUsage target column")
    p.add_argument("--interval", type=int, help="sampling interval in seconds (inferred by default)")
    p.add_argument("--publisher", default="anonymous")
    p.add_argument("--init-from", help="start from this bundle's parameters and normalization")

    p = add("run", cmd_run, "run a bundle on an input directory")
    p.add_argument("--bundle", required=True)
    p.add_argument("--input-dir", required=True)
    p.add_argument("--output-dir", required=True)

    p = add("summarize", cmd_summarize, "min/avg/max of predictions per period")
    p.add_argument("--predictions", required=True)
    p.add_argument("--resolution", required=True, choices=["Daily", "Weekly", "Monthly"])
    p.add_argument("--node")
    p.add_argument("--out")

    p = add("surface", cmd_surface, "tabulate a two-input model over a grid")
    p.add_argument("--bundle", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--n", type=int, default=50)
    p.add_argument("--x-range", type=_range)
    p.add_argument("--y-range", type=_range)

    p = add("aggregate", cmd_aggregate, "sum aligned node predictions to a cluster total")
    p.add_argument("--inputs", required=True, nargs="+")
    p.add_argument("--out", required=True)
    p.add_argument("--node-id", default="cluster")

    p = add("publish", cmd_publish, "upload a bundle to a registry")
    p.add_argument("--bundle", required=True)
    p.add_argument("--registry")

    p = add("pull", cmd_pull, "download a bundle by id")
    p.add_argument("--id", required=True)
    p.add_argument("--registry")
    p.add_argument("--out", required=True)

    p = add("list", cmd_list, "list bundles in a registry")
    p.add_argument("--registry")
    p.add_argument("--question", choices=[q.value for q in QuestionId])

    p = add("serve", cmd_serve, "run a registry server")
    p.add_argument("--port", type=int, default=8470)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--dir", help="store directory (default $GRIDSEER_REGISTRY_DIR)")

    p = add("synth", cmd_synth, "generate synthetic telemetry with ground truth")
    p.add_argument("--config", help="JSON synth config (defaults used when omitted)")
    p.add_argument("--out-dir", required=True)

    p = add("merge", cmd_merge, "weighted parameter average of compatible bundles")
    p.add_argument("--inputs", required=True, nargs="+")
    p.add_argument("--weights", type=float, nargs="+")
    p.add_argument("--out", required=True)
    p.add_argument("--publisher", default="merged")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    out = Output(args.json)
    try:
        return args.func(args, out)
    except GridseerError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
