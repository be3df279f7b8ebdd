"""Command-line entry point.

Every subcommand accepts ``--config``, ``--seed`` and ``--out``. Settings are
resolved as preset (``--preset``) < config file < ``--set key=value`` < the
dedicated flags, and the effective config is written into each output
directory as ``config.json``.

Exit codes: 0 success, 1 gradient check failure, 2 config error, 3 data
error, 4 numeric error.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import pipeline
from .config import PRESETS, RunConfig, apply_overrides, config_from_dict, load_config, preset
from .data import synth_metro, write_edges, write_ridership_csv, write_trips
from .errors import ConfigError, DataError, NumericError, ShapeError
from .gradsuite import group_errors, run_suite
from .graphs import load_graph_set, save_graph_set
from .model import VARIANTS, parameter_count
from .training import export_predictions

EXIT_OK, EXIT_GRADCHECK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3, 4


def _echo(msg: str) -> None:
    print(msg, file=sys.stderr, flush=True)


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def resolve_config(args, base: RunConfig | None = None) -> RunConfig:
    cfg = base or RunConfig()
    if args.preset:
        cfg = preset(args.preset)
    if args.config:
        cfg = load_config(args.config)
    overrides = {}
    for item in args.set or []:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        overrides[key] = _parse_value(value)
    overrides.update({"seed": args.seed, "out": args.out})
    return apply_overrides(cfg, overrides)


def _out_dir(cfg: RunConfig, default: str) -> Path:
    out = Path(cfg.out or default)
    out.mkdir(parents=True, exist_ok=True)
    cfg.save(out / "config.json")
    return out


def _graphs(cfg: RunConfig, train_ds, graph, trips, k_hops=None):
    if cfg.data.graphs_dir:
        return load_graph_set(cfg.data.graphs_dir)
    return pipeline.build_graphs(cfg, train_ds, graph, trips, k_hops)


def _prepare(cfg: RunConfig, k_hops=None):
    ds, graph, trips = pipeline.load_inputs(cfg)
    tr, _, _ = pipeline.chronological_split(ds, *cfg.data.split)
    gs = _graphs(cfg, tr, graph, trips, k_hops)
    return pipeline.prepare(cfg, ds, graph, trips, graphs=gs)


def _progress(quiet: bool):
    if quiet:
        return None

    def log(row):
        _echo(f"epoch {row['epoch']:4d}  loss {row['train_loss']:.5f}  val MAE {row['val_mae']:.4f}  lr {row['lr']:.2e}")
    return log


# -- subcommands ----------------------------------------------------------------


def cmd_synth(args) -> int:
    cfg = resolve_config(args, preset("desk"))
    out = Path(cfg.out or "synth")
    out.mkdir(parents=True, exist_ok=True)
    m = synth_metro(args.stations, args.days, args.steps_per_day, seed=cfg.seed, od_hops=args.od_hops,
                    shock_sigma=args.shock_sigma, idio_sigma=args.idio_sigma, scale=tuple(args.scale))
    split = list(cfg.data.split)
    if sum(split) != args.days:
        val = max(1, round(args.days * 0.15))
        split = [args.days - 2 * val, val, val]
    write_ridership_csv(m.dataset, out / "ridership.csv")
    write_edges(m.graph, out / "edges.csv")
    # only training-day trips, so OD weights never see validation or test days
    write_trips(m.trips.aggregate(days=range(split[0])), out / "trips.csv")
    data = {"data.ridership": str(out / "ridership.csv"), "data.edges": str(out / "edges.csv"),
            "data.trips": str(out / "trips.csv"), "data.n": args.stations, "data.split": split,
            "data.interval": m.dataset.interval_minutes, "out": None}
    apply_overrides(cfg, data).save(out / "config.json")
    (out / "roles.json").write_text(json.dumps({"roles": m.roles}, indent=2) + "\n")
    _echo(f"wrote {args.stations} stations x {args.days} days to {out}")
    return EXIT_OK


def cmd_build_graphs(args) -> int:
    cfg = resolve_config(args)
    ds, graph, trips = pipeline.load_inputs(cfg)
    tr, _, _ = pipeline.chronological_split(ds, *cfg.data.split)
    gs = pipeline.build_graphs(cfg, tr, graph, trips)
    out = _out_dir(cfg, "graphs")
    digest = save_graph_set(gs, out)
    print(json.dumps({"graphs": str(out), "k_max": gs.k_max, "graph_hash": digest}))
    return EXIT_OK


def _train_one(cfg: RunConfig, prep, out: Path, quiet: bool, split: str = "test"):
    spec, result = pipeline.fit(prep, cfg, _progress(quiet))
    pipeline.save_run(out, cfg, spec, result, prep.stats, prep.graphs)
    if not cfg.data.graphs_dir:
        save_graph_set(prep.graphs, out / "graphs")
    report = pipeline.evaluate_split(prep, spec, result.params, split)
    report.save(out / f"eval_{split}.json")
    return spec, result, report


def cmd_train(args) -> int:
    cfg = resolve_config(args)
    prep = _prepare(cfg)
    out = _out_dir(cfg, "run")
    started = time.perf_counter()
    _, result, report = _train_one(cfg, prep, out, args.quiet)
    _echo(f"best epoch {result.best_epoch}, {time.perf_counter() - started:.1f}s")
    print(json.dumps({"run": str(out), "best_epoch": result.best_epoch,
                      "test_mae": {k: v["combined"]["MAE"] for k, v in report.horizons.items()}}))
    return EXIT_OK


def _load_for_run(args):
    run = Path(args.run)
    if not (run / "config.json").exists():
        raise DataError(f"{run} has no config.json; is it a training run directory?")
    cfg = resolve_config(args, config_from_dict(json.loads((run / "config.json").read_text())))
    graphs_dir = args.graphs or cfg.data.graphs_dir or run / "graphs"
    gs = load_graph_set(graphs_dir)
    prep = _prepare(apply_overrides(cfg, {"data.graphs_dir": str(graphs_dir)}))
    spec, params, _ = pipeline.load_run(run, gs)
    return cfg, prep, spec, params


def cmd_evaluate(args) -> int:
    cfg, prep, spec, params = _load_for_run(args)
    report = pipeline.evaluate_split(prep, spec, params, args.split)
    out = _out_dir(cfg, str(Path(args.run) / "eval"))
    report.save(out / f"eval_{args.split}.json")
    print(json.dumps(report.to_dict()["horizons"], sort_keys=True, default=float))
    return EXIT_OK


def write_curves(path, prep, split: str, y_pred: np.ndarray) -> None:
    """Per-station predicted vs true series, one row per (target time, horizon, station, channel)."""
    w = getattr(prep, split)
    ds = getattr(prep, f"{split}_ds")
    t_in = prep.cfg.model.t_in
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(["timestamp", "horizon_step", "station_id", "channel", "y_true", "y_pred"])
        for s in range(w.count):
            for h in range(y_pred.shape[1]):
                stamp = ds.timestamp(int(w.day[s]), int(w.offset[s]) + t_in + h)
                for i in range(y_pred.shape[2]):
                    for c, name in enumerate(("inflow", "outflow")):
                        out.writerow([stamp, h + 1, i, name, repr(float(w.y_raw[s, h, i, c])),
                                      repr(float(y_pred[s, h, i, c]))])


def cmd_predict(args) -> int:
    cfg, prep, spec, params = _load_for_run(args)
    report, pred = pipeline.evaluate_split(prep, spec, params, args.split, return_predictions=True)
    out = _out_dir(cfg, str(Path(args.run) / "predict"))
    export_predictions(out / "predictions.csv", getattr(prep, args.split).y_raw, pred)
    write_curves(out / "curves.csv", prep, args.split, pred)
    report.save(out / f"eval_{args.split}.json")
    print(json.dumps({"predictions": str(out / "predictions.csv"), "curves": str(out / "curves.csv")}))
    return EXIT_OK


def _horizon_rows(report):
    for key, cells in report.horizons.items():
        c = cells["combined"]
        yield key, c["MAE"], c["RMSE"], c["MAPE"]


def sweep_k(cfg: RunConfig, k_values, out: Path, split: str = "val", quiet: bool = True) -> dict[int, object]:
    """Train one model per K on a shared graph set built once at the largest K."""
    ds, graph, trips = pipeline.load_inputs(cfg)
    tr, _, _ = pipeline.chronological_split(ds, *cfg.data.split)
    full = _graphs(cfg, tr, graph, trips, max(k_values))
    if full.k_max < max(k_values):
        raise ConfigError(f"graph set has {full.k_max} hops, sweep needs {max(k_values)}")
    reports = {}
    for k in k_values:
        run_cfg = apply_overrides(cfg, {"fdgcn.k_hops": k, "data.graphs_dir": None})
        prep = pipeline.prepare(run_cfg, ds, graph, trips, graphs=full.truncated(k))
        _, _, reports[k] = _train_one(run_cfg, prep, out / f"K{k}", quiet, split)
        if not quiet:
            _echo(f"K={k}: mean {split} MAE {reports[k].mean_mae():.4f}")
    return reports


def cmd_sweep_k(args) -> int:
    cfg = resolve_config(args)
    if args.k_min < 1 or args.k_max < args.k_min:
        raise ConfigError("sweep-k needs 1 <= --k-min <= --k-max")
    out = _out_dir(cfg, "sweep_k")
    reports = sweep_k(cfg, range(args.k_min, args.k_max + 1), out, args.split, args.quiet)
    with open(out / "sweep_k.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["K", "horizon", "MAE", "RMSE"])
        for k, report in reports.items():
            for horizon, mae, rmse, _ in _horizon_rows(report):
                w.writerow([k, horizon, repr(mae), repr(rmse)])
    best = min(reports, key=lambda k: reports[k].mean_mae())
    print(json.dumps({"best_k": best, "mean_mae": {k: r.mean_mae() for k, r in reports.items()}}))
    return EXIT_OK


def ablate(cfg: RunConfig, out: Path, variants=VARIANTS, split: str = "val", quiet: bool = True) -> dict:
    ds, graph, trips = pipeline.load_inputs(cfg)
    tr, _, _ = pipeline.chronological_split(ds, *cfg.data.split)
    gs = _graphs(cfg, tr, graph, trips)
    results = {}
    for tag in variants:
        run_cfg = apply_overrides(cfg, {"ablation": tag})
        prep = pipeline.prepare(run_cfg, ds, graph, trips, graphs=gs)
        _, result, report = _train_one(run_cfg, prep, out / tag, quiet, split)
        results[tag] = (report, parameter_count(result.params))
        if not quiet:
            _echo(f"{tag}: mean {split} MAE {report.mean_mae():.4f}")
    return results


def cmd_ablate(args) -> int:
    cfg = resolve_config(args)
    out = _out_dir(cfg, "ablate")
    results = ablate(cfg, out, VARIANTS, args.split, args.quiet)
    with open(out / "ablation.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["variant", "horizon", "MAE", "RMSE", "MAPE", "parameter_count"])
        for tag, (report, count) in results.items():
            for horizon, mae, rmse, mape in _horizon_rows(report):
                w.writerow([tag, horizon, repr(mae), repr(rmse), repr(mape), count])
    print(json.dumps({tag: r.mean_mae() for tag, (r, _) in results.items()}))
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    cfg = resolve_config(args)
    entries = run_suite(cfg.seed, include_model=not args.skip_model, inject=args.inject_wrong_sign)
    doc = {"seed": cfg.seed, "passed": all(e.passed for e in entries), "checks": []}
    for e in entries:
        doc["checks"].append({"name": e.name, "passed": e.passed, "tolerance": e.report.tolerance,
                              "max_rel_error": e.report.worst, "groups": group_errors(e.report)})
        print(f"{'ok  ' if e.passed else 'FAIL'} {e.name:<20} max rel err {e.report.worst:.2e}"
              f" (tol {e.report.tolerance:.0e})")
    if cfg.out:
        out = _out_dir(cfg, cfg.out)
        (out / "gradcheck.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return EXIT_OK if doc["passed"] else EXIT_GRADCHECK


# -- parser -------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run config")
    common.add_argument("--seed", type=int, help="random seed (overrides the config)")
    common.add_argument("--out", help="output directory")
    common.add_argument("--preset", choices=sorted(PRESETS), help="start from a named preset instead of the defaults")
    common.add_argument("--set", action="append", metavar="KEY=VALUE",
                        help="override a dotted config key, e.g. --set fdgcn.k_hops=3 (repeatable)")
    common.add_argument("--quiet", action="store_true", help="suppress per-epoch progress")

    parser = argparse.ArgumentParser(prog="pbgru", description="Metro passenger-volume forecasting")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[common], help="generate a synthetic metro dataset")
    p.add_argument("--stations", type=int, default=8)
    p.add_argument("--days", type=int, default=20)
    p.add_argument("--steps-per-day", type=int, default=24)
    p.add_argument("--od-hops", type=int, default=2)
    p.add_argument("--shock-sigma", type=float, default=0.35)
    p.add_argument("--idio-sigma", type=float, default=0.1)
    p.add_argument("--scale", type=float, nargs=2, default=(400.0, 600.0), metavar=("LO", "HI"),
                   help="range of per-station peak demand")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("build-graphs", parents=[common], help="build graph matrices from the training split")
    p.set_defaults(func=cmd_build_graphs)

    p = sub.add_parser("train", parents=[common], help="train a model and evaluate it on the test split")
    p.set_defaults(func=cmd_train)

    for name, func, text in (("evaluate", cmd_evaluate, "evaluate a trained run"),
                             ("predict", cmd_predict, "export predictions and plot-ready curves")):
        p = sub.add_parser(name, parents=[common], help=text)
        p.add_argument("--run", required=True, help="training run directory")
        p.add_argument("--graphs", help="graph directory (defaults to the run's graphs)")
        p.add_argument("--split", choices=("train", "val", "test"), default="test")
        p.set_defaults(func=func)

    p = sub.add_parser("sweep-k", parents=[common], help="train one model per hop count K")
    p.add_argument("--k-min", type=int, default=1)
    p.add_argument("--k-max", type=int, default=5)
    p.add_argument("--split", choices=("val", "test"), default="val")
    p.set_defaults(func=cmd_sweep_k)

    p = sub.add_parser("ablate", parents=[common], help="train every ablation variant")
    p.add_argument("--split", choices=("val", "test"), default="val")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("gradcheck", parents=[common], help="finite-difference gradient suite")
    p.add_argument("--skip-model", action="store_true", help="skip the end-to-end model check")
    p.add_argument("--inject-wrong-sign", metavar="OP", help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        _echo(f"config error: {exc}")
        return EXIT_CONFIG
    except (DataError, ShapeError) as exc:
        _echo(f"data error: {exc}")
        return EXIT_DATA
    except NumericError as exc:
        _echo(f"numeric error: {exc}")
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
