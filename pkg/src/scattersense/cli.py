"""Command-line entry point: gen, train, infer, baseline, eval, report, experiment.

Every subcommand prints one JSON document on stdout. Failures exit with
status 2 and print ``{"error": ..., "message": ...}`` instead.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from scattersense.config import SystemConfig
from scattersense.dataset import generate, read_dataset, write_dataset
from scattersense.metrics import aggregate, sample_metrics

log = logging.getLogger("scattersense")


def _snr(value: str):
    return None if value.lower() in ("none", "inf", "clean") else float(value)


def cmd_gen(args) -> dict:
    config = SystemConfig.from_json(Path(args.system).read_text()) if args.system else SystemConfig()
    ds = generate(args.seed, args.count, config, (args.ns_min, args.ns_max), args.snr, args.split)
    manifest = write_dataset(args.out, ds)
    return {"dataset": str(args.out), "count": manifest["count"], "split": ds.split, "seed": ds.seed}


def cmd_train(args) -> dict:
    from scattersense.experiment import train_from_spec

    spec = json.loads(Path(args.config).read_text())
    base = Path(args.config).parent
    for split in spec.get("data", {}).values():
        if "path" in split and not Path(split["path"]).is_absolute():
            split["path"] = str(base / split["path"])
    _, summary = train_from_spec(spec, args.out)
    return {"checkpoint": str(Path(args.out) / "model.ckpt"), **summary}


def cmd_infer(args) -> dict:
    from scattersense.experiment import detector_positions, predictions_doc
    from scattersense.nn.checkpoint import load_checkpoint
    from scattersense.nn.detector import Detector

    params, det_cfg, _ = load_checkpoint(args.ckpt)
    ds = read_dataset(args.input)
    dets, pos = detector_positions(Detector(det_cfg, params), ds, args.t1, args.td)
    doc = predictions_doc("detector", ds, pos, dets)
    Path(args.out).write_text(json.dumps(doc))
    return {"predictions": str(args.out), "count": doc["count"], "n_est": sum(len(p) for p in pos)}


def cmd_baseline(args) -> dict:
    from scattersense.baseline import METHOD
    from scattersense.experiment import baseline_positions, predictions_doc

    ds = read_dataset(args.input)
    pos, meta = baseline_positions(ds, args.k)
    doc = predictions_doc(METHOD, ds, pos, meta=meta)
    Path(args.out).write_text(json.dumps(doc))
    return {"predictions": str(args.out), "count": doc["count"], "n_est": sum(len(p) for p in pos)}


def cmd_eval(args) -> dict:
    pred = json.loads(Path(args.pred).read_text())
    ds = read_dataset(args.truth)
    if pred.get("kind") != "predictions" or pred["count"] != len(ds):
        raise ValueError(f"{args.pred} does not hold predictions for {len(ds)} samples")
    per_sample = []
    for entry in pred["samples"]:
        est = [(p["x_m"], p["y_m"]) for p in entry["positions"]]
        per_sample.append(sample_metrics(ds.scenes[entry["index"]].scatter_array(), est, args.r))
    rep = aggregate(per_sample, method=pred["method"], snr_db=ds.header()["snr_db"], n_s_range=list(ds.n_s_range), r=args.r)
    if args.out:
        from scattersense.experiment import write_reports

        Path(args.out).mkdir(parents=True, exist_ok=True)
        write_reports([rep], args.out)
    return rep.to_dict()


def cmd_report(args) -> dict:
    from scattersense.experiment import load_reports, render_plots, write_reports

    reports = [rep for path in args.runs for rep in load_reports(path)]
    if not reports:
        raise ValueError("no reports found in --runs")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    csv_path, json_path = write_reports(reports, out)
    figs = render_plots(reports, out)
    return {"csv": str(csv_path), "json": str(json_path), "figures": [str(p) for p in figs], "rows": len(reports)}


def cmd_experiment(args) -> dict:
    from scattersense.experiment import ExperimentConfig, report_row, run_experiment

    cfg = ExperimentConfig.load(args.config)
    reports = run_experiment(cfg, args.out)
    return {"name": cfg.name, "out": str(args.out), "results": [report_row(r) for r in reports]}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="scattersense", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="synthesize a dataset file")
    g.add_argument("--seed", type=int, required=True)
    g.add_argument("--count", type=int, required=True)
    g.add_argument("--split", default="train")
    g.add_argument("--ns-min", type=int, default=5)
    g.add_argument("--ns-max", type=int, default=10)
    g.add_argument("--snr", type=_snr, default=None, help="estimation SNR in dB (default noiseless)")
    g.add_argument("--system", help="JSON system config (default: built-in)")
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen)

    t = sub.add_parser("train", help="train a detector from a JSON config")
    t.add_argument("--config", required=True)
    t.add_argument("--out", required=True, help="output directory")
    t.set_defaults(func=cmd_train)

    i = sub.add_parser("infer", help="run a trained detector on a dataset")
    i.add_argument("--ckpt", required=True)
    i.add_argument("--input", required=True)
    i.add_argument("--out", required=True)
    i.add_argument("--t1", type=float, default=0.5)
    i.add_argument("--td", type=float, default=4.0)
    i.set_defaults(func=cmd_infer)

    b = sub.add_parser("baseline", help="run MUSIC-FFT on a dataset")
    b.add_argument("--k", type=int, default=None, help="assumed scatter count (default: true count)")
    b.add_argument("--input", required=True)
    b.add_argument("--out", required=True)
    b.set_defaults(func=cmd_baseline)

    e = sub.add_parser("eval", help="score predictions against a dataset")
    e.add_argument("--pred", required=True)
    e.add_argument("--truth", required=True)
    e.add_argument("--r", type=float, default=1.0)
    e.add_argument("--out", help="directory for results.csv/json")
    e.set_defaults(func=cmd_eval)

    r = sub.add_parser("report", help="merge result files into CSV and SVG plots")
    r.add_argument("--runs", nargs="+", required=True)
    r.add_argument("--out", required=True)
    r.set_defaults(func=cmd_report)

    x = sub.add_parser("experiment", help="run a declared sweep from a JSON config")
    x.add_argument("--config", required=True)
    x.add_argument("--out", required=True)
    x.set_defaults(func=cmd_experiment)
    return p


def _jsonable(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, float) and obj != obj:
        return None
    return str(obj)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s", stream=sys.stderr)
    try:
        result = args.func(args)
    except Exception as exc:  # reported as machine-readable JSON
        print(json.dumps({"error": type(exc).__name__, "message": str(exc), "command": args.command}))
        return 2
    print(json.dumps(result, default=_jsonable))
    return 0


if __name__ == "__main__":
    sys.exit(main())
