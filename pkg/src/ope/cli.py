"""Command-line entry point: ``ope {gen-data,train,eval,grid,experiment}``.

Failures exit non-zero with a one-line JSON object on stderr:
``{"error": <kind>, "message": <text>}``.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import numpy as np

from . import data as D
from .config import ConfigError, DatasetSpec, config_from_dict, load_config
from .metrics import GridDump, MetricsReport, grid_eval
from .nn import CheckpointError, load_checkpoint
from .samplers import BoxDomain
from .training import _generate, build_task, evaluate, run_experiment, train_to_dir


def _load_model(path):
    if not os.path.exists(path):
        raise CheckpointError(f"checkpoint not found: {path}")
    net, doc = load_checkpoint(path)
    if "domain" not in doc:
        raise CheckpointError("checkpoint is missing field 'domain'")
    domain = BoxDomain.from_dict(doc["domain"])
    st = D.Standardizer.from_dict(doc["standardizer"]) if doc.get("standardizer") else None
    return net, doc, domain, st


def cmd_gen_data(args):
    if args.config:
        with open(args.config) as fh:
            d = json.load(fh)
        d = d.get("dataset", d)
    else:
        d = {}
    if args.kind:
        d["kind"] = args.kind
    if args.n:
        d["n"] = args.n
    if args.seed is not None:
        d["seed"] = args.seed
    try:
        spec = DatasetSpec(**d)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    if spec.kind == "csv":
        raise ConfigError("gen-data needs a generator kind, not 'csv'")
    ds, _ = _generate(spec, np.random.default_rng(spec.seed))
    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, "data.csv")
    manifest = {"source": spec.kind, "seed": spec.seed, "protocol": {"n": spec.n, "noise": spec.noise}
                if spec.kind.startswith("moons") else {"n": spec.n}}
    D.save_csv(ds, path, manifest)
    return {"csv": path, "rows": len(ds)}


def cmd_train(args):
    cfg = load_config(args.config)
    out = args.out or cfg.out
    if not out:
        raise ConfigError("no output directory: pass --out or set 'out' in the config")
    task, result = train_to_dir(cfg, out, seed=args.seed)
    return {"checkpoint": os.path.join(out, "checkpoint.json"), "steps": result.steps,
            "converged": result.converged, "test_auc": evaluate(result.net, task.test),
            "config_fingerprint": cfg.fingerprint()}


def cmd_eval(args):
    net, doc, domain, st = _load_model(args.checkpoint)
    if args.data:
        class_col = args.class_column
        if class_col is None:
            # files written by gen-data carry an original-class column
            with open(args.data) as fh:
                header = fh.readline().strip().split(",")
            class_col = "class" if "class" in header else None
        ds = D.load_csv(args.data, args.label_column, class_col, split="test")
        if st is not None:
            ds = D.standardize_apply(ds, st)
    else:
        cfg = load_config(args.config) if args.config else config_from_dict(doc["config"])
        ds = build_task(cfg.dataset).test
    auc = evaluate(net, ds)
    report = MetricsReport([auc], [doc.get("rng_seed")], doc.get("config_fingerprint", ""),
                           {"checkpoint": os.path.abspath(args.checkpoint), "n": len(ds)})
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        report.to_json(os.path.join(args.out, "metrics.json"))
    return report.to_dict()


def cmd_grid(args):
    net, doc, domain, st = _load_model(args.checkpoint)
    grid = grid_eval(net, domain, args.resolution)
    if st is not None:
        # report coordinates in the raw input space
        grid = GridDump(grid.xs * st.std[0] + st.mean[0], grid.ys * st.std[1] + st.mean[1], grid.f,
                        BoxDomain(st.inverse(domain.lo), st.inverse(domain.hi)))
    out = args.out or "."
    os.makedirs(out, exist_ok=True)
    fp = doc.get("config_fingerprint")
    grid.save_csv(os.path.join(out, "grid.csv"), fp)
    grid.save_pgm(os.path.join(out, "grid.pgm"), fp)
    return {"csv": os.path.join(out, "grid.csv"), "pgm": os.path.join(out, "grid.pgm"),
            "f_min": float(grid.f.min()), "f_max": float(grid.f.max())}


def cmd_experiment(args):
    cfg = load_config(args.config)
    report = run_experiment(cfg, args.trials, args.seed)
    out = args.out or cfg.out
    if out:
        os.makedirs(out, exist_ok=True)
        report.to_json(os.path.join(out, "report.json"))
    return report.to_dict()


def build_parser():
    p = argparse.ArgumentParser(prog="ope", description="train and evaluate anomaly detectors with a sampled negative phase")
    sub = p.add_subparsers(dest="verb", required=True)

    g = sub.add_parser("gen-data", help="write a synthetic dataset as CSV + manifest")
    g.add_argument("--config")
    g.add_argument("--kind", choices=["moons", "moons_ring", "two_disks"])
    g.add_argument("--n", type=int)
    g.add_argument("--seed", type=int)
    g.add_argument("--out", required=True)
    g.set_defaults(fn=cmd_gen_data)

    t = sub.add_parser("train", help="train one model from a JSON config")
    t.add_argument("--config", required=True)
    t.add_argument("--seed", type=int)
    t.add_argument("--out")
    t.set_defaults(fn=cmd_train)

    e = sub.add_parser("eval", help="test AUC of a checkpoint")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--config")
    e.add_argument("--data", help="CSV file to score instead of the config's test split")
    e.add_argument("--label-column", default="label")
    e.add_argument("--class-column", help="non-feature class-id column (default: 'class' if present)")
    e.add_argument("--out")
    e.set_defaults(fn=cmd_eval)

    r = sub.add_parser("grid", help="dump f over the checkpoint's domain (2-D only)")
    r.add_argument("--checkpoint", required=True)
    r.add_argument("--resolution", type=int, default=101)
    r.add_argument("--out")
    r.set_defaults(fn=cmd_grid)

    x = sub.add_parser("experiment", help="repeated trials with mean/std AUC")
    x.add_argument("--config", required=True)
    x.add_argument("--trials", type=int, default=5)
    x.add_argument("--seed", type=int)
    x.add_argument("--out")
    x.set_defaults(fn=cmd_experiment)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(message)s", stream=sys.stderr)
    try:
        result = args.fn(args)
    except (ConfigError, CheckpointError, D.DataFormatError) as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 1
    print(json.dumps(result, indent=2))
    return 0


if __name__ == "__main__":
    sys.exit(main())
