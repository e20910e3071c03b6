"""Command-line interface: ``mdfl synth | ingest | features | train | predict | eval``.

Global options go before the subcommand. ``--config FILE`` reads ``key=value``
lines; a bare key sets that option on every subcommand that has it, a dotted
key (``train.n_rounds=50``) targets one subcommand. Flags on the command line
always win over the file.
"""

from __future__ import annotations

import functools
import json
import sys
import warnings
from pathlib import Path

import click
import numpy as np

from . import __version__, gbdt
from .core import CATEGORY_NAMES, N_CLASSES
from .features import write_feature_bin, write_feature_csv
from .fusion import FusedModel
from .ingest import load_dataset, serialize_visit_log
from .metrics import format_confusion

FEATURE_KINDS = ("stat", "activity", "graph", "multidim", "image", "temporal")


def read_config(path) -> dict:
    out = {}
    with open(path, encoding="utf-8") as fh:
        for n, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise click.BadParameter(f"line {n}: expected key=value", param_hint="--config")
            key, value = (s.strip() for s in line.split("=", 1))
            out[key.replace("-", "_")] = value
    return out


def _default_map(group: click.Group, entries: dict) -> dict:
    dm: dict = {}
    group_params = {p.name for p in group.params}
    for key, value in entries.items():
        if "." in key:
            cmd, name = key.split(".", 1)
            if cmd not in group.commands:
                raise click.BadParameter(f"unknown command in key {key!r}", param_hint="--config")
            dm.setdefault(cmd, {})[name] = value
            continue
        hit = key in group_params
        if hit:
            dm[key] = value
        for name, cmd in group.commands.items():
            if key in {p.name for p in cmd.params}:
                dm.setdefault(name, {}).setdefault(key, value)
                hit = True
        if not hit:
            raise click.BadParameter(f"unknown option {key!r}", param_hint="--config")
    return dm


def _load_config(ctx, param, value):
    if value is not None:
        ctx.default_map = _default_map(ctx.command, read_config(value))
    return value


def data_errors(fn):
    """Report domain and I/O failures as exit code 1 with a one-line diagnostic."""
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except (ValueError, OSError) as e:
            click.echo(f"error: {e}", err=True)
            sys.exit(1)
    return wrapper


def gbdt_options(fn):
    opts = [
        click.option("--n-rounds", "n_rounds", type=click.IntRange(min=1), default=100, show_default=True,
                     help="Boosting rounds for every branch model."),
        click.option("--learning-rate", type=click.FloatRange(0, 1, min_open=True), default=0.1,
                     show_default=True),
        click.option("--max-depth", type=click.IntRange(min=1), default=4, show_default=True),
        click.option("--min-samples-leaf", type=click.IntRange(min=1), default=5, show_default=True),
        click.option("--min-gain", type=float, default=1e-6, show_default=True),
        click.option("--subsample", type=click.FloatRange(0, 1, min_open=True), default=1.0,
                     show_default=True),
        click.option("--fusion-rounds", type=click.IntRange(min=1), default=None,
                     help="Rounds for the fusion head [default: --n-rounds]."),
    ]
    for opt in reversed(opts):
        fn = opt(fn)
    return fn


@click.group(context_settings={"help_option_names": ["-h", "--help"]})
@click.option("--config", type=click.Path(exists=True, dir_okay=False), is_eager=True,
              callback=_load_config, expose_value=False, help="key=value defaults file.")
@click.option("--threads", type=click.IntRange(min=1), default=1, show_default=True,
              help="Worker threads; results do not depend on this.")
@click.option("--seed", type=int, default=0, show_default=True, help="Root seed for every stage.")
@click.version_option(__version__, prog_name="mdfl")
@click.pass_context
def cli(ctx, threads, seed):
    """Urban region function recognition from visit logs and images."""
    ctx.obj = {"threads": threads, "seed": seed}


@cli.command()
@click.argument("out_dir", type=click.Path(file_okay=False))
@click.option("--n-regions", type=click.IntRange(min=1), default=100, show_default=True,
              help="Regions per category.")
@click.option("--n-users", type=click.IntRange(min=1), default=2000, show_default=True)
@click.option("--noise", type=click.FloatRange(0, 1), default=0.3, show_default=True)
@click.option("--test-fraction", type=click.FloatRange(0, 1, max_open=True), default=0.2,
              show_default=True)
@click.pass_obj
@data_errors
def synth(obj, out_dir, n_regions, n_users, noise, test_fraction):
    """Write a synthetic dataset: manifest.csv, truth.csv, visits/, images/."""
    from .synth import SynthConfig, synth as run

    cfg = SynthConfig(n_regions=n_regions, n_users=n_users, noise=noise, seed=obj["seed"],
                      test_fraction=test_fraction)
    ds = run(cfg, out_dir)
    n_test = sum(r.label is None for r in ds.records)
    click.echo(f"wrote {len(ds.records)} regions ({n_test} unlabeled test) to {out_dir}")


@cli.command()
@click.argument("data_dir", type=click.Path(exists=True, file_okay=False))
@click.option("--manifest", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--canonical-dir", type=click.Path(file_okay=False), default=None,
              help="Also write each visit log in canonical form here.")
@click.option("--out", type=click.Path(dir_okay=False), default=None, help="Summary JSON path.")
@click.pass_obj
@data_errors
def ingest(obj, data_dir, manifest, canonical_dir, out):
    """Validate a dataset and summarize its visit logs."""
    from .pipeline import RegionFeatures

    ds = load_dataset(data_dir, manifest, seed=obj["seed"])
    store = RegionFeatures(ds, obj["threads"])
    users = set()
    for lg in store.logs.values():
        users.update(lg.users)
    counts = np.bincount([r.label for r in ds.training], minlength=N_CLASSES)
    summary = {
        "regions": len(ds.records),
        "training": len(ds.training),
        "test": len(ds.test),
        "users": len(users),
        "events": int(sum(lg.n_events for lg in store.logs.values())),
        "class_counts": dict(zip(CATEGORY_NAMES, counts.tolist())),
    }
    if canonical_dir:
        d = Path(canonical_dir)
        d.mkdir(parents=True, exist_ok=True)
        for rid, lg in store.logs.items():
            (d / f"{rid}.txt").write_text(serialize_visit_log(lg, ds.window), encoding="utf-8")
    text = json.dumps(summary, indent=2) + "\n"
    if out:
        Path(out).write_text(text, encoding="utf-8")
    click.echo(text, nl=False)


@cli.command()
@click.argument("data_dir", type=click.Path(exists=True, file_okay=False))
@click.option("--only", "kind", type=click.Choice(FEATURE_KINDS), default="multidim", show_default=True,
              help="Feature family to export.")
@click.option("--which", type=click.Choice(["training", "test", "all"]), default="all", show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), required=True)
@click.option("--format", "fmt", type=click.Choice(["csv", "bin"]), default="csv", show_default=True)
@click.pass_obj
@data_errors
def features(obj, data_dir, kind, which, out, fmt):
    """Export one feature family as CSV or binary matrix.

    User-activity and region-graph features use the index over all training regions.
    """
    from .pipeline import RegionFeatures

    ds = load_dataset(data_dir, seed=obj["seed"])
    store = RegionFeatures(ds, obj["threads"])
    recs = store.records(which)
    build = {
        "stat": store.stat_matrix,
        "activity": store.activity_matrix,
        "graph": store.graph_matrix,
        "multidim": store.multidim_matrix,
        "image": store.image_matrix,
        "temporal": store.temporal_matrix,
    }[kind]
    m = build(recs)
    ids = [r.region_id for r in recs]
    (write_feature_csv if fmt == "csv" else write_feature_bin)(out, ids, m)
    click.echo(f"wrote {m.shape[0]} x {m.shape[1]} {kind} features to {out}")


@cli.command()
@click.argument("data_dir", type=click.Path(exists=True, file_okay=False))
@click.option("--model-dir", type=click.Path(file_okay=False), required=True)
@click.option("--folds", type=click.IntRange(min=2), default=5, show_default=True)
@click.option("--strict", is_flag=True, help="Fail when a fold's training part lacks a class.")
@gbdt_options
@click.pass_obj
@data_errors
def train(obj, data_dir, model_dir, folds, strict, n_rounds, learning_rate, max_depth, min_samples_leaf,
          min_gain, subsample, fusion_rounds):
    """Train the three branches out-of-fold, the fusion head, then refit the branches."""
    from dataclasses import replace

    from .pipeline import train_pipeline

    params = gbdt.GbdtParams(n_rounds=n_rounds, learning_rate=learning_rate, max_depth=max_depth,
                             min_samples_leaf=min_samples_leaf, min_gain=min_gain, subsample=subsample)
    fusion_params = replace(params, n_rounds=fusion_rounds or n_rounds)
    ds = load_dataset(data_dir, k_folds=folds, seed=obj["seed"])
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        model, _ = train_pipeline(ds, params, fusion_params, seed=obj["seed"], threads=obj["threads"],
                                  strict=strict)
    for w in caught:
        click.echo(f"warning: {w.message}", err=True)
    model.metadata["params"] = {k: getattr(params, k) for k in
                                ("n_rounds", "learning_rate", "max_depth", "min_samples_leaf",
                                 "min_gain", "subsample")}
    model.metadata["fusion_rounds"] = fusion_params.n_rounds
    model.save(model_dir)
    y = ds.label_array()
    report = {"n_training": int(y.size), "k_folds": folds, "seed": obj["seed"], "oof_accuracy": {}}
    for b, kind in enumerate("ITM"):
        pred = model.oof[:, b * N_CLASSES:(b + 1) * N_CLASSES].argmax(axis=1)
        report["oof_accuracy"][kind] = float((pred == y).mean())
    text = json.dumps(report, indent=2, sort_keys=True) + "\n"
    (Path(model_dir) / "train_report.json").write_text(text, encoding="utf-8")
    click.echo(text, nl=False)


@cli.command()
@click.argument("data_dir", type=click.Path(exists=True, file_okay=False))
@click.option("--model-dir", type=click.Path(exists=True, file_okay=False), required=True)
@click.option("--out", type=click.Path(dir_okay=False), required=True)
@click.option("--which", type=click.Choice(["training", "test", "all"]), default="test", show_default=True)
@click.pass_obj
@data_errors
def predict(obj, data_dir, model_dir, out, which):
    """Write label, fused probabilities and per-branch probabilities per region."""
    from .pipeline import RegionFeatures, predict_records, write_predictions

    model = FusedModel.load(model_dir)
    ds = load_dataset(data_dir, k_folds=model.metadata.get("k_folds", 5), seed=obj["seed"])
    store = RegionFeatures(ds, obj["threads"])
    recs = store.records(which)
    pred = predict_records(model, store, recs)
    write_predictions(out, [r.region_id for r in recs], pred)
    click.echo(f"wrote {len(recs)} predictions to {out}")


@cli.command("eval")
@click.argument("predictions", type=click.Path(exists=True, dir_okay=False))
@click.argument("truth", type=click.Path(exists=True, dir_okay=False))
@click.option("--out", type=click.Path(dir_okay=False), default=None, help="Report JSON path.")
@click.option("--scope", type=click.Choice(["all", "present"]), default="all", show_default=True,
              help="Classes averaged by macro F1.")
@data_errors
def evaluate_cmd(predictions, truth, out, scope):
    """Compare predicted labels with a truth CSV (region_id,label)."""
    from .pipeline import evaluate_files

    ev = evaluate_files(predictions, truth, f1_scope=scope)
    if out:
        Path(out).write_text(ev.to_json(), encoding="utf-8")
        Path(out).with_suffix(".txt").write_text(format_confusion(ev.confusion), encoding="utf-8")
    click.echo(f"accuracy {ev.accuracy:.4f}  kappa {ev.kappa:.4f}  macro_f1 {ev.macro_f1:.4f}  n {ev.n}")
    click.echo(format_confusion(ev.confusion), nl=False)


def main(argv=None):
    cli.main(args=argv, prog_name="mdfl")


if __name__ == "__main__":
    main()
