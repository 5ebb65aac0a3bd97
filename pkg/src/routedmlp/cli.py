"""Command-line frontend: synth, ingest, tune, train, evaluate, cluster,
tsne, and report subcommands.

All defaults live in an INI config file (overridable per flag); every
subcommand derives its randomness from one root seed and finishes by
atomically writing a run manifest with the config snapshot, seeds, and
artifact paths, so any run can be replayed exactly.
"""

from __future__ import annotations

import argparse
import configparser
import datetime as dt
import json
import os
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__, analysis, data, evaluation, nn, strategies
from .rng import derive_seed

STRATEGY_CHOICES = {
    "baseline": ("baseline", 1),
    "feature2": ("feature-clustered", 2),
    "feature4": ("feature-clustered", 4),
    "loss-full": ("loss-fully-separated", "auto"),
    "loss-final": ("loss-final-layer-separated", "auto"),
    "id-embed": ("id-embedding", 1),
}

DEFAULT_CONFIG = {
    "train": {
        "learning_rate": "0.001",
        "dropout_rate": "0.0",
        "epochs": "30",
        "batch_size": "32",
    },
    "grid": {
        "learning_rates": "0.001,0.005,0.01",
        "dropout_rates": "0.0,0.2,0.5",
    },
    "synth": {
        "participants": "60",
        "clusters": "3",
        "days": "80",
        "episode_rate": "4.0",
        "episode_shift": "1.2",
        "noise": "0.4",
    },
    "tsne": {
        "perplexity": "30",
        "iterations": "1000",
    },
}


def load_config(path: str | None) -> configparser.ConfigParser:
    parser = configparser.ConfigParser()
    parser.read_dict(DEFAULT_CONFIG)
    if path:
        if not Path(path).exists():
            raise FileNotFoundError(f"config file not found: {path}")
        parser.read(path)
    return parser


def _atomic_write(path: Path, text: str) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def _json_dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


class Manifest:
    def __init__(self, command: str, args: argparse.Namespace, config) -> None:
        self.command = command
        self.started = time.monotonic()
        self.obj = {
            "tool": "routedmlp",
            "version": __version__,
            "command": command,
            "argv": sys.argv[1:],
            "seed": args.seed,
            "config": {s: dict(config[s]) for s in config.sections()},
            "artifacts": [],
        }

    def add(self, path: Path) -> Path:
        self.obj["artifacts"].append(str(path))
        return path

    def write(self, out_dir: Path) -> None:
        self.obj["wall_seconds"] = round(time.monotonic() - self.started, 3)
        _atomic_write(
            out_dir / f"manifest-{self.command}.json", _json_dump(self.obj)
        )


def _train_config(args, config) -> nn.TrainConfig:
    sec = config["train"]
    return nn.TrainConfig(
        learning_rate=sec.getfloat("learning_rate"),
        dropout_rate=sec.getfloat("dropout_rate"),
        epochs=sec.getint("epochs"),
        batch_size=sec.getint("batch_size"),
        seed=args.seed,
    )


def _spec(args) -> strategies.StrategySpec:
    kind, default_k = STRATEGY_CHOICES[args.strategy]
    k = default_k
    if getattr(args, "k", None) is not None:
        k = "auto" if args.k == "auto" else int(args.k)
    return strategies.StrategySpec(kind, k)


def _load_dataset(path: str) -> data.Dataset:
    report = data.ingest_csv(path)
    return report.dataset


# ---------------------------------------------------------------------------
# subcommands


def cmd_synth(args, config, out_dir: Path, manifest: Manifest) -> int:
    sec = config["synth"]
    synth_config = data.SynthConfig(
        n_participants=sec.getint("participants"),
        n_clusters=sec.getint("clusters"),
        days_per_participant=sec.getint("days"),
        episode_rate=sec.getfloat("episode_rate"),
        episode_shift=sec.getfloat("episode_shift"),
        noise=sec.getfloat("noise"),
        seed=args.seed,
    )
    result = data.synth_generate(synth_config)
    data.write_csv(result.dataset, manifest.add(out_dir / "synth.csv"))
    data.write_truth_csv(
        result.true_clusters, manifest.add(out_dir / "synth_truth.csv")
    )
    return 0


def cmd_ingest(args, config, out_dir: Path, manifest: Manifest) -> int:
    report = data.ingest_csv(args.input)
    confirmed: dict[str, list[dt.date]] = {}
    if args.confirmed:
        import csv as _csv

        with open(args.confirmed, newline="") as fh:
            reader = _csv.reader(fh)
            header = next(reader)
            if header != ["participant_id", "date"]:
                raise ValueError("confirmed-days CSV needs participant_id,date")
            for pid, day in reader:
                confirmed.setdefault(pid, []).append(dt.date.fromisoformat(day))
    seg_report = data.segment_by_gaps(report.dataset)
    parts = []
    for seg in seg_report.segments:
        sub = report.dataset.subset(seg.indices)
        if confirmed:
            days_here = [
                d for d in confirmed.get(seg.participant_id, []) if d in seg.dates
            ]
            sub.y[:] = data.expand_labels(seg.dates, days_here)
        parts.append(sub)
    if not parts:
        raise ValueError("no segments of at least 3 days survived ingestion")
    kept = data.Dataset.concat(parts)
    data.write_csv(kept, manifest.add(out_dir / "dataset.csv"))
    manifest.obj["rows_rejected"] = report.n_rejected
    manifest.obj["segments_dropped"] = seg_report.n_dropped
    return 0


def cmd_tune(args, config, out_dir: Path, manifest: Manifest) -> int:
    train = _load_dataset(args.train)
    sec = config["grid"]
    lrs = [float(v) for v in sec.get("learning_rates").split(",")]
    drs = [float(v) for v in sec.get("dropout_rates").split(",")]
    result = evaluation.grid_search(
        _spec(args), train,
        learning_rates=lrs, dropout_rates=drs,
        folds=args.folds, base_config=_train_config(args, config),
        seed=args.seed,
    )
    _atomic_write(
        manifest.add(out_dir / "grid.json"), _json_dump(result.to_jsonable())
    )
    return 0


def cmd_train(args, config, out_dir: Path, manifest: Manifest) -> int:
    train = _load_dataset(args.train)
    fitted = strategies.FittedStrategy.fit(
        _spec(args), train, _train_config(args, config)
    )
    _atomic_write(
        manifest.add(out_dir / "model.json"), _json_dump(fitted.to_jsonable())
    )
    return 0


def cmd_evaluate(args, config, out_dir: Path, manifest: Manifest) -> int:
    test = _load_dataset(args.test)
    if args.train:
        # full protocol: retrain on resamples of the training set
        train = _load_dataset(args.train)
        report = evaluation.resample_evaluate(
            _spec(args), train, test,
            runs=args.runs, base_config=_train_config(args, config),
            seed=args.seed,
        )
    else:
        fitted = strategies.FittedStrategy.from_jsonable(
            json.loads(Path(args.model).read_text())
        )
        preds, _ = fitted.predict(test)
        metrics = evaluation.grouped_metrics(preds, test.y, test.sex)
        report = evaluation.RunReport(
            fitted.spec.name, [metrics], [fitted.config.seed]
        )
    _atomic_write(
        manifest.add(out_dir / "report.json"), _json_dump(report.to_jsonable())
    )
    _atomic_write(
        manifest.add(out_dir / "report.csv"),
        evaluation.reports_to_csv([report]),
    )
    return 0


def cmd_cluster(args, config, out_dir: Path, manifest: Manifest) -> int:
    train = _load_dataset(args.train)
    test = _load_dataset(args.test) if args.test else None
    k = "auto" if args.k in (None, "auto") else int(args.k)
    if args.provenance == "features":
        table, _ = strategies.route_by_features(train, test, k=k, seed=args.seed)
    else:
        table, _, snapshot = strategies.route_by_loss(
            train, test, base_config=_train_config(args, config),
            k=k, seed=args.seed,
        )
        means = strategies._mean_loss_per_participant(
            {
                (pid, i): float(loss)
                for pid, i, loss in zip(
                    train.ids,
                    range(len(train)),
                    nn.per_sample_losses(snapshot.params, train.X, train.y),
                )
            }
        )
        hist = analysis.participant_loss_histogram(means, table, bins=args.bins)
        analysis.write_histogram_csv(
            manifest.add(out_dir / "histogram.csv"), hist
        )
    _atomic_write(
        manifest.add(out_dir / "routing.json"), _json_dump(table.to_jsonable())
    )
    return 0


def cmd_tsne(args, config, out_dir: Path, manifest: Manifest) -> int:
    table = strategies.RoutingTable.from_jsonable(
        json.loads(Path(args.routing).read_text())
    )
    if table.snapshot is None:
        raise ValueError("tsne needs a loss-provenance routing with a snapshot")
    parts = []
    for path, split in ((args.train, "train"), (args.test, "test")):
        if path:
            ds = _load_dataset(path)
            parts.append((ds, split))
    if not parts:
        raise ValueError("tsne needs at least one of --train/--test")
    X = np.vstack([ds.X for ds, _ in parts])
    keys = [
        (ds.ids[i], ds.dates[i], split)
        for ds, split in parts
        for i in range(len(ds))
    ]
    losses = np.concatenate(
        [nn.per_sample_losses(table.snapshot.params, ds.X, ds.y) for ds, _ in parts]
    )
    sec = config["tsne"]
    result = analysis.tsne_embed(
        X,
        perplexity=sec.getfloat("perplexity"),
        iterations=sec.getint("iterations"),
        seed=args.seed,
    )
    analysis.write_embedding_csv(
        manifest.add(out_dir / "embedding.csv"), keys, result.Y, losses
    )
    _atomic_write(
        manifest.add(out_dir / "embedding.svg"),
        analysis.scatter_svg(result.Y, losses),
    )
    return 0


def cmd_report(args, config, out_dir: Path, manifest: Manifest) -> int:
    reports = [
        evaluation.RunReport.from_jsonable(json.loads(Path(p).read_text()))
        for p in args.reports
    ]
    _atomic_write(
        manifest.add(out_dir / "tables.csv"), evaluation.reports_to_csv(reports)
    )
    _atomic_write(
        manifest.add(out_dir / "tables.md"),
        evaluation.reports_to_markdown(reports),
    )
    return 0


# ---------------------------------------------------------------------------
# argument parsing


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="routedmlp",
        description="Participant-routed MLP pipeline for multi-source tabular data",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, strategy=False):
        p.add_argument("--config", help="INI config file")
        p.add_argument("--seed", type=int, default=0, help="root seed")
        p.add_argument(
            "--out-dir",
            default=os.environ.get("ROUTEDMLP_OUT_DIR", "."),
            help="output directory (env ROUTEDMLP_OUT_DIR)",
        )
        if strategy:
            p.add_argument(
                "--strategy", choices=sorted(STRATEGY_CHOICES), default="baseline"
            )
            p.add_argument("--k", help="cluster count or 'auto'")

    p = sub.add_parser("synth", help="generate a synthetic multi-source dataset")
    common(p)

    p = sub.add_parser("ingest", help="segment, label-expand, and clean a raw CSV")
    common(p)
    p.add_argument("--input", required=True)
    p.add_argument(
        "--confirmed", help="CSV of confirmed event days (participant_id,date)"
    )

    p = sub.add_parser("tune", help="grid-search learning rate and dropout")
    common(p, strategy=True)
    p.add_argument("--train", required=True)
    p.add_argument("--folds", type=int, default=10)

    p = sub.add_parser("train", help="train one strategy")
    common(p, strategy=True)
    p.add_argument("--train", required=True)

    p = sub.add_parser("evaluate", help="evaluate a strategy on a test CSV")
    common(p, strategy=True)
    p.add_argument("--test", required=True)
    p.add_argument("--train", help="training CSV: run the 5-run resampling protocol")
    p.add_argument("--model", help="saved model.json (single-run evaluation)")
    p.add_argument("--runs", type=int, default=5)

    p = sub.add_parser("cluster", help="compute a participant routing table")
    common(p)
    p.add_argument("--train", required=True)
    p.add_argument("--test")
    p.add_argument("--provenance", choices=["features", "loss"], default="features")
    p.add_argument("--k", help="cluster count or 'auto'")
    p.add_argument("--bins", type=int, default=10)

    p = sub.add_parser("tsne", help="2-D embedding of rows, colored by loss")
    common(p)
    p.add_argument("--routing", required=True, help="routing.json with a snapshot")
    p.add_argument("--train")
    p.add_argument("--test")

    p = sub.add_parser("report", help="merge report JSONs into result tables")
    common(p)
    p.add_argument("--reports", nargs="+", required=True)
    return parser


COMMANDS = {
    "synth": cmd_synth,
    "ingest": cmd_ingest,
    "tune": cmd_tune,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "cluster": cmd_cluster,
    "tsne": cmd_tsne,
    "report": cmd_report,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "evaluate" and not (args.train or args.model):
        parser.error("evaluate needs --train (resampling protocol) or --model")
    try:
        config = load_config(args.config)
        out_dir = Path(args.out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        manifest = Manifest(args.command, args, config)
        code = COMMANDS[args.command](args, config, out_dir, manifest)
        manifest.write(out_dir)
        return code
    except Exception as exc:  # runtime failure -> exit 1 with a message
        print(f"routedmlp {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
