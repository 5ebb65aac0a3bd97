"""Confusion-based metrics with per-sex breakdown, Monte-Carlo
cross-validation, grid search, and the resampled train/test protocol.

Metric semantics: precision, sensitivity, and accuracy as percentages; any
0/0 division yields 0 and raises a flag on the metric set (so aggregation
over folds can both match the convention and stay auditable). Metrics are
computed per run/fold first and then averaged; the standard deviation over
runs is the population one.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field, replace

import numpy as np

from .data import Dataset, mc_split, stratified_resample
from .nn import TrainConfig
from .rng import derive_seed
from .strategies import FittedStrategy, StrategySpec

GROUPS = ("female", "male", "overall")
METRICS = ("precision", "sensitivity", "accuracy")
_SEX_OF_GROUP = {"female": "F", "male": "M"}


@dataclass
class Confusion:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    def __add__(self, other: "Confusion") -> "Confusion":
        return Confusion(
            self.tp + other.tp, self.fp + other.fp,
            self.fn + other.fn, self.tn + other.tn,
        )


def confusion_counts(predictions, labels) -> Confusion:
    """Standard counts with label 1 as the positive class."""
    predictions = np.asarray(predictions, dtype=int)
    labels = np.asarray(labels, dtype=int)
    if predictions.shape != labels.shape:
        raise ValueError("predictions and labels must have equal length")
    return Confusion(
        tp=int(((predictions == 1) & (labels == 1)).sum()),
        fp=int(((predictions == 1) & (labels == 0)).sum()),
        fn=int(((predictions == 0) & (labels == 1)).sum()),
        tn=int(((predictions == 0) & (labels == 0)).sum()),
    )


@dataclass
class MetricSet:
    """Percentages in [0, 100]; zero-division cases are 0 and flagged."""

    precision: float
    sensitivity: float
    accuracy: float
    flags: list[str] = field(default_factory=list)

    def value(self, metric: str) -> float:
        return getattr(self, metric)

    @classmethod
    def empty_group(cls) -> "MetricSet":
        return cls(0.0, 0.0, 0.0, flags=["empty_group"])


def metrics_from_confusion(c: Confusion) -> MetricSet:
    if c.total == 0:
        raise ValueError("empty confusion")
    flags = []
    if c.tp + c.fp == 0:
        precision = 0.0
        flags.append("precision_zero_division")
    else:
        precision = 100.0 * c.tp / (c.tp + c.fp)
    if c.tp + c.fn == 0:
        sensitivity = 0.0
        flags.append("sensitivity_zero_division")
    else:
        sensitivity = 100.0 * c.tp / (c.tp + c.fn)
    accuracy = 100.0 * (c.tp + c.tn) / c.total
    return MetricSet(precision, sensitivity, accuracy, flags)


def grouped_metrics(predictions, labels, sexes) -> dict[str, MetricSet]:
    """Metrics for the female rows, male rows, and the full set."""
    predictions = np.asarray(predictions, dtype=int)
    labels = np.asarray(labels, dtype=int)
    sexes = np.asarray(sexes)
    if not (len(predictions) == len(labels) == len(sexes)):
        raise ValueError("vectors must be aligned")
    out: dict[str, MetricSet] = {}
    for group in GROUPS:
        mask = (
            np.ones(len(sexes), dtype=bool)
            if group == "overall"
            else sexes == _SEX_OF_GROUP[group]
        )
        if not mask.any():
            out[group] = MetricSet.empty_group()
        else:
            out[group] = metrics_from_confusion(
                confusion_counts(predictions[mask], labels[mask])
            )
    return out


# ---------------------------------------------------------------------------
# grid search


@dataclass
class GridResult:
    configs: list[tuple[float, float]]        # (learning_rate, dropout_rate)
    mean_val_losses: list[float]
    chosen: tuple[float, float]

    def to_jsonable(self) -> dict:
        return {
            "configs": [list(c) for c in self.configs],
            "mean_val_losses": self.mean_val_losses,
            "chosen": list(self.chosen),
        }


def grid_search(
    spec: StrategySpec,
    train: Dataset,
    learning_rates=(0.001, 0.005, 0.01),
    dropout_rates=(0.0, 0.2, 0.5),
    folds: int = 10,
    base_config: TrainConfig | None = None,
    seed: int = 0,
) -> GridResult:
    """Pick (lr, dropout) by lowest mean final-epoch validation loss.

    The fold splits and training seeds depend only on the fold index, so
    the choice is invariant to grid ordering; ties break toward the lower
    learning rate, then the lower dropout rate.
    """
    if not learning_rates or not dropout_rates:
        raise ValueError("grid must be non-empty")
    base = base_config if base_config is not None else TrainConfig(seed=seed)
    splits = [
        mc_split(train, 0.2, seed=derive_seed(seed, "fold", f))
        for f in range(folds)
    ]
    configs = [(lr, dr) for lr in learning_rates for dr in dropout_rates]
    means = []
    for lr, dr in configs:
        fold_losses = []
        for f, (tr, val) in enumerate(splits):
            config = replace(
                base,
                learning_rate=lr,
                dropout_rate=dr,
                seed=derive_seed(seed, "fold", f, "train"),
            )
            try:
                fitted = FittedStrategy.fit(spec, tr, config)
            except Exception as exc:
                raise RuntimeError(
                    f"grid config (lr={lr}, dropout={dr}) failed on fold {f}: {exc}"
                ) from exc
            fold_losses.append(fitted.val_loss(val))
        means.append(float(np.mean(fold_losses)))
    order = sorted(range(len(configs)), key=lambda i: (means[i], configs[i]))
    return GridResult(configs, means, configs[order[0]])


# ---------------------------------------------------------------------------
# run reports


@dataclass
class RunReport:
    """Per-run grouped metrics with mean/std aggregates (Tables 2-3 shape)."""

    strategy: str
    runs: list[dict[str, MetricSet]]
    seeds: list[int]

    @property
    def n_runs(self) -> int:
        return len(self.runs)

    def mean(self, group: str, metric: str) -> float:
        return float(np.mean([r[group].value(metric) for r in self.runs]))

    def std(self, group: str, metric: str) -> float:
        # population std over runs
        return float(np.std([r[group].value(metric) for r in self.runs]))

    def to_jsonable(self) -> dict:
        return {
            "strategy": self.strategy,
            "seeds": self.seeds,
            "runs": [
                {
                    g: {
                        "precision": m.precision,
                        "sensitivity": m.sensitivity,
                        "accuracy": m.accuracy,
                        "flags": m.flags,
                    }
                    for g, m in run.items()
                }
                for run in self.runs
            ],
            "aggregate": {
                g: {
                    met: {"mean": self.mean(g, met), "std": self.std(g, met)}
                    for met in METRICS
                }
                for g in GROUPS
            },
        }

    @classmethod
    def from_jsonable(cls, obj: dict) -> "RunReport":
        return cls(
            strategy=obj["strategy"],
            seeds=list(obj["seeds"]),
            runs=[
                {
                    g: MetricSet(
                        m["precision"], m["sensitivity"], m["accuracy"],
                        list(m["flags"]),
                    )
                    for g, m in run.items()
                }
                for run in obj["runs"]
            ],
        )


def resample_evaluate(
    spec: StrategySpec,
    train: Dataset,
    test: Dataset,
    runs: int = 5,
    base_config: TrainConfig | None = None,
    seed: int = 0,
) -> RunReport:
    """Train `runs` times on participant-stratified 80% resamples of the
    training set; evaluate each on the full test set."""
    if runs < 1:
        raise ValueError("runs must be >= 1")
    base = base_config if base_config is not None else TrainConfig(seed=seed)
    results = []
    seeds = []
    for r in range(runs):
        sub = stratified_resample(train, 0.8, seed=derive_seed(seed, "run", r))
        run_seed = derive_seed(seed, "run", r, "train")
        fitted = FittedStrategy.fit(spec, sub, replace(base, seed=run_seed))
        preds, _ = fitted.predict(test)
        results.append(grouped_metrics(preds, test.y, test.sex))
        seeds.append(run_seed)
    return RunReport(spec.name, results, seeds)


def cross_validate(
    spec: StrategySpec,
    train: Dataset,
    folds: int = 10,
    base_config: TrainConfig | None = None,
    seed: int = 0,
) -> RunReport:
    """Monte-Carlo cross-validation: `folds` random 80/20 splits, metrics on
    each fold's held-out 20%."""
    if folds < 2:
        raise ValueError("folds must be >= 2")
    base = base_config if base_config is not None else TrainConfig(seed=seed)
    results = []
    seeds = []
    for f in range(folds):
        tr, val = mc_split(train, 0.2, seed=derive_seed(seed, "fold", f))
        fold_seed = derive_seed(seed, "fold", f, "train")
        fitted = FittedStrategy.fit(spec, tr, replace(base, seed=fold_seed))
        preds, _ = fitted.predict(val)
        results.append(grouped_metrics(preds, val.y, val.sex))
        seeds.append(fold_seed)
    return RunReport(spec.name, results, seeds)


# ---------------------------------------------------------------------------
# table-shaped export


def report_header() -> list[str]:
    return ["strategy"] + [
        f"{met}_{grp}" for met in METRICS for grp in GROUPS
    ]


def report_row(report: RunReport) -> list[str]:
    cells = [report.strategy]
    for met in METRICS:
        for grp in GROUPS:
            cells.append(f"{report.mean(grp, met):.2f}({report.std(grp, met):.2f})")
    return cells


def reports_to_csv(reports: list[RunReport]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(report_header())
    for rep in reports:
        writer.writerow(report_row(rep))
    return buf.getvalue()


def reports_to_markdown(reports: list[RunReport]) -> str:
    header = report_header()
    lines = [
        "| " + " | ".join(header) + " |",
        "|" + "|".join("---" for _ in header) + "|",
    ]
    for rep in reports:
        lines.append("| " + " | ".join(report_row(rep)) + " |")
    return "\n".join(lines) + "\n"
