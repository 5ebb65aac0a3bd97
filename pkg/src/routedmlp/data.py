"""Multi-source day-level dataset handling.

A row is one participant-day: id, date, feature vector, binary label, sex.
The pipeline order is segment (on day gaps) -> expand labels (+/- 3 days)
-> temporal split. A seeded synthetic generator stands in for real sensor
data, planting latent participant clusters, per-sex noise scales, and
episode windows so routing strategies have real structure to recover.
"""

from __future__ import annotations

import csv
import datetime as dt
from dataclasses import dataclass, field, replace

import numpy as np

from .rng import derive_rng

N_FEATURES = 20
LABEL_RADIUS = 3  # one confirmed day marks +/- 3 days, 7 in total

CSV_HEADER = ["participant_id", "date", "sex", "label"] + [
    f"f{i:02d}" for i in range(N_FEATURES)
]


@dataclass(frozen=True)
class Record:
    participant_id: str
    date: dt.date
    features: tuple[float, ...]
    label: int
    sex: str


@dataclass
class Dataset:
    """Column-array view of records; treated as immutable after creation."""

    ids: np.ndarray      # object array of participant ids
    dates: np.ndarray    # object array of datetime.date
    X: np.ndarray        # (n, d) float features
    y: np.ndarray        # (n,) int labels in {0, 1}
    sex: np.ndarray      # object array of "F" / "M"

    def __post_init__(self) -> None:
        n = len(self.ids)
        if not (len(self.dates) == len(self.X) == len(self.y) == len(self.sex) == n):
            raise ValueError("dataset columns must have equal length")

    def __len__(self) -> int:
        return len(self.ids)

    @property
    def n_features(self) -> int:
        return self.X.shape[1]

    @property
    def participants(self) -> list[str]:
        return sorted(set(self.ids))

    def sex_of(self, participant_id: str) -> str:
        idx = np.flatnonzero(self.ids == participant_id)
        if len(idx) == 0:
            raise KeyError(participant_id)
        return self.sex[idx[0]]

    def subset(self, indices) -> "Dataset":
        indices = np.asarray(indices, dtype=int)
        return Dataset(
            self.ids[indices].copy(),
            self.dates[indices].copy(),
            self.X[indices].copy(),
            self.y[indices].copy(),
            self.sex[indices].copy(),
        )

    def rows_of(self, participant_id: str) -> np.ndarray:
        return np.flatnonzero(self.ids == participant_id)

    @classmethod
    def from_records(cls, records: list[Record]) -> "Dataset":
        return cls(
            ids=np.array([r.participant_id for r in records], dtype=object),
            dates=np.array([r.date for r in records], dtype=object),
            X=np.array([r.features for r in records], dtype=float).reshape(
                len(records), -1
            ),
            y=np.array([r.label for r in records], dtype=int),
            sex=np.array([r.sex for r in records], dtype=object),
        )

    @classmethod
    def concat(cls, parts: list["Dataset"]) -> "Dataset":
        return cls(
            np.concatenate([p.ids for p in parts]),
            np.concatenate([p.dates for p in parts]),
            np.vstack([p.X for p in parts]),
            np.concatenate([p.y for p in parts]),
            np.concatenate([p.sex for p in parts]),
        )


# ---------------------------------------------------------------------------
# CSV ingestion / export


@dataclass
class IngestReport:
    dataset: Dataset
    n_rejected: int
    reasons: list[str] = field(default_factory=list)


def ingest_csv(path) -> IngestReport:
    """Parse a schema-conformant CSV; reject bad rows, count the rejections.

    Duplicate (participant, day) pairs are a hard error. Rows with missing
    or non-finite features, or a sex code outside {F, M}, are dropped and
    counted.
    """
    records: list[Record] = []
    n_rejected = 0
    reasons: list[str] = []
    seen: set[tuple[str, dt.date]] = set()
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != CSV_HEADER:
            raise ValueError(f"unexpected CSV header in {path}")
        for lineno, row in enumerate(reader, start=2):
            try:
                pid = row[0]
                date = dt.date.fromisoformat(row[1])
                sex = row[2]
                label = int(row[3])
                features = tuple(float(v) for v in row[4:])
            except (ValueError, IndexError):
                n_rejected += 1
                reasons.append(f"line {lineno}: unparseable row")
                continue
            if sex not in ("F", "M"):
                n_rejected += 1
                reasons.append(f"line {lineno}: unknown sex code {sex!r}")
                continue
            if label not in (0, 1):
                n_rejected += 1
                reasons.append(f"line {lineno}: label must be 0 or 1")
                continue
            if len(features) != N_FEATURES or not all(
                np.isfinite(v) for v in features
            ):
                n_rejected += 1
                reasons.append(f"line {lineno}: missing or non-finite feature")
                continue
            if (pid, date) in seen:
                raise ValueError(f"duplicate (participant, day): ({pid}, {date})")
            seen.add((pid, date))
            records.append(Record(pid, date, features, label, sex))
    return IngestReport(Dataset.from_records(records), n_rejected, reasons)


def write_csv(dataset: Dataset, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER)
        for i in range(len(dataset)):
            writer.writerow(
                [
                    dataset.ids[i],
                    dataset.dates[i].isoformat(),
                    dataset.sex[i],
                    int(dataset.y[i]),
                ]
                + [repr(float(v)) for v in dataset.X[i]]
            )


# ---------------------------------------------------------------------------
# segmentation and label expansion


@dataclass
class Segment:
    """Consecutive-day run for one participant, at least 3 days long."""

    participant_id: str
    indices: np.ndarray  # row indices into the source dataset, date-sorted
    dates: list[dt.date]


@dataclass
class SegmentationReport:
    segments: list[Segment]
    n_dropped: int  # segments shorter than 3 days


def segment_by_gaps(dataset: Dataset) -> SegmentationReport:
    """Split each participant's rows where consecutive dates differ by >= 2
    days; drop segments shorter than 3 days."""
    segments: list[Segment] = []
    n_dropped = 0
    for pid in dataset.participants:
        rows = dataset.rows_of(pid)
        order = rows[np.argsort([dataset.dates[i].toordinal() for i in rows])]
        runs: list[list[int]] = [[int(order[0])]]
        for i in order[1:]:
            prev = dataset.dates[runs[-1][-1]]
            if (dataset.dates[i] - prev).days > 1:
                runs.append([])
            runs[-1].append(int(i))
        for run in runs:
            if len(run) < 3:
                n_dropped += 1
            else:
                segments.append(
                    Segment(pid, np.array(run), [dataset.dates[i] for i in run])
                )
    return SegmentationReport(segments, n_dropped)


def expand_labels(
    segment_days: list[dt.date], confirmed_days: list[dt.date]
) -> np.ndarray:
    """Binary label per segment day: a confirmed day marks itself and up to
    3 days either side, clipped at the segment boundary; windows union."""
    day_set = set(segment_days)
    for d in confirmed_days:
        if d not in day_set:
            raise ValueError(f"confirmed day {d} outside segment")
    labels = np.zeros(len(segment_days), dtype=int)
    for d in confirmed_days:
        for i, day in enumerate(segment_days):
            if abs((day - d).days) <= LABEL_RADIUS:
                labels[i] = 1
    return labels


def temporal_split(dataset: Dataset, split_date: dt.date) -> tuple[Dataset, Dataset]:
    """Train = dates strictly before the split date; test = the rest."""
    before = np.array([d < split_date for d in dataset.dates])
    return dataset.subset(np.flatnonzero(before)), dataset.subset(
        np.flatnonzero(~before)
    )


# ---------------------------------------------------------------------------
# profiles, resampling, splits


def participant_profiles(
    dataset: Dataset, standardizer
) -> tuple[list[str], np.ndarray]:
    """Mean standardized feature vector per participant (sorted by id)."""
    Xs = standardizer.transform(dataset.X)
    pids = dataset.participants
    profiles = np.array([Xs[dataset.rows_of(pid)].mean(axis=0) for pid in pids])
    return pids, profiles


def stratified_resample(dataset: Dataset, fraction: float = 0.8, seed: int = 0) -> Dataset:
    """Sample floor(fraction * n_p) rows per participant (at least 1),
    without replacement; every participant stays represented."""
    if not 0.0 < fraction <= 1.0:
        raise ValueError("fraction must be in (0, 1]")
    rng = derive_rng(seed, "stratified_resample")
    keep: list[int] = []
    for pid in dataset.participants:
        rows = dataset.rows_of(pid)
        n_take = max(1, int(np.floor(fraction * len(rows))))
        keep.extend(rng.choice(rows, size=n_take, replace=False).tolist())
    return dataset.subset(np.sort(keep))


def mc_split(
    dataset: Dataset,
    val_fraction: float = 0.2,
    seed: int = 0,
    stratified: bool = False,
) -> tuple[Dataset, Dataset]:
    """One Monte-Carlo split: uniform random rows, |val| = round(f * n).

    With `stratified=True` the rounding is applied per participant instead.
    """
    n = len(dataset)
    if n == 0:
        raise ValueError("dataset must be non-empty")
    rng = derive_rng(seed, "mc_split")
    if stratified:
        val_idx: list[int] = []
        for pid in dataset.participants:
            rows = dataset.rows_of(pid)
            n_val = int(np.floor(val_fraction * len(rows) + 0.5))
            val_idx.extend(rng.choice(rows, size=n_val, replace=False).tolist())
        val_mask = np.zeros(n, dtype=bool)
        val_mask[val_idx] = True
    else:
        n_val = int(np.floor(val_fraction * n + 0.5))
        perm = rng.permutation(n)
        val_mask = np.zeros(n, dtype=bool)
        val_mask[perm[:n_val]] = True
    return dataset.subset(np.flatnonzero(~val_mask)), dataset.subset(
        np.flatnonzero(val_mask)
    )


# ---------------------------------------------------------------------------
# synthetic multi-source generator


@dataclass
class SynthConfig:
    """Planted-structure generator settings.

    Participants belong to latent clusters. On labeled days a block of
    "symptom" features shifts by `episode_shift`. All clusters but the last
    shift upward from a resting level of 0; the last cluster is planted as
    the hard one: it rests at `episode_shift` on the symptom block, shifts
    *down* to 0 on labeled days, and mimics the identity features of its
    neighbour cluster. A healthy day of the hard cluster is therefore
    row-identical to a sick day of its neighbour (and vice versa), so a
    participant-blind model sees directly conflicting label evidence, while
    any per-participant routing resolves it.

    Female rows get `sex_noise["F"]` times the male noise scale, planting
    the sex gap as a noise phenomenon (synthetic by construction).
    """

    n_participants: int = 60
    n_clusters: int = 3
    days_per_participant: int = 80
    n_features: int = N_FEATURES
    symptom_width: int = 5          # features 0..width-1 carry the episode shift
    cluster_offset: float = 1.0     # identity offset magnitude per cluster
    participant_offset: float = 0.2  # scale of per-participant offsets
    noise: float = 0.4              # base daily noise std
    sex_noise: dict[str, float] = field(
        default_factory=lambda: {"F": 1.5, "M": 1.0}
    )
    episode_rate: float = 4.0       # confirmed episodes per 100 days
    episode_shift: float = 1.2      # magnitude of the on-episode feature shift
    start_date: dt.date = dt.date(2021, 6, 28)
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_participants < 1 or self.n_clusters < 1:
            raise ValueError("counts must be >= 1")
        if self.days_per_participant < 1:
            raise ValueError("days_per_participant must be >= 1")
        if self.noise < 0 or any(v < 0 for v in self.sex_noise.values()):
            raise ValueError("noise scales must be >= 0")
        if self.episode_rate < 0:
            raise ValueError("episode_rate must be >= 0")
        if not 1 <= self.symptom_width < self.n_features:
            raise ValueError("symptom_width must be in [1, n_features)")


def _cluster_layout(config: SynthConfig) -> tuple[np.ndarray, np.ndarray]:
    """(base mean, signed episode shift) per cluster.

    Identity offsets live outside the symptom block, two features per
    cluster; the last cluster copies its neighbour's identity and inverts
    the episode direction from a raised resting level.
    """
    k, d, w = config.n_clusters, config.n_features, config.symptom_width
    bases = np.zeros((k, d))
    shifts = np.zeros((k, d))
    shifts[:, :w] = config.episode_shift
    for c in range(k):
        ident = c if (k == 1 or c < k - 1) else k - 2
        lo = w + (2 * ident) % max(1, d - w)
        bases[c, lo : min(lo + 2, d)] += config.cluster_offset
    if k > 1:
        bases[k - 1, :w] += config.episode_shift
        shifts[k - 1, :w] = -config.episode_shift
    return bases, shifts


@dataclass
class SynthResult:
    dataset: Dataset
    true_clusters: dict[str, int]


def synth_generate(config: SynthConfig) -> SynthResult:
    """Generate a dataset with planted clusters, episodes, and sex noise."""
    bases, shifts = _cluster_layout(config)
    d = config.n_features

    records: list[Record] = []
    true_clusters: dict[str, int] = {}
    for p in range(config.n_participants):
        pid = f"P{p:03d}"
        cluster = p % config.n_clusters
        true_clusters[pid] = cluster
        prng = derive_rng(config.seed, "synth", "participant", pid)
        sex = "F" if prng.random() < 0.5 else "M"
        noise_scale = config.noise * config.sex_noise[sex]
        offset = prng.normal(0.0, config.participant_offset, d)
        base = bases[cluster] + offset

        n_days = config.days_per_participant
        days = [config.start_date + dt.timedelta(days=i) for i in range(n_days)]
        confirmed = np.flatnonzero(prng.random(n_days) < config.episode_rate / 100.0)
        labels = np.zeros(n_days, dtype=int)
        for c in confirmed:
            lo, hi = max(0, c - LABEL_RADIUS), min(n_days - 1, c + LABEL_RADIUS)
            labels[lo : hi + 1] = 1

        noise = prng.normal(0.0, noise_scale, (n_days, d))
        X = base + noise
        X[labels == 1] += shifts[cluster]
        for i in range(n_days):
            records.append(
                Record(pid, days[i], tuple(X[i]), int(labels[i]), sex)
            )
    return SynthResult(Dataset.from_records(records), true_clusters)


def write_truth_csv(true_clusters: dict[str, int], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["participant_id", "true_cluster"])
        for pid in sorted(true_clusters):
            writer.writerow([pid, true_clusters[pid]])
