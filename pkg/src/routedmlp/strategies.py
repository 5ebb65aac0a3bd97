"""Participant-routed model families and their routing pipelines.

Four families sit on the same training loop:

* baseline            -- one network for everyone (routing is trivial, k=1)
* feature-clustered   -- shared trunk + per-cluster heads; clusters from
                         K-means over per-participant mean feature profiles
* loss-fully-separated / loss-final-layer-separated -- clusters from
                         1-D K-means over per-participant mean training loss
                         at the elbow epoch of a baseline run
* id-embedding        -- one network fed features concatenated with a
                         trainable 8-dim per-participant vector

Every family at k=1 (with zero, frozen embeddings for id-embedding) walks
through the exact same batch and RNG sequence as the baseline, so the k=1
reduction holds bit-for-bit.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import nn
from .cluster import KMeans, Standardizer, knee, select_k_elbow, silhouette_curve
from .data import Dataset, participant_profiles
from .nn import (
    AdamState,
    EpochTrace,
    Layer,
    MlpParams,
    ParamSnapshot,
    TrainConfig,
    init_layer,
    init_mlp,
)
from .rng import derive_rng

EMBED_DIM = 8
HIDDEN_SIZES = (30, 10)


class RoutingError(ValueError):
    """A row's participant has no cluster assignment."""


# ---------------------------------------------------------------------------
# routing table


@dataclass
class RoutingTable:
    """participant id -> cluster id, plus the frozen artifacts that let
    unseen participants be routed at prediction time."""

    assignment: dict[str, int]
    k: int
    provenance: str  # "features" | "loss" | "trivial"
    kmeans: KMeans | None = None
    standardizer: Standardizer | None = None  # feature routing
    snapshot: ParamSnapshot | None = None     # loss routing
    elbow: int | None = None                  # loss routing: elbow epoch

    def __post_init__(self) -> None:
        bad = {p: c for p, c in self.assignment.items() if not 0 <= c < self.k}
        if bad:
            raise ValueError(f"cluster ids out of range [0, {self.k}): {bad}")

    def cluster_of(self, participant_id: str) -> int:
        try:
            return self.assignment[participant_id]
        except KeyError:
            raise RoutingError(f"participant {participant_id!r} is not routed")

    def row_clusters(self, dataset: Dataset) -> np.ndarray:
        return np.array([self.cluster_of(pid) for pid in dataset.ids], dtype=int)

    @classmethod
    def trivial(cls, participants: list[str]) -> "RoutingTable":
        return cls({pid: 0 for pid in participants}, k=1, provenance="trivial")

    def to_jsonable(self) -> dict:
        obj = {
            "assignment": dict(sorted(self.assignment.items())),
            "k": self.k,
            "provenance": self.provenance,
        }
        if self.kmeans is not None:
            obj["kmeans"] = self.kmeans.to_jsonable()
        if self.standardizer is not None:
            obj["standardizer"] = self.standardizer.to_jsonable()
        if self.snapshot is not None:
            obj["snapshot"] = {
                "epoch": self.snapshot.epoch,
                "params": self.snapshot.params.to_jsonable(),
            }
        if self.elbow is not None:
            obj["elbow"] = self.elbow
        return obj

    @classmethod
    def from_jsonable(cls, obj: dict) -> "RoutingTable":
        snapshot = None
        if "snapshot" in obj:
            snapshot = ParamSnapshot(
                epoch=obj["snapshot"]["epoch"],
                params=MlpParams.from_jsonable(obj["snapshot"]["params"]),
                adam=None,  # optimizer state is not needed for routing
            )
        return cls(
            assignment={k: int(v) for k, v in obj["assignment"].items()},
            k=obj["k"],
            provenance=obj["provenance"],
            kmeans=KMeans.from_jsonable(obj["kmeans"]) if "kmeans" in obj else None,
            standardizer=(
                Standardizer.from_jsonable(obj["standardizer"])
                if "standardizer" in obj
                else None
            ),
            snapshot=snapshot,
            elbow=obj.get("elbow"),
        )


# ---------------------------------------------------------------------------
# feature routing


def route_by_features(
    train: Dataset,
    test: Dataset | None = None,
    k: int | str = "auto",
    seed: int = 0,
    k_range: tuple[int, int] = (2, 8),
    n_restarts: int = 10,
) -> tuple[RoutingTable, KMeans]:
    """Cluster participants by mean standardized feature profile.

    k="auto" picks the silhouette-best k in `k_range`; any test-only
    participants are predicted into the fitted clusters from their own
    profiles (standardized with the training standardizer).
    """
    if len(train) == 0:
        raise ValueError("train dataset must be non-empty")
    standardizer = Standardizer().fit(train.X)
    pids, profiles = participant_profiles(train, standardizer)
    if k == "auto":
        hi = min(k_range[1], len(np.unique(profiles, axis=0)) - 1)
        sel = silhouette_curve(
            profiles, k_range[0], hi, n_restarts=n_restarts, seed=seed
        )
        k = sel.chosen_k
    if k > len(pids):
        raise ValueError(f"k={k} exceeds {len(pids)} training participants")
    model = KMeans(int(k), n_restarts=n_restarts, seed=seed).fit(profiles)
    assignment = {pid: int(c) for pid, c in zip(pids, model.labels_)}
    if test is not None:
        new_pids = [p for p in test.participants if p not in assignment]
        if new_pids:
            sub = test.subset(
                np.concatenate([test.rows_of(p) for p in new_pids])
            )
            npids, nprofiles = participant_profiles(sub, standardizer)
            for pid, c in zip(npids, model.predict(nprofiles)):
                assignment[pid] = int(c)
    table = RoutingTable(
        assignment, k=int(k), provenance="features",
        kmeans=model, standardizer=standardizer,
    )
    return table, model


# ---------------------------------------------------------------------------
# loss routing


def elbow_epoch(
    epoch_mean_losses, override: int | None = None, warn: bool = True
) -> int:
    """1-based epoch index of the loss curve's knee.

    A degenerate (linear) curve has no knee; fall back to ceil(E/10) with a
    warning. A manual override wins outright.
    """
    losses = list(epoch_mean_losses)
    if override is not None:
        if not 1 <= override <= len(losses):
            raise ValueError(f"override epoch {override} outside [1, {len(losses)}]")
        return override
    if len(losses) < 3:
        raise ValueError("elbow detection needs at least 3 epochs")
    result = knee(losses)
    if not result.found:
        fallback = math.ceil(len(losses) / 10)
        if warn:
            warnings.warn(
                f"no knee in the loss curve; defaulting to epoch {fallback}",
                stacklevel=2,
            )
        return fallback
    return result.index + 1


def _mean_loss_per_participant(
    sample_losses: dict[tuple[str, int], float]
) -> dict[str, float]:
    sums: dict[str, float] = {}
    counts: dict[str, int] = {}
    for (pid, _), loss in sample_losses.items():
        sums[pid] = sums.get(pid, 0.0) + loss
        counts[pid] = counts.get(pid, 0) + 1
    return {pid: sums[pid] / counts[pid] for pid in sums}


def _sort_clusters_by_centroid(model: KMeans) -> KMeans:
    # relabel so cluster ids are ordered by ascending centroid (1-D only);
    # the top-loss cluster is then always id k-1
    order = np.argsort(model.cluster_centers_[:, 0], kind="stable")
    model.cluster_centers_ = model.cluster_centers_[order]
    remap = np.empty(len(order), dtype=int)
    remap[order] = np.arange(len(order))
    model.labels_ = remap[model.labels_]
    return model


def route_by_loss(
    train: Dataset,
    test: Dataset | None = None,
    base_config: TrainConfig | None = None,
    k: int | str = "auto",
    seed: int = 0,
    k_range: tuple[int, int] = (2, 6),
    n_restarts: int = 10,
    elbow_override: int | None = None,
    repredict_common: bool = False,
) -> tuple[RoutingTable, KMeans, ParamSnapshot]:
    """Cluster participants by mean training loss at the elbow epoch.

    Trains a baseline network on the full training set, finds the elbow of
    the epoch-mean loss curve, averages the per-sample losses recorded in
    that epoch per participant, and K-means-clusters those 1-D means
    (k="auto" via the WCSS knee). Test-only participants get losses from a
    forward pass with the elbow-epoch parameter snapshot. Participants seen
    in training keep their training cluster unless `repredict_common`.
    """
    if len(train) == 0:
        raise ValueError("train dataset must be non-empty")
    config = base_config if base_config is not None else TrainConfig(seed=seed)
    params = init_mlp(
        [train.n_features, *HIDDEN_SIZES, nn.N_CLASSES],
        derive_rng(config.seed, "init"),
    )
    result = nn.train(
        params, train.X, train.y, config,
        snapshot_epochs=set(range(1, config.epochs + 1)),
        participant_ids=train.ids,
    )
    curve = [t.mean_loss for t in result.traces]
    elbow = elbow_epoch(curve, override=elbow_override)
    snapshot = result.snapshots[elbow - 1]

    means = _mean_loss_per_participant(result.traces[elbow - 1].sample_losses)
    missing = [p for p in train.participants if p not in means]
    if missing:
        raise ValueError(f"participants with no traced rows: {missing}")
    pids = sorted(means)
    values = np.array([means[p] for p in pids])[:, None]
    if k == "auto":
        hi = min(k_range[1], len(np.unique(values)) - 1)
        sel = select_k_elbow(values, k_range[0], hi, n_restarts=n_restarts, seed=seed)
        k = sel.chosen_k
    model = KMeans(int(k), n_restarts=n_restarts, seed=seed).fit(values)
    model = _sort_clusters_by_centroid(model)
    assignment = {pid: int(c) for pid, c in zip(pids, model.labels_)}

    if test is not None:
        targets = (
            test.participants
            if repredict_common
            else [p for p in test.participants if p not in assignment]
        )
        for pid in targets:
            rows = test.rows_of(pid)
            losses = nn.per_sample_losses(
                snapshot.params, test.X[rows], test.y[rows]
            )
            assignment[pid] = int(model.predict([[float(losses.mean())]])[0])

    table = RoutingTable(
        assignment, k=int(k), provenance="loss",
        kmeans=model, snapshot=snapshot, elbow=elbow,
    )
    return table, model, snapshot


# ---------------------------------------------------------------------------
# strategy models


ARCHITECTURES = {
    "baseline": "single",
    "feature-clustered": "final",
    "loss-fully-separated": "fully",
    "loss-final-layer-separated": "final",
    "id-embedding": "embed",
}


@dataclass
class StrategyModel:
    """Parameters for one strategy instance.

    single -> nets[0]; fully -> one net per cluster; final -> shared trunk
    plus one head layer per cluster; embed -> nets[0] whose first layer is
    widened by EMBED_DIM columns, plus the embedding table.
    """

    kind: str
    k: int
    nets: list[MlpParams] = field(default_factory=list)
    trunk: MlpParams | None = None
    heads: list[Layer] = field(default_factory=list)
    embedding_ids: list[str] = field(default_factory=list)
    embedding: np.ndarray | None = None  # (len(embedding_ids), EMBED_DIM)
    embedding_trainable: bool = True

    @property
    def architecture(self) -> str:
        return ARCHITECTURES[self.kind]

    def embedding_row(self, pid: str) -> int:
        try:
            return self.embedding_ids.index(pid)
        except ValueError:
            raise RoutingError(
                f"participant {pid!r} has no trained embedding and was excluded"
            )

    def stack_for(self, cluster: int) -> MlpParams:
        """The full layer stack serving one cluster (views, not copies)."""
        arch = self.architecture
        if arch == "final":
            return MlpParams(self.trunk.layers + [self.heads[cluster]])
        return self.nets[cluster if arch == "fully" else 0]

    def to_jsonable(self) -> dict:
        obj = {"kind": self.kind, "k": self.k}
        if self.nets:
            obj["nets"] = [p.to_jsonable() for p in self.nets]
        if self.trunk is not None:
            obj["trunk"] = self.trunk.to_jsonable()
            obj["heads"] = [
                {"weight": h.weight.tolist(), "bias": h.bias.tolist()}
                for h in self.heads
            ]
        if self.embedding is not None:
            obj["embedding_ids"] = self.embedding_ids
            obj["embedding"] = self.embedding.tolist()
            obj["embedding_trainable"] = self.embedding_trainable
        return obj

    @classmethod
    def from_jsonable(cls, obj: dict) -> "StrategyModel":
        model = cls(kind=obj["kind"], k=obj["k"])
        if "nets" in obj:
            model.nets = [MlpParams.from_jsonable(p) for p in obj["nets"]]
        if "trunk" in obj:
            model.trunk = MlpParams.from_jsonable(obj["trunk"])
            model.heads = [
                Layer(np.asarray(h["weight"], float), np.asarray(h["bias"], float))
                for h in obj["heads"]
            ]
        if "embedding" in obj:
            model.embedding_ids = list(obj["embedding_ids"])
            model.embedding = np.asarray(obj["embedding"], dtype=float)
            model.embedding_trainable = obj["embedding_trainable"]
        return model


def build_strategy(
    kind: str,
    k: int,
    base_config: TrainConfig,
    roster: list[str] | None = None,
    n_features: int = 20,
    hidden: tuple[int, ...] = HIDDEN_SIZES,
    embedding_init: str = "uniform",
    embedding_trainable: bool = True,
) -> StrategyModel:
    """Initialise a strategy's parameters (seeded by base_config.seed).

    Draw order is arranged so that every kind at k=1 starts from weights
    bit-identical to the baseline's.
    """
    if kind not in ARCHITECTURES:
        raise ValueError(f"unknown strategy kind {kind!r}")
    arch = ARCHITECTURES[kind]
    if k < 1:
        raise ValueError("k must be >= 1")
    if arch in ("single", "embed") and k != 1:
        raise ValueError(f"{kind} does not take clusters (k must be 1)")
    rng = derive_rng(base_config.seed, "init")
    sizes = [n_features, *hidden, nn.N_CLASSES]
    model = StrategyModel(kind=kind, k=k)

    if arch == "single":
        model.nets = [init_mlp(sizes, rng)]
    elif arch == "fully":
        model.nets = [init_mlp(sizes, rng) for _ in range(k)]
    elif arch == "final":
        model.trunk = init_mlp(sizes[:-1], rng)
        model.heads = [init_layer(nn.N_CLASSES, hidden[-1], rng) for _ in range(k)]
    else:  # embed
        if roster is None:
            raise ValueError("id-embedding needs the participant roster")
        base = init_mlp(sizes, rng)
        emb_cols = init_layer(hidden[0], EMBED_DIM, rng)
        first = base.layers[0]
        base.layers[0] = Layer(
            np.hstack([first.weight, emb_cols.weight]), first.bias
        )
        model.nets = [MlpParams(base.layers)]
        model.embedding_ids = sorted(roster)
        model.embedding_trainable = embedding_trainable
        if embedding_init == "uniform":
            emb_rng = derive_rng(base_config.seed, "init", "embedding")
            model.embedding = emb_rng.uniform(
                -0.05, 0.05, (len(model.embedding_ids), EMBED_DIM)
            )
        elif embedding_init == "zeros":
            model.embedding = np.zeros((len(model.embedding_ids), EMBED_DIM))
        else:
            raise ValueError(f"unknown embedding_init {embedding_init!r}")
    return model


def _embed_inputs(model: StrategyModel, X: np.ndarray, pids) -> np.ndarray:
    rows = np.array([model.embedding_row(pid) for pid in pids], dtype=int)
    return np.hstack([X, model.embedding[rows]]), rows


def train_strategy(
    model: StrategyModel,
    routing: RoutingTable | None,
    dataset: Dataset,
    config: TrainConfig,
) -> tuple[StrategyModel, list[EpochTrace]]:
    """Train any strategy with one shared loop.

    Each epoch shuffles all rows once, partitions them by cluster (keeping
    the shuffled order), chunks each cluster into batches, and interleaves
    the clusters' batches round-robin, so the shared trunk sees every
    cluster throughout the epoch. Adam state is kept per disjoint parameter
    group (per net, trunk, each head, embedding table); with k=1 this loop
    reduces exactly to plain single-network training.
    """
    if len(dataset) == 0:
        raise ValueError("training data must be non-empty")
    arch = model.architecture
    if arch in ("single", "embed"):
        row_cluster = np.zeros(len(dataset), dtype=int)
    else:
        if routing is None:
            raise RoutingError(f"{model.kind} requires a routing table")
        row_cluster = routing.row_clusters(dataset)
    k = model.k

    # one optimizer state per disjoint parameter group
    if arch == "final":
        trunk_state = AdamState.zeros_like(model.trunk.layers)
        head_states = [AdamState.zeros_like([h]) for h in model.heads]
    else:
        net_states = [AdamState.zeros_like(p.layers) for p in model.nets]
    if arch == "embed" and model.embedding_trainable:
        emb_m = np.zeros_like(model.embedding)
        emb_v = np.zeros_like(model.embedding)
        emb_t = 0

    shuffle_rng = derive_rng(config.seed, "shuffle")
    dropout_rng = derive_rng(config.seed, "dropout")
    n = len(dataset)
    traces: list[EpochTrace] = []

    for epoch in range(1, config.epochs + 1):
        order = shuffle_rng.permutation(n)
        per_cluster = [order[row_cluster[order] == c] for c in range(k)]
        batches = [
            [idx[s : s + config.batch_size] for s in range(0, len(idx), config.batch_size)]
            for idx in per_cluster
        ]
        sample_losses: dict[tuple[str, int], float] = {}
        for j in range(max(len(b) for b in batches)):
            for c in range(k):
                if j >= len(batches[c]):
                    continue
                idx = batches[c][j]
                Xb, yb = dataset.X[idx], dataset.y[idx]
                if arch == "embed":
                    Xb, emb_rows = _embed_inputs(model, Xb, dataset.ids[idx])
                stack = model.stack_for(c)
                logits, cache = nn.forward(
                    stack, Xb, mode="train",
                    dropout_rate=config.dropout_rate, rng=dropout_rng,
                )
                losses, probs = nn.softmax_cross_entropy(logits, yb)
                if config.trace_mode == "pre_update":
                    for jj, row in enumerate(idx):
                        sample_losses[(dataset.ids[row], int(row))] = float(losses[jj])
                if arch == "embed":
                    grads, dinput = nn.backward(
                        cache, probs, yb, return_input_grad=True
                    )
                else:
                    grads = nn.backward(cache, probs, yb)

                if arch == "final":
                    nn.adam_step_layers(
                        model.trunk.layers, grads[:-1], trunk_state, config
                    )
                    nn.adam_step_layers(
                        [model.heads[c]], grads[-1:], head_states[c], config
                    )
                else:
                    net = model.nets[c if arch == "fully" else 0]
                    nn.adam_step_layers(net.layers, grads, net_states[c if arch == "fully" else 0], config)
                if arch == "embed" and model.embedding_trainable:
                    emb_grad = np.zeros_like(model.embedding)
                    np.add.at(emb_grad, emb_rows, dinput[:, -EMBED_DIM:])
                    emb_t += 1
                    emb_m = config.beta1 * emb_m + (1 - config.beta1) * emb_grad
                    emb_v = config.beta2 * emb_v + (1 - config.beta2) * emb_grad**2
                    mh = emb_m / (1 - config.beta1**emb_t)
                    vh = emb_v / (1 - config.beta2**emb_t)
                    model.embedding -= config.learning_rate * mh / (
                        np.sqrt(vh) + config.eps
                    )
        if config.trace_mode == "post_epoch":
            _, probs = predict_strategy(model, routing, dataset)
            losses, _ = nn.softmax_cross_entropy(np.log(probs + 1e-300), dataset.y)
            sample_losses = {
                (dataset.ids[i], i): float(losses[i]) for i in range(n)
            }
        mean_loss = float(np.mean(list(sample_losses.values())))
        traces.append(EpochTrace(epoch, sample_losses, mean_loss))
    return model, traces


def predict_strategy(
    model: StrategyModel,
    routing: RoutingTable | None,
    dataset: Dataset,
) -> tuple[np.ndarray, np.ndarray]:
    """Dispatch rows to their cluster's path; outputs keep the input order."""
    arch = model.architecture
    if arch in ("single", "embed"):
        row_cluster = np.zeros(len(dataset), dtype=int)
    else:
        if routing is None:
            raise RoutingError(f"{model.kind} requires a routing table")
        row_cluster = routing.row_clusters(dataset)
    if arch == "embed":
        missing = sorted(
            {pid for pid in dataset.ids if pid not in model.embedding_ids}
        )
        if missing:
            raise RoutingError(
                f"participants without trained embeddings were excluded: {missing}"
            )
    labels = np.zeros(len(dataset), dtype=int)
    probs = np.zeros((len(dataset), nn.N_CLASSES))
    for c in range(model.k):
        idx = np.flatnonzero(row_cluster == c)
        if len(idx) == 0:
            continue
        Xc = dataset.X[idx]
        if arch == "embed":
            Xc, _ = _embed_inputs(model, Xc, dataset.ids[idx])
        lab, prob = nn.predict(model.stack_for(c), Xc)
        labels[idx] = lab
        probs[idx] = prob
    return labels, probs


# ---------------------------------------------------------------------------
# end-to-end spec: route + build + train, then predict anywhere


@dataclass
class StrategySpec:
    """What to train: a strategy kind and (for clustered kinds) k."""

    kind: str
    k: int | str = "auto"

    def __post_init__(self) -> None:
        if self.kind not in ARCHITECTURES:
            raise ValueError(f"unknown strategy kind {self.kind!r}")

    @property
    def name(self) -> str:
        if self.kind == "feature-clustered" and self.k != "auto":
            return f"feature-clustered-k{self.k}"
        return self.kind


@dataclass
class FittedStrategy:
    """A trained strategy plus the frozen routing artifacts.

    Prediction on data containing unseen participants routes them through
    the stored cluster model (feature profiles or snapshot losses) without
    mutating any training-time artifact; id-embedding rejects unseen ids.
    """

    spec: StrategySpec
    config: TrainConfig
    model: StrategyModel
    routing: RoutingTable
    traces: list[EpochTrace] = field(default_factory=list)

    @classmethod
    def fit(
        cls, spec: StrategySpec, train: Dataset, config: TrainConfig
    ) -> "FittedStrategy":
        from dataclasses import replace
        from .rng import derive_seed

        kind, seed = spec.kind, config.seed
        if kind == "baseline":
            routing = RoutingTable.trivial(train.participants)
        elif kind == "feature-clustered":
            routing, _ = route_by_features(train, k=spec.k, seed=seed)
        elif kind in ("loss-fully-separated", "loss-final-layer-separated"):
            probe_config = replace(config, seed=derive_seed(seed, "route-probe"))
            routing, _, _ = route_by_loss(
                train, base_config=probe_config, k=spec.k, seed=seed
            )
        elif kind == "id-embedding":
            routing = RoutingTable.trivial(train.participants)
        model = build_strategy(
            kind,
            routing.k if ARCHITECTURES[kind] not in ("single", "embed") else 1,
            config,
            roster=train.participants,
            n_features=train.n_features,
        )
        model, traces = train_strategy(model, routing, train, config)
        return cls(spec, config, model, routing, traces)

    def _extended_routing(self, dataset: Dataset) -> RoutingTable:
        """Route any unseen participants via the frozen artifacts; returns a
        fresh table, never touching the stored one."""
        if self.routing.provenance == "trivial":
            return RoutingTable.trivial(
                sorted(set(self.routing.assignment) | set(dataset.participants))
            )
        assignment = dict(self.routing.assignment)
        new_pids = [p for p in dataset.participants if p not in assignment]
        for pid in new_pids:
            rows = dataset.rows_of(pid)
            if self.routing.provenance == "features":
                profile = self.routing.standardizer.transform(
                    dataset.X[rows]
                ).mean(axis=0)
                assignment[pid] = int(self.routing.kmeans.predict([profile])[0])
            else:  # loss
                losses = nn.per_sample_losses(
                    self.routing.snapshot.params, dataset.X[rows], dataset.y[rows]
                )
                assignment[pid] = int(
                    self.routing.kmeans.predict([[float(losses.mean())]])[0]
                )
        return RoutingTable(
            assignment, self.routing.k, self.routing.provenance,
            kmeans=self.routing.kmeans,
            standardizer=self.routing.standardizer,
            snapshot=self.routing.snapshot,
            elbow=self.routing.elbow,
        )

    def predict(self, dataset: Dataset) -> tuple[np.ndarray, np.ndarray]:
        return predict_strategy(self.model, self._extended_routing(dataset), dataset)

    def val_loss(self, dataset: Dataset) -> float:
        return strategy_loss(self.model, self._extended_routing(dataset), dataset)

    def to_jsonable(self) -> dict:
        return {
            "spec": {"kind": self.spec.kind, "k": self.spec.k},
            "config": {
                "learning_rate": self.config.learning_rate,
                "dropout_rate": self.config.dropout_rate,
                "epochs": self.config.epochs,
                "batch_size": self.config.batch_size,
                "seed": self.config.seed,
            },
            "model": self.model.to_jsonable(),
            "routing": self.routing.to_jsonable(),
        }

    @classmethod
    def from_jsonable(cls, obj: dict) -> "FittedStrategy":
        return cls(
            spec=StrategySpec(obj["spec"]["kind"], obj["spec"]["k"]),
            config=TrainConfig(**obj["config"]),
            model=StrategyModel.from_jsonable(obj["model"]),
            routing=RoutingTable.from_jsonable(obj["routing"]),
        )


def strategy_loss(
    model: StrategyModel,
    routing: RoutingTable | None,
    dataset: Dataset,
) -> float:
    """Mean inference-mode cross-entropy over the dataset."""
    arch = model.architecture
    if arch in ("single", "embed"):
        row_cluster = np.zeros(len(dataset), dtype=int)
    else:
        row_cluster = routing.row_clusters(dataset)
    total = 0.0
    for c in range(model.k):
        idx = np.flatnonzero(row_cluster == c)
        if len(idx) == 0:
            continue
        Xc = dataset.X[idx]
        if arch == "embed":
            Xc, _ = _embed_inputs(model, Xc, dataset.ids[idx])
        logits, _ = nn.forward(model.stack_for(c), Xc, mode="infer")
        losses, _ = nn.softmax_cross_entropy(logits, dataset.y[idx])
        total += float(losses.sum())
    return total / len(dataset)
