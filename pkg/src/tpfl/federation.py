"""Personalized federation rounds with confidence-based clustering.

Per round every client trains locally, scores its confidence per class on a
held-out set and uploads the weight vector of its most confident class. The
aggregator groups uploads by class, averages each group and sends the mean
back to the group's members, who then evaluate on their test sets.
"""
from __future__ import annotations

import logging
import struct
from collections.abc import Iterator
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import seeding
from . import tm
from .dataset import DEFAULT_THRESHOLD, ClientData, build_client_data
from .metrics import (
    RoundReport,
    account_download,
    account_full_download,
    account_full_upload,
    account_upload,
)

logger = logging.getLogger(__name__)

STRATEGIES = ("tpfl", "global_average")
_WEIGHT_FORMATS = {1: "B", 2: "H", 4: "I", 8: "Q"}


def _pack_weights(prefix_fmt, prefix, values, bytes_per_weight):
    if values.size and int(values.max()) >= 1 << (8 * bytes_per_weight):
        raise ValueError(f"weight {int(values.max())} does not fit in {bytes_per_weight} bytes")
    fmt = f"<{prefix_fmt}{len(values)}{_WEIGHT_FORMATS[bytes_per_weight]}"
    return struct.pack(fmt, *prefix, *values.tolist())


class EmptyConfidenceSetError(ValueError):
    pass


class ClientError(RuntimeError):
    def __init__(self, client_id, cause):
        super().__init__(f"client {client_id}: {cause}")
        self.client_id = client_id


@dataclass(frozen=True)
class FederationConfig:
    client_count: int = 100
    rounds: int = 10
    local_epochs: int = 10
    strategy: str = "tpfl"
    n_clauses: int = 300
    T: int = 1000
    s: float = 10.0
    n_states: int = 127
    seed: int = 0
    bytes_per_weight: int = 4
    weighted_confidence: bool = False
    conf_fallback_to_train: bool = False
    workers: int = 1

    def __post_init__(self):
        if self.client_count < 1:
            raise ValueError("client_count must be >= 1")
        if self.rounds < 1:
            raise ValueError("rounds must be >= 1")
        if self.local_epochs < 1:
            raise ValueError("local_epochs must be >= 1")
        if self.strategy not in STRATEGIES:
            raise ValueError(f"strategy must be one of {STRATEGIES}, got {self.strategy!r}")
        if self.bytes_per_weight not in _WEIGHT_FORMATS:
            raise ValueError(f"bytes_per_weight must be one of {sorted(_WEIGHT_FORMATS)}")


@dataclass(frozen=True)
class ClientUpdate:
    client_id: int
    c_max: int
    weights: tm.ClassWeightVector

    def __post_init__(self):
        if self.weights.cls != self.c_max:
            raise ValueError(f"weight vector is for class {self.weights.cls}, update says {self.c_max}")

    def to_bytes(self, bytes_per_weight: int = 4) -> bytes:
        """``<client id u32><class id u32><weights>``, little-endian."""
        values = np.asarray(self.weights.weights, dtype=np.int64)
        return _pack_weights("II", (self.client_id, self.c_max), values, bytes_per_weight)

    @classmethod
    def from_bytes(cls, data: bytes, bytes_per_weight: int = 4) -> "ClientUpdate":
        n = (len(data) - 8) // bytes_per_weight
        client_id, c_max, *values = struct.unpack(f"<II{n}{_WEIGHT_FORMATS[bytes_per_weight]}", data)
        return cls(client_id, c_max, tm.ClassWeightVector(c_max, np.array(values, dtype=np.int64)))


@dataclass
class ClusterState:
    cls: int
    accumulated: np.ndarray
    members: list[int] = field(default_factory=list)
    mean: np.ndarray | None = None

    @property
    def member_count(self) -> int:
        return len(self.members)

    def to_bytes(self, bytes_per_weight: int = 4) -> bytes:
        """Broadcast encoding: ``<class id u32><integerized mean weights>``."""
        return _pack_weights("I", (self.cls,), tm.integerize_weights(self.mean), bytes_per_weight)


@dataclass
class Client:
    client_id: int
    data: ClientData
    model: tm.TMModel
    rng: np.random.Generator


def client_round(client: Client, epochs: int, *, weighted_confidence: bool = False,
                 conf_fallback_to_train: bool = False) -> ClientUpdate:
    """Local training, confidence scoring and selection of the upload."""
    for _ in range(epochs):
        tm.train_epoch(client.model, client.data.train.literals, client.data.train.labels, client.rng)
    conf = client.data.conf
    if len(conf) == 0:
        if not conf_fallback_to_train:
            raise EmptyConfidenceSetError(f"client {client.client_id} has an empty confidence set")
        logger.warning("client %d: empty confidence set, scoring on the train set", client.client_id)
        conf = client.data.train
    scores = tm.confidence_scores(client.model, conf.literals, weighted=weighted_confidence)
    c_max = tm.argmax_confidence(scores)
    return ClientUpdate(client.client_id, c_max, tm.get_class_weights(client.model, c_max))


def aggregate_updates(updates: list[ClientUpdate]) -> dict[int, ClusterState]:
    """Group uploads by class and average each group.

    Members are summed in client-id order so the result does not depend on
    arrival order.
    """
    lengths = {len(u.weights.weights) for u in updates}
    if len(lengths) > 1:
        raise ValueError(f"updates carry weight vectors of different lengths {sorted(lengths)}")
    clusters: dict[int, ClusterState] = {}
    for u in sorted(updates, key=lambda u: u.client_id):
        w = np.asarray(u.weights.weights, dtype=np.int64)
        if u.c_max not in clusters:
            clusters[u.c_max] = ClusterState(u.c_max, w.copy(), [u.client_id])
        else:
            clusters[u.c_max].accumulated += w
            clusters[u.c_max].members.append(u.client_id)
    for cluster in clusters.values():
        cluster.mean = cluster.accumulated / cluster.member_count
    return dict(sorted(clusters.items()))


def distribute_and_apply(clusters: dict[int, ClusterState], clients) -> dict[int, bool]:
    """Replace each member's class-k weight vector with its cluster's mean."""
    by_id = {c.client_id: c for c in clients}
    applied = {cid: False for cid in by_id}
    for k, cluster in clusters.items():
        for cid in cluster.members:
            tm.set_class_weights(by_id[cid].model, tm.ClassWeightVector(k, tm.integerize_weights(cluster.mean)))
            applied[cid] = True
    return applied


def strategy_global_average(full_updates) -> np.ndarray:
    """Entrywise mean of per-client ``(C, n)`` weight matrices, integerized."""
    mats = [np.asarray(m) for m in full_updates]
    if not mats:
        raise ValueError("no weight matrices to average")
    shapes = {m.shape for m in mats}
    if len(shapes) > 1:
        raise ValueError(f"weight matrices have different shapes {sorted(shapes)}")
    return tm.integerize_weights(np.sum(mats, axis=0, dtype=np.int64) / len(mats))


class Federation:
    """Clients plus aggregator state for one experiment."""

    def __init__(self, config: FederationConfig, clients: list[Client], n_classes: int):
        if len(clients) != config.client_count:
            raise ValueError(f"config expects {config.client_count} clients, got {len(clients)}")
        self.config = config
        self.clients = clients
        self.n_classes = n_classes

    @classmethod
    def from_plan(cls, config: FederationConfig, plan, dataset, threshold: int = DEFAULT_THRESHOLD):
        if len(plan.clients) != config.client_count:
            raise ValueError(f"plan has {len(plan.clients)} clients, config expects {config.client_count}")
        n_features = int(np.prod(dataset.images.shape[1:]))
        clients = [
            Client(
                cid,
                build_client_data(dataset, plan, cid, threshold),
                new_model(config, dataset.class_count, n_features),
                seeding.derive_rng(config.seed, seeding.CLIENT, cid),
            )
            for cid in sorted(plan.clients)
        ]
        return cls(config, clients, dataset.class_count)

    def _local_phase(self) -> list[ClientUpdate]:
        cfg = self.config

        def work(client):
            try:
                return client_round(client, cfg.local_epochs, weighted_confidence=cfg.weighted_confidence,
                                    conf_fallback_to_train=cfg.conf_fallback_to_train)
            except Exception as exc:
                raise ClientError(client.client_id, exc) from exc

        if cfg.workers > 1:
            with ThreadPoolExecutor(cfg.workers) as pool:
                return list(pool.map(work, self.clients))
        return [work(c) for c in self.clients]

    def _evaluate(self) -> list[float]:
        return [
            tm.evaluate_accuracy(c.model, c.data.test.literals, c.data.test.labels)
            for c in self.clients
        ]

    def run_round(self, round_index: int) -> RoundReport:
        cfg = self.config
        if cfg.strategy == "global_average":
            return self._run_global_average_round(round_index)

        updates = []
        client_iterations = 0
        for update in self._local_phase():
            updates.append(update)
            client_iterations += 1
        clusters = aggregate_updates(updates)
        cluster_iterations = len(clusters)
        distribute_and_apply(clusters, self.clients)
        return RoundReport(
            round=round_index,
            per_client_accuracy=self._evaluate(),
            clusters={k: list(c.members) for k, c in clusters.items()},
            upload_bytes=account_upload(len(updates), cfg.n_clauses, cfg.bytes_per_weight),
            download_bytes=account_download(len(clusters), cfg.n_clauses, cfg.bytes_per_weight),
            client_iterations=client_iterations,
            cluster_iterations=cluster_iterations,
        )

    def _run_global_average_round(self, round_index: int) -> RoundReport:
        cfg = self.config
        self._local_phase()
        averaged = strategy_global_average([c.model.weights for c in self.clients])
        for c in self.clients:
            c.model.weights[:] = averaged
        return RoundReport(
            round=round_index,
            per_client_accuracy=self._evaluate(),
            clusters={},
            upload_bytes=account_full_upload(len(self.clients), self.n_classes, cfg.n_clauses, cfg.bytes_per_weight),
            download_bytes=account_full_download(self.n_classes, cfg.n_clauses, cfg.bytes_per_weight),
            client_iterations=len(self.clients),
            cluster_iterations=1,
        )

    def rounds(self) -> Iterator[RoundReport]:
        for r in range(1, self.config.rounds + 1):
            yield self.run_round(r)


def new_model(config: FederationConfig, n_classes: int, n_features: int) -> tm.TMModel:
    return tm.TMModel(n_classes, config.n_clauses, n_features, config.T, config.s, config.n_states)


def run_federation(config: FederationConfig, plan, dataset, threshold: int = DEFAULT_THRESHOLD,
                   on_round=None) -> list[RoundReport]:
    """Run every round; ``on_round(report)`` is called as each one finishes."""
    reports = []
    for report in Federation.from_plan(config, plan, dataset, threshold).rounds():
        reports.append(report)
        if on_round is not None:
            on_round(report)
    return reports
