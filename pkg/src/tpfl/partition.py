"""Dirichlet label-skew partitioning and the five IID/non-IID experiment mixes.

Each client draws one class-proportion vector ``p ~ Dir(alpha * 1_C)`` and
takes its train, test and confidence samples from the global split pools
according to that same vector.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import seeding

logger = logging.getLogger(__name__)

SPLITS = ("train", "test", "conf")
GLOBAL_SPLIT_SIZES = {"train": 30000, "test": 15000, "conf": 15000}
ALPHA_IID = 10000.0
ALPHA_NONIID = 0.05


class PoolExhaustedError(RuntimeError):
    pass


@dataclass
class ClientAssignment:
    train: np.ndarray
    test: np.ndarray
    conf: np.ndarray

    def split(self, name) -> np.ndarray:
        return getattr(self, name)


@dataclass
class PartitionPlan:
    clients: dict[int, ClientAssignment]
    alphas: tuple[float, float] = (ALPHA_IID, ALPHA_NONIID)
    iid_fraction: float = 1.0
    seed: int = 0
    experiment: int | None = None

    def __eq__(self, other):
        if not isinstance(other, PartitionPlan):
            return NotImplemented
        if (self.alphas, self.iid_fraction, self.seed, self.experiment) != (
            other.alphas, other.iid_fraction, other.seed, other.experiment
        ) or self.clients.keys() != other.clients.keys():
            return False
        return all(
            np.array_equal(self.clients[c].split(s), other.clients[c].split(s))
            for c in self.clients for s in SPLITS
        )

    def to_json(self) -> str:
        return json.dumps({
            "experiment": self.experiment,
            "seed": self.seed,
            "alphas": list(self.alphas),
            "iid_fraction": self.iid_fraction,
            "clients": [
                {"id": cid, **{s: a.split(s).tolist() for s in SPLITS}}
                for cid, a in sorted(self.clients.items())
            ],
        })

    @classmethod
    def from_json(cls, text: str) -> "PartitionPlan":
        doc = json.loads(text)
        clients = {
            int(c["id"]): ClientAssignment(*(np.asarray(c[s], dtype=np.int64) for s in SPLITS))
            for c in doc["clients"]
        }
        return cls(
            clients=clients,
            alphas=tuple(float(a) for a in doc["alphas"]),
            iid_fraction=float(doc.get("iid_fraction", 1.0)),
            seed=int(doc["seed"]),
            experiment=doc.get("experiment"),
        )

    def save(self, path):
        Path(path).write_text(self.to_json())

    @classmethod
    def load(cls, path) -> "PartitionPlan":
        return cls.from_json(Path(path).read_text())


@dataclass(frozen=True)
class ExperimentSpec:
    index: int
    client_count: int = 100
    dataset: str = "mnist"
    seed: int = 0
    fraction: float = 1.0
    alphas: tuple[float, float] = field(default=(ALPHA_IID, ALPHA_NONIID))

    def __post_init__(self):
        if self.index not in range(1, 6):
            raise ValueError(f"experiment index must be in 1..5, got {self.index}")
        if self.client_count < 1:
            raise ValueError("client_count must be >= 1")
        if not 0 < self.fraction <= 1:
            raise ValueError(f"fraction must lie in (0, 1], got {self.fraction}")

    @property
    def iid_fraction(self) -> float:
        return (5 - self.index) / 4

    @property
    def iid_client_count(self) -> int:
        # exact floor((5 - index) / 4 * M)
        return (5 - self.index) * self.client_count // 4


def sample_class_proportions(alpha: float, class_count: int, rng: np.random.Generator) -> np.ndarray:
    if not alpha > 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    if class_count < 2:
        raise ValueError(f"class_count must be >= 2, got {class_count}")
    while True:
        p = rng.dirichlet(np.full(class_count, float(alpha)))
        # very small alpha can underflow every gamma draw
        if np.all(np.isfinite(p)) and p.sum() > 0:
            return p / p.sum()


def largest_remainder(proportions, total: int) -> np.ndarray:
    """Integer counts summing to ``total``, leftovers to the largest fractional parts."""
    proportions = np.asarray(proportions, dtype=np.float64)
    raw = proportions / proportions.sum() * total
    counts = np.floor(raw).astype(np.int64)
    short = total - int(counts.sum())
    if short > 0:
        order = np.argsort(-(raw - counts), kind="stable")
        counts[order[:short]] += 1
    return counts


def split_sizes(fraction: float = 1.0, base=GLOBAL_SPLIT_SIZES) -> dict[str, int]:
    return {name: int(round(size * fraction)) for name, size in base.items()}


def build_pools(labels, sizes: dict[str, int], rng: np.random.Generator) -> dict[str, np.ndarray]:
    """Shuffle all sample indices once and cut consecutive train/test/conf pools."""
    needed = sum(sizes.values())
    if needed > len(labels):
        raise PoolExhaustedError(f"split sizes need {needed} samples, dataset has {len(labels)}")
    order = rng.permutation(len(labels))
    pools, start = {}, 0
    for name in SPLITS:
        pools[name] = order[start:start + sizes[name]]
        start += sizes[name]
    return pools


def _draw_counts(p, demand, available, client_id, split):
    counts = np.minimum(largest_remainder(p, demand), available)
    shortfall = demand - int(counts.sum())
    if shortfall:
        ran_out = [int(c) for c in np.flatnonzero(largest_remainder(p, demand) > available)]
        logger.warning("client %d %s: class pools %s ran out, redistributing %d samples",
                       client_id, split, ran_out, shortfall)
    while shortfall:
        room = available - counts
        survivors = room > 0
        if not survivors.any():
            exhausted = [int(c) for c in np.flatnonzero(p > 0)]
            raise PoolExhaustedError(
                f"client {client_id}: {split} pool is empty with {shortfall} samples still wanted "
                f"(classes run out: {exhausted})"
            )
        weights = np.where(survivors, p, 0.0)
        if weights.sum() <= 0:
            weights = room.astype(np.float64)
        extra = np.minimum(largest_remainder(weights, shortfall), room)
        if extra.sum() == 0:
            # rounding put the shortfall on full classes; hand it out by room instead
            extra = np.minimum(largest_remainder(room.astype(np.float64), shortfall), room)
        counts += extra
        shortfall = demand - int(counts.sum())
    return counts


def assign_samples(labels, proportions, pools: dict[str, np.ndarray], per_client: dict[str, int],
                   rng: np.random.Generator | None = None, *, class_count: int | None = None,
                   seed: int = 0, alphas=(ALPHA_IID, ALPHA_NONIID), iid_fraction: float = 1.0,
                   experiment: int | None = None) -> PartitionPlan:
    """Give each client ``per_client[split]`` samples from each pool, following its proportions.

    ``proportions`` is ``(M, C)``. Within a class, samples are handed out in
    pool order, so pools should already be shuffled; ``rng`` (optional)
    reshuffles each class pool first.
    """
    labels = np.asarray(labels)
    proportions = np.atleast_2d(np.asarray(proportions, dtype=np.float64))
    class_count = class_count or proportions.shape[1]
    by_class = {}
    for split in SPLITS:
        pool = np.asarray(pools[split], dtype=np.int64)
        if per_client[split] * len(proportions) > len(pool):
            raise PoolExhaustedError(
                f"{split}: {len(proportions)} clients x {per_client[split]} exceeds pool of {len(pool)}"
            )
        per = []
        for c in range(class_count):
            members = pool[labels[pool] == c]
            per.append(rng.permutation(members) if rng is not None else members)
        by_class[split] = per

    cursor = {split: np.zeros(class_count, dtype=np.int64) for split in SPLITS}
    clients = {}
    for client_id, p in enumerate(proportions):
        parts = {}
        for split in SPLITS:
            sizes = np.array([len(m) for m in by_class[split]])
            available = sizes - cursor[split]
            counts = _draw_counts(p, per_client[split], available, client_id, split)
            taken = []
            for c in np.flatnonzero(counts):
                start = cursor[split][c]
                taken.append(by_class[split][c][start:start + counts[c]])
                cursor[split][c] += counts[c]
            parts[split] = np.concatenate(taken) if taken else np.zeros(0, dtype=np.int64)
        clients[client_id] = ClientAssignment(**parts)
    return PartitionPlan(clients, tuple(float(a) for a in alphas), float(iid_fraction), int(seed), experiment)


def client_alphas(spec: ExperimentSpec) -> list[float]:
    """The first ``iid_client_count`` clients use the IID alpha, the rest the non-IID one."""
    alpha_iid, alpha_noniid = spec.alphas
    return [alpha_iid if i < spec.iid_client_count else alpha_noniid for i in range(spec.client_count)]


def client_proportions(spec: ExperimentSpec, class_count: int) -> np.ndarray:
    """One Dirichlet draw per client, each from its own seeded stream."""
    return np.stack([
        sample_class_proportions(alpha, class_count, seeding.derive_rng(spec.seed, seeding.PROPORTIONS, i))
        for i, alpha in enumerate(client_alphas(spec))
    ])


def build_experiment_plan(spec: ExperimentSpec, dataset) -> PartitionPlan:
    sizes = split_sizes(spec.fraction)
    pools = build_pools(dataset.labels, sizes, seeding.derive_rng(spec.seed, seeding.POOLS))
    per_client = {name: size // spec.client_count for name, size in sizes.items()}
    return assign_samples(
        dataset.labels,
        client_proportions(spec, dataset.class_count),
        pools,
        per_client,
        class_count=dataset.class_count,
        seed=spec.seed,
        alphas=spec.alphas,
        iid_fraction=spec.iid_fraction,
        experiment=spec.index,
    )
