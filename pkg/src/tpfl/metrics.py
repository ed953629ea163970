"""Round reports, communication accounting and report files."""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

ID_BYTES = 4


@dataclass
class RoundReport:
    round: int
    per_client_accuracy: list[float]
    clusters: dict[int, list[int]]
    upload_bytes: int
    download_bytes: int
    client_iterations: int = 0
    cluster_iterations: int = 0
    mean_accuracy: float = field(default=None)

    def __post_init__(self):
        if self.mean_accuracy is None:
            self.mean_accuracy = float(np.mean(self.per_client_accuracy)) if self.per_client_accuracy else 0.0

    @property
    def cluster_count(self) -> int:
        return len(self.clusters)

    def to_dict(self) -> dict:
        return {
            "round": self.round,
            "mean_accuracy": self.mean_accuracy,
            "per_client_accuracy": list(self.per_client_accuracy),
            "clusters": {str(k): list(v) for k, v in sorted(self.clusters.items())},
            "upload_bytes": self.upload_bytes,
            "download_bytes": self.download_bytes,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "RoundReport":
        return cls(
            round=doc["round"],
            per_client_accuracy=list(doc["per_client_accuracy"]),
            clusters={int(k): list(v) for k, v in doc["clusters"].items()},
            upload_bytes=doc["upload_bytes"],
            download_bytes=doc["download_bytes"],
            mean_accuracy=doc["mean_accuracy"],
        )


@dataclass
class ExperimentSummary:
    experiment: int
    final_mean_accuracy: float
    cumulative_upload_bytes: int
    cumulative_download_bytes: int
    accuracy_trajectory: list[float]

    @classmethod
    def from_reports(cls, experiment: int, reports: list[RoundReport]) -> "ExperimentSummary":
        return cls(
            experiment=experiment,
            final_mean_accuracy=reports[-1].mean_accuracy if reports else 0.0,
            cumulative_upload_bytes=sum(r.upload_bytes for r in reports),
            cumulative_download_bytes=sum(r.download_bytes for r in reports),
            accuracy_trajectory=[r.mean_accuracy for r in reports],
        )

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def upload_payload(n_clauses: int, bytes_per_weight: int) -> int:
    """One class weight vector plus client id and class id."""
    return n_clauses * bytes_per_weight + 2 * ID_BYTES


def download_payload(n_clauses: int, bytes_per_weight: int) -> int:
    """One cluster broadcast: class weight vector plus class id."""
    return n_clauses * bytes_per_weight + ID_BYTES


def account_upload(client_count: int, n_clauses: int, bytes_per_weight: int = 4) -> int:
    return client_count * upload_payload(n_clauses, bytes_per_weight)


def account_download(cluster_count: int, n_clauses: int, bytes_per_weight: int = 4) -> int:
    if cluster_count < 0:
        raise ValueError("cluster_count must be >= 0")
    return cluster_count * download_payload(n_clauses, bytes_per_weight)


def account_full_upload(client_count: int, n_classes: int, n_clauses: int, bytes_per_weight: int = 4) -> int:
    """Global averaging: every client sends all class vectors plus its id."""
    return client_count * (n_classes * n_clauses * bytes_per_weight + ID_BYTES)


def account_full_download(n_classes: int, n_clauses: int, bytes_per_weight: int = 4) -> int:
    """Global averaging: one broadcast of the averaged matrix."""
    return n_classes * n_clauses * bytes_per_weight


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def _write(path: Path, text: str):
    try:
        with open(path, "w", newline="") as f:
            f.write(text)
    except OSError as exc:
        raise OSError(f"could not write report file {path}: {exc}") from exc


def emit_reports(results: dict[int, list[RoundReport]], out_dir) -> list[Path]:
    """Write rounds.jsonl, summary.json, accuracy_vs_round.csv and comm_costs.csv.

    ``results`` maps experiment index to its round reports.
    """
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"could not create output directory {out}: {exc}") from exc

    lines, acc_rows, comm_rows, summaries = [], [], [], []
    for experiment, reports in sorted(results.items()):
        for r in reports:
            lines.append(json.dumps({"experiment": experiment, **r.to_dict()}) + "\n")
            acc_rows.append([experiment, r.round, repr(r.mean_accuracy)])
            comm_rows.append([experiment, r.round, r.upload_bytes, r.download_bytes])
        summaries.append(ExperimentSummary.from_reports(experiment, reports).to_dict())

    files = {
        "rounds.jsonl": "".join(lines),
        "summary.json": json.dumps(summaries, indent=2) + "\n",
        "accuracy_vs_round.csv": _csv_text(["experiment", "round", "mean_accuracy"], acc_rows),
        "comm_costs.csv": _csv_text(["experiment", "round", "upload_bytes", "download_bytes"], comm_rows),
    }
    written = []
    for name, text in files.items():
        _write(out / name, text)
        written.append(out / name)
    return written
