"""Command line entry point: ``tpfl run [flags]``."""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
import traceback
from dataclasses import dataclass, fields
from pathlib import Path

from .dataset import CLASS_COUNTS, DEFAULT_THRESHOLD, load_dataset
from .federation import STRATEGIES, FederationConfig, run_federation
from .metrics import emit_reports
from .partition import ALPHA_IID, ALPHA_NONIID, ExperimentSpec, build_experiment_plan

logger = logging.getLogger("tpfl")

DEFAULT_CLAUSES = {"mnist": 300, "fashion_mnist": 500, "femnist": 500}


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    dataset: str = "mnist"
    data_dir: str | None = None
    experiment: int | str = "all"
    clients: int = 100
    rounds: int = 10
    epochs: int = 10
    clauses: int | None = None
    threshold_T: int = 1000
    sensitivity: float = 10.0
    n_states: int = 127
    binarize_threshold: int = DEFAULT_THRESHOLD
    alpha_iid: float = ALPHA_IID
    alpha_noniid: float = ALPHA_NONIID
    fraction: float = 1.0
    strategy: str = "tpfl"
    seed: int = 0
    out: str = "runs/latest"
    workers: int = 0
    weighted_confidence: bool = False
    bytes_per_weight: int = 4

    def __post_init__(self):
        if self.clauses is None and self.dataset in DEFAULT_CLAUSES:
            self.clauses = DEFAULT_CLAUSES[self.dataset]
        if self.workers == 0:
            self.workers = os.cpu_count() or 1

    def validate(self) -> "RunConfig":
        def need(ok, name, why):
            if not ok:
                raise ConfigError(f"{name}: {why} (got {getattr(self, name)!r})")

        need(self.dataset in CLASS_COUNTS, "dataset", f"must be one of {sorted(CLASS_COUNTS)}")
        need(self.experiment == "all" or self.experiment in range(1, 6), "experiment", "must be 1..5 or 'all'")
        need(self.clients >= 1, "clients", "must be >= 1")
        need(self.rounds >= 1, "rounds", "must be >= 1")
        need(self.epochs >= 1, "epochs", "must be >= 1")
        need(self.clauses >= 2 and self.clauses % 2 == 0, "clauses", "must be a positive even number")
        need(self.threshold_T >= 1, "threshold_T", "must be >= 1")
        need(self.sensitivity > 1, "sensitivity", "must be > 1")
        need(1 <= self.n_states <= 16383, "n_states", "must lie in [1, 16383]")
        need(0 <= self.binarize_threshold <= 255, "binarize_threshold", "must lie in [0, 255]")
        need(self.alpha_iid > 0, "alpha_iid", "must be positive")
        need(self.alpha_noniid > 0, "alpha_noniid", "must be positive")
        need(0 < self.fraction <= 1, "fraction", "must lie in (0, 1]")
        need(self.strategy in STRATEGIES, "strategy", f"must be one of {STRATEGIES}")
        need(self.workers >= 1, "workers", "must be >= 1")
        need(self.bytes_per_weight in (1, 2, 4, 8), "bytes_per_weight", "must be 1, 2, 4 or 8")
        return self

    @property
    def experiments(self) -> list[int]:
        return list(range(1, 6)) if self.experiment == "all" else [int(self.experiment)]

    def federation_config(self) -> FederationConfig:
        return FederationConfig(
            client_count=self.clients, rounds=self.rounds, local_epochs=self.epochs,
            strategy=self.strategy, n_clauses=self.clauses, T=self.threshold_T, s=self.sensitivity,
            n_states=self.n_states, seed=self.seed, bytes_per_weight=self.bytes_per_weight,
            weighted_confidence=self.weighted_confidence, workers=self.workers,
        )


_KEYS = [f.name for f in fields(RunConfig)]


def _experiment(value):
    if value == "all":
        return value
    try:
        return int(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"experiment must be 1..5 or 'all', got {value!r}") from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tpfl", description="Tsetlin Machine personalized federated learning simulator")
    sub = parser.add_subparsers(dest="command", required=True)
    run_p = sub.add_parser("run", help="run one experiment or all five")
    run_p.add_argument("--config", help="JSON file of RunConfig keys")
    run_p.add_argument("--dataset", choices=sorted(CLASS_COUNTS))
    run_p.add_argument("--data-dir", dest="data_dir")
    run_p.add_argument("--experiment", type=_experiment)
    run_p.add_argument("--clients", type=int)
    run_p.add_argument("--rounds", type=int)
    run_p.add_argument("--epochs", type=int)
    run_p.add_argument("--clauses", type=int)
    run_p.add_argument("--threshold-T", dest="threshold_T", type=int)
    run_p.add_argument("--sensitivity", type=float)
    run_p.add_argument("--n-states", dest="n_states", type=int)
    run_p.add_argument("--binarize-threshold", dest="binarize_threshold", type=int)
    run_p.add_argument("--alpha-iid", dest="alpha_iid", type=float)
    run_p.add_argument("--alpha-noniid", dest="alpha_noniid", type=float)
    run_p.add_argument("--fraction", type=float)
    run_p.add_argument("--strategy", choices=STRATEGIES)
    run_p.add_argument("--seed", type=int)
    run_p.add_argument("--out")
    run_p.add_argument("--workers", type=int)
    run_p.add_argument("--weighted-confidence", dest="weighted_confidence", action="store_true", default=None)
    run_p.add_argument("--bytes-per-weight", dest="bytes_per_weight", type=int)
    return parser


def parse_config(argv=None, file_values: dict | None = None) -> RunConfig:
    """Defaults, then the JSON file (or ``file_values``), then flags."""
    args = build_parser().parse_args(argv)
    values = dict(file_values or {})
    if args.config:
        try:
            values.update(json.loads(Path(args.config).read_text()))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"could not read config file {args.config}: {exc}") from exc
    unknown = sorted(set(values) - set(_KEYS))
    if unknown:
        raise ConfigError(f"unknown config keys {unknown}; valid keys are {_KEYS}")
    flags = {k: v for k, v in vars(args).items() if k in _KEYS and v is not None}
    values.update(flags)
    if values.get("experiment") not in (None, "all"):
        values["experiment"] = int(values["experiment"])
    return RunConfig(**values).validate()


def run(config: RunConfig) -> int:
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    error_path = out / "error.json"
    if error_path.exists():
        error_path.unlink()
    (out / "config.json").write_text(json.dumps(dataclasses.asdict(config), indent=2, sort_keys=True) + "\n")
    experiment = None
    try:
        dataset = load_dataset(config.dataset, config.data_dir)
        fed_config = config.federation_config()
        results = {}
        for experiment in config.experiments:
            spec = ExperimentSpec(
                experiment, config.clients, config.dataset, config.seed, config.fraction,
                (config.alpha_iid, config.alpha_noniid),
            )
            plan = build_experiment_plan(spec, dataset)
            logger.info("experiment %d: %d IID / %d non-IID clients", experiment,
                        spec.iid_client_count, config.clients - spec.iid_client_count)
            results[experiment] = run_federation(
                fed_config, plan, dataset, config.binarize_threshold,
                on_round=lambda r, e=experiment: logger.info(
                    "experiment %d round %d: mean accuracy %.4f, %d clusters",
                    e, r.round, r.mean_accuracy, r.cluster_count),
            )
        emit_reports(results, out)
    except Exception as exc:
        error_path.write_text(json.dumps({
            "error": type(exc).__name__,
            "message": str(exc),
            "experiment": experiment,
            "traceback": traceback.format_exc(),
        }, indent=2) + "\n")
        logger.error("run failed: %s", exc)
        return 1
    return 0


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    try:
        config = parse_config(argv)
    except ConfigError as exc:
        print(f"tpfl: {exc}", file=sys.stderr)
        return 2
    return run(config)


if __name__ == "__main__":
    sys.exit(main())
