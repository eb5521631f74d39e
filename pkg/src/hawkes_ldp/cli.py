"""
Batch entry point: `hawkes-ldp <task> --config PATH [overrides]`.

Every task writes results.jsonl (one record per line, in a deterministic
order), config.resolved (the document with every default filled in) and,
for the simulate task, one event file per replica.
"""

import argparse
import json
import logging
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

from hawkes_ldp.config import TASKS, ConfigError, RunConfig, load_config
from hawkes_ldp.ldp import (
    Tail,
    WindowFunctional,
    empirical_functional,
    horizon_ladder,
    linear_rate_fn,
    lln_estimate,
    mean_matched_proposal,
    sandwich_bounds,
    tilted_proposal,
)
from hawkes_ldp.likelihood import entropy_rate, girsanov_log_ratio
from hawkes_ldp.serialization import (
    write_events_binary,
    write_events_csv,
    write_records_jsonl,
)
from hawkes_ldp.simulate import (
    ExplosionError,
    replica_seed_sequences,
    simulate_replicas,
)

logger = logging.getLogger(__name__)

__all__ = [
    "ResultRecord",
    "run_task",
    "main",
    "EXIT_OK",
    "EXIT_CONFIG",
    "EXIT_RUNTIME",
    "EXIT_EXPLOSION",
]

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3
EXIT_EXPLOSION = 4

RESULTS_FILE = "results.jsonl"
RESOLVED_FILE = "config.resolved"


@dataclass(frozen=True)
class ResultRecord:
    """one line of results.jsonl; only wall_time varies between identical runs"""

    task: str
    config_hash: str
    seed: int
    values: dict = field(default_factory=dict)
    wall_time: float = 0.0

    def as_dict(self) -> dict:
        return {
            "task": self.task,
            "config_hash": self.config_hash,
            "seed": self.seed,
            **self.values,
            "wall_time": self.wall_time,
        }


def _replica_ids(sim) -> list:
    """
    replica index and spawn key of each substream;
    SeedSequence(seed, spawn_key=spawn_key) rebuilds the replica generator
    """
    return [
        {"replica": i, "spawn_key": list(child.spawn_key)}
        for i, child in enumerate(replica_seed_sequences(sim))
    ]


def _simulate(cfg: RunConfig) -> tuple:
    paths = simulate_replicas(cfg.model, cfg.sim, burned=cfg.params["burned"])
    rows = [
        {
            **ids,
            "horizon": path.horizon,
            "events": len(path),
            "rate": len(path) / path.horizon,
            "start": path.start.name.lower(),
        }
        for ids, path in zip(_replica_ids(cfg.sim), paths)
    ]
    return rows, paths


def _loglik(cfg: RunConfig) -> tuple:
    target = cfg.params["target"]
    paths = simulate_replicas(cfg.model, cfg.sim)
    rows = [
        {**ids, **girsanov_log_ratio(target, cfg.model, path).as_record()}
        for ids, path in zip(_replica_ids(cfg.sim), paths)
    ]
    return rows, []


def _entropy(cfg: RunConfig) -> tuple:
    q_model = cfg.params["q_model"]
    estimate = entropy_rate(q_model, cfg.model, cfg.sim)
    row = {"q_model": q_model.label, "p_model": cfg.model.label, **estimate.as_record()}
    return [row], []


def _rate_fn(cfg: RunConfig) -> tuple:
    params = cfg.model.linear_params()
    x_min, x_max, step = (cfg.params[k] for k in ("x_min", "x_max", "x_step"))
    n = int(round((x_max - x_min) / step)) + 1
    rows = []
    for i in range(n):
        x = round(x_min + i * step, 12)
        rows.append({"x": x, "I": linear_rate_fn(params, x)})
    return rows, []


def _proposal(cfg: RunConfig, threshold: float):
    proposal = cfg.params["proposal"]
    if proposal == "mean-matched":
        return mean_matched_proposal(cfg.model, threshold)
    if proposal == "tilted":
        return tilted_proposal(cfg.model, threshold)
    return proposal


def _rare_event(cfg: RunConfig) -> tuple:
    threshold = cfg.params["threshold"]
    horizons = cfg.params["horizons"] or [cfg.sim.horizon]
    ladder = horizon_ladder(
        cfg.model,
        threshold,
        cfg.sim,
        horizons=horizons,
        proposal=_proposal(cfg, threshold),
        tail=Tail[cfg.params["tail"].upper()],
    )
    rows = []
    for estimate in ladder:
        rows.append(estimate.as_record())
        if not estimate.reliable:
            rows.append(
                {
                    "warning": "unreliable ESS",
                    "horizon": estimate.horizon,
                    "ess": estimate.ess,
                }
            )
    return rows, []


def _functional(params: dict) -> WindowFunctional:
    window, statistic, level = params["window"], params["statistic"], params["level"]
    if statistic in ("at_least", "truncated_count"):
        return getattr(WindowFunctional, statistic)(window, level)
    return getattr(WindowFunctional, statistic)(window)


def _empirical(cfg: RunConfig) -> tuple:
    f = _functional(cfg.params)
    paths = simulate_replicas(cfg.model, cfg.sim)
    rows = []
    for ids, path in zip(_replica_ids(cfg.sim), paths):
        lower, upper = sandwich_bounds(path)
        rows.append(
            {
                **ids,
                "statistic": f.name,
                "window": f.window_length,
                "value": empirical_functional(path, f),
                "mean_rate": len(path) / path.horizon,
                "sandwich_lower": lower,
                "sandwich_upper": upper,
            }
        )
    return rows, []


def _lln(cfg: RunConfig) -> tuple:
    estimate = lln_estimate(cfg.model, cfg.sim)
    row = {
        "mean_rate": estimate.mean_rate,
        "std_err": estimate.std_err,
        "replicas": cfg.sim.replicas,
        "lln_mean": cfg.model.lln_mean,
    }
    return [row], []


_TASKS = {
    "simulate": _simulate,
    "loglik": _loglik,
    "entropy": _entropy,
    "rate-fn": _rate_fn,
    "rare-event": _rare_event,
    "empirical": _empirical,
    "lln": _lln,
}


def _write_outputs(cfg: RunConfig, records: list, paths: list):
    directory = cfg.output.directory
    directory.mkdir(parents=True, exist_ok=True)
    if cfg.output.events == "csv":
        for i, path in enumerate(paths):
            write_events_csv(path, directory / f"events_{i}.csv")
    elif cfg.output.events == "binary":
        for i, path in enumerate(paths):
            write_events_binary(path, directory / f"events_{i}.bin")
    write_records_jsonl((r.as_dict() for r in records), directory / RESULTS_FILE)
    (directory / RESOLVED_FILE).write_text(
        json.dumps(cfg.resolved(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    logger.info("wrote %d records to %s", len(records), directory)


def run_task(cfg: RunConfig, write: bool = True) -> list:
    """
    execute the configured task
    ----------
    Arguments:
        - cfg: RunConfig
        - write: bool
            write events, results.jsonl and config.resolved under
            cfg.output.directory
    Returns:
        - list[ResultRecord]"""
    started = time.perf_counter()
    rows, paths = _TASKS[cfg.task](cfg)
    wall_time = time.perf_counter() - started
    digest = cfg.config_hash
    records = [
        ResultRecord(cfg.task, digest, cfg.sim.seed, row, wall_time) for row in rows
    ]
    if write:
        _write_outputs(cfg, records, paths)
    return records


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hawkes-ldp",
        description="Hawkes process simulation, likelihoods and large deviations",
    )
    tasks = parser.add_subparsers(dest="task", required=True)
    for task in TASKS:
        sub = tasks.add_parser(task)
        sub.add_argument("--config", required=True, type=Path, help="JSON run document")
        sub.add_argument("--seed", type=int)
        sub.add_argument("--horizon", type=float)
        sub.add_argument("--replicas", type=int)
        sub.add_argument("--workers", type=int)
        sub.add_argument("--out", type=str, help="output directory")
        sub.add_argument(
            "-v", "--verbose", action="count", default=0, help="-v info, -vv debug"
        )
    return parser


def _fail(code: int, kind: str, error: BaseException) -> int:
    message = " ".join(str(error).split())
    print(f"error={code} kind={kind} message={message}", file=sys.stderr)
    return code


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    level = {0: logging.WARNING, 1: logging.INFO}.get(args.verbose, logging.DEBUG)
    logging.basicConfig(
        level=level, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s"
    )
    overrides = {
        "task": args.task,
        "seed": args.seed,
        "horizon": args.horizon,
        "replicas": args.replicas,
        "workers": args.workers,
        "out": args.out,
    }
    try:
        cfg = load_config(args.config, overrides)
        run_task(cfg)
    except ConfigError as error:
        return _fail(EXIT_CONFIG, "config", error)
    except ExplosionError as error:
        return _fail(EXIT_EXPLOSION, "explosion", error)
    except Exception as error:  # noqa: BLE001
        logger.debug("task failed", exc_info=True)
        return _fail(EXIT_RUNTIME, "runtime", error)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
