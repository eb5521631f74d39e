import json
import re
import sys
from importlib.machinery import SourceFileLoader
from importlib.util import module_from_spec, spec_from_loader

import numpy as np
import pytest

from hawkes_ldp.cli import (
    EXIT_CONFIG,
    EXIT_EXPLOSION,
    EXIT_OK,
    EXIT_RUNTIME,
    RESOLVED_FILE,
    RESULTS_FILE,
    main,
    run_task,
)
from hawkes_ldp.config import parse_config
from hawkes_ldp.likelihood import girsanov_log_ratio
from hawkes_ldp.serialization import read_events_csv, read_records_jsonl
from hawkes_ldp.simulate import simulate_path

HAWKES = {
    "label": "hawkes",
    "kernel": {"shape": "exponential", "amplitude": 1.0, "beta": 2.0},
    "rate": {"shape": "linear", "nu": 1.0},
}
POISSON = {
    "label": "poisson",
    "kernel": {"shape": "exponential", "amplitude": 0.0, "beta": 1.0},
    "rate": {"shape": "linear", "nu": 1.0},
}


def write_config(directory, task, **blocks):
    doc = {"task": task, "model": HAWKES, "sim": {"seed": 11, "horizon": 50.0}}
    doc.update(blocks)
    path = directory / f"{task}.json"
    path.write_text(json.dumps(doc))
    return path


def run(directory, task, *flags, **blocks):
    config = write_config(directory, task, **blocks)
    out = directory / "out"
    return main([task, "--config", str(config), "--out", str(out), *flags]), out


def error_lines(capsys):
    return [line for line in capsys.readouterr().err.splitlines() if line.startswith("error=")]


class TestTasks:
    def test_lln(self, tmp_path):
        code, out = run(tmp_path, "lln", "--replicas", "4")
        assert code == EXIT_OK
        (record,) = read_records_jsonl(out / RESULTS_FILE)
        assert record["task"] == "lln"
        assert record["seed"] == 11
        assert record["replicas"] == 4
        assert record["lln_mean"] == pytest.approx(2.0)
        assert set(record) >= {"config_hash", "mean_rate", "std_err", "wall_time"}

    @pytest.mark.slow
    def test_lln_mean(self, tmp_path):
        code, out = run(tmp_path, "lln", "--horizon", "2000", "--replicas", "50")
        assert code == EXIT_OK
        (record,) = read_records_jsonl(out / RESULTS_FILE)
        assert abs(record["mean_rate"] - 2.0) <= 3 * record["std_err"]

    def test_rate_fn_grid(self, tmp_path):
        code, out = run(tmp_path, "rate-fn", params={"x_min": 0, "x_max": 5, "x_step": 0.1})
        assert code == EXIT_OK
        records = read_records_jsonl(out / RESULTS_FILE)
        assert len(records) == 51
        assert records[0]["I"] == pytest.approx(1.0, abs=1e-12)
        assert records[20]["x"] == 2.0
        assert records[20]["I"] == pytest.approx(0.0, abs=1e-12)
        assert records[-1]["x"] == 5.0

    def test_simulate_writes_events(self, tmp_path):
        code, out = run(tmp_path, "simulate", "--replicas", "2")
        assert code == EXIT_OK
        records = read_records_jsonl(out / RESULTS_FILE)
        assert [r["replica"] for r in records] == [0, 1]
        for record in records:
            stream = read_events_csv(out / f"events_{record['replica']}.csv", 50.0)
            assert len(stream) == record["events"]

    def test_binary_events(self, tmp_path):
        code, out = run(tmp_path, "simulate", output={"events": "binary"})
        assert code == EXIT_OK
        assert (out / "events_0.bin").exists()
        assert not (out / "events_0.csv").exists()

    def test_resolved_config(self, tmp_path):
        code, out = run(tmp_path, "lln", "--seed", "5")
        assert code == EXIT_OK
        resolved = json.loads((out / RESOLVED_FILE).read_text())
        assert resolved["sim"]["seed"] == 5
        assert resolved["model"]["rate"]["slope"] == 1.0
        assert resolved["sim"]["burn_in"] is None

    def test_loglik(self, tmp_path):
        target = dict(HAWKES, label="target", rate={"shape": "linear", "nu": 1.5})
        code, out = run(tmp_path, "loglik", "--replicas", "3", params={"target": target})
        assert code == EXIT_OK
        records = read_records_jsonl(out / RESULTS_FILE)
        assert len(records) == 3
        for record in records:
            assert record["log_ratio"] == pytest.approx(record["compensator_diff"] + record["jump_term"])

    def test_loglik_replica_substream(self, tmp_path):
        target = dict(HAWKES, label="target", rate={"shape": "linear", "nu": 1.5})
        code, out = run(tmp_path, "loglik", "--replicas", "3", params={"target": target})
        assert code == EXIT_OK
        cfg = parse_config((tmp_path / "loglik.json").read_text())
        for i, record in enumerate(read_records_jsonl(out / RESULTS_FILE)):
            assert record["replica"] == i
            assert record["spawn_key"] == [i]
            seed_sequence = np.random.SeedSequence(record["seed"], spawn_key=record["spawn_key"])
            rng = np.random.Generator(np.random.PCG64DXSM(seed_sequence))
            path = simulate_path(cfg.model, cfg.sim, rng=rng)
            breakdown = girsanov_log_ratio(cfg.params["target"], cfg.model, path)
            assert breakdown.log_ratio == pytest.approx(record["log_ratio"], rel=1e-12)

    def test_entropy(self, tmp_path):
        code, out = run(tmp_path, "entropy", "--replicas", "2", params={"q_model": POISSON})
        assert code == EXIT_OK
        (record,) = read_records_jsonl(out / RESULTS_FILE)
        assert record["q_model"] == "poisson"
        assert record["p_model"] == "hawkes"

    def test_empirical(self, tmp_path):
        code, out = run(tmp_path, "empirical", "--replicas", "2", params={"statistic": "count"})
        assert code == EXIT_OK
        for record in read_records_jsonl(out / RESULTS_FILE):
            assert record["sandwich_lower"] - 1e-12 <= record["value"] <= record["sandwich_upper"] + 1e-12

    def test_rare_event(self, tmp_path):
        code, out = run(
            tmp_path,
            "rare-event",
            "--replicas",
            "200",
            model=POISSON,
            params={"threshold": 2.0, "horizons": [5.0, 10.0]},
        )
        assert code == EXIT_OK
        estimates = [r for r in read_records_jsonl(out / RESULTS_FILE) if "p_hat" in r]
        assert [r["horizon"] for r in estimates] == [5.0, 10.0]
        assert all(0 < r["p_hat"] < 1 for r in estimates)


class TestDeterminism:
    def test_records_repeat(self, tmp_path):
        config = write_config(tmp_path, "loglik", params={"target": POISSON})
        runs = []
        for name in ("a", "b"):
            assert main(["loglik", "--config", str(config), "--replicas", "3", "--out", str(tmp_path / name)]) == EXIT_OK
            lines = (tmp_path / name / RESULTS_FILE).read_text().splitlines()
            runs.append([re.sub(r',"wall_time":[^,}]*', "", line) for line in lines])
        assert runs[0] == runs[1]

    def test_workers_do_not_change_results(self, tmp_path):
        cfg = parse_config(
            json.dumps({"task": "lln", "model": HAWKES, "sim": {"seed": 3, "horizon": 30.0, "replicas": 4}})
        )
        serial = run_task(cfg, write=False)[0].values
        parallel_cfg = parse_config(
            json.dumps({"task": "lln", "model": HAWKES, "sim": {"seed": 3, "horizon": 30.0, "replicas": 4}}),
            {"workers": 2},
        )
        parallel = run_task(parallel_cfg, write=False)[0].values
        assert serial["mean_rate"] == parallel["mean_rate"]
        assert serial["std_err"] == parallel["std_err"]


class TestFailures:
    def test_missing_config(self, tmp_path, capsys):
        code = main(["lln", "--config", str(tmp_path / "absent.json")])
        assert code == EXIT_CONFIG
        (line,) = error_lines(capsys)
        assert line.startswith("error=2 kind=config message=")

    def test_invalid_config(self, tmp_path, capsys):
        code, _ = run(tmp_path, "rare-event", params={"tail": "upper"})
        assert code == EXIT_CONFIG
        (line,) = error_lines(capsys)
        assert "params.threshold" in line

    def test_explosion(self, tmp_path, capsys):
        code, _ = run(tmp_path, "simulate", sim={"seed": 1, "horizon": 100.0, "max_events": 5})
        assert code == EXIT_EXPLOSION
        (line,) = error_lines(capsys)
        assert line.startswith("error=4 kind=explosion")

    def test_runtime(self, tmp_path, capsys):
        config = write_config(tmp_path, "lln")
        blocker = tmp_path / "blocker"
        blocker.write_text("")
        code = main(["lln", "--config", str(config), "--out", str(blocker)])
        assert code == EXIT_RUNTIME
        (line,) = error_lines(capsys)
        assert line.startswith("error=3 kind=runtime")


class TestDirectRun:
    def test_direct_run(self, tmp_path, monkeypatch):
        config = write_config(tmp_path, "rate-fn")
        argv = ["hawkes-ldp", "rate-fn", "--config", str(config), "--out", str(tmp_path / "out")]
        monkeypatch.setattr(sys, "argv", argv)
        loader = SourceFileLoader("__main__", "src/hawkes_ldp/cli.py")
        with pytest.raises(SystemExit) as exit_info:
            loader.exec_module(module_from_spec(spec_from_loader(loader.name, loader)))
        assert exit_info.value.code == EXIT_OK
        assert len(read_records_jsonl(tmp_path / "out" / RESULTS_FILE)) == 51
