import json

import pytest

from hawkes_ldp.config import ConfigError, config_hash, load_config, model_from_dict, parse_config
from hawkes_ldp.models import KernelShape, RateShape

POISSON = {
    "kernel": {"shape": "exponential", "amplitude": 0.0, "beta": 1.0},
    "rate": {"shape": "linear", "nu": 1.0},
}
HAWKES = {
    "label": "hawkes",
    "kernel": {"shape": "exponential", "amplitude": 1.0, "beta": 2.0},
    "rate": {"shape": "linear", "nu": 1.0, "slope": 1.0},
}


def document(**blocks):
    doc = {"task": "lln", "model": HAWKES}
    doc.update(blocks)
    return json.dumps(doc)


class TestParseConfig:
    def test_minimal_poisson(self):
        cfg = parse_config(json.dumps({"task": "lln", "model": POISSON}))
        assert cfg.task == "lln"
        assert cfg.model.is_poisson
        assert cfg.sim.replicas == 1
        assert cfg.output.events == "csv"

    def test_defaults_are_resolved(self):
        resolved = parse_config(document()).resolved()
        assert resolved["sim"] == {
            "seed": 0,
            "horizon": 100.0,
            "burn_in": None,
            "replicas": 1,
            "max_events": 10**7,
            "workers": 1,
        }
        assert resolved["model"]["rate"]["lower_bound"] == 1.0
        assert resolved["output"] == {"dir": ".", "events": "csv"}

    def test_supercritical(self):
        model = dict(HAWKES, kernel={"shape": "exponential", "amplitude": 2.4, "beta": 2.0})
        with pytest.raises(ConfigError, match="supercritical"):
            parse_config(document(model=model))

    def test_missing_threshold(self):
        with pytest.raises(ConfigError, match=r"params\.threshold"):
            parse_config(document(task="rare-event", params={"tail": "upper"}))

    def test_unknown_key(self):
        with pytest.raises(ConfigError, match=r"sim\.seeds: unknown key"):
            parse_config(document(sim={"seeds": 3}))
        with pytest.raises(ConfigError, match=r"config\.extra"):
            parse_config(document(extra=1))

    def test_malformed_json(self):
        with pytest.raises(ConfigError, match="line 2 column"):
            parse_config('{"task": "lln",\n "model": }')

    def test_unknown_task(self):
        with pytest.raises(ConfigError, match="task: expected one of"):
            parse_config(document(task="plot"))

    def test_type_errors(self):
        with pytest.raises(ConfigError, match=r"sim\.replicas: expected an integer"):
            parse_config(document(sim={"replicas": 2.5}))
        with pytest.raises(ConfigError, match=r"sim\.horizon: expected a number"):
            parse_config(document(sim={"horizon": "long"}))

    def test_sim_validation(self):
        with pytest.raises(ConfigError, match=r"sim: horizon must be positive"):
            parse_config(document(sim={"horizon": -1}))

    def test_overrides(self):
        cfg = parse_config(
            document(sim={"seed": 1}),
            {"seed": 9, "horizon": 50.0, "replicas": 3, "workers": 2, "out": "runs/a"},
        )
        assert cfg.sim.seed == 9
        assert cfg.sim.horizon == 50.0
        assert cfg.sim.replicas == 3
        assert cfg.sim.workers == 2
        assert str(cfg.output.directory) == "runs/a"

    def test_task_override_conflict(self):
        with pytest.raises(ConfigError, match="task"):
            parse_config(document(), {"task": "simulate"})
        assert parse_config(json.dumps({"model": HAWKES}), {"task": "simulate"}).task == "simulate"

    def test_rate_fn_needs_linear_model(self):
        model = dict(HAWKES, rate={"shape": "clipped_linear", "nu": 1.0, "cap": 2.0})
        with pytest.raises(ConfigError, match="rate-fn needs a linear rate"):
            parse_config(document(task="rate-fn", model=model))

    def test_rare_event_params(self):
        cfg = parse_config(
            document(task="rare-event", params={"threshold": 3, "horizons": [50, 100], "proposal": "tilted"})
        )
        assert cfg.params["threshold"] == 3.0
        assert cfg.params["horizons"] == [50.0, 100.0]
        assert cfg.params["tail"] == "upper"

    def test_rare_event_model_proposal(self):
        proposal = dict(HAWKES, label="proposal", rate={"shape": "linear", "nu": 1.5})
        cfg = parse_config(document(task="rare-event", params={"threshold": 3, "proposal": proposal}))
        assert cfg.params["proposal"].label == "proposal"
        assert cfg.resolved()["params"]["proposal"]["rate"]["nu"] == 1.5

    def test_entropy_params(self):
        cfg = parse_config(document(task="entropy", params={"q_model": POISSON}))
        assert cfg.params["q_model"].label == "q_model"
        with pytest.raises(ConfigError, match=r"params\.q_model"):
            parse_config(document(task="entropy", params={}))

    def test_empirical_params(self):
        cfg = parse_config(document(task="empirical", params={"statistic": "at_least", "level": 2}))
        assert cfg.params == {"window": 1.0, "statistic": "at_least", "level": 2}
        with pytest.raises(ConfigError, match=r"params\.statistic"):
            parse_config(document(task="empirical", params={"statistic": "median"}))

    def test_load_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="missing.json"):
            load_config(tmp_path / "missing.json")


class TestModelFromDict:
    def test_kernels(self):
        power, _ = model_from_dict(
            {"kernel": {"shape": "power_law", "amplitude": 0.5, "c": 1.0, "p": 2.5}, "rate": {"shape": "linear", "nu": 1.0}}
        )
        assert power.kernel.shape == KernelShape.POWER_LAW
        table, resolved = model_from_dict(
            {"kernel": {"shape": "table", "knots": [[0, 0.8], [1, 0]]}, "rate": {"shape": "saturating", "nu": 1, "cap": 3, "scale": 1}}
        )
        assert table.kernel.shape == KernelShape.TABLE
        assert table.rate.shape == RateShape.SATURATING
        assert resolved["kernel"]["interpolation"] == "step"

    def test_kernel_validation_path(self):
        with pytest.raises(ConfigError, match=r"model\.kernel: PowerLaw kernel requires p > 1"):
            model_from_dict(
                {"kernel": {"shape": "power_law", "amplitude": 0.5, "c": 1.0, "p": 0.5}, "rate": {"shape": "linear", "nu": 1.0}}
            )

    def test_missing_field(self):
        with pytest.raises(ConfigError, match=r"model\.kernel\.beta: required field missing"):
            model_from_dict({"kernel": {"shape": "exponential", "amplitude": 1.0}, "rate": {"shape": "linear", "nu": 1.0}})


class TestConfigHash:
    def test_field_order(self):
        reordered = {
            "model": {"rate": HAWKES["rate"], "kernel": HAWKES["kernel"], "label": "hawkes"},
            "task": "lln",
        }
        assert parse_config(document()).config_hash == parse_config(json.dumps(reordered)).config_hash

    def test_semantic_defaults(self):
        explicit = document(sim={"seed": 0, "replicas": 1})
        assert parse_config(document()).config_hash == parse_config(explicit).config_hash

    def test_output_excluded(self):
        assert (
            parse_config(document(output={"dir": "a"})).config_hash
            == parse_config(document(output={"dir": "b"})).config_hash
        )

    def test_seed_changes_hash(self):
        assert parse_config(document()).config_hash != parse_config(document(sim={"seed": 1})).config_hash

    def test_hex_digest(self):
        digest = config_hash({"task": "lln"})
        assert len(digest) == 64
