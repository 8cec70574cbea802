import copy
import json
from pathlib import Path

import pytest

from ndvgan.config import ExperimentConfig
from ndvgan.errors import ConfigurationError

BASE = json.loads((Path(__file__).parent / "configs" / "gradcheck.json").read_text())


def load(mutate):
    raw = copy.deepcopy(BASE)
    mutate(raw)
    return ExperimentConfig.from_dict(raw)


def test_base_config_parses():
    cfg = ExperimentConfig.from_dict(BASE)
    assert cfg.temporal.family == "ode" and cfg.temporal.latent_dim == 2
    assert cfg.gan.param_seed == 5 and cfg.gan.noise_seed == 7
    assert cfg.dataset.num_frames == cfg.temporal.num_frames == 16
    assert cfg.solver.generator_kwargs()["ode_steps_per_unit"] == 4


@pytest.mark.parametrize(
    "section,key",
    [("temporal", "latent_dim"), ("gan", "total_steps"), ("dataset", "kind"), ("", "output_dir")],
)
def test_missing_key_is_named(section, key):
    def drop(raw):
        (raw[section] if section else raw).pop(key)

    with pytest.raises(ConfigurationError) as info:
        load(drop)
    full = f"{section}.{key}" if section else key
    assert info.value.key == full and full in str(info.value)


def test_missing_seed_is_named():
    with pytest.raises(ConfigurationError, match="gan.seeds.noise"):
        load(lambda raw: raw["gan"]["seeds"].pop("noise"))


@pytest.mark.parametrize("section", ["temporal", "gan", "dataset", "solver"])
def test_unknown_key_is_named(section):
    with pytest.raises(ConfigurationError) as info:
        load(lambda raw: raw[section].update(learning_rate=1))
    assert info.value.key == f"{section}.learning_rate"


@pytest.mark.parametrize(
    "mutate,key",
    [
        (lambda raw: raw["temporal"].update(family="gru"), "temporal.family"),
        (lambda raw: raw["temporal"].update(latent_dim=2.5), "temporal.latent_dim"),
        (lambda raw: raw["gan"].update(phi="l2"), "gan.phi"),
        (lambda raw: raw["solver"].update(method="euler_maruyama"), "solver.method"),
        (lambda raw: raw["solver"].update(steps_per_unit=0), "solver.steps_per_unit"),
        (lambda raw: raw["gan"].update(batch_size=True), "gan.batch_size"),
    ],
)
def test_invalid_values_are_named(mutate, key):
    with pytest.raises(ConfigurationError) as info:
        load(mutate)
    assert info.value.key == key


def test_invalid_json(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{not json")
    with pytest.raises(ConfigurationError):
        ExperimentConfig.load(path)


def test_dump_round_trip(tmp_path):
    cfg = ExperimentConfig.from_dict(BASE)
    cfg.dump(tmp_path / "c.json")
    again = ExperimentConfig.load(tmp_path / "c.json")
    assert again.temporal == cfg.temporal and again.gan == cfg.gan and again.dataset == cfg.dataset
