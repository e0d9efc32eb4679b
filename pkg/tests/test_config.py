"""Run-configuration parsing, validation, and effective-config round-trips."""

import pytest
import yaml

from textseg.config import (
    DataConfig,
    EvalSettings,
    RunConfig,
    config_from_dict,
    dump_effective,
    load_config,
)
from textseg.errors import ConfigurationError


class TestDefaults:
    def test_default_run_config(self):
        cfg = RunConfig()
        assert cfg.mode == "toy"
        assert cfg.seed == 0
        assert cfg.train.learning_rate == 0.001
        assert cfg.data.kind == "synthetic"
        assert cfg.eval.band_radius is None
        assert cfg.eval.use_gt_box is True

    def test_model_config_propagates_mode_and_seed(self):
        cfg = RunConfig(seed=7)
        mc = cfg.model_config()
        assert mc.backbone.seed == 7
        assert mc.backbone.mode == "toy"
        assert mc.embed_size == 16

    def test_overrides_reach_the_model(self):
        cfg = RunConfig(backbone={"d_embed": 64}, model={"d_hidden": 128})
        mc = cfg.model_config()
        assert mc.backbone.d_embed == 64
        assert mc.d_hidden == 128


class TestValidation:
    def test_mode_must_be_known(self):
        with pytest.raises(ConfigurationError, match="mode"):
            RunConfig(mode="giant")

    def test_backbone_section_may_not_restate_top_level_keys(self):
        with pytest.raises(ConfigurationError, match="top level"):
            RunConfig(backbone={"mode": "toy"})
        with pytest.raises(ConfigurationError, match="top level"):
            RunConfig(backbone={"seed": 3})

    def test_model_section_may_not_nest_a_backbone(self):
        with pytest.raises(ConfigurationError, match="top level"):
            RunConfig(model={"backbone": {}})

    def test_unknown_keys_rejected_at_every_level(self):
        with pytest.raises(ConfigurationError, match="unknown top-level"):
            config_from_dict({"colour": "blue"})
        with pytest.raises(ConfigurationError, match="backbone"):
            RunConfig(backbone={"dtext": 16})
        with pytest.raises(ConfigurationError, match="'train'"):
            config_from_dict({"train": {"lr": 0.1}})
        with pytest.raises(ConfigurationError, match="'data'"):
            config_from_dict({"data": {"folder": "x"}})
        with pytest.raises(ConfigurationError, match="'eval'"):
            config_from_dict({"eval": {"band": 2}})

    def test_sections_must_be_mappings(self):
        with pytest.raises(ConfigurationError, match="mapping"):
            config_from_dict({"train": [1, 2]})
        with pytest.raises(ConfigurationError, match="mapping"):
            config_from_dict([])

    def test_train_section_values_are_validated(self):
        with pytest.raises(ConfigurationError, match="learning_rate"):
            config_from_dict({"train": {"learning_rate": -1.0}})
        with pytest.raises(ConfigurationError, match="regime"):
            config_from_dict({"train": {"regime": "everything"}})


class TestYamlLoading:
    def test_load_parses_sections(self, tmp_path):
        path = tmp_path / "run.yaml"
        path.write_text(
            "seed: 5\n"
            "train:\n  steps: 3\n  batch_size: 2\n"
            "data:\n  num_samples: 4\n"
            "output_dir: runs/test\n"
        )
        cfg = load_config(path)
        assert cfg.seed == 5
        assert cfg.train.steps == 3
        assert cfg.train.batch_size == 2
        assert cfg.data.num_samples == 4
        assert cfg.output_dir == "runs/test"

    def test_empty_file_gives_defaults(self, tmp_path):
        path = tmp_path / "empty.yaml"
        path.write_text("")
        assert load_config(path) == RunConfig()

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigurationError, match="not found"):
            load_config(tmp_path / "nope.yaml")

    def test_invalid_yaml(self, tmp_path):
        path = tmp_path / "broken.yaml"
        path.write_text("train: [unclosed\n")
        with pytest.raises(ConfigurationError, match="valid YAML"):
            load_config(path)


class TestEffectiveConfig:
    def test_effective_dict_round_trips(self):
        cfg = RunConfig(
            seed=3,
            backbone={"d_embed": 64},
            model={"d_hidden": 128},
            train=config_from_dict({"train": {"steps": 5}}).train,
            data=DataConfig(num_samples=4),
            eval=EvalSettings(band_radius=2),
            output_dir="runs/x",
        )
        rebuilt = config_from_dict(cfg.effective_dict())
        assert rebuilt.seed == cfg.seed
        assert rebuilt.model_config() == cfg.model_config()
        assert rebuilt.train == cfg.train
        assert rebuilt.data == cfg.data
        assert rebuilt.eval == cfg.eval
        assert rebuilt.effective_dict() == cfg.effective_dict()

    def test_dump_is_valid_yaml_and_reparses(self, tmp_path):
        cfg = RunConfig(seed=2, train=config_from_dict({"train": {"steps": 7}}).train)
        path = tmp_path / "effective.yaml"
        text = dump_effective(cfg, path)
        assert path.read_text() == text
        reparsed = config_from_dict(yaml.safe_load(text))
        assert reparsed.effective_dict() == cfg.effective_dict()

    def test_effective_dict_includes_projection_weights(self):
        assert "projection_weights" in RunConfig().effective_dict()["model"]
        assert RunConfig().effective_dict()["model"]["projection_weights"] is None
