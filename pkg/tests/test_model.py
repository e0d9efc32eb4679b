"""The assembled text-guided segmentation model: forward paths, identity,
checkpoints, and resolution handling."""

import numpy as np
import pytest
import torch

from textseg.backbones import BackboneConfig
from textseg.conditioning import GeometricPrompt
from textseg.errors import (
    CheckpointError,
    ConfigurationError,
    EmptyPromptError,
    InvalidBoxError,
)
from textseg.model import (
    ModelConfig,
    TextGuidedSegmentationModel,
    checkpoint_step,
    load_checkpoint,
    resize_image,
    resize_mask,
    save_checkpoint,
    similarity_to_grayscale,
)
from textseg.projection import SimilarityMap, TextProjection, save_projection


@pytest.fixture(scope="module")
def model():
    return TextGuidedSegmentationModel(ModelConfig())


@pytest.fixture(scope="module")
def image64():
    rng = np.random.default_rng(0)
    return rng.random((64, 64, 3)).astype(np.float32)


BOX = GeometricPrompt(box=(4.0, 4.0, 60.0, 60.0))


class TestModelConfig:
    def test_toy_geometry(self):
        cfg = ModelConfig()
        assert cfg.embed_size == 16
        assert cfg.similarity_grid_size == 8
        assert cfg.seed == cfg.backbone.seed == 0
        assert (cfg.visual_input_size, cfg.decoder_input_size) == (64, 64)

    def test_rejects_unknown_normalization(self):
        with pytest.raises(ConfigurationError, match="normalization"):
            ModelConfig(normalization="zscore")

    def test_rejects_indivisible_geometry(self):
        with pytest.raises(ConfigurationError, match="patch size"):
            ModelConfig(visual_input_size=65)
        with pytest.raises(ConfigurationError, match="stride"):
            ModelConfig(decoder_input_size=66)
        with pytest.raises(ConfigurationError, match="divide"):
            ModelConfig(decoder_input_size=40)  # embed grid 10 does not divide 256

    def test_dict_round_trip(self):
        cfg = ModelConfig(backbone=BackboneConfig(seed=3), d_hidden=128)
        assert ModelConfig.from_dict(cfg.to_dict()) == cfg


class TestComputeLogits:
    def test_native_resolution_is_enforced(self, model):
        wrong = np.zeros((32, 32, 3), dtype=np.float32)
        with pytest.raises(ConfigurationError, match="use predict"):
            model.compute_logits(wrong, prompt="wire")

    def test_text_prompt_produces_similarity_and_logits(self, model, image64):
        logits, sim, scores = model.compute_logits(image64, prompt="wire")
        assert logits.values.shape == (64, 64)
        assert sim is not None and sim.grid.shape == (8, 8)
        assert sim.prompt == "wire"
        assert scores is None

    def test_head_scores_on_request(self, model, image64):
        _, _, scores = model.compute_logits(image64, prompt="wire", with_head_scores=True)
        assert scores is not None
        assert scores.per_head.shape == (4,)
        assert 0 <= scores.best_index < 4

    def test_geometric_only_path(self, model, image64):
        logits, sim, scores = model.compute_logits(image64, geometric=BOX)
        assert logits.values.shape == (64, 64)
        assert sim is None and scores is None

    def test_no_prompt_at_all_is_an_error(self, model, image64):
        with pytest.raises(EmptyPromptError):
            model.compute_logits(image64)

    def test_text_prompt_steers_the_logits(self, model, image64):
        """Different prompts must produce different logit maps essentially
        always; allow a handful of hash collisions in 100 pairs."""
        changed = 0
        with torch.no_grad():
            for i in range(100):
                a, _, _ = model.compute_logits(image64, prompt=f"object {i}")
                b, _, _ = model.compute_logits(image64, prompt=f"thing {i}")
                if (a.values - b.values).abs().max().item() > 1e-6:
                    changed += 1
        assert changed >= 95


class TestPredict:
    def test_outputs_at_caller_resolution(self, model):
        rng = np.random.default_rng(1)
        img = rng.random((48, 80, 3)).astype(np.float32)
        result = model.predict(img, prompt="wire")
        assert result.mask.shape == (48, 80)
        assert result.mask.dtype == np.bool_
        assert result.logits.shape == (48, 80)
        assert result.logits.dtype == np.float32
        np.testing.assert_array_equal(result.mask, result.logits > 0)
        assert result.prompt == "wire"

    def test_bit_identical_across_instances(self, image64):
        a = TextGuidedSegmentationModel(ModelConfig()).predict(image64, prompt="wire", geometric=BOX)
        b = TextGuidedSegmentationModel(ModelConfig()).predict(image64, prompt="wire", geometric=BOX)
        np.testing.assert_array_equal(a.logits, b.logits)
        np.testing.assert_array_equal(a.mask, b.mask)

    def test_box_must_fit_the_image(self, model):
        img = np.zeros((32, 32, 3), dtype=np.float32)
        with pytest.raises(InvalidBoxError):
            model.predict(img, prompt="wire", geometric=GeometricPrompt(box=(0.0, 0.0, 40.0, 20.0)))

    def test_blank_prompt_without_geometry_is_empty(self, model, image64):
        with pytest.raises(EmptyPromptError):
            model.predict(image64, prompt="   ")

    def test_uint8_and_grayscale_inputs(self, model):
        rng = np.random.default_rng(2)
        rgb8 = rng.integers(0, 256, size=(64, 64, 3), dtype=np.uint8)
        gray = rng.random((64, 64)).astype(np.float32)
        assert model.predict(rgb8, prompt="wire").mask.shape == (64, 64)
        assert model.predict(gray, prompt="wire").mask.shape == (64, 64)


class TestIdentity:
    def test_fingerprint_is_hex_and_reproducible(self):
        a = TextGuidedSegmentationModel(ModelConfig())
        b = TextGuidedSegmentationModel(ModelConfig())
        fp = a.fingerprint()
        assert len(fp) == 64 and set(fp) <= set("0123456789abcdef")
        assert fp == b.fingerprint()

    def test_fingerprint_tracks_seed_and_weights(self):
        base = TextGuidedSegmentationModel(ModelConfig())
        other_seed = TextGuidedSegmentationModel(ModelConfig(backbone=BackboneConfig(seed=1)))
        assert base.fingerprint() != other_seed.fingerprint()
        before = base.fingerprint()
        with torch.no_grad():
            base.decoder.skip_scale.add_(0.001)
        assert base.fingerprint() != before

    def test_parameter_blocks_cover_everything_once(self, model):
        blocks = model.parameter_blocks()
        assert set(blocks) == {
            "text_encoder", "patch_encoder", "image_encoder",
            "projection", "prompt_conditioning", "decoder",
        }
        seen = [id(p) for params in blocks.values() for p in params]
        assert len(seen) == len(set(seen))
        assert len(seen) == len(list(model.parameters()))
        for name in ("text_encoder", "patch_encoder", "image_encoder"):
            assert all(not p.requires_grad for p in blocks[name])
        for name in ("projection", "prompt_conditioning", "decoder"):
            assert all(p.requires_grad for p in blocks[name])

    def test_text_final_projection_shapes(self, model):
        shapes = [tuple(p.shape) for p in model.text_final_projection()]
        assert shapes == [(16, 16), (16,)]


class TestCheckpoints:
    def test_round_trip_preserves_identity_and_outputs(self, tmp_path, image64):
        model = TextGuidedSegmentationModel(ModelConfig())
        with torch.no_grad():  # make the state distinguishable from a fresh init
            model.decoder.skip_scale.add_(0.25)
        path = tmp_path / "model.pt"
        save_checkpoint(model, path, step=17, regime="clip_partial")
        loaded = load_checkpoint(path)
        assert loaded.fingerprint() == model.fingerprint()
        assert checkpoint_step(path) == 17
        a, _, _ = model.compute_logits(image64, prompt="wire")
        b, _, _ = loaded.compute_logits(image64, prompt="wire")
        assert torch.equal(a.values, b.values)

    def test_unreadable_file_is_a_checkpoint_error(self, tmp_path):
        path = tmp_path / "garbage.pt"
        path.write_bytes(b"not a checkpoint at all")
        with pytest.raises(CheckpointError, match="cannot read"):
            load_checkpoint(path)

    def test_foreign_container_rejected(self, tmp_path):
        path = tmp_path / "foreign.pt"
        torch.save({"format": "something-else"}, path)
        with pytest.raises(CheckpointError, match="container"):
            load_checkpoint(path)

    def test_future_version_rejected(self, tmp_path):
        model = TextGuidedSegmentationModel(ModelConfig())
        path = tmp_path / "model.pt"
        save_checkpoint(model, path)
        payload = torch.load(path, weights_only=True)
        payload["version"] = 999
        torch.save(payload, path)
        with pytest.raises(CheckpointError, match="version"):
            load_checkpoint(path)

    def test_missing_state_is_malformed(self, tmp_path):
        model = TextGuidedSegmentationModel(ModelConfig())
        path = tmp_path / "model.pt"
        save_checkpoint(model, path)
        payload = torch.load(path, weights_only=True)
        del payload["state"]["decoder"]
        torch.save(payload, path)
        with pytest.raises(CheckpointError, match="malformed"):
            load_checkpoint(path)


class TestExternalProjectionWeights:
    def _write_weights(self, tmp_path, d_visual=16):
        proj = TextProjection(d_text=16, d_hidden=256, d_visual=d_visual, seed=9)
        path = tmp_path / "proj.json"
        save_projection(proj, path)
        return proj, path

    def test_loaded_at_construction(self, tmp_path):
        proj, path = self._write_weights(tmp_path)
        model = TextGuidedSegmentationModel(ModelConfig(projection_weights=str(path)))
        assert torch.equal(model.projection.w_a, proj.w_a)
        assert torch.equal(model.projection.w_b, proj.w_b)

    def test_dimension_mismatch_rejected(self, tmp_path):
        _, path = self._write_weights(tmp_path, d_visual=8)
        with pytest.raises(ConfigurationError, match="needs"):
            TextGuidedSegmentationModel(ModelConfig(projection_weights=str(path)))

    def test_checkpoint_survives_deleting_the_source_file(self, tmp_path, image64):
        proj, path = self._write_weights(tmp_path)
        model = TextGuidedSegmentationModel(ModelConfig(projection_weights=str(path)))
        ckpt = tmp_path / "model.pt"
        save_checkpoint(model, ckpt)
        path.unlink()
        loaded = load_checkpoint(ckpt)
        assert torch.equal(loaded.projection.w_a, proj.w_a)
        assert loaded.fingerprint() == model.fingerprint()


class TestResizeHelpers:
    def test_resize_image_shapes_and_identity(self):
        rng = np.random.default_rng(3)
        img = rng.random((32, 48, 3)).astype(np.float32)
        assert resize_image(img, 32, 48) is img
        out = resize_image(img, 64, 64)
        assert out.shape == (64, 64, 3)
        assert out.dtype == np.float32

    def test_resize_mask_round_trips_solid_regions(self):
        mask = np.zeros((32, 32), dtype=bool)
        mask[8:24, 8:24] = True
        up = resize_mask(mask, 64, 64)
        assert up.shape == (64, 64) and up.dtype == np.bool_
        back = resize_mask(up, 32, 32)
        np.testing.assert_array_equal(back, mask)
        assert resize_mask(mask, 32, 32) is not None

    def test_similarity_to_grayscale_midpoint_rounds_up(self):
        sim = SimilarityMap(grid=torch.full((8, 8), 0.5), prompt="x", normalization="unit_interval")
        gray = similarity_to_grayscale(sim, 16, 16)
        assert gray.shape == (16, 16) and gray.dtype == np.uint8
        assert (gray == 128).all()  # round(127.5) -> 128

    def test_similarity_to_grayscale_raw_full_scale(self):
        sim = SimilarityMap(grid=torch.ones(8, 8), prompt="x", normalization="raw")
        assert (similarity_to_grayscale(sim, 8, 8) == 255).all()
