"""Promptable mask decoder and the BCE + dice training loss."""

import numpy as np
import pytest
import torch

from textseg.backbones import BackboneBundle, BackboneConfig, ImageEmbedding
from textseg.conditioning import GeometricPrompt, PromptBundle, PromptConditioner
from textseg.decoder import MaskDecoder, binarize, dice_loss, predict_mask, segmentation_loss
from textseg.errors import ConfigurationError, InvalidInputError
from textseg.projection import SimilarityMap


@pytest.fixture(scope="module")
def setup():
    bundle = BackboneBundle(BackboneConfig(seed=0))
    rng = np.random.default_rng(0)
    img = rng.random((64, 64, 3)).astype(np.float32)
    emb = bundle.encode_image_for_decoder(img)
    cond = PromptConditioner(embed_size=16, d_embed=32, seed=0)
    return emb, cond


def _box_bundle(cond, dense=None, similarity_input=None):
    return cond.build_prompt_bundle(
        GeometricPrompt(box=(4.0, 4.0, 60.0, 60.0)), dense,
        image_height=64, image_width=64, similarity_input=similarity_input,
    )


class TestMaskDecoder:
    def test_upsample_must_be_a_perfect_square(self):
        with pytest.raises(ConfigurationError, match="perfect square"):
            MaskDecoder(d_embed=32, upsample=2)

    def test_logits_shape_and_resolution_fields(self, setup):
        emb, cond = setup
        decoder = MaskDecoder(d_embed=32)
        logits = decoder(emb, _box_bundle(cond))
        assert logits.values.shape == (64, 64)
        assert (logits.source_height, logits.source_width) == (64, 64)

    def test_embedding_dim_mismatch_rejected(self, setup):
        emb, cond = setup
        with pytest.raises(ConfigurationError, match="d_embed"):
            MaskDecoder(d_embed=16)(emb, _box_bundle(cond))

    def test_dense_embedding_mismatch_rejected(self, setup):
        emb, _ = setup
        bad = PromptBundle(sparse_tokens=torch.zeros(0, 32), dense_embedding=torch.zeros(32, 8, 8))
        with pytest.raises(ConfigurationError, match="dense embedding"):
            MaskDecoder(d_embed=32)(emb, bad)

    def test_highres_fusion_requires_intermediate_features(self, setup):
        emb, cond = setup
        stripped = ImageEmbedding(values=emb.values, interm_features=[])
        with pytest.raises(ConfigurationError, match="intermediate"):
            MaskDecoder(d_embed=32)(stripped, _box_bundle(cond))

    def test_intermediate_size_mismatch_rejected(self, setup):
        emb, cond = setup
        wrong = ImageEmbedding(values=emb.values, interm_features=[torch.zeros(8, 32, 32)])
        with pytest.raises(ConfigurationError, match="intermediate feature size"):
            MaskDecoder(d_embed=32)(wrong, _box_bundle(cond))

    def test_sparse_tokens_change_the_logits(self, setup):
        """The calibrated init zeroes the output weights on the fused-conv
        channels, so token influence is tested with a generic output head
        (the state any trained decoder is in)."""
        emb, cond = setup
        decoder = MaskDecoder(d_embed=32)
        with torch.no_grad():
            decoder.out.weight.normal_(0.0, 0.1, generator=torch.Generator().manual_seed(9))
        dense = torch.randn(32, 16, 16, generator=torch.Generator().manual_seed(1)) * 0.1
        with_box = decoder(emb, _box_bundle(cond, dense=dense))
        no_geom = decoder(emb, cond.build_prompt_bundle(None, dense))
        assert not torch.equal(with_box.values, no_geom.values)

    def test_similarity_skip_changes_the_logits(self, setup):
        emb, cond = setup
        decoder = MaskDecoder(d_embed=32)
        sim = SimilarityMap(grid=torch.rand(8, 8, generator=torch.Generator().manual_seed(2)), prompt="wire")
        dense, grid_256 = cond.encode_similarity(sim)
        plain = decoder(emb, _box_bundle(cond, dense=dense))
        skipped = decoder(emb, _box_bundle(cond, dense=dense, similarity_input=grid_256))
        assert not torch.equal(plain.values, skipped.values)

    def test_constant_similarity_map_is_finite(self, setup):
        """A zero-contrast similarity input must not blow up the per-image
        standardization in the skip path."""
        emb, cond = setup
        decoder = MaskDecoder(d_embed=32)
        dense, grid_256 = cond.encode_similarity(SimilarityMap(grid=torch.full((8, 8), 0.5), prompt="x"))
        logits = decoder(emb, _box_bundle(cond, dense=dense, similarity_input=grid_256))
        assert torch.isfinite(logits.values).all()

    def test_deterministic_per_seed(self, setup):
        emb, cond = setup
        bundle = _box_bundle(cond)
        a = MaskDecoder(d_embed=32, seed=1)(emb, bundle)
        b = MaskDecoder(d_embed=32, seed=1)(emb, bundle)
        assert torch.equal(a.values, b.values)
        # different seeds draw different hidden weights (the output head is
        # deliberately seed-independent at init, so compare parameters)
        assert not torch.equal(
            MaskDecoder(d_embed=32, seed=1).up1.weight, MaskDecoder(d_embed=32, seed=2).up1.weight
        )

    def test_functional_alias(self, setup):
        emb, cond = setup
        decoder = MaskDecoder(d_embed=32)
        bundle = _box_bundle(cond)
        assert torch.equal(predict_mask(decoder, emb, bundle).values, decoder(emb, bundle).values)


class TestBinarize:
    def test_threshold_is_strictly_positive(self):
        logits = torch.tensor([[-1.0, 0.0], [0.5, 2.0]])
        np.testing.assert_array_equal(binarize(logits), [[False, False], [True, True]])

    def test_accepts_mask_logits_wrapper(self, setup):
        emb, cond = setup
        logits = MaskDecoder(d_embed=32)(emb, _box_bundle(cond))
        mask = binarize(logits)
        assert mask.dtype == np.bool_
        assert mask.shape == (64, 64)


class TestLoss:
    def test_dice_is_exactly_zero_for_a_perfect_hard_prediction(self):
        gt = torch.tensor([[1.0, 0.0], [1.0, 1.0]])
        assert dice_loss(gt.clone(), gt).item() == 0.0

    def test_loss_is_nonnegative(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            logits = torch.tensor(rng.normal(scale=5.0, size=(8, 8)), dtype=torch.float32)
            gt = rng.random((8, 8)) > 0.5
            assert segmentation_loss(logits, gt).item() >= 0.0

    def test_saturated_perfect_prediction_is_nearly_free(self):
        rng = np.random.default_rng(4)
        gt = rng.random((16, 16)) > 0.5
        logits = torch.where(torch.tensor(gt), 40.0, -40.0)
        assert segmentation_loss(logits, gt).item() < 1e-6

    def test_wrong_prediction_costs_more(self):
        gt = np.ones((8, 8), dtype=bool)
        good = segmentation_loss(torch.full((8, 8), 4.0), gt).item()
        bad = segmentation_loss(torch.full((8, 8), -4.0), gt).item()
        assert bad > good

    def test_shape_mismatch_rejected(self):
        with pytest.raises(InvalidInputError):
            segmentation_loss(torch.zeros(8, 8), np.zeros((4, 8), dtype=bool))

    def test_gradient_matches_finite_differences(self):
        """Central differences on every logit of a 4x4 problem, double
        precision, relative error < 1e-4."""
        rng = np.random.default_rng(5)
        base = rng.normal(size=(4, 4))
        gt = rng.random((4, 4)) > 0.5
        logits = torch.tensor(base, dtype=torch.float64, requires_grad=True)
        segmentation_loss(logits, gt).backward()
        eps = 1e-6
        for i in range(4):
            for j in range(4):
                up, down = base.copy(), base.copy()
                up[i, j] += eps
                down[i, j] -= eps
                fd = (
                    segmentation_loss(torch.tensor(up), gt).item()
                    - segmentation_loss(torch.tensor(down), gt).item()
                ) / (2 * eps)
                analytic = logits.grad[i, j].item()
                denom = max(abs(fd), abs(analytic), 1e-8)
                assert abs(fd - analytic) / denom < 1e-4, f"({i},{j}): fd={fd}, autograd={analytic}"
