"""IoU, boundary extraction, boundary bands, aggregation, and reports.

The band tests compare against a brute-force oracle implemented here from
the definition alone: a mask pixel belongs to the band at radius d when its
Euclidean distance to the nearest background pixel (image border included)
is at most d.
"""

import numpy as np
import pytest

from textseg.errors import EmptyDatasetError
from textseg.metrics import (
    EvalRecord,
    aggregate,
    boundary_band,
    boundary_iou,
    boundary_pixels,
    default_band_radius,
    iou,
    read_records_jsonl,
    render_report,
    write_records_jsonl,
)


def brute_force_band(mask: np.ndarray, d: int) -> np.ndarray:
    """Per-pixel distance scan over all background positions (border included)."""
    h, w = mask.shape
    bg = [(y, x) for y in range(-1, h + 1) for x in range(-1, w + 1)
          if y in (-1, h) or x in (-1, w) or not mask[y, x]]
    bg = np.asarray(bg, dtype=float)
    band = np.zeros_like(mask)
    for y, x in zip(*np.nonzero(mask)):
        dist = np.sqrt(((bg - (y, x)) ** 2).sum(axis=1)).min()
        band[y, x] = dist <= d
    return band


class TestIoU:
    def test_anchor_values_exact(self):
        a = np.zeros((8, 8), dtype=bool)
        a[2:6, 2:6] = True
        assert iou(a, a) == 1.0
        b = np.zeros((8, 8), dtype=bool)
        b[0:2, 0:2] = True
        assert iou(a, b) == 0.0
        half = np.zeros((8, 8), dtype=bool)
        half[2:6, 2:4] = True  # exactly half of a
        assert iou(half, a) == 0.5

    def test_empty_versus_empty_is_one(self):
        empty = np.zeros((4, 4), dtype=bool)
        assert iou(empty, empty) == 1.0

    def test_empty_versus_nonempty_is_zero(self):
        empty = np.zeros((4, 4), dtype=bool)
        full = np.ones((4, 4), dtype=bool)
        assert iou(empty, full) == 0.0

    def test_matches_set_formula_on_random_masks(self):
        rng = np.random.default_rng(11)
        for _ in range(200):
            a = rng.random((10, 10)) < 0.4
            b = rng.random((10, 10)) < 0.4
            expected = 1.0 if not (a | b).any() else (a & b).sum() / (a | b).sum()
            assert iou(a, b) == expected

    def test_accepts_zero_one_integers(self):
        assert iou(np.eye(3, dtype=int), np.eye(3, dtype=bool)) == 1.0

    def test_rejects_shape_mismatch_and_bad_values(self):
        from textseg.errors import InvalidInputError

        with pytest.raises(InvalidInputError):
            iou(np.zeros((2, 2), dtype=bool), np.zeros((3, 3), dtype=bool))
        with pytest.raises(InvalidInputError):
            iou(np.array([[0, 2]]), np.array([[0, 1]]))


class TestBoundaryPixels:
    def test_solid_square_gives_perimeter_ring(self):
        mask = np.zeros((16, 16), dtype=bool)
        mask[3:13, 3:13] = True
        boundary = boundary_pixels(mask)
        assert boundary.sum() == 36  # 4 * 10 - 4
        inner = np.zeros_like(mask)
        inner[4:12, 4:12] = True
        assert not (boundary & inner).any()

    def test_image_border_counts_as_background(self):
        mask = np.ones((5, 5), dtype=bool)
        boundary = boundary_pixels(mask)
        assert boundary.sum() == 16
        assert not boundary[1:4, 1:4].any()

    def test_four_adjacency_ignores_diagonal_background(self):
        """A pixel whose only background contact is diagonal is interior."""
        mask = np.ones((5, 5), dtype=bool)
        mask[0, 0] = False
        assert not boundary_pixels(mask)[1, 1]

    def test_thin_structures_are_all_boundary(self):
        mask = np.zeros((7, 7), dtype=bool)
        mask[3, 1:6] = True
        assert np.array_equal(boundary_pixels(mask), mask)

    def test_empty_mask_has_no_boundary(self):
        assert not boundary_pixels(np.zeros((4, 4), dtype=bool)).any()


class TestBoundaryBand:
    def test_solid_square_band_at_one_is_the_perimeter_ring(self):
        mask = np.zeros((16, 16), dtype=bool)
        mask[3:13, 3:13] = True
        band = boundary_band(mask, 1)
        assert band.sum() == 36
        assert np.array_equal(band, boundary_pixels(mask))

    def test_solid_square_band_at_two_adds_the_second_ring(self):
        mask = np.zeros((16, 16), dtype=bool)
        mask[3:13, 3:13] = True
        assert boundary_band(mask, 2).sum() == 36 + 28

    def test_band_at_one_equals_boundary_pixels_on_random_masks(self):
        rng = np.random.default_rng(17)
        for _ in range(50):
            mask = rng.random((9, 9)) < 0.5
            assert np.array_equal(boundary_band(mask, 1), boundary_pixels(mask))

    def test_full_image_mask_bands_from_the_border(self):
        mask = np.ones((10, 10), dtype=bool)
        assert boundary_band(mask, 1).sum() == 36

    def test_thin_line_is_its_own_band_for_any_radius(self):
        mask = np.zeros((8, 8), dtype=bool)
        mask[4, 1:7] = True
        for d in (1, 2, 5):
            assert np.array_equal(boundary_band(mask, d), mask)

    def test_matches_brute_force_oracle(self):
        rng = np.random.default_rng(23)
        for _ in range(30):
            mask = rng.random((12, 12)) < rng.uniform(0.2, 0.8)
            for d in (1, 2, 3):
                assert np.array_equal(boundary_band(mask, d), brute_force_band(mask, d))

    def test_empty_mask_and_bad_radius(self):
        assert not boundary_band(np.zeros((4, 4), dtype=bool), 1).any()
        with pytest.raises(ValueError):
            boundary_band(np.ones((4, 4), dtype=bool), 0)


class TestBoundaryIoU:
    def test_identical_masks_score_one(self):
        mask = np.zeros((12, 12), dtype=bool)
        mask[2:9, 3:10] = True
        assert boundary_iou(mask, mask, 2) == 1.0

    def test_disjoint_masks_score_zero(self):
        a = np.zeros((12, 12), dtype=bool)
        a[1:4, 1:4] = True
        b = np.zeros((12, 12), dtype=bool)
        b[8:11, 8:11] = True
        assert boundary_iou(a, b, 1) == 0.0

    def test_empty_masks_score_one(self):
        empty = np.zeros((6, 6), dtype=bool)
        assert boundary_iou(empty, empty, 1) == 1.0

    def test_interior_disagreement_is_ignored(self):
        """Two solid squares sharing a perimeter but differing inside have
        identical bands at d=1."""
        a = np.zeros((16, 16), dtype=bool)
        a[3:13, 3:13] = True
        b = a.copy()
        b[7, 7] = False  # a one-pixel interior hole
        assert iou(a, b) < 1.0
        # The hole creates band pixels around it, so pick d=1 and compare
        # against the direct band IoU instead of assuming equality.
        expected = iou(boundary_band(a, 1), boundary_band(b, 1))
        assert boundary_iou(a, b, 1) == expected


class TestDefaultBandRadius:
    def test_two_percent_of_diagonal_rounded(self):
        assert default_band_radius(100, 100) == round(0.02 * np.hypot(100, 100))
        assert default_band_radius(480, 640) == 16  # diagonal 800
        assert default_band_radius(1024, 1024) == 29

    def test_floors_at_one_pixel(self):
        assert default_band_radius(16, 16) == 1
        assert default_band_radius(1, 1) == 1


class TestAggregationAndRecords:
    def _records(self):
        return [
            EvalRecord(image_id="a", iou=0.5, biou=0.25, prompt="wire", time_ms=10.0),
            EvalRecord(image_id="b", iou=1.0, biou=0.75, prompt="cable"),
        ]

    def test_aggregate_means(self):
        m_iou, m_biou = aggregate(self._records())
        assert m_iou == pytest.approx(0.75)
        assert m_biou == pytest.approx(0.5)

    def test_aggregate_rejects_empty_list(self):
        with pytest.raises(EmptyDatasetError):
            aggregate([])

    def test_records_jsonl_round_trip(self, tmp_path):
        records = self._records()
        path = tmp_path / "records.jsonl"
        write_records_jsonl(records, path)
        assert read_records_jsonl(path) == records

    def test_report_columns_and_formatting(self):
        table = render_report(
            [
                {"method": "toy", "miou": 0.912, "mbiou": 0.845, "time_ms": 12.34},
                {"method": "baseline", "miou": 0.5, "mbiou": 0.25},
            ]
        )
        lines = table.splitlines()
        assert "Method" in lines[0]
        assert "mIoU" in lines[0]
        assert "mBIoU" in lines[0]
        assert "Time (ms)" in lines[0]
        assert "0.912" in lines[2] and "12.3" in lines[2]
        assert lines[3].rstrip().endswith("-")  # missing timing renders as a dash
