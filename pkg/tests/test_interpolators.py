import math

import numpy as np
import pytest

from mixedgraph.errors import DegenerateTransformError, PatchGeometryError
from mixedgraph.interpolators import (
    Homography,
    Rotation,
    build_patch_operator,
    homography_operator,
    pad_full_rank,
    parse_transform,
    rotation_operator,
    tile_image,
)

PAPER_H = ((1.0, 0.2, 0.0), (0.1, 1.0, 0.0), (0.0, 0.0, 1.0))


def scalar_warp(transform, image, targets):
    """Independent per-pixel back-project-and-bilinear oracle."""
    h, w = image.shape
    src = transform.back_project(np.asarray(targets, dtype=float), (h, w))
    out = []
    for sr, sc in src:
        if not (0 <= sr <= h - 1 and 0 <= sc <= w - 1):
            out.append(np.nan)
            continue
        r0 = min(int(math.floor(sr)), h - 2)
        c0 = min(int(math.floor(sc)), w - 2)
        fr, fc = sr - r0, sc - c0
        out.append(
            image[r0, c0] * (1 - fr) * (1 - fc)
            + image[r0 + 1, c0] * fr * (1 - fc)
            + image[r0, c0 + 1] * (1 - fr) * fc
            + image[r0 + 1, c0 + 1] * fr * fc
        )
    return np.array(out)


def apply_real(op, image):
    src = op.source_coords
    return op.real_matrix @ image[src[:, 0], src[:, 1]]


class TestRotationOperator:
    def test_angle_zero_is_identity(self):
        op = rotation_operator(0.0, (4, 4), (6, 6), (32, 32))
        assert op.real_output_count == 36 and not op.dummy_rows
        np.testing.assert_array_equal(op.matrix, np.eye(36))
        np.testing.assert_array_equal(op.source_coords, op.target_coords)

    def test_angle_90_is_permutation(self):
        op = rotation_operator(90.0, (0, 0), (9, 9), (9, 9))
        m = op.real_matrix
        assert np.all((np.abs(m) < 1e-12) | (np.abs(m - 1) < 1e-12))
        np.testing.assert_allclose(m.sum(axis=1), 1.0)
        np.testing.assert_allclose(m.sum(axis=0), 1.0)

    def test_bilinear_weights_match_fractional_parts(self):
        tr = Rotation(20.0)
        op = build_patch_operator(tr, (10, 10), (10, 10), (64, 64)).operator
        src = tr.back_project(op.target_coords.astype(float), (64, 64))
        row = 5
        sr, sc = src[row]
        a, b = sr - math.floor(sr), sc - math.floor(sc)
        expected = sorted([(1 - a) * (1 - b), (1 - a) * b, a * (1 - b), a * b])
        got = sorted(op.real_matrix[row][op.real_matrix[row] > 0])
        np.testing.assert_allclose(got, [w for w in expected if w > 0], atol=1e-12)

    def test_out_of_bounds_patch_rejected(self):
        with pytest.raises(PatchGeometryError):
            build_patch_operator(Rotation(45.0), (0, 0), (2, 2), (200, 200))


class TestHomographyOperator:
    def test_identity_matrix(self):
        op = homography_operator(np.eye(3), (2, 2), (5, 5), (16, 16))
        np.testing.assert_array_equal(op.matrix, np.eye(25))

    def test_paper_matrix_against_scalar_oracle(self):
        tr = Homography(PAPER_H)
        rr, cc = np.mgrid[0:40, 0:40]
        plane = (rr + cc).astype(float)  # sampled u+v plane
        op = build_patch_operator(tr, (5, 5), (10, 10), (40, 40)).operator
        got = apply_real(op, plane)
        want = scalar_warp(tr, plane, op.target_coords)
        np.testing.assert_allclose(got, want, atol=1e-10)

    def test_integer_translation_is_selection(self):
        tr = Homography(((1, 0, 3), (0, 1, 2), (0, 0, 1)))
        op = build_patch_operator(tr, (4, 4), (4, 4), (20, 20)).operator
        m = op.real_matrix
        assert np.all((m == 0.0) | (m == 1.0))
        np.testing.assert_array_equal(m.sum(axis=1), 1.0)

    def test_singular_homography_rejected(self):
        with pytest.raises(DegenerateTransformError):
            Homography(((1, 0, 0), (2, 0, 0), (0, 0, 1)))


class TestPadFullRank:
    def test_square_invertible_unchanged(self):
        theta = np.array([[0.5, 0.5], [0.0, 1.0]])
        op = pad_full_rank(theta, [[0, 0], [0, 1]])
        assert not op.dummy_rows
        np.testing.assert_array_equal(op.matrix, theta)

    def test_single_row_gets_one_dummy(self):
        op = pad_full_rank(np.array([[0.5, 0.5]]), [[0, 0], [0, 1]])
        assert len(op.dummy_rows) == 1
        assert abs(np.linalg.det(op.matrix)) == pytest.approx(0.5)

    def test_rotation_patch_padding_invertible(self):
        op = rotation_operator(20.0, (200, 200), (10, 10), (512, 512))
        assert op.real_output_count == 100
        assert len(op.dummy_rows) == op.size - 100 > 0
        svals = np.linalg.svd(op.matrix, compute_uv=False)
        assert svals[-1] > 1e-10 * svals[0]

    def test_rank_deficient_rejected(self):
        theta = np.array([[0.5, 0.5], [0.5, 0.5], [1.0, 0.0]])
        with pytest.raises(PatchGeometryError):
            pad_full_rank(theta[:2], [[0, 0], [0, 1]])

    def test_strip_and_repad_preserves_real_rows(self):
        op = rotation_operator(20.0, (100, 100), (10, 10), (256, 256))
        repadded = pad_full_rank(
            op.real_matrix, op.source_coords, op.target_coords, op.transform
        )
        np.testing.assert_array_equal(repadded.real_matrix, op.real_matrix)
        assert repadded.dummy_rows == op.dummy_rows


class TestTileImage:
    def test_job_count_512(self):
        jobs = tile_image((512, 512), Rotation(0.0), 10)
        assert len(jobs) == 52 * 52
        sizes = {j.size for j in jobs}
        assert (10, 10) in sizes and (2, 2) in sizes

    def test_identity_footprint_equals_tile(self):
        jobs = tile_image((30, 30), Rotation(0.0), 10)
        for job in jobs:
            op = job.operator
            np.testing.assert_array_equal(op.source_coords, op.target_coords)

    def test_rotation_interior_footprint_exceeds_tile(self):
        jobs = tile_image((128, 128), Rotation(20.0), 10)
        interior = [
            j
            for j in jobs
            if 30 <= j.origin[0] <= 80 and 30 <= j.origin[1] <= 80
        ]
        assert interior
        for job in interior:
            assert len(job.operator.source_coords) > 100

    def test_every_real_pixel_covered_once(self):
        jobs = tile_image((64, 64), Rotation(20.0), 10)
        seen = np.zeros((64, 64), dtype=int)
        for job in jobs:
            tc = job.operator.target_coords
            seen[tc[:, 0], tc[:, 1]] += 1
        assert seen.max() == 1


class TestOperatorInvariants:
    @pytest.mark.parametrize(
        "transform", [Rotation(20.0), Rotation(-7.5), Homography(PAPER_H)]
    )
    def test_partition_of_unity(self, transform):
        op = build_patch_operator(transform, (8, 8), (10, 10), (48, 48)).operator
        const = np.full(op.matrix.shape[1], 0.37)
        np.testing.assert_allclose(
            op.real_matrix @ const, 0.37, atol=1e-12
        )

    @pytest.mark.parametrize(
        "transform", [Rotation(20.0), Homography(PAPER_H)]
    )
    def test_linear_precision(self, transform):
        rr, cc = np.mgrid[0:48, 0:48]
        img = 0.27 * rr - 0.13 * cc + 3.1
        op = build_patch_operator(transform, (12, 12), (10, 10), (48, 48)).operator
        src = transform.back_project(op.target_coords.astype(float), (48, 48))
        want = 0.27 * src[:, 0] - 0.13 * src[:, 1] + 3.1
        np.testing.assert_allclose(apply_real(op, img), want, atol=1e-10)

    @pytest.mark.parametrize("seed", range(5))
    def test_scalar_oracle_agreement(self, seed):
        rng = np.random.default_rng(seed)
        img = rng.uniform(0, 1, (40, 40))
        transform = Rotation(float(rng.uniform(-40, 40)))
        op = build_patch_operator(transform, (10, 10), (10, 10), (40, 40)).operator
        want = scalar_warp(transform, img, op.target_coords)
        np.testing.assert_allclose(apply_real(op, img), want, atol=1e-12)


class TestParseTransform:
    def test_forms(self):
        assert parse_transform("identity").angle_deg == 0.0
        assert parse_transform("rotation", angle=20).angle_deg == 20.0
        h = parse_transform("homography", h="1,0.2,0;0.1,1,0;0,0,1")
        assert h.matrix == PAPER_H

    def test_errors(self):
        with pytest.raises(ValueError):
            parse_transform("rotation")
        with pytest.raises(ValueError):
            parse_transform("spin")
