import math

import numpy as np
import pytest

from isac_planner.geometry import (
    Deployment,
    Region,
    RegionKind,
    SampleSet,
    SimilarityTransform,
    apply_transform,
    replicate_deployment,
    sample_region,
    vec3,
)


def segment(length=1000.0, anchor=(0.0, 0.0, 0.0)):
    return Region(kind=RegionKind.SEGMENT1D, anchor=np.array(anchor), extents=(length,))


class TestValueTypes:
    def test_vec3_rejects_nonfinite(self):
        with pytest.raises(ValueError):
            vec3(math.nan, 0, 0)

    def test_deployment_rejects_duplicates(self):
        with pytest.raises(ValueError):
            Deployment(np.array([[0.0, 0, 0], [0.0, 0, 0]]))

    def test_deployment_needs_positions(self):
        with pytest.raises(ValueError):
            Deployment(np.zeros((0, 3)))

    def test_region_extents_positive(self):
        with pytest.raises(ValueError):
            Region(kind=RegionKind.RECT2D, extents=(2.0, -1.0))

    def test_explicit_region_nonempty(self):
        with pytest.raises(ValueError):
            Region(kind=RegionKind.EXPLICIT, points=np.zeros((0, 3)))

    def test_sample_weights_sum(self):
        with pytest.raises(ValueError):
            SampleSet(np.zeros((2, 3)), np.array([0.5, 0.6]))

    def test_transform_rejects_nonorthogonal(self):
        with pytest.raises(ValueError):
            SimilarityTransform(rotation=np.eye(3) * 2.0)

    def test_transform_rejects_improper_rotation(self):
        with pytest.raises(ValueError):
            SimilarityTransform(rotation=np.diag([1.0, 1.0, -1.0]))


class TestSampleRegion:
    def test_segment_uniform_grid(self):
        ss = sample_region(segment(1000.0), 5)
        assert np.allclose(ss.points[:, 0], [0, 250, 500, 750, 1000])
        assert np.allclose(ss.points[:, 1:], 0.0)
        assert np.allclose(ss.weights, 0.2)

    def test_rect_corners_at_altitude(self):
        region = Region(
            kind=RegionKind.RECT2D, anchor=np.array([0.0, 0.0, 400.0]), extents=(2.0, 2.0)
        )
        ss = sample_region(region, (2, 2))
        assert len(ss) == 4
        corners = {(0, 0), (0, 2), (2, 0), (2, 2)}
        got = {(px, py) for px, py, _ in ss.points}
        assert got == corners
        assert np.allclose(ss.points[:, 2], 400.0)
        assert np.allclose(ss.weights, 0.25)

    def test_pdf_proportional_weights(self):
        ss = sample_region(segment(1.0), 2, mode="pdf", pdf=lambda pts: pts[:, 0])
        assert np.allclose(ss.points[:, 0], [0.0, 1.0])
        assert np.allclose(ss.weights, [0.0, 1.0])

    def test_pdf_zero_mass_errors(self):
        with pytest.raises(ValueError, match="degenerate density"):
            sample_region(segment(1.0), 3, mode="pdf", pdf=lambda pts: np.zeros(len(pts)))

    def test_pdf_negative_errors(self):
        with pytest.raises(ValueError, match="nonnegative"):
            sample_region(segment(1.0), 3, mode="pdf", pdf=lambda pts: pts[:, 0] - 0.5)

    def test_single_count_gives_midpoint(self):
        ss = sample_region(segment(100.0), 1)
        assert np.allclose(ss.points, [[50.0, 0.0, 0.0]])

    def test_explicit_region_points_kept(self):
        pts = np.array([[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]])
        ss = sample_region(Region(kind=RegionKind.EXPLICIT, points=pts, explicit_dim=3))
        assert np.array_equal(ss.points, pts)
        assert np.allclose(ss.weights, 0.5)

    def test_points_inside_region(self):
        region = Region(kind=RegionKind.BOX3D, anchor=np.array([1.0, 2.0, 3.0]),
                        extents=(4.0, 5.0, 6.0))
        ss = sample_region(region, (3, 4, 2))
        assert all(region.contains(p) for p in ss.points)
        assert abs(ss.weights.sum() - 1.0) < 1e-12


class TestApplyTransform:
    def test_scale_rotate_displace(self):
        t = SimilarityTransform(
            scale=2.0,
            rotation=SimilarityTransform.rotation_about_z(math.pi / 2).rotation,
            displacement=np.array([5.0, 5.0, 0.0]),
        )
        dep = Deployment(np.array([[1.0, 0.0, 0.0]]))
        out = apply_transform(t, dep)
        assert np.allclose(out.positions, [[5.0, 7.0, 0.0]], atol=1e-12)

    def test_identity(self):
        dep = Deployment(np.array([[1.0, 2.0, 3.0], [-4.0, 0.0, 2.0]]))
        out = apply_transform(SimilarityTransform.identity(), dep)
        assert np.array_equal(out.positions, dep.positions)

    def test_reflection_across_xz_plane(self):
        t = SimilarityTransform.reflection_across_plane([0.0, 1.0, 0.0])
        dep = Deployment(np.array([[0.0, 3.0, 1.0]]))
        out = apply_transform(t, dep)
        assert np.allclose(out.positions, [[0.0, -3.0, 1.0]], atol=1e-12)

    def test_distances_preserved_when_unit_scale(self):
        rng = np.random.default_rng(7)
        for _ in range(50):
            pos = rng.normal(size=(5, 3)) * 100
            dep = Deployment(pos)
            t = SimilarityTransform(
                rotation=_random_rotation(rng),
                reflection=_random_reflection(rng),
                displacement=rng.normal(size=3) * 50,
            )
            out = apply_transform(t, dep)
            orig = _pairwise(dep.positions)
            new = _pairwise(out.positions)
            assert np.allclose(new, orig, rtol=1e-12, atol=1e-12)

    def test_distances_scale_by_kappa(self):
        rng = np.random.default_rng(8)
        for kappa in (0.5, 2.0, 3.0):
            pos = rng.normal(size=(4, 3)) * 10
            dep = Deployment(pos)
            out = apply_transform(SimilarityTransform(scale=kappa), dep)
            assert np.allclose(_pairwise(out.positions), kappa * _pairwise(dep.positions),
                               rtol=1e-12)

    def test_inverse_round_trip(self):
        rng = np.random.default_rng(9)
        for _ in range(50):
            t = SimilarityTransform(
                scale=float(rng.uniform(0.3, 3.0)),
                rotation=_random_rotation(rng),
                reflection=_random_reflection(rng),
                displacement=rng.normal(size=3) * 20,
            )
            dep = Deployment(rng.normal(size=(4, 3)) * 100)
            back = apply_transform(t.inverse(), apply_transform(t, dep))
            assert np.allclose(back.positions, dep.positions, rtol=1e-12, atol=1e-9)

    def test_sampleset_overload_keeps_weights(self):
        ss = sample_region(segment(10.0), 4)
        out = apply_transform(SimilarityTransform.displacement_only([1.0, 2.0, 3.0]), ss)
        assert np.array_equal(out.weights, ss.weights)
        assert np.allclose(out.points, ss.points + [1.0, 2.0, 3.0])


class TestReplicateDeployment:
    def test_1d_tiling(self):
        base = Deployment(np.array([[100.0, 0.0, 50.0], [900.0, 0.0, 50.0]]))
        dep, region = replicate_deployment(base, segment(1000.0), 2)
        assert region.extents == (2000.0,)
        assert dep.n_bs == 4
        assert np.allclose(dep.positions[:2], base.positions)
        assert np.allclose(dep.positions[2:], base.positions + [1000.0, 0.0, 0.0])

    def test_identity_factor(self):
        base = Deployment(np.array([[100.0, 0.0, 50.0]]))
        dep, region = replicate_deployment(base, segment(1000.0), 1)
        assert np.array_equal(dep.positions, base.positions)
        assert region.extents == (1000.0,)

    def test_2d_four_fold(self):
        region = Region(kind=RegionKind.RECT2D, anchor=np.zeros(3), extents=(100.0, 80.0))
        rng = np.random.default_rng(3)
        base = Deployment(rng.uniform(10, 70, size=(4, 3)))
        dep, big = replicate_deployment(base, region, 4)
        assert dep.n_bs == 16
        assert big.extents == (200.0, 160.0)
        # each copy preserves the in-cell pattern and heights
        offsets = [(0, 0), (0, 80), (100, 0), (100, 80)]
        for c, (ox, oy) in enumerate(offsets):
            block = dep.positions[4 * c : 4 * c + 4]
            assert np.allclose(block, base.positions + [ox, oy, 0.0])

    def test_non_power_factor_errors(self):
        region = Region(kind=RegionKind.RECT2D, anchor=np.zeros(3), extents=(1.0, 1.0))
        base = Deployment(np.array([[0.3, 0.4, 0.5]]))
        with pytest.raises(ValueError, match="perfect"):
            replicate_deployment(base, region, 2)


def _pairwise(pos):
    return np.linalg.norm(pos[:, None, :] - pos[None, :, :], axis=-1)


def _random_rotation(rng):
    q, r = np.linalg.qr(rng.standard_normal((3, 3)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


def _random_reflection(rng):
    v = rng.standard_normal(3)
    v /= np.linalg.norm(v)
    return np.eye(3) - 2.0 * np.outer(v, v)
