import math

import numpy as np
import pytest

from isac_planner.geometry import (
    Deployment,
    SampleSet,
    SimilarityTransform,
    apply_transform,
)
from isac_planner.sensing import (
    CrlbField,
    NonLocalizableError,
    SensingParams,
    area_crlb,
    coverage_probability,
    crlb_field,
    crlb_point,
    field_to_csv,
    fisher_matrix,
    ranging_variance,
    unit_vector,
)


def brute_force_fim(t, positions, beta, kappa_s):
    """Independent oracle: explicit loop over all N^2 ordered link pairs."""
    n = len(positions)
    f = np.zeros((3, 3))
    for i in range(n):
        for j in range(n):
            vi = (positions[i] - t) / np.linalg.norm(positions[i] - t)
            vj = (positions[j] - t) / np.linalg.norm(positions[j] - t)
            di = np.linalg.norm(positions[i] - t)
            dj = np.linalg.norm(positions[j] - t)
            row = vi + vj
            f += np.outer(row, row) * kappa_s / (di**beta * dj**beta)
    return f


def tetrahedron(dist, center=(0.0, 0.0, 0.0)):
    verts = np.array(
        [[1.0, 1.0, 1.0], [1.0, -1.0, -1.0], [-1.0, 1.0, -1.0], [-1.0, -1.0, 1.0]]
    ) / math.sqrt(3.0)
    return Deployment(np.asarray(center) + dist * verts)


def single_point_samples(t):
    return SampleSet(np.array([t]), np.array([1.0]))


class TestUnitVector:
    def test_axis(self):
        assert np.allclose(unit_vector([1, 0, 0], [0, 0, 0]), [1, 0, 0])

    def test_34_triangle(self):
        assert np.allclose(unit_vector([0, 3, 4], [0, 0, 0]), [0, 0.6, 0.8])

    def test_coincident_errors(self):
        with pytest.raises(NonLocalizableError):
            unit_vector([1.0, 2.0, 3.0], [1.0, 2.0, 3.0])

    def test_norm_one(self):
        rng = np.random.default_rng(0)
        for _ in range(100):
            b, t = rng.normal(size=3), rng.normal(size=3)
            v = unit_vector(b, t)
            assert abs(np.linalg.norm(v) - 1.0) < 1e-12
            assert np.allclose(np.cross(v, b - t), 0, atol=1e-9)


class TestRangingVariance:
    def test_clean_constants_physical_path(self):
        # c=3, sigma_s2 = 8 pi^2 / 3, everything else 1: variance 9 at unit range
        params = SensingParams.from_physical(
            beta=2.0,
            bandwidth_hz=1.0,
            m_r=1,
            sigma_s2_watts=8.0 * math.pi**2 / 3.0,
            rcs_gain=1.0,
            tx_gain=1.0,
            speed_of_light=3.0,
        )
        assert ranging_variance(1.0, 1.0, params) == pytest.approx(9.0, rel=1e-12)

    def test_direct_form(self):
        params = SensingParams(beta=2.0, kappa_s=1.0)
        assert ranging_variance(10.0, 10.0, params) == pytest.approx(1e4, rel=1e-12)

    def test_doubling_distances_beta2(self):
        params = SensingParams(beta=2.0, kappa_s=3.7)
        assert ranging_variance(20.0, 14.0, params) == pytest.approx(
            16.0 * ranging_variance(10.0, 7.0, params), rel=1e-12
        )

    def test_monotone_in_distances(self):
        params = SensingParams(beta=2.5, kappa_s=2.0)
        assert ranging_variance(11.0, 10.0, params) > ranging_variance(10.0, 10.0, params)
        assert ranging_variance(10.0, 11.0, params) > ranging_variance(10.0, 10.0, params)

    def test_nonpositive_distance_errors(self):
        with pytest.raises(ValueError):
            ranging_variance(0.0, 1.0, SensingParams())


class TestFisherMatrix:
    def test_single_bs_rank_one(self):
        params = SensingParams(beta=2.0, kappa_s=1.0)
        dep = Deployment(np.array([[100.0, 0.0, 0.0]]))
        f = fisher_matrix([0.0, 0.0, 0.0], dep, params)
        v = np.array([1.0, 0.0, 0.0])
        assert np.allclose(f, 4.0 * np.outer(v, v) / 100.0**4, rtol=1e-12)
        assert np.linalg.matrix_rank(f) == 1

    def test_coplanar_rank_two(self):
        params = SensingParams()
        dep = Deployment(np.array([[10.0, 0.0, 0.0], [0.0, 10.0, 0.0], [-5.0, -5.0, 0.0]]))
        f = fisher_matrix([1.0, 2.0, 0.0], dep, params)
        assert np.linalg.matrix_rank(f, tol=1e-12 * np.linalg.norm(f)) <= 2

    def test_tetrahedron_closed_form(self):
        params = SensingParams(beta=2.0, kappa_s=1.0)
        f = fisher_matrix([0.0, 0.0, 0.0], tetrahedron(100.0), params)
        assert np.allclose(f, (32.0 / 3.0) * 1e-8 * np.eye(3), rtol=1e-12)

    def test_matches_brute_force_on_random_instances(self):
        rng = np.random.default_rng(42)
        for _ in range(1000):
            n = rng.integers(1, 7)
            positions = rng.normal(size=(n, 3)) * rng.uniform(1, 200)
            t = rng.normal(size=3) * 10
            beta = rng.choice([2.0, 2.5, 3.0])
            kappa_s = 10.0 ** rng.uniform(-3, 3)
            if min(np.linalg.norm(positions - t, axis=1)) < 1e-3:
                continue
            params = SensingParams(beta=float(beta), kappa_s=float(kappa_s))
            f = fisher_matrix(t, Deployment(positions), params)
            oracle = brute_force_fim(t, positions, beta, kappa_s)
            assert np.allclose(f, oracle, rtol=1e-12, atol=1e-12 * np.linalg.norm(oracle))

    def test_grouped_assembly_identity(self):
        # all-pairs sum equals 4*monostatic + 2*(i<j) bistatic grouping
        rng = np.random.default_rng(5)
        for _ in range(200):
            n = rng.integers(2, 6)
            positions = rng.normal(size=(n, 3)) * 50
            t = rng.normal(size=3)
            beta, ks = 2.0, 1.7
            d = np.linalg.norm(positions - t, axis=1)
            if d.min() < 1e-3:
                continue
            v = (positions - t) / d[:, None]
            grouped = np.zeros((3, 3))
            for i in range(n):
                grouped += 4.0 * np.outer(v[i], v[i]) * ks / d[i] ** (2 * beta)
            for i in range(n):
                for j in range(i + 1, n):
                    row = v[i] + v[j]
                    grouped += 2.0 * np.outer(row, row) * ks / (d[i] ** beta * d[j] ** beta)
            f = fisher_matrix(t, Deployment(positions), SensingParams(beta=beta, kappa_s=ks))
            assert np.allclose(f, grouped, rtol=1e-12)

    def test_psd_on_random_inputs(self):
        rng = np.random.default_rng(11)
        for _ in range(200):
            n = rng.integers(1, 8)
            positions = rng.normal(size=(n, 3)) * 100
            t = rng.normal(size=3) * 30
            if min(np.linalg.norm(positions - t, axis=1)) < 1e-3:
                continue
            f = fisher_matrix(t, Deployment(positions), SensingParams(beta=3.0, kappa_s=2.0))
            assert np.linalg.eigvalsh(f)[0] >= -1e-9 * np.linalg.norm(f)


class TestCrlbPoint:
    def test_tetrahedron_value(self):
        params = SensingParams(beta=2.0, kappa_s=1.0)
        val = crlb_point([0.0, 0.0, 0.0], tetrahedron(100.0), params)
        assert val == pytest.approx(2.8125e7, rel=1e-12)

    def test_single_bs_infinite(self):
        params = SensingParams()
        dep = Deployment(np.array([[50.0, 0.0, 0.0]]))
        assert math.isinf(crlb_point([0.0, 0.0, 0.0], dep, params))

    def test_scaling_law_exact(self):
        rng = np.random.default_rng(1)
        for beta in (2.0, 3.0):
            for kappa in (0.5, 2.0, 3.0):
                params = SensingParams(beta=beta, kappa_s=2.3)
                pos = rng.normal(size=(5, 3)) * 100
                t = rng.normal(size=3) * 20
                base = crlb_point(t, Deployment(pos), params)
                scaled = crlb_point(kappa * t, Deployment(kappa * pos), params)
                assert scaled == pytest.approx(base * kappa ** (2 * beta), rel=1e-9)

    def test_adding_bs_never_hurts(self):
        rng = np.random.default_rng(2)
        params = SensingParams(beta=2.0, kappa_s=1.0)
        for _ in range(100):
            pos = rng.normal(size=(4, 3)) * 100
            extra = rng.normal(size=3) * 100
            t = rng.normal(size=3) * 10
            before = crlb_point(t, Deployment(pos), params)
            after = crlb_point(t, Deployment(np.vstack([pos, extra])), params)
            assert after <= before * (1 + 1e-9) or math.isinf(before)


class TestAreaCrlb:
    def test_single_sample_equals_point(self):
        params = SensingParams(beta=2.0, kappa_s=1.0)
        dep = tetrahedron(100.0)
        t = np.zeros(3)
        assert area_crlb(single_point_samples(t), dep, params) == pytest.approx(
            crlb_point(t, dep, params), rel=1e-12
        )

    def test_equal_weight_average(self):
        params = SensingParams(beta=2.0, kappa_s=1.0)
        dep = tetrahedron(100.0)
        pts = np.array([[0.0, 0.0, 0.0], [5.0, -3.0, 2.0]])
        ss = SampleSet(pts, np.array([0.5, 0.5]))
        a = crlb_point(pts[0], dep, params)
        b = crlb_point(pts[1], dep, params)
        assert area_crlb(ss, dep, params) == pytest.approx((a + b) / 2, rel=1e-12)

    def test_reflection_invariance(self):
        params = SensingParams(beta=2.0, kappa_s=5.0)
        rng = np.random.default_rng(3)
        dep = Deployment(rng.normal(size=(5, 3)) * 80)
        pts = rng.normal(size=(7, 3)) * 40
        ss = SampleSet(pts, np.full(7, 1 / 7))
        t = SimilarityTransform.reflection_across_plane([0.3, -1.0, 2.0])
        base = area_crlb(ss, dep, params)
        moved = area_crlb(apply_transform(t, ss), apply_transform(t, dep), params)
        assert moved == pytest.approx(base, rel=1e-9)

    def test_infinite_when_weighted_point_singular(self):
        params = SensingParams()
        dep = Deployment(np.array([[50.0, 0.0, 0.0]]))
        ss = SampleSet(np.array([[0.0, 0.0, 0.0]]), np.array([1.0]))
        assert math.isinf(area_crlb(ss, dep, params))

    def test_zero_weight_singular_point_ignored(self):
        params = SensingParams(beta=2.0, kappa_s=1.0)
        # tetrahedron around origin localizes origin; the far coplanar point
        # carries zero weight
        dep = tetrahedron(100.0)
        coplanar_bad = np.array([1e9, 1e9, 1e9])
        ss = SampleSet(np.array([np.zeros(3), coplanar_bad]), np.array([1.0, 0.0]))
        assert math.isfinite(area_crlb(ss, dep, params))

    def test_empty_errors(self):
        with pytest.raises(ValueError):
            area_crlb(
                SampleSet(np.zeros((0, 3)), np.zeros(0)),
                tetrahedron(10.0),
                SensingParams(),
            )


class TestCoverageAndField:
    def test_half_coverage(self):
        ss = SampleSet(np.array([[0.0, 0, 0], [1.0, 0, 0]]), np.array([0.5, 0.5]))
        field = CrlbField(ss, np.array([0.5, 2.0]))
        assert coverage_probability(field, 1.0) == pytest.approx(0.5)

    def test_all_below(self):
        ss = SampleSet(np.array([[0.0, 0, 0], [1.0, 0, 0]]), np.array([0.5, 0.5]))
        field = CrlbField(ss, np.array([0.1, 0.2]))
        assert coverage_probability(field, 1.0) == pytest.approx(1.0)

    def test_zero_weight_violations_still_full(self):
        ss = SampleSet(np.array([[0.0, 0, 0], [1.0, 0, 0]]), np.array([1.0, 0.0]))
        field = CrlbField(ss, np.array([0.1, math.inf]))
        assert coverage_probability(field, 1.0) == pytest.approx(1.0)

    def test_field_matches_pointwise(self):
        rng = np.random.default_rng(4)
        params = SensingParams(beta=2.0, kappa_s=3.0)
        dep = Deployment(rng.normal(size=(5, 3)) * 60)
        pts = rng.normal(size=(9, 3)) * 30
        ss = SampleSet(pts, np.full(9, 1 / 9))
        field = crlb_field(ss, dep, params)
        expected = [crlb_point(p, dep, params) for p in pts]
        assert np.allclose(field.values, expected, rtol=1e-12)

    def test_field_displacement_invariance(self):
        params = SensingParams(beta=2.0, kappa_s=1.0)
        rng = np.random.default_rng(6)
        dep = Deployment(rng.normal(size=(4, 3)) * 50)
        ss = SampleSet(rng.normal(size=(5, 3)) * 20, np.full(5, 0.2))
        shift = SimilarityTransform.displacement_only([123.0, -45.0, 6.0])
        f0 = crlb_field(ss, dep, params)
        f1 = crlb_field(apply_transform(shift, ss), apply_transform(shift, dep), params)
        assert np.allclose(f1.values, f0.values, rtol=1e-9)

    def test_tetrahedron_single_point_field(self):
        params = SensingParams(beta=2.0, kappa_s=1.0)
        field = crlb_field(single_point_samples(np.zeros(3)), tetrahedron(100.0), params)
        assert field.values[0] == pytest.approx(2.8125e7, rel=1e-12)

    def test_csv_export(self, tmp_path):
        params = SensingParams()
        dep = Deployment(np.array([[50.0, 0.0, 10.0]]))
        ss = SampleSet(np.array([[0.0, 0.0, 0.0]]), np.array([1.0]))
        field = crlb_field(ss, dep, params)
        path = tmp_path / "field.csv"
        field_to_csv(field, path)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "x,y,z,crlb,log10_crlb"
        assert lines[1].split(",")[3] == "inf"
