import numpy as np
import pytest
from scipy.optimize import minimize
from scipy.spatial.transform import Rotation

from capt import tensor as T
from capt.geometry import (DegenerateInputError, GeometryError, Line3, any_perpendicular,
                           cosine_similarity, line_to_line_distance, point_to_line_distance,
                           project_point_to_line, rodrigues_rotate, rodrigues_rotate_tensor)

from conftest import gradcheck


def random_line(r):
    return Line3.through(r.normal(size=3), r.normal(size=3))


class TestRodrigues:
    def test_quarter_turn(self):
        out = rodrigues_rotate(np.array([[1.0, 0.0, 0.0]]), Line3([0, 0, 1.0], [0, 0, 0.0]), np.pi / 2)
        np.testing.assert_allclose(out, [[0, 1, 0]], atol=1e-12)

    def test_zero_angle(self, rng):
        pts = rng.normal(size=(20, 3))
        np.testing.assert_array_equal(rodrigues_rotate(pts, random_line(rng), 0.0), pts)

    @pytest.mark.parametrize("seed", range(20))
    def test_matches_rotation_matrix(self, seed):
        r = np.random.default_rng(seed)
        axis, alpha = random_line(r), r.uniform(-np.pi, np.pi)
        pts = r.normal(size=(30, 3)) * 3
        R = Rotation.from_rotvec(axis.direction * alpha).as_matrix()
        expected = (pts - axis.pivot) @ R.T + axis.pivot
        assert np.max(np.abs(rodrigues_rotate(pts, axis, alpha) - expected)) < 1e-10

    @pytest.mark.parametrize("seed", range(10))
    def test_rigid(self, seed):
        r = np.random.default_rng(seed)
        pts = r.normal(size=(40, 3))
        out = rodrigues_rotate(pts, random_line(r), r.uniform(-np.pi, np.pi))
        pd = lambda x: np.linalg.norm(x[:, None] - x[None], axis=-1)
        assert np.max(np.abs(pd(out) - pd(pts))) < 1e-10

    @pytest.mark.parametrize("seed", range(10))
    def test_inverse(self, seed):
        r = np.random.default_rng(seed)
        pts, axis, alpha = r.normal(size=(40, 3)), random_line(r), r.uniform(-np.pi, np.pi)
        back = rodrigues_rotate(rodrigues_rotate(pts, axis, alpha), axis, -alpha)
        assert np.max(np.abs(back - pts)) < 1e-10

    def test_axis_distance_preserved(self, rng):
        pts, axis = rng.normal(size=(40, 3)), random_line(rng)
        out = rodrigues_rotate(pts, axis, 1.1)
        np.testing.assert_allclose(point_to_line_distance(out, axis.pivot, axis.direction),
                                   point_to_line_distance(pts, axis.pivot, axis.direction), atol=1e-12)

    def test_non_unit_direction(self):
        with pytest.raises(GeometryError):
            Line3([0, 0, 2.0], [0, 0, 0.0])
        axis = Line3.through([0, 0, 0], [0, 0, 1])
        object.__setattr__(axis, "direction", np.array([0, 0, 1.5]))
        with pytest.raises(GeometryError):
            rodrigues_rotate(np.zeros((1, 3)), axis, 0.3)

    def test_non_finite_angle(self):
        with pytest.raises(GeometryError):
            rodrigues_rotate(np.zeros((1, 3)), Line3([0, 0, 1.0], [0, 0, 0.0]), np.nan)

    def test_tensor_version_matches(self, rng):
        pts, axis, alpha = rng.normal(size=(10, 3)), random_line(rng), 0.7
        out = rodrigues_rotate_tensor(pts, T.Tensor(axis.direction), T.Tensor(axis.pivot), alpha)
        np.testing.assert_allclose(out.data, rodrigues_rotate(pts, axis, alpha), atol=1e-12)

    @pytest.mark.parametrize("seed", range(5))
    def test_gradient_wrt_axis(self, seed):
        r = np.random.default_rng(seed)
        pts, w = r.normal(size=(8, 3)), r.normal(size=(8, 3))
        alpha = r.uniform(0.2, 3.0)
        u0 = r.normal(size=3)
        u0 /= np.linalg.norm(u0)
        build = lambda u, q: T.sum(T.mul(rodrigues_rotate_tensor(pts, u, q, alpha), w))
        assert gradcheck(build, [u0, r.normal(size=3)]) < 1e-5


class TestPointToLine:
    def test_unit_offset(self):
        assert point_to_line_distance([1.0, 0, 0], np.zeros(3), [0, 0, 1.0]) == 1.0

    def test_on_line(self):
        u = np.array([0.0, 0.6, 0.8])
        assert point_to_line_distance(np.ones(3) + 3 * u, np.ones(3), u) == pytest.approx(0, abs=1e-15)

    @pytest.mark.parametrize("seed", range(20))
    def test_cross_product_oracle(self, seed):
        r = np.random.default_rng(seed)
        p, q, u = r.normal(size=(25, 3)), r.normal(size=3), r.normal(size=3)
        u /= np.linalg.norm(u)
        expected = np.linalg.norm(np.cross(p - q, u), axis=-1)
        assert np.max(np.abs(point_to_line_distance(p, q, u) - expected)) < 1e-12

    def test_rigid_invariance(self, rng):
        p, q, u = rng.normal(size=(10, 3)), rng.normal(size=3), rng.normal(size=3)
        u /= np.linalg.norm(u)
        R, t = Rotation.random(random_state=3).as_matrix(), rng.normal(size=3)
        moved = point_to_line_distance(p @ R.T + t, R @ q + t, R @ u)
        np.testing.assert_allclose(moved, point_to_line_distance(p, q, u), atol=1e-12)

    def test_non_unit_rejected(self):
        with pytest.raises(GeometryError):
            point_to_line_distance(np.ones(3), np.zeros(3), [0, 0, 2.0])


class TestCosine:
    def test_cases(self):
        assert cosine_similarity([0, 1.0, 0], [0, 1.0, 0]) == 1
        assert cosine_similarity([1.0, 0, 0], [-1.0, 0, 0]) == -1
        assert cosine_similarity([1.0, 0, 0], [0, 1.0, 0]) == 0

    def test_clamped(self, rng):
        v = rng.normal(size=(100, 3))
        c = cosine_similarity(v, v * 7.3)
        assert np.all(c <= 1.0)

    def test_zero_vector(self):
        with pytest.raises(DegenerateInputError):
            cosine_similarity([0, 0, 0.0], [1.0, 0, 0])


class TestProjection:
    def test_canonical(self):
        foot, pdir, dist = project_point_to_line(np.array([1.0, 0, 5]), Line3([0, 0, 1.0], [0, 0, 0.0]))
        np.testing.assert_allclose(foot, [0, 0, 5])
        np.testing.assert_allclose(pdir, [-1, 0, 0])
        assert dist == 1

    def test_translated(self):
        _, _, dist = project_point_to_line(np.array([2.0, 0, 0]), Line3([0, 0, 1.0], [1.0, 0, 0]))
        assert dist == 1

    @pytest.mark.parametrize("seed", range(10))
    def test_reconstruction(self, seed):
        r = np.random.default_rng(seed)
        p, axis = r.normal(size=(30, 3)), random_line(r)
        foot, pdir, dist = project_point_to_line(p, axis)
        assert np.max(np.abs(foot - dist[:, None] * pdir - p)) < 1e-10
        assert np.max(np.abs(pdir @ axis.direction)) < 1e-12
        np.testing.assert_allclose(np.linalg.norm(pdir, axis=-1), 1, atol=1e-12)

    def test_on_axis_degenerate(self):
        with pytest.raises(DegenerateInputError):
            project_point_to_line(np.array([0, 0, 3.0]), Line3([0, 0, 1.0], [0, 0, 0.0]))

    def test_any_perpendicular(self, rng):
        for u in rng.normal(size=(20, 3)):
            u /= np.linalg.norm(u)
            v = any_perpendicular(u)
            assert abs(v @ u) < 1e-12 and abs(np.linalg.norm(v) - 1) < 1e-12


def brute_line_distance(a, b):
    f = lambda ts: np.linalg.norm(a.pivot + ts[0] * a.direction - b.pivot - ts[1] * b.direction)
    grid = np.linspace(-10, 10, 81)
    best = min(((t, s) for t in grid for s in grid), key=f)
    res = minimize(f, best, method="Nelder-Mead", options={"xatol": 1e-12, "fatol": 1e-14, "maxiter": 10000})
    return res.fun


class TestLineToLine:
    def test_identical(self):
        a = Line3([0, 0, 1.0], [1.0, 2, 3])
        assert line_to_line_distance(a, a) == 0

    def test_parallel(self):
        assert line_to_line_distance(Line3([0, 0, 1.0], [0, 0, 0.0]), Line3([0, 0, 1.0], [1.0, 0, 0])) == 1
        assert line_to_line_distance(Line3([0, 0, 1.0], [0, 0, 0.0]), Line3([0, 0, -1.0], [1.0, 0, 5])) == 1

    @pytest.mark.parametrize("seed", range(8))
    def test_skew_brute_force(self, seed):
        r = np.random.default_rng(seed)
        a, b = random_line(r), random_line(r)
        assert abs(line_to_line_distance(a, b) - brute_line_distance(a, b)) < 1e-6

    def test_pivot_slide_invariant(self, rng):
        a, b = random_line(rng), random_line(rng)
        slid = Line3(a.direction, a.pivot + 4.2 * a.direction)
        assert abs(line_to_line_distance(a, b) - line_to_line_distance(slid, b)) < 1e-12
