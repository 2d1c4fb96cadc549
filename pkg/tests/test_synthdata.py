import hashlib
import math
import os

import numpy as np
import pytest

from capt.geometry import point_to_line_distance, rodrigues_rotate
from capt.synthdata import (CATEGORIES, AugmentConfig, SampleFormatError, ViewDegenerateError, augment,
                            build_instance, compute_pointwise_targets, generate_dataset, get_category,
                            load_split, make_sample, random_camera, random_states, read_manifest,
                            read_sample, sample_view, split_counts, write_sample)
from capt.synthdata.categories import CategorySpec


def sample(category="laptop", seed=0, n=512):
    return make_sample(category, seed, [seed, 99], n)


class TestCategories:
    def test_laptop(self):
        inst = build_instance("laptop", 3)
        assert inst.category.n_links == 2 and inst.category.n_joints == 1

    def test_eyeglasses(self):
        inst = build_instance("eyeglasses", 3)
        assert inst.category.n_links == 3 and inst.category.n_joints == 2

    @pytest.mark.parametrize("name,joints", [("laptop", 1), ("oven", 1), ("washing_machine", 1),
                                             ("eyeglasses", 2), ("scissors", 2)])
    def test_joint_counts(self, name, joints):
        cat = get_category(name)
        assert cat.n_J_max == joints and cat.n_L_max == joints + 1

    def test_same_seed_same_geometry(self):
        a, b = build_instance("oven", 11), build_instance("oven", 11)
        assert a.dims == b.dims and a.boxes == b.boxes
        assert build_instance("oven", 12).dims != a.dims

    def test_dims_within_spread(self):
        cat = get_category("laptop")
        for seed in range(20):
            dims = build_instance(cat, seed).dims
            for key, nominal in cat.nominal.items():
                if not key.endswith("ratio"):
                    assert 0.7 * nominal - 1e-12 <= dims[key] <= 1.3 * nominal + 1e-12

    def test_bad_tree_rejected(self):
        with pytest.raises(ValueError):
            CategorySpec("bad", 3, 2, (0, 2), ((0, 1), (0, 1)), {}, "", "")

    def test_unknown(self):
        with pytest.raises(ValueError):
            get_category("teapot")


class TestSampleView:
    @pytest.mark.parametrize("name", sorted(CATEGORIES))
    def test_record_invariants(self, name):
        rec = sample(name, 5)
        cat = get_category(name)
        assert rec.points.shape == (512, 3) and rec.labels.shape == (512,)
        assert rec.labels.max() < rec.active_link_count <= cat.n_L_max
        for j, (lo, hi) in zip(rec.joints, cat.limits):
            assert abs(np.linalg.norm(j.direction) - 1) < 1e-9
            assert lo <= j.state <= hi

    def test_open_laptop_from_above(self):
        inst = build_instance("laptop", 0)
        rec = sample_view(inst, [0.0], [0.0, 0.0, 1.0], 256, np.random.default_rng(0))
        assert set(np.unique(rec.labels)) == {0, 1}

    @pytest.mark.parametrize("name", ["laptop", "eyeglasses", "scissors"])
    def test_repose_is_rodrigues(self, name):
        inst = build_instance(name, 4)
        rng = np.random.default_rng(1)
        local, _, links = inst.surface_samples(400, rng)
        cat = inst.category
        states = np.array([lo + 0.2 * (hi - lo) for lo, hi in cat.limits])
        for k in range(cat.n_joints):
            delta = 0.3 * (cat.limits[k][1] - cat.limits[k][0])
            moved = states.copy()
            moved[k] += delta
            child = links == k + 1
            before = inst.pose_points(local, links, states)
            after = inst.pose_points(local, links, moved)
            axis = inst.posed_joints(states)[k].axis
            np.testing.assert_allclose(after[child], rodrigues_rotate(before[child], axis, delta), atol=1e-12)
            np.testing.assert_array_equal(after[links == 0], before[links == 0])

    def test_state_out_of_limits(self):
        inst = build_instance("laptop", 0)
        with pytest.raises(ValueError):
            sample_view(inst, [3.0], [0, 0, 1.0], 256)

    def test_too_few_points(self):
        with pytest.raises(ValueError):
            sample_view(build_instance("laptop", 0), [0.5], [0, 0, 1.0], 32)

    def test_view_degenerate(self):
        # flat laptop seen exactly from the side: only the thin end faces survive culling
        inst = build_instance("laptop", 0)
        with pytest.raises(ViewDegenerateError):
            sample_view(inst, [0.0], [1.0, 0.0, 0.0], 1024, np.random.default_rng(0), oversample=1)

    def test_cameras_in_upper_hemisphere(self, rng):
        for _ in range(50):
            c = random_camera(rng)
            assert c[2] >= 0.15 and abs(np.linalg.norm(c) - 1) < 1e-12

    def test_states_within_limits(self, rng):
        cat = get_category("scissors")
        for _ in range(50):
            for s, (lo, hi) in zip(random_states(cat, rng), cat.limits):
                assert lo <= s <= hi


def axis_distances(rec):
    return np.stack([point_to_line_distance(rec.points, j.pivot, j.direction) for j in rec.joints], -1)


class TestAugment:
    def test_identity(self):
        rec = sample()
        out = augment(rec, 0, rotation=(0, 0, 0), translation=(0, 0, 0), scale=1.0)
        np.testing.assert_array_equal(out.points, rec.points)
        for a, b in zip(out.joints, rec.joints):
            np.testing.assert_array_equal(a.direction, b.direction)
            np.testing.assert_array_equal(a.pivot, b.pivot)
            assert a.state == b.state

    def test_scale(self):
        rec = sample("eyeglasses", 2)
        out = augment(rec, 0, rotation=(0.3, -1.0, 2.0), translation=(0.5, 0.1, -0.9), scale=1.2)
        np.testing.assert_allclose(axis_distances(out), 1.2 * axis_distances(rec), atol=1e-12)
        assert [j.state for j in out.joints] == [j.state for j in rec.joints]

    @pytest.mark.parametrize("seed", range(10))
    def test_pdir_stays_perpendicular(self, seed):
        out = augment(sample("scissors", seed), seed)
        t = compute_pointwise_targets(out)
        cos = np.einsum("njc,njc->nj", t.pdir, t.dir)
        assert np.max(np.abs(np.degrees(np.arccos(np.clip(cos, -1, 1))) - 90)) < 1e-9

    def test_draw_ranges(self, rng):
        cfg = AugmentConfig()
        for _ in range(100):
            rot, trans, sc = cfg.draw(rng)
            assert np.all(np.abs(rot) <= math.pi) and np.all(np.abs(trans) <= 1) and 0.8 <= sc <= 1.2

    @pytest.mark.parametrize("seed", range(5))
    def test_target_equivariance(self, seed):
        rec = sample("eyeglasses", seed)
        r = np.random.default_rng(seed)
        rot, trans, sc = r.uniform(-3, 3, 3), r.uniform(-1, 1, 3), r.uniform(0.8, 1.2)
        out = augment(rec, 0, rotation=rot, translation=trans, scale=sc)
        R = np.linalg.lstsq(rec.points - rec.points.mean(0), (out.points - out.points.mean(0)) / sc,
                            rcond=None)[0].T
        a, b = compute_pointwise_targets(rec), compute_pointwise_targets(out)
        np.testing.assert_allclose(b.dist, sc * a.dist, atol=1e-9)
        np.testing.assert_allclose(b.dir, a.dir @ R.T, atol=1e-9)
        np.testing.assert_allclose(b.pdir, a.pdir @ R.T, atol=1e-9)
        np.testing.assert_array_equal(b.state, a.state)

    def test_provenance(self):
        out = augment(sample(), 3)
        assert set(out.provenance["augment"]) == {"rotation", "translation", "scale"}


def scalar_targets(rec):
    """Straight-line loop over points, written independently of the vectorized path."""
    rows = []
    for p in rec.points:
        per_joint = []
        for j in rec.joints:
            u = [float(c) for c in j.direction]
            w = [float(p[i] - j.pivot[i]) for i in range(3)]
            t = sum(w[i] * u[i] for i in range(3))
            off = [j.pivot[i] + t * u[i] - p[i] for i in range(3)]
            d = math.sqrt(sum(c * c for c in off))
            per_joint.append((u, d, [c / d for c in off], j.state))
        rows.append(per_joint)
    return rows


class TestTargets:
    @pytest.mark.parametrize("name", ["laptop", "eyeglasses"])
    def test_reconstruction(self, name):
        rec = augment(sample(name, 3), 3)
        t = compute_pointwise_targets(rec)
        for k, j in enumerate(rec.joints):
            v = t.valid[:, k]
            assert v.all()
            recon = rec.points + t.dist[:, k, None] * t.pdir[:, k]
            assert np.max(point_to_line_distance(recon[v], j.pivot, j.direction)) < 1e-9

    def test_scalar_oracle(self):
        rec = augment(sample("scissors", 8, n=128), 8)
        t = compute_pointwise_targets(rec)
        for i, per_joint in enumerate(scalar_targets(rec)):
            for k, (u, d, pdir, s) in enumerate(per_joint):
                assert np.max(np.abs(t.dir[i, k] - u)) < 1e-10
                assert abs(t.dist[i, k] - d) < 1e-10
                assert np.max(np.abs(t.pdir[i, k] - pdir)) < 1e-10
                assert t.state[i, k] == s

    def test_on_axis_point(self):
        rec = sample()
        j = rec.joints[0]
        rec.points[0] = j.pivot + 0.3 * j.direction
        t = compute_pointwise_targets(rec)
        assert not t.valid[0, 0] and t.dist[0, 0] == 0
        assert abs(t.pdir[0, 0] @ j.direction) < 1e-12 and abs(np.linalg.norm(t.pdir[0, 0]) - 1) < 1e-12
        assert t.valid[1:, 0].all()

    def test_inactive_channels_zero(self):
        t = compute_pointwise_targets(sample(), n_joints=3)
        assert t.active.tolist() == [True, False, False]
        for arr in (t.dir, t.dist, t.pdir, t.state):
            assert not np.any(arr[:, 1:])
        assert not t.valid[:, 1:].any()


class TestFiles:
    def test_round_trip(self, tmp_path):
        rec = augment(sample("eyeglasses", 1), 1)
        t = compute_pointwise_targets(rec)
        path = tmp_path / "s.cpts"
        write_sample(path, rec, t)
        back, bt = read_sample(path)
        f32 = lambda x: np.asarray(x, np.float32).astype(np.float64)
        np.testing.assert_array_equal(back.points, f32(rec.points))
        np.testing.assert_array_equal(back.labels, rec.labels)
        for a, b in zip(back.joints, rec.joints):
            np.testing.assert_array_equal(a.direction, f32(b.direction))
            assert a.state == f32(b.state)
        np.testing.assert_array_equal(bt.dist, f32(t.dist))
        np.testing.assert_array_equal(bt.valid, t.valid)
        raw = path.read_bytes()
        assert raw[:4] == b"CPTS"
        n, nl, nj = 512, 3, 2
        expected = 14 + n * 12 + n + nj * 28 + nj * n * 32 + n * nj
        assert len(raw) == expected

    def test_bad_magic(self, tmp_path):
        (tmp_path / "x.cpts").write_bytes(b"XXXX" + bytes(20))
        with pytest.raises(SampleFormatError):
            read_sample(tmp_path / "x.cpts")

    def test_truncated(self, tmp_path):
        path = tmp_path / "s.cpts"
        write_sample(path, sample())
        path.write_bytes(path.read_bytes()[:-10])
        with pytest.raises(SampleFormatError):
            read_sample(path)


class TestDataset:
    def test_split_counts(self):
        assert split_counts(100) == {"train": 70, "val": 20, "test": 10}
        assert sum(split_counts(37).values()) == 37

    def test_generate(self, tmp_path):
        m = generate_dataset("laptop", 20, tmp_path / "d", seed=4, n=128)
        assert {k: len(v) for k, v in m["splits"].items()} == {"train": 14, "val": 4, "test": 2}
        inst = [set(m["instances"][s]) for s in ("train", "val", "test")]
        assert not (inst[0] & inst[1] or inst[0] & inst[2] or inst[1] & inst[2])
        on_disk = read_manifest(tmp_path / "d" / "manifest.json")
        assert on_disk["category"] == "laptop" and on_disk["generator_version"]
        for s in on_disk["splits"].values():
            for f in s:
                assert os.path.exists(tmp_path / "d" / f)
        split = load_split(tmp_path / "d", "train")
        assert split.points.shape == (14, 128, 3) and split.active.all()

    def test_views_per_instance_disjoint(self, tmp_path):
        m = generate_dataset("oven", 30, tmp_path, seed=1, n=96, views_per_instance=3)
        seen = [set(v) for v in m["instances"].values()]
        assert sum(len(s) for s in seen) == len(set().union(*seen))

    def test_byte_identical(self, tmp_path):
        def digest(root):
            h = hashlib.sha256()
            for dirpath, _, files in sorted(os.walk(root)):
                for f in sorted(files):
                    h.update(f.encode())
                    h.update(open(os.path.join(dirpath, f), "rb").read())
            return h.hexdigest()
        generate_dataset("eyeglasses", 10, tmp_path / "a", seed=7, n=96)
        generate_dataset("eyeglasses", 10, tmp_path / "b", seed=7, n=96)
        generate_dataset("eyeglasses", 10, tmp_path / "c", seed=8, n=96)
        assert digest(tmp_path / "a") == digest(tmp_path / "b") != digest(tmp_path / "c")

    def test_too_few(self, tmp_path):
        with pytest.raises(ValueError):
            generate_dataset("laptop", 5, tmp_path)
