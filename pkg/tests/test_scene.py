"""Procedural scene, oracle renderer, stylizer, pose sampling, datasets."""

import dataclasses

import numpy as np
import pytest

from nerfreg.camera import Camera
from nerfreg.field import histogram_features
from nerfreg.scene import (SCALE_MM_PER_UNIT, PoseSampler, StyleImage,
                           build_style_library, load_dataset, make_datasets,
                           make_scene, oracle_render, render_dataset,
                           sample_pose, sample_poses, scene_albedo,
                           scene_density, stylize_scene, test_sampler,
                           train_sampler)
from nerfreg.se3 import look_at

SMALL_CAM = Camera(40.0, 40.0, 16.0, 16.0, 32, 32)


@pytest.fixture(scope="module")
def scene():
    return make_scene(seed=0)


def shell_samples(spec, n, seed):
    """Independent sampler over the shell band (reimplemented on purpose)."""
    rng = np.random.default_rng(seed)
    cos_min = spec.rim_z / spec.radius
    c = rng.uniform(cos_min, 1.0, n)
    az = rng.uniform(0.0, 2 * np.pi, n)
    s = np.sqrt(1.0 - c * c)
    d = np.column_stack([s * np.cos(az), s * np.sin(az), c])
    r = rng.uniform(spec.radius - spec.thickness / 2,
                    spec.radius + spec.thickness / 2, n)
    return spec.center + d * r[:, None]


# -- density ----------------------------------------------------------------------


def test_density_zero_at_center(scene):
    assert scene_density(scene, scene.center[None, :])[0] == 0.0


def test_density_plateau_on_mid_surface(scene):
    top = scene.center + scene.radius * np.array([0.0, 0.0, 1.0])
    assert scene_density(scene, top[None, :])[0] == scene.sigma_max


def test_density_smoothstep_half_way(scene):
    # u = 0.5 inside the ramp: sigma = sigma_max * 0.5^2 * (3 - 1) = sigma_max/2
    off = scene.thickness / 2 - scene.thickness / 8
    pt = scene.center + (scene.radius + off) * np.array([0.0, 0.0, 1.0])
    assert scene_density(scene, pt[None, :])[0] \
        == pytest.approx(scene.sigma_max / 2, rel=1e-12)


def test_density_zero_below_rim(scene):
    theta = np.deg2rad(-10.0)  # below the rim cutoff plane
    pt = scene.center + scene.radius * np.array(
        [np.cos(theta), 0.0, np.sin(theta)])
    assert pt[2] - scene.center[2] < scene.rim_z
    assert scene_density(scene, pt[None, :])[0] == 0.0


def test_density_zero_far_away(scene):
    pts = np.array([[0.06, 0.06, 0.9], [0.5, 0.5, 0.94]])
    np.testing.assert_array_equal(scene_density(scene, pts), 0.0)


def test_density_shell_band_is_dense(scene):
    sig = scene_density(scene, shell_samples(scene, 2000, 0))
    assert (sig > 0).mean() > 0.95  # most of the band is inside the ramp


# -- albedo -----------------------------------------------------------------------


def test_vessel_color_exact(scene):
    pt = scene.vessel_points[0, 7]
    np.testing.assert_array_equal(scene_albedo(scene, pt[None, :])[0],
                                  scene.vessel_colors[0])


def test_tissue_albedo_is_noise_lerp(scene):
    # far from every vessel the albedo must lie between the palette endpoints
    pts = shell_samples(scene, 500, 1)
    d = np.linalg.norm(pts[:, None, None, :] - scene.vessel_points[None], axis=3)
    clear = d.min(axis=(1, 2)) > scene.vessel_radii.max() + 0.03
    alb = scene_albedo(scene, pts[clear])
    lo = np.minimum(scene.color_a, scene.color_b)
    hi = np.maximum(scene.color_a, scene.color_b)
    assert np.all(alb >= lo - 1e-12) and np.all(alb <= hi + 1e-12)


def test_scene_is_deterministic():
    a, b = make_scene(seed=3), make_scene(seed=3)
    np.testing.assert_array_equal(a.vessel_points, b.vessel_points)
    np.testing.assert_array_equal(a.noise_coarse, b.noise_coarse)
    c = make_scene(seed=4)
    assert not np.array_equal(a.vessel_points, c.vessel_points)


def test_scene_validation(scene):
    with pytest.raises(ValueError, match="sub-cube"):
        dataclasses.replace(scene, radius=0.6)
    with pytest.raises(ValueError):
        dataclasses.replace(scene, sigma_max=-1.0)
    with pytest.raises(ValueError, match="albedo_lut"):
        dataclasses.replace(scene, albedo_lut=np.zeros((3, 16)))


# -- oracle renderer ----------------------------------------------------------------


def view_pose():
    return look_at([0.5 + 0.55, 0.5, 0.85], [0.5, 0.5, 0.44])


def test_oracle_empty_scene_is_white(scene):
    empty = dataclasses.replace(scene, sigma_max=0.0)
    img = oracle_render(empty, SMALL_CAM, view_pose())
    np.testing.assert_array_equal(img, np.ones((32, 32, 3)))


def test_oracle_renders_the_shell(scene):
    img = oracle_render(scene, SMALL_CAM, view_pose())
    assert img.shape == (32, 32, 3)
    assert img.min() >= 0.0 and img.max() <= 1.0
    assert (img < 0.99).mean() > 0.2  # a solid chunk of non-background pixels


def test_oracle_step_refinement_converges(scene):
    a = oracle_render(scene, SMALL_CAM, view_pose(), n_steps=512)
    b = oracle_render(scene, SMALL_CAM, view_pose(), n_steps=1024)
    assert np.abs(a - b).mean() < 1e-3


def test_oracle_rejects_coarse_stepping(scene):
    with pytest.raises(ValueError, match="512"):
        oracle_render(scene, SMALL_CAM, view_pose(), n_steps=64)


def test_oracle_is_deterministic(scene):
    a = oracle_render(scene, SMALL_CAM, view_pose())
    b = oracle_render(scene, SMALL_CAM, view_pose())
    np.testing.assert_array_equal(a, b)


# -- stylizer ---------------------------------------------------------------------


def test_stylize_identity_distribution_is_near_fixed_point(scene):
    # a style image drawn from the scene's own albedo has ~identity transfer
    style = scene_albedo(scene, shell_samples(scene, 16384, 2)).reshape(128, 128, 3)
    styled = stylize_scene(scene, style, "ident")
    probe = shell_samples(scene, 4000, 3)
    base_alb = scene_albedo(scene, probe)
    new_alb = scene_albedo(styled, probe)
    assert np.abs(base_alb - new_alb).mean() < 1.0 / 256.0


def test_stylize_constant_style_maps_everything_to_it(scene):
    red = np.broadcast_to(np.array([0.8, 0.1, 0.1]), (16, 16, 3)).copy()
    styled = stylize_scene(scene, red, "red")
    alb = scene_albedo(styled, shell_samples(scene, 500, 4))
    np.testing.assert_array_equal(alb, np.broadcast_to([0.8, 0.1, 0.1], (500, 3)))


def test_stylize_matches_target_distribution(scene):
    style = build_style_library()[3]
    styled = stylize_scene(scene, style.image, style.style_id)
    alb = scene_albedo(styled, shell_samples(scene, 20000, 5))
    q = np.linspace(0.0, 1.0, 513)[1:-1]
    for ch in range(3):
        got = np.quantile(alb[:, ch], q)
        want = np.quantile(style.image[:, :, ch].ravel(), q)
        w1 = np.abs(got - want).mean()  # Wasserstein-1 via quantile functions
        assert w1 < 2.0 / 16.0


def test_stylize_always_derives_from_base_albedo(scene):
    lib = build_style_library()
    once = stylize_scene(scene, lib[1].image, lib[1].style_id)
    twice = stylize_scene(once, lib[2].image, lib[2].style_id)
    direct = stylize_scene(scene, lib[2].image, lib[2].style_id)
    np.testing.assert_array_equal(twice.albedo_lut, direct.albedo_lut)


def test_stylize_lut_is_monotone(scene):
    style = build_style_library()[0]
    styled = stylize_scene(scene, style.image, style.style_id)
    assert np.all(np.diff(styled.albedo_lut, axis=1) >= -1e-12)


def test_stylize_rejects_bad_style_images(scene):
    with pytest.raises(ValueError):
        stylize_scene(scene, np.zeros((4, 4)), "x")
    with pytest.raises(ValueError):
        stylize_scene(scene, np.full((4, 4, 3), 2.0), "x")


# -- style library -----------------------------------------------------------------


def test_style_library_shape_and_determinism():
    lib = build_style_library()
    assert len(lib) == 15
    assert [s.style_id for s in lib] == [f"style{i:02d}" for i in range(15)]
    again = build_style_library()
    for a, b in zip(lib, again):
        np.testing.assert_array_equal(a.image, b.image)
    assert not np.array_equal(lib[0].image,
                              build_style_library(seed=9)[0].image)


def test_style_library_pairwise_separation():
    lib = build_style_library()
    means = np.array([s.image.mean(axis=(0, 1)) for s in lib])
    for i in range(len(lib)):
        for j in range(i + 1, len(lib)):
            assert np.linalg.norm(means[i] - means[j]) > 0.05


def test_style_library_top_intensity_bin_empty():
    for style in build_style_library():
        assert style.image.max() <= 0.88 + 1e-12
        hist = histogram_features(style.image, 16).bins.reshape(3, 16)
        np.testing.assert_array_equal(hist[:, 15], 0.0)


# -- pose sampling -----------------------------------------------------------------


def test_sample_pose_predicate_holds_for_1000_draws():
    sampler = train_sampler()
    rng = sampler.rng()
    anchor = np.asarray(sampler.lookat)
    lo_r, hi_r = sampler.radius_range
    lo_e, hi_e = sampler.elev_range_deg
    cam = sampler.camera
    for _ in range(1000):
        pose = sample_pose(sampler, rng)
        off = pose.translation - anchor
        r = np.linalg.norm(off)
        assert lo_r - 1e-9 <= r <= hi_r + 1e-9
        elev = np.degrees(np.arcsin(off[2] / r))
        assert lo_e - 1e-9 <= elev <= hi_e + 1e-9
        # the anchor projects into the central half of the image
        q = pose.rotation.T @ (anchor - pose.translation)
        assert q[2] < 0
        u = cam.cx + cam.fx * q[0] / -q[2] - 0.5
        v = cam.cy - cam.fy * q[1] / -q[2] - 0.5
        assert 0.25 * cam.width <= u <= 0.75 * cam.width
        assert 0.25 * cam.height <= v <= 0.75 * cam.height


def test_test_band_reaches_above_training_band():
    # test poses overlap the training band for fidelity but extend past its
    # ceiling, so the upper elevations are genuinely novel
    tr, te = train_sampler(), test_sampler()
    assert tr.elev_range_deg[0] < te.elev_range_deg[0]   # overlap below
    assert tr.elev_range_deg[1] < te.elev_range_deg[1]   # novel band on top
    assert te.elev_range_deg[0] < tr.elev_range_deg[1]
    anchor = np.asarray(tr.lookat)

    def elevs(sampler):
        return [np.degrees(np.arcsin((p.translation - anchor)[2]
                                     / np.linalg.norm(p.translation - anchor)))
                for p in sample_poses(sampler, 40)]

    assert max(elevs(te)) > tr.elev_range_deg[1]
    assert min(elevs(te)) >= te.elev_range_deg[0] - 1e-9


def test_sample_poses_deterministic_per_seed():
    a = sample_poses(PoseSampler(seed=5), 3)
    b = sample_poses(PoseSampler(seed=5), 3)
    for pa, pb in zip(a, b):
        np.testing.assert_array_equal(pa.matrix(), pb.matrix())
    c = sample_poses(PoseSampler(seed=6), 3)
    assert not np.array_equal(a[0].matrix(), c[0].matrix())


def test_sampler_validation():
    with pytest.raises(ValueError):
        PoseSampler(radius_range=(0.5, 0.4))
    with pytest.raises(ValueError):
        PoseSampler(elev_range_deg=(10.0, 95.0))


# -- datasets ---------------------------------------------------------------------


def test_dataset_round_trip(tmp_path, scene):
    poses = sample_poses(train_sampler(SMALL_CAM), 2)
    ds = render_dataset(scene, SMALL_CAM, poses, tmp_path / "d", "base",
                        "train", seed=0)
    assert len(ds) == 2
    assert ds.scale_mm_per_unit == SCALE_MM_PER_UNIT
    back = load_dataset(tmp_path / "d")
    assert back.camera == ds.camera
    assert (back.style_id, back.split, back.seed) == ("base", "train", 0)
    assert (back.scene_seed, back.n_vessels) == (scene.seed, 6)
    for pa, pb in zip(ds.poses, back.poses):
        assert np.abs(pa.matrix() - pb.matrix()).max() <= 1e-9
    for i in range(2):
        np.testing.assert_array_equal(back.image(i), ds.image(i))


def test_dataset_images_reproduce_bit_exact(tmp_path, scene):
    poses = sample_poses(train_sampler(SMALL_CAM), 1)
    render_dataset(scene, SMALL_CAM, poses, tmp_path / "a", "base", "train", 0)
    render_dataset(scene, SMALL_CAM, poses, tmp_path / "b", "base", "train", 0)
    a = (tmp_path / "a" / "view000.ppm").read_bytes()
    b = (tmp_path / "b" / "view000.ppm").read_bytes()
    assert a == b


def test_load_dataset_missing_manifest(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_dataset(tmp_path / "nope")


def test_make_datasets_per_style(tmp_path, scene):
    styles = build_style_library()[:2]
    sets = make_datasets(scene, styles, SMALL_CAM, 1, train_sampler(SMALL_CAM),
                         tmp_path)
    assert [d.style_id for d in sets] == ["style00", "style01"]
    # per-style pose streams are decorrelated but reproducible
    assert not np.array_equal(sets[0].poses[0].matrix(),
                              sets[1].poses[0].matrix())
    again = make_datasets(scene, styles[:1], SMALL_CAM, 1,
                          train_sampler(SMALL_CAM), tmp_path / "again")
    np.testing.assert_array_equal(sets[0].poses[0].matrix(),
                                  again[0].poses[0].matrix())
    back = load_dataset(tmp_path / "style00")
    assert back.image(0).shape == (32, 32, 3)
