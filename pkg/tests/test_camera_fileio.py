"""Camera ray geometry and the PPM / pose / config file formats."""

import numpy as np
import pytest

from nerfreg.camera import DEFAULT_CAMERA, Camera, camera_profile
from nerfreg.fileio import (load_pose, read_kv_config, read_ppm, save_pose,
                            write_kv_config, write_ppm)
from nerfreg.se3 import look_at


def test_pixel_direction_formula():
    cam = DEFAULT_CAMERA
    pix = np.array([[0, 0], [32, 32], [63, 17]])
    raw = np.stack([(pix[:, 0] + 0.5 - cam.cx) / cam.fx,
                    -(pix[:, 1] + 0.5 - cam.cy) / cam.fy,
                    -np.ones(3)], axis=1)
    expected = raw / np.linalg.norm(raw, axis=1, keepdims=True)
    np.testing.assert_allclose(cam.pixel_directions(pix), expected, rtol=1e-15)


def test_pixel_directions_are_unit_norm():
    cam = DEFAULT_CAMERA
    d = cam.pixel_directions(cam.all_pixels())
    np.testing.assert_allclose(np.linalg.norm(d, axis=1), 1.0, rtol=1e-12)
    assert np.all(d[:, 2] < 0)  # every ray leaves through -z


def test_all_pixels_row_major():
    cam = Camera(10.0, 10.0, 1.5, 1.0, 3, 2)
    expected = [[0, 0], [1, 0], [2, 0], [0, 1], [1, 1], [2, 1]]
    np.testing.assert_array_equal(cam.all_pixels(), expected)
    assert cam.n_pixels == 6


def test_pixel_directions_bounds_checked():
    cam = DEFAULT_CAMERA
    with pytest.raises(ValueError):
        cam.pixel_directions(np.array([[64, 0]]))
    with pytest.raises(ValueError):
        cam.pixel_directions(np.array([[0, -1]]))
    with pytest.raises(ValueError):
        cam.pixel_directions(np.zeros((2, 3)))


def test_camera_validation():
    with pytest.raises(ValueError):
        Camera(80.0, 80.0, 32.0, 32.0, 0, 64)
    with pytest.raises(ValueError):
        Camera(-1.0, 80.0, 32.0, 32.0, 64, 64)
    with pytest.raises(ValueError):
        Camera(80.0, 80.0, 64.0, 32.0, 64, 64)


def test_camera_profiles():
    assert camera_profile("64") == DEFAULT_CAMERA
    big = camera_profile("256")
    assert (big.width, big.height) == (256, 256)
    assert big.fx == DEFAULT_CAMERA.fx * 4
    # scaling preserves the field of view: tan(half-FOV) at the image edge
    assert ((big.width - big.cx) / big.fx
            == (DEFAULT_CAMERA.width - DEFAULT_CAMERA.cx) / DEFAULT_CAMERA.fx)
    with pytest.raises(ValueError):
        camera_profile("128")


# -- PPM ----------------------------------------------------------------------


def test_ppm_uint8_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    img = rng.integers(0, 256, (5, 4, 3), dtype=np.uint8)
    path = tmp_path / "img.ppm"
    write_ppm(path, img)
    back = read_ppm(path)
    np.testing.assert_array_equal(np.rint(back * 255).astype(np.uint8), img)


def test_ppm_float_quantization(tmp_path):
    img = np.array([[[0.0, 0.5, 1.0]]])
    path = tmp_path / "img.ppm"
    write_ppm(path, img)
    np.testing.assert_allclose(read_ppm(path) * 255, [[[0, 128, 255]]])
    # out-of-range floats clip instead of wrapping
    write_ppm(path, np.array([[[-0.5, 1.5, 0.25]]]))
    np.testing.assert_allclose(read_ppm(path) * 255, [[[0, 255, 64]]])


def test_ppm_header_comments(tmp_path):
    pixels = bytes(range(2 * 1 * 3))
    path = tmp_path / "c.ppm"
    path.write_bytes(b"P6\n# made by hand\n2 1\n# extra note\n255\n" + pixels)
    img = read_ppm(path)
    assert img.shape == (1, 2, 3)
    np.testing.assert_array_equal((img * 255).astype(np.uint8).tobytes(), pixels)


def test_ppm_malformed_inputs(tmp_path):
    path = tmp_path / "bad.ppm"
    path.write_bytes(b"P5\n1 1\n255\nxyz")
    with pytest.raises(ValueError, match="P6"):
        read_ppm(path)
    path.write_bytes(b"P6\n2 2\n255\nshort")
    with pytest.raises(ValueError, match="truncated"):
        read_ppm(path)
    path.write_bytes(b"P6\n1 1\n65535\n" + bytes(6))
    with pytest.raises(ValueError, match="maxval"):
        read_ppm(path)
    with pytest.raises(ValueError):
        write_ppm(path, np.zeros((4, 4)))


# -- pose files ---------------------------------------------------------------


def test_pose_file_round_trip_is_exact(tmp_path):
    pose = look_at([1.2345678901234567, -0.25, 0.9], [0.5, 0.5, 0.4])
    path = tmp_path / "pose.txt"
    save_pose(path, pose)
    back = load_pose(path)
    np.testing.assert_array_equal(back.matrix(), pose.matrix())


def test_pose_file_rejects_wrong_count(tmp_path):
    path = tmp_path / "pose.txt"
    path.write_text("1 0 0 0 1 0\n")
    with pytest.raises(ValueError, match="16"):
        load_pose(path)


# -- key=value configs --------------------------------------------------------


def test_kv_config_round_trip(tmp_path):
    path = tmp_path / "run.kv"
    kv = {"seed": "7", "mode": "cross", "phase1_iterations": "5000"}
    write_kv_config(path, kv)
    assert read_kv_config(path) == kv


def test_kv_config_comments_and_overrides(tmp_path):
    path = tmp_path / "run.kv"
    path.write_text("# header\nseed = 1  # inline\n\nseed=2\nname=a=b\n")
    cfg = read_kv_config(path)
    assert cfg == {"seed": "2", "name": "a=b"}


def test_kv_config_rejects_bare_tokens(tmp_path):
    path = tmp_path / "run.kv"
    path.write_text("seed\n")
    with pytest.raises(ValueError, match="key=value"):
        read_kv_config(path)
