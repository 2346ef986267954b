"""File formats: binary PPM images, plain-text pose files, key=value configs.

PPM is P6 with maxval 255; float images quantize by round(255*c).  A pose
file is 16 whitespace-separated reals forming a row-major 4x4 camera-to-world
matrix.  Config files are flat key=value lines with # comments.
"""

from __future__ import annotations

import numpy as np

from .se3 import Pose


def write_ppm(path, image: np.ndarray) -> None:
    img = np.asarray(image)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError(f"expected (h, w, 3) image, got {img.shape}")
    if img.dtype != np.uint8:
        img = np.clip(np.rint(img * 255.0), 0, 255).astype(np.uint8)
    h, w = img.shape[:2]
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(img.tobytes())


def read_ppm(path) -> np.ndarray:
    """Read a P6 PPM into a float image in [0, 1]."""
    with open(path, "rb") as fh:
        data = fh.read()
    tokens = []
    pos = 0
    while len(tokens) < 4:
        if pos >= len(data):
            raise ValueError(f"{path}: truncated PPM header")
        ch = data[pos : pos + 1]
        if ch == b"#":
            pos = data.index(b"\n", pos) + 1
        elif ch.isspace():
            pos += 1
        else:
            end = pos
            while end < len(data) and not data[end : end + 1].isspace():
                end += 1
            tokens.append(data[pos:end])
            pos = end
    if tokens[0] != b"P6":
        raise ValueError(f"{path}: not a binary PPM (P6)")
    w, h, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    if maxval != 255:
        raise ValueError(f"{path}: only maxval 255 supported")
    pos += 1  # single whitespace byte after maxval
    raw = data[pos : pos + w * h * 3]
    if len(raw) != w * h * 3:
        raise ValueError(f"{path}: truncated pixel data")
    return np.frombuffer(raw, dtype=np.uint8).reshape(h, w, 3) / 255.0


def save_pose(path, pose: Pose) -> None:
    m = pose.matrix()
    lines = [" ".join(repr(float(v)) for v in row) for row in m]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_pose(path) -> Pose:
    with open(path) as fh:
        vals = [float(tok) for tok in fh.read().split()]
    if len(vals) != 16:
        raise ValueError(f"{path}: pose file must hold 16 reals, got {len(vals)}")
    return Pose.from_matrix(np.array(vals).reshape(4, 4))


def read_kv_config(path) -> dict:
    """Flat key=value file; later keys win; # starts a comment."""
    out = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key=value")
            key, val = line.split("=", 1)
            out[key.strip()] = val.strip()
    return out


def write_kv_config(path, kv: dict) -> None:
    with open(path, "w") as fh:
        for key, val in kv.items():
            fh.write(f"{key}={val}\n")
