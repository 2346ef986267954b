"""Retarget the field's colors to a new palette from one image histogram.

Phase 2 freezes the geometry (hash table + density head) and trains a
hypernetwork that maps a target image's RGB histogram to the entire color
head weight vector.  Conditioning on a palette the hypernetwork never saw
still steers the render toward it, because nearby training palettes pin down
how histogram mass maps to head weights.
"""

import zlib

import numpy as np

from nerfreg import (FieldCheckpoint, HypernetSpec, RenderConfig, StyleEntry,
                     StyleSet, TrainConfig, build_style_library,
                     conditioned_appearance, render_dataset, render_image,
                     sample_poses, save_checkpoint, stylize_scene,
                     test_sampler, train_phase2_hypernet, train_sampler,
                     load_dataset, write_ppm)

from _shared import CAMERA, OUT, SEED, demo_scene, ensure_field

N_STYLES = 4
HELD_OUT = "style03"
PHASE2_CFG = TrainConfig(phase2_iterations=600, rays_per_batch=256,
                         n_samples=48, seed=SEED)


def style_datasets(scene, styles):
    """Three oracle views per non-held-out style, for hypernet training."""
    entries = []
    for st in styles:
        if st.style_id == HELD_OUT:
            continue
        root = OUT / "data" / "hyper" / st.style_id
        if not (root / "manifest.json").exists():
            rng = np.random.default_rng([SEED, zlib.crc32(st.style_id.encode())])
            poses = sample_poses(train_sampler(CAMERA), 3, rng)
            render_dataset(stylize_scene(scene, st.image, st.style_id),
                           CAMERA, poses, root, st.style_id, "train", SEED,
                           n_steps=512)
        entries.append(StyleEntry(st.style_id, st.image, load_dataset(root)))
    return StyleSet(entries, (HELD_OUT,))


def main():
    ckpt, datasets = ensure_field()
    scene = demo_scene()
    styles = build_style_library(SEED, N_STYLES)
    style_set = style_datasets(scene, styles)
    geometry_before = ckpt.params.theta_fd.checksum()

    print(f"training hypernetwork on {len(style_set.entries)} palettes, "
          f"holding out {HELD_OUT} ...")
    hspec = HypernetSpec.for_field(ckpt.spec)
    theta_h, _ = train_phase2_hypernet(style_set, ckpt.spec, ckpt.params,
                                       hspec, PHASE2_CFG,
                                       log_path=OUT / "phase2.csv")
    full = FieldCheckpoint(ckpt.spec, ckpt.params, hspec, theta_h)
    save_checkpoint(full, OUT / "full.ckpt")
    assert ckpt.params.theta_fd.checksum() == geometry_before
    print("geometry checksum unchanged by phase 2:", geometry_before[:16])

    # the target: an unseen palette photographed from an unseen pose
    held = next(st for st in styles if st.style_id == HELD_OUT)
    pose = sample_poses(test_sampler(CAMERA), 1,
                        np.random.default_rng([SEED, 0xA2]))[0]
    target_root = OUT / "data" / f"target_{HELD_OUT}"
    if not (target_root / "manifest.json").exists():
        render_dataset(stylize_scene(scene, held.image, held.style_id),
                       CAMERA, [pose], target_root, held.style_id, "test",
                       SEED, n_steps=512)
    target = load_dataset(target_root).image(0)

    rcfg = RenderConfig(n_samples=48, stratified=False)
    base = render_image(full.spec, full.params.theta_fd, full.params.theta_fc,
                        CAMERA, pose, rcfg)
    adapted_fc = conditioned_appearance(full, target, conditioning="hypernet")
    adapted = render_image(full.spec, full.params.theta_fd, adapted_fc,
                           CAMERA, pose, rcfg)

    for name, img in [("target", target), ("base render", base),
                      ("adapted render", adapted)]:
        r, g, b = img.reshape(-1, 3).mean(axis=0)
        print(f"  {name:15s} channel means  r {r:.3f}  g {g:.3f}  b {b:.3f}")
    err_base = float(np.mean(np.abs(base - target)))
    err_adapted = float(np.mean(np.abs(adapted - target)))
    print(f"mean |render - target|: base {err_base:.4f} -> "
          f"adapted {err_adapted:.4f}")
    write_ppm(OUT / "adapt_target.ppm", target)
    write_ppm(OUT / "adapt_base.ppm", base)
    write_ppm(OUT / "adapt_conditioned.ppm", adapted)
    print(f"renders written to {OUT}; full checkpoint at {OUT / 'full.ckpt'}")


if __name__ == "__main__":
    main()
