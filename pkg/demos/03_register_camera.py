"""Recover a 6-DoF camera pose from a single image of the scene.

Starting from a deliberately wrong pose, Adam descends a photometric loss
through the trained field over the SE(3) tangent at the current estimate.
The loss is relative-L2, so bright and dark pixels pull with equal weight.
"""

import numpy as np

from nerfreg import (Pose, PoseEstimateConfig, estimate_pose,
                     rotation_error_deg, so3_exp, translation_error)

from _shared import SEED, ensure_field

EST_CFG = PoseEstimateConfig(iterations=300, rays_per_iteration=384,
                             n_samples=48, n_restarts=1, tol=0.0, seed=SEED)


def main():
    ckpt, datasets = ensure_field()
    test = datasets["test"]
    target, true_pose = test.image(0), test.poses[0]
    mm = test.scale_mm_per_unit

    # start exactly 4 degrees and 0.04 units away, about fixed axes
    axis = np.array([0.26, 0.72, -0.64])
    axis /= np.linalg.norm(axis)
    shift = np.array([-0.53, 0.62, 0.58])
    shift /= np.linalg.norm(shift)
    init = true_pose.compose(Pose(so3_exp(axis * np.radians(4.0)),
                                  0.04 * shift))
    print("initial guess off by "
          f"{rotation_error_deg(init, true_pose):.2f} deg / "
          f"{mm * translation_error(init, true_pose):.1f} mm")

    print(f"descending photometric loss for {EST_CFG.iterations} iterations "
          f"({EST_CFG.n_restarts} restart) ...")
    est = estimate_pose(ckpt, target, test.camera, init, EST_CFG,
                        conditioning="base")

    print(f"  loss {est.loss_trace[0]:.2e} -> {est.final_loss:.2e} "
          f"({est.iterations_used} iterations; "
          f"best descent: restart {est.restart_index})")
    print("recovered pose off by "
          f"{rotation_error_deg(est.pose, true_pose):.3f} deg / "
          f"{mm * translation_error(est.pose, true_pose):.2f} mm")
    print("the full protocol (50 targets, hypernet conditioning, baselines) "
          "runs via `nerfreg run-experiment`")


if __name__ == "__main__":
    main()
