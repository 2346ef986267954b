"""Appearance-conditioned neural-field pose registration on synthetic scenes.

Pipeline: a hash-grid radiance field with separate density and appearance
heads is trained on posed views (phase 1); a hypernetwork learns to emit the
entire appearance head from a target image's color histogram (phase 2);
camera poses are then recovered from single target images by Adam descent on
an SE(3) tangent against a photometric loss.  Everything runs on numpy with
hand-written gradients; an independent analytic oracle provides ground truth.
"""

from .camera import Camera, DEFAULT_CAMERA, camera_profile
from .encoding import DirEncodingSpec, HashGridSpec, encode_direction, encode_position
from .field import (FieldCheckpoint, FieldParams, FieldSpec, HypernetSpec,
                    eval_color, eval_density, histogram_features,
                    hypernet_forward, init_hypernet_params, load_checkpoint,
                    save_checkpoint)
from .fileio import (load_pose, read_kv_config, read_ppm, save_pose,
                     write_kv_config, write_ppm)
from .metrics import (AccuracyCurve, RegistrationResult, SummaryReport,
                      accuracy_curve, make_result, read_results, summarize,
                      write_curves, write_report, write_results, write_summary)
from .nn import AdamState, MlpSpec, adam_step, init_mlp_params, mlp_backward, mlp_forward
from .params import ParamVector, load_params, save_params
from .registration import (PoseEstimate, PoseEstimateConfig,
                           conditioned_appearance, estimate_pose,
                           pose_gradient, relative_l2_loss)
from .render import (RayBatch, RenderConfig, aabb_intersect, composite,
                     composite_backward, generate_rays, render_image,
                     render_rays, render_rays_backward, sample_t)
from .scene import (Dataset, PoseSampler, SceneSpec, StyleImage,
                    build_style_library, load_dataset, make_datasets,
                    make_scene, oracle_render, render_dataset, sample_pose,
                    sample_poses, scene_albedo, scene_density, stylize_scene,
                    test_sampler, train_sampler)
from .se3 import (Pose, look_at, perturb_pose, rotation_error_deg, se3_exp,
                  se3_log, so3_exp, so3_log, translation_error)
from .train import (StyleEntry, StyleSet, TrainConfig, photometric_loss, psnr,
                    train_phase1, train_phase2_hypernet)
from .experiment import ExperimentConfig, generate_workspace, run_experiment

__version__ = "0.1.0"
