"""Range-view LiDAR toolkit: exact projection geometry, synthetic scene
and artifact generation, robust radial rectification, a deterministic
denoising-sampler harness, and distributional metrics."""

from .diffusion import (FixedConvPredictor, LipschitzReport, NoiseSchedule,
                        OraclePredictor, ScaledIdentityPredictor,
                        ZeroPredictor, contrast_3d_sharpness, ddim_sample,
                        ddim_step, forward_sample, invert_forward,
                        lipschitz_bound, make_schedule, spatial_grad,
                        verify_theorem1)
from .features import FeatureGrid, extract_features
from .geometry import (EPS_DEPTH, IndexMap, OffsetField, PointCloud,
                       ProjectionConfig, RangeImage, apply_offsets,
                       radial_project, rrvp, rvp, rvp_angles)
from .losses import (WelschParams, mse_loss, mse_loss_grad, rrn_loss,
                     rrn_loss_grad, welsch, welsch_grad)
from .metrics import (BevHistogram, GradHistogram, bev_histogram, grad_jsd,
                      grad_histogram, jsd, jsd_sets, mmd)
from .rectifier import (LinearModel, Mlp1, RangeRectifier, Regressor,
                        TrainConfig, TrainReport, TrainingDiverged,
                        evaluate_rmse_by_label, load_regressor, rectify,
                        save_regressor, train_regressor)
from .synth import (BiasSpec, BleedSpec, Box, CorruptionReport,
                    CorruptionSpec, Cylinder, RoundSpec, SceneSpec, WavySpec,
                    corrupt_image, inject_bias_chunks, inject_depth_bleed,
                    inject_round_corners, inject_wavy, make_pair,
                    random_scene, smooth_image, synth_scene)

__version__ = "0.1.0"
