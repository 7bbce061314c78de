"""Stochastic Gaussian-splatting radiance fields with differentiable
uncertainty, trained by sampling a low-rank parameter manifold and used to
plan next-best camera views and illumination conditions."""

from .adam import AdamState, adam_step
from .camera import Camera, Ray, RayBundle, camera_basis, generate_rays
from .generator import (
    GeneratorSample,
    ManifoldGenerator,
    covariance_rank_probe,
    init_generator,
    load_generator,
    materialize,
    sample,
    sample_backward,
    save_generator,
    volume_surrogate,
)
from .image import ImageBuffer, false_color, read_ppm, write_ppm
from .metrics import ause, psnr, ssim, ssim_value_and_grad
from .planning import (
    CandidatePool,
    UncertaintyEstimate,
    farthest_point_select,
    landscape_smoothness,
    optimize_next_view,
    render_uncertainty,
    select_next_view,
    uncertainty_landscape,
)
from .relight import (
    IlluminationCondition,
    dc_light,
    one_hot_light,
    optimize_next_illumination,
    select_next_illumination,
    shade,
    shade_backward,
)
from .renderer import (
    RenderGradients,
    RenderOutput,
    project_gaussian,
    render,
    render_backward,
)
from .scene import (
    GaussianPrimitive,
    ParamLayout,
    Scene,
    activate,
    activate_primitive,
    flatten,
    load_scene,
    save_scene,
    unflatten,
)
from .sobol import SobolStream, sobol_next, to_symmetric_cube
from .synthetic import (
    fibonacci_sphere_cameras,
    generate_scene,
    init_fit_scene,
    synthesize_dataset,
)
from .training import (
    TrainingConfig,
    TrainingSample,
    TrainingSet,
    TrainLog,
    make_trainer,
    photometric_loss,
    step_timing_report,
    train,
    train_step,
)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
