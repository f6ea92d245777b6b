"""pwzs: zero-shot denoising for low-angle plane-wave compounded ultrasound."""

from .compounding import (
    AngleStack,
    BModeImage,
    SubsetPair,
    compound,
    full_bmode,
    log_compress,
    make_pair,
    parity_partition,
    select_angles,
)
from .network import (
    DenoiserParams,
    GradientAccumulator,
    NumericError,
    forward,
    forward_backward,
    gaussian3x3,
    image_gradient,
    init_params,
    l1_mean,
    leaky_relu,
    param_count,
    sgd_step,
)
from .formats import (
    load_params,
    read_f32,
    read_pgm,
    read_stack,
    save_params,
    write_f32,
    write_pgm,
    write_stack,
)
from .metrics import MetricsReport, RoiSpec, cnr_db, evaluate, gcnr, ks_two_sample
from .simulator import (
    NoiseModel,
    PhantomSpec,
    make_phantom,
    reference_images,
    simulate_stack,
)
from .training import (
    LossTrace,
    TrainConfig,
    consistency_loss,
    denoise,
    residual_loss,
    total_loss,
    train_zero_shot,
)

__version__ = "0.1.0"
