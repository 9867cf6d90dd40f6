"""Reversible steganography guided by Monte Carlo dropout uncertainty."""

from .bayes import (
    PosteriorSamples,
    UncertaintyMap,
    aleatoric,
    embedding_order,
    epistemic,
    hybrid,
    mc_sample,
    predicted_intensity,
    uncertainty_map,
)
from .codec import (
    PayloadFrame,
    build_frame,
    demodulate_residual,
    modulate_residual,
    parse_frame,
    postprocess_range,
    preprocess_range,
)
from .exceptions import *  # noqa: F401,F403
from .grid import (
    Partition,
    PixelGrid,
    chequerboard_partition,
    context_features,
    context_window,
    load_pgm,
    read_pgm,
    save_pgm,
    write_pgm,
)
from .metrics import psnr, ssim
from .patches import ContextPatches, extract_patches
from .pipeline import (
    BayesianStego,
    StegoKey,
    capacity_estimate,
    embed,
    extract,
)
from .predictor import (
    DropoutMask,
    DualHeadedModel,
    DualHeadRegressor,
    TrainConfig,
    forward,
    init_model,
    load_model,
    loss,
    loss_gradients,
    model_hash,
    save_model,
    train,
)

__version__ = "0.1.0"
