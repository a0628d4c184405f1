"""Flow matching denoiser: velocity network, training loop, Euler sampler."""
from .ablation import DOMAIN_ROWS, DomainAblation, ablation_domain
from .network import VelocityNet, VelocityNetConfig, frequency_module, sinusoidal_embedding
from .sampler import SamplerConfig, euler_sample, sample_images
from .train import (
    TrainConfig,
    TrainingDiverged,
    TrainResult,
    interpolate_path,
    load_checkpoint,
    save_checkpoint,
    train,
)

__all__ = [
    "DOMAIN_ROWS",
    "DomainAblation",
    "SamplerConfig",
    "TrainConfig",
    "TrainResult",
    "TrainingDiverged",
    "VelocityNet",
    "VelocityNetConfig",
    "ablation_domain",
    "euler_sample",
    "frequency_module",
    "interpolate_path",
    "load_checkpoint",
    "sample_images",
    "save_checkpoint",
    "sinusoidal_embedding",
    "train",
]
