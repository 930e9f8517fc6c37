"""Sparse structured-latent scene assembly via region-tiled masked rectified flow."""

from .errors import SceneLatError
from .flow import FlowConfig, forward_step, gaussian_tensor, masked_complete, oracle_field
from .latent import (
    DenseOccupancy,
    SceneState,
    StructuredLatent,
    canonicalize,
    from_dense,
    read_slat,
    to_dense,
    window,
    write_slat,
)
from .pipeline import PipelineConfig, run_pipeline
from .rng import NoiseStream

__version__ = "0.1.0"

__all__ = [
    "SceneLatError", "FlowConfig", "forward_step", "gaussian_tensor",
    "masked_complete", "oracle_field", "DenseOccupancy", "SceneState",
    "StructuredLatent", "canonicalize", "from_dense", "read_slat", "to_dense",
    "window", "write_slat", "PipelineConfig", "run_pipeline", "NoiseStream",
    "__version__",
]
