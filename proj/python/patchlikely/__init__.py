"""Normalizing-flow patch likelihoods for explaining and generating visual illusions."""
from ._core import (
    Model,
    PatchlikelyError,
    explain,
    generate,
    gradcheck,
    heatmap,
    latent_step,
    latent_step_array,
    load_checkpoint,
    load_image,
    minmax,
    render_template,
    save_image,
    train,
)

__all__ = [
    "Model",
    "PatchlikelyError",
    "explain",
    "generate",
    "gradcheck",
    "heatmap",
    "latent_step",
    "latent_step_array",
    "load_checkpoint",
    "load_image",
    "minmax",
    "render_template",
    "save_image",
    "train",
]
