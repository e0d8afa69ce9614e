"""Embedding-space image protection against identity fine-tuning.

Images are float arrays of shape (H, W, 3) with values in [0, 1].
"""

from ._featshield import (
    Encoder,
    EncoderConfig,
    FeatshieldError,
    antithetical_target,
    apply_transform,
    cos_sim,
    linf_distance,
    load_image,
    losses,
    protect_image,
    psnr,
    quantize_8bit,
    save_image,
)

__all__ = [
    "Encoder",
    "EncoderConfig",
    "FeatshieldError",
    "antithetical_target",
    "apply_transform",
    "cos_sim",
    "linf_distance",
    "load_image",
    "losses",
    "protect_image",
    "psnr",
    "quantize_8bit",
    "save_image",
]
