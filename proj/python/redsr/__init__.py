"""Python bindings for the redsr degradation-aware super-resolution core.

Images are float64 numpy arrays in planar layout ``[channels, height, width]``
with values nominally in [0, 1]; batches add a leading dimension.
"""

from ._redsr import (
    ConfigError,
    DimensionError,
    FormatError,
    IoError,
    Model,
    NumericError,
    ParameterError,
    StateError,
    cluster_report,
    degrade,
    gen_dataset,
    load_checkpoint,
    loss_ed,
    loss_kl,
    loss_sr,
    make_kernel,
    modulation_coefficient,
    psnr,
    read_manifest,
    rdt_load,
    rdt_save,
    selftest,
    ssim,
    synthetic_texture,
    train,
)

__all__ = [
    "ConfigError",
    "DimensionError",
    "FormatError",
    "IoError",
    "Model",
    "NumericError",
    "ParameterError",
    "StateError",
    "cluster_report",
    "degrade",
    "gen_dataset",
    "load_checkpoint",
    "loss_ed",
    "loss_kl",
    "loss_sr",
    "make_kernel",
    "modulation_coefficient",
    "psnr",
    "read_manifest",
    "rdt_load",
    "rdt_save",
    "selftest",
    "ssim",
    "synthetic_texture",
    "train",
]
