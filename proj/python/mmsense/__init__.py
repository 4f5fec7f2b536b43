"""Synthetic FMCW radar simulation, range-Doppler processing and the TransDope
metal-detection classifier."""

from ._core import (
    Dataset,
    Error,
    Model,
    ModelConfig,
    RadarConfig,
    bench,
    decode_burst_frame,
    encode_burst_frame,
    generate_dataset,
    physical_to_bins,
    point_burst,
    presets,
    process_burst,
    synthesize_burst,
)

__all__ = [
    "Dataset",
    "Error",
    "Model",
    "ModelConfig",
    "RadarConfig",
    "bench",
    "decode_burst_frame",
    "encode_burst_frame",
    "generate_dataset",
    "physical_to_bins",
    "point_burst",
    "presets",
    "process_burst",
    "synthesize_burst",
]
