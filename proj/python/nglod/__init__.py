"""Neural signed distance fields on a sparse voxel octree."""

from ._nglod import (
    ConfigError,
    FormatError,
    Model,
    Oracle,
    RangeError,
    UsageError,
    chamfer,
    evaluate,
    fit,
    load_model,
    load_oracle,
    parse_scene,
    render,
)

__all__ = [
    "ConfigError",
    "FormatError",
    "Model",
    "Oracle",
    "RangeError",
    "UsageError",
    "chamfer",
    "evaluate",
    "fit",
    "load_model",
    "load_oracle",
    "parse_scene",
    "render",
]
