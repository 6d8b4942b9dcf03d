"""Python bindings for the tldr segmentation training core."""

import json

from ._tldr import (
    ConfigError,
    DimensionError,
    NumericError,
    TldrError,
    generate_sample,
    gram,
    ldf,
    lr_schedule,
    mi_lower_bound,
    miou,
    rsm_mask,
    wct,
)
from . import _tldr

__all__ = [
    "ConfigError",
    "DimensionError",
    "NumericError",
    "TldrError",
    "default_config",
    "generate_sample",
    "gram",
    "ldf",
    "lr_schedule",
    "mi_lower_bound",
    "miou",
    "rsm_mask",
    "train",
    "wct",
]


def default_config():
    """Default training configuration as a dict."""
    return json.loads(_tldr.default_config_json())


def train(config=None, out_dir=""):
    """Run training; keys missing from ``config`` keep their defaults."""
    return _tldr.train(json.dumps(config or {}), str(out_dir))
