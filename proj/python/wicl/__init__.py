"""Python bindings for the wicl C++ core."""

import json

from ._wicl import (
    ConfigError,
    Error,
    Experiment,
    Intervention,
    Model,
    ModelConfig,
    Tokenizer,
    apply_saw,
    apply_skm,
    beam_search,
    brute_force,
    load_bpe_tokenizer,
    load_byte_tokenizer,
    pearson,
)


def run_experiment(config_path):
    """Runs every seed of a config file and returns the report as a dict."""
    return json.loads(Experiment(config_path).run())


__all__ = [
    "ConfigError",
    "Error",
    "Experiment",
    "Intervention",
    "Model",
    "ModelConfig",
    "Tokenizer",
    "apply_saw",
    "apply_skm",
    "beam_search",
    "brute_force",
    "load_bpe_tokenizer",
    "load_byte_tokenizer",
    "pearson",
    "run_experiment",
]
