"""Two-stage video depression severity pipeline."""

import json

from ._depgraph import (
    ConfigError,
    DomainError,
    IoError,
    NumericError,
    build_seg,
    build_spg,
    compute_metrics,
    default_config,
    read_report,
    spectral_encode_series,
)
from . import _depgraph


def _text(config):
    if config is None:
        return ""
    if isinstance(config, str):
        return config
    return json.dumps(config)


def _pairs(overrides):
    return [f"{k}={json.dumps(v)}" for k, v in (overrides or {}).items()]


def resolve_config(config=None, **overrides):
    """Effective configuration as a dict. Overrides use '__' for nesting."""
    return _depgraph.resolve_config(_text(config), _pairs(_dotted(overrides)))


def run(config=None, **overrides):
    """Runs every stage and returns the evaluation report as a dict."""
    return _depgraph.run_pipeline(_text(config), _pairs(_dotted(overrides)))


def cross_evaluate(config, manifest, split="test", **overrides):
    return _depgraph.cross_split_evaluate(_text(config), str(manifest), split, _pairs(_dotted(overrides)))


def synthesize(config, out_dir, **overrides):
    return _depgraph.synthesize(_text(config), str(out_dir), _pairs(_dotted(overrides)))


def _dotted(overrides):
    return {k.replace("__", "."): v for k, v in overrides.items()}


__all__ = [
    "ConfigError",
    "DomainError",
    "IoError",
    "NumericError",
    "build_seg",
    "build_spg",
    "compute_metrics",
    "cross_evaluate",
    "default_config",
    "read_report",
    "resolve_config",
    "run",
    "spectral_encode_series",
    "synthesize",
]
