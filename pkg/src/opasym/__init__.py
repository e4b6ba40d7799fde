"""Orthogonal polynomials for matrix-model weights exp(-N V) and their
large-N asymptotics on hyperelliptic spectral curves."""

__version__ = "0.1.0"

from .potential import Potential, RunConfig, parse_config, serialize_config

__all__ = ["Potential", "RunConfig", "parse_config", "serialize_config"]
