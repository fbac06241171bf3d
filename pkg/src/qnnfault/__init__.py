"""Bit-level fault injection and statistical reliability analysis for quantized CNNs."""
__version__ = "0.1.0"

from . import campaign, faults, model_io, qnn, stats  # noqa: E402,F401
