"""PIM just-in-time quantization simulator."""

from ._core import (
    PimJitqError,
    capacity_limit_pct,
    catalog_json,
    kernel_text,
    quantize_dequantize,
    quantize_to_bytes,
    run_cli,
    simulate,
    sweep,
    verify,
)

__all__ = [
    "PimJitqError",
    "capacity_limit_pct",
    "catalog_json",
    "kernel_text",
    "quantize_dequantize",
    "quantize_to_bytes",
    "run_cli",
    "simulate",
    "sweep",
    "verify",
]
