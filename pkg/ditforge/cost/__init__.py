"""Analytic FLOPs, memory and communication models."""

from ditforge.cost.comm import (
    CommEntry,
    CommReport,
    HaloReport,
    comm_volumes,
    cp_block_bytes,
    dp_collective_bytes,
    tp_layer_bytes,
    vae_halo,
    vae_halo_bytes,
)
from ditforge.cost.flops import (
    Calibration,
    CalibrationError,
    CostCoefficients,
    FlopsRow,
    FlopsTable,
    calibrate,
    default_coefficients,
    fit_coefficients,
    predict_row,
    reference_table,
    sample_flops,
)
from ditforge.cost.memory import (
    GB,
    MemoryReport,
    activation_bytes_per_token,
    activation_check,
    memory_breakdown,
)

__all__ = [
    "GB",
    "Calibration",
    "CalibrationError",
    "CommEntry",
    "CommReport",
    "CostCoefficients",
    "FlopsRow",
    "FlopsTable",
    "HaloReport",
    "MemoryReport",
    "activation_bytes_per_token",
    "activation_check",
    "calibrate",
    "comm_volumes",
    "cp_block_bytes",
    "default_coefficients",
    "dp_collective_bytes",
    "fit_coefficients",
    "memory_breakdown",
    "predict_row",
    "reference_table",
    "sample_flops",
    "tp_layer_bytes",
    "vae_halo",
    "vae_halo_bytes",
]
