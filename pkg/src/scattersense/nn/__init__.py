from scattersense.nn.detector import (
    DetectorConfig,
    Detector,
    backward,
    count_params_flops,
    forward,
    init_params,
)
from scattersense.nn.checkpoint import load_checkpoint, save_checkpoint

__all__ = [
    "Detector",
    "DetectorConfig",
    "backward",
    "count_params_flops",
    "forward",
    "init_params",
    "load_checkpoint",
    "save_checkpoint",
]
