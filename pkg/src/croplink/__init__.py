"""Link planning for mobile farm base stations serving under-canopy clients."""

from croplink.propagation import (
    LinkGeometry,
    ModelParams,
    RsrpPrediction,
    TABLE1_CORN,
    crop_attenuation,
    crop_path_length,
    directivity_gain,
    elevation_angle,
    path_loss,
    predict_rsrp,
    rsrp_param_gradient,
    slant_range,
)

__version__ = "0.1.0"

__all__ = [
    "LinkGeometry",
    "ModelParams",
    "RsrpPrediction",
    "TABLE1_CORN",
    "crop_attenuation",
    "crop_path_length",
    "directivity_gain",
    "elevation_angle",
    "path_loss",
    "predict_rsrp",
    "rsrp_param_gradient",
    "slant_range",
]
