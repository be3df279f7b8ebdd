"""Metro passenger-volume forecasting with physical, similarity and OD-flow graphs."""

from .config import RunConfig, load_config, preset
from .errors import ConfigError, DataError, NumericError, PbgruError, ShapeError
from .model import ModelGraphs, ModelSpec, forward, init_params

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "DataError",
    "ModelGraphs",
    "ModelSpec",
    "NumericError",
    "PbgruError",
    "RunConfig",
    "ShapeError",
    "forward",
    "init_params",
    "load_config",
    "preset",
]
