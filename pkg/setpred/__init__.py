"""Top-level package for joint cardinality and label set prediction."""

from importlib.metadata import PackageNotFoundError, version

try:
    __version__ = version("setpred")
except PackageNotFoundError:  # pragma: no cover - fallback when package isn't installed
    __version__ = "0.1.0"

from .inference import MapResult, map_set
from .service import SetPredictor

__all__ = ["MapResult", "SetPredictor", "map_set", "__version__"]
