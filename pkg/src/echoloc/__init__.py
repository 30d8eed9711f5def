"""3-D localization of a reflector from multi-channel acoustic echoes.

A single emitter pings, several receivers record the echoes, and each
matched round-trip time of arrival puts the target on a prolate spheroid.
The target is the common intersection of those spheroids.
"""

from importlib import resources

from ._backend import BACKEND
from .correspondence import MlpWeights, TrainConfig, match_echoes, select_reference, train
from .errors import DataError, EcholocError, NumericalError
from .geometry import Ellipsoid, SensorLayout, ellipsoid_from_pair
from .intersection import SolverConfig, SolveResult, solve
from .memg import EmgParams, LMConfig, fit_memg
from .pipeline import RunConfig, localize_frame, rmse_from_pairs, rmse_report, run_ablation
from .signal import Frame, detect_toas
from .simulator import default_layout, generate_dataset

__version__ = "0.1.0"


def reference_table_path():
    """Bundled CSV of 18 reference ground-truth / estimate pairs (mm)."""
    return resources.files(__name__) / "data" / "reference_estimates.csv"


__all__ = [
    "BACKEND", "DataError", "EcholocError", "Ellipsoid", "EmgParams", "Frame", "LMConfig",
    "MlpWeights", "NumericalError", "RunConfig", "SensorLayout", "SolveResult", "SolverConfig",
    "TrainConfig", "default_layout", "detect_toas", "ellipsoid_from_pair", "fit_memg",
    "generate_dataset", "localize_frame", "match_echoes", "rmse_from_pairs", "rmse_report",
    "run_ablation", "select_reference", "solve", "reference_table_path", "train", "__version__",
]
