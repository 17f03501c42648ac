"""Binary dataset-shift toolkit.

Calibration, quantification, and classifier-accuracy prediction under
label and covariate shift, the six adaptations bridging the three tasks,
oracle checks that the tasks reduce exactly to one another on finite
samples, shift-simulation protocols, and a batch experiment CLI.
"""

from .core import (
    CalibrationMap,
    DataError,
    Histogram,
    LabeledSet,
    ScoredSet,
    SplitSpec,
    build_histogram,
    enforce_monotone,
    interpolate,
    load_csv,
    smooth_window1,
    split_stratified,
)
from .calibrate import Calibrator
from .cap import AccuracyEstimate, DocRegressor
from .evaluation import EstimateRecord, SampleProtocol
from .oracles import LemmaReport, OracleContext
from .quantify import PrevalenceEstimate, RateEstimates

__all__ = [
    "AccuracyEstimate",
    "CalibrationMap",
    "Calibrator",
    "DataError",
    "DocRegressor",
    "EstimateRecord",
    "Histogram",
    "LabeledSet",
    "LemmaReport",
    "OracleContext",
    "PrevalenceEstimate",
    "RateEstimates",
    "SampleProtocol",
    "ScoredSet",
    "SplitSpec",
    "build_histogram",
    "enforce_monotone",
    "interpolate",
    "load_csv",
    "smooth_window1",
    "split_stratified",
]

__version__ = "0.1.0"
