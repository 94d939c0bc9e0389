"""Budget selection: Gaussian coverage formulas and Pareto sweeps."""
from .calibrate import CAVEAT, CalibrationError, CalibrationQuery, calibrate, coverage, scaled_radius
from .pareto import CSV_COLUMNS, ParetoPoint, pareto_front, write_csv
from . import special

__all__ = ["CAVEAT", "CalibrationError", "CalibrationQuery", "calibrate", "coverage", "scaled_radius",
           "CSV_COLUMNS", "ParetoPoint", "pareto_front", "write_csv", "special"]
