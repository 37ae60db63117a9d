"""Nonlocal energies, traces and W^{1,1} extensions of manifold-valued maps on grids."""
from .errors import (AlignmentError, ContractError, DomainError, MvTraceError, ResolutionError,
                     SchemaError)
from .gridmap import (BbmReport, EnergyValue, GridMap, asymptotic_mean, averaged_translation,
                      constant_map, integral_dist_between, integral_dist_to_point, pair_integral,
                      small_r_sweep, theta, translation_energy, window_double_integral)
from .manifold import TargetManifold, circle, euclidean, sphere
from .slab import SlabMap
from .trace import TraceReport, gradient_energy, trace_inequality_check, trace_slice

__version__ = "0.1.0"

__all__ = [
    "AlignmentError", "BbmReport", "ContractError", "DomainError", "EnergyValue", "GridMap",
    "MvTraceError", "ResolutionError", "SchemaError", "SlabMap", "TargetManifold", "TraceReport",
    "asymptotic_mean", "averaged_translation", "circle", "constant_map", "euclidean", "gradient_energy",
    "integral_dist_between", "integral_dist_to_point", "pair_integral", "small_r_sweep", "sphere",
    "theta", "trace_inequality_check", "trace_slice", "translation_energy", "window_double_integral",
]
