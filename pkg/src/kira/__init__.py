"""Desk-scale astronomy source extraction on a lazy, locality-aware
many-task dataflow engine over a simulated replicated block store.
"""

from ._kernels import backend
from .background import BackgroundModel, backarray, makeback, rmsarray, subbackarray
from .blockmap import AccessRecord, BlockMap, ClusterModel
from .dataflow import (BroadcastHandle, DistCollection, Engine, FaultPlan,
                       stable_hash)
from .ellipse import ellipse_axes, ellipse_coeffs
from .extraction import (FLAG_MASKED_OVERLAP, FLAG_SATURATED, FLAG_TRUNCATED,
                         ExtractParams, SourceObject, extract, extract_raw)
from .fits import Bitpix, HeaderCard, ImageHDU, parse_fits, synth_image, write_fits
from .metrics import RunMetrics, TaskRecord
from .photometry import (ApertureBatch, kron_radius, mask_ellipse, sum_circle,
                         sum_ellipse)
from .pipeline import PipelineConfig, image_objects, run_extract
from .sched import (SchedPolicy, SimTaskModel, assign_next, simulate,
                    static_partition)

__version__ = "0.1.0"

__all__ = [
    "ApertureBatch", "AccessRecord", "BackgroundModel", "Bitpix", "BlockMap",
    "BroadcastHandle", "ClusterModel", "DistCollection", "Engine",
    "ExtractParams", "FaultPlan", "FLAG_MASKED_OVERLAP", "FLAG_SATURATED",
    "FLAG_TRUNCATED", "HeaderCard", "ImageHDU", "PipelineConfig", "RunMetrics",
    "SchedPolicy", "SimTaskModel", "SourceObject", "TaskRecord", "assign_next",
    "backarray", "backend", "ellipse_axes", "ellipse_coeffs", "extract", "extract_raw",
    "image_objects", "kron_radius", "makeback", "mask_ellipse", "parse_fits",
    "rmsarray", "run_extract", "simulate", "stable_hash", "static_partition",
    "subbackarray", "sum_circle", "sum_ellipse", "synth_image", "write_fits",
]
