"""Pipeline instrumentation that records per-step features as SEATRAJ files."""

__version__ = "0.1.0"

from .capture import CapturePlan, CapturePointError, ReshapeError, record_run
from .pipeline import RectifiedFlowScheduler, ToyDiTPipeline, load_pipeline
