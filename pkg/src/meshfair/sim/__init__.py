"""Slot-level CSMA/CA simulator with TXOP bursting, backpressure and AIMD tuning."""
from .config import SimConfig
from .engine import SimMeasurement, aimd_step, backpressure_admit, measure_pidle, run, run_many

__all__ = ["SimConfig", "SimMeasurement", "aimd_step", "backpressure_admit", "measure_pidle", "run", "run_many"]
