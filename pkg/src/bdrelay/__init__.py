"""Simulation of adaptive mode selection for a buffer-aided two-user relay network."""

__version__ = "0.1.0"

from .channel import (
    CapacitySet,
    ChannelDraw,
    ChannelStats,
    DiscreteGains,
    NodePowers,
    RayleighGains,
    capacity,
    db_to_linear,
    mode_capacities,
)
from .engine import SimConfig, SumRateReport, run, sweep
from .policy import CalibrationError, PolicyParams, calibrate
from .queues import BufferState, SlotOutcome, apply_mode

__all__ = [
    "BufferState",
    "CalibrationError",
    "CapacitySet",
    "ChannelDraw",
    "ChannelStats",
    "DiscreteGains",
    "NodePowers",
    "PolicyParams",
    "RayleighGains",
    "SimConfig",
    "SlotOutcome",
    "SumRateReport",
    "apply_mode",
    "calibrate",
    "capacity",
    "db_to_linear",
    "mode_capacities",
    "run",
    "sweep",
]
