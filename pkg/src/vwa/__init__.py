"""Cycle-level, bit-exact model of a vectorwise CNN accelerator.

Core package: fixed-point tensors and the direct-convolution oracle,
the MAC-array/scheduler/accumulator machinery, tiling and DRAM traffic
models, and per-layer metric aggregation.  A FastAPI service wraps the
core; the `vwa` CLI is a thin client of that service.
"""

__version__ = "0.1.0"


class VwaError(Exception):
    """Base class for all errors raised by this package."""


class ParseError(VwaError):
    """Model or tensor file does not conform to the expected grammar."""


class ShapeError(VwaError):
    """Tensor/layer shapes are inconsistent."""


class ScheduleError(VwaError):
    """Layer cannot be scheduled on the array (unsupported kernel/stride/tile)."""


class AccumulatorOverflow(VwaError):
    """A partial sum left the signed 32-bit range."""
