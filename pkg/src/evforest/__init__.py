"""Event-camera tensor simulation for forest-flight policies.

Vectorized band-crossing event tensors with an exact reference-level oracle,
Poisson forests with a minimal cylinder raycaster, angular distance maps,
teacher rewards, and a runtime/memory benchmark of the two event routes.
"""
from evforest.backend import backend_name, set_backend, set_num_threads
from evforest.errors import ComparisonMismatch, ValidationError
from evforest.events import (BandStack, BinningConfig, ContrastConfig, DiffReport, EventTensor,
                             LogFrameStack, SparseEventStream, accumulate_tensor, band_quantize,
                             diff_tensors, downsample_stream, log_transform, oracle_event_stream,
                             vectorized_event_tensor)

__version__ = "0.1.0"

__all__ = [
    "BandStack", "BinningConfig", "ComparisonMismatch", "ContrastConfig", "DiffReport",
    "EventTensor", "LogFrameStack", "SparseEventStream", "ValidationError", "accumulate_tensor",
    "band_quantize", "backend_name", "diff_tensors", "downsample_stream", "log_transform",
    "oracle_event_stream", "set_backend", "set_num_threads", "vectorized_event_tensor",
]
