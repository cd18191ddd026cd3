"""Built-in platform optimizations and the onboarding registry.

Each submodule implements one optimization's decision logic as pure
functions over plain inputs; the simulator wires them to live state and
publishes the resulting notifications through the broker.
"""

from . import (  # noqa: F401
    autoscale,
    harvest,
    madc,
    overclock,
    oversub,
    preprovision,
    region,
    rightsize,
    spot,
    underclock,
)
from .registry import (
    CONSUME_CHANNELS,
    DuplicatePriorityError,
    OptimizerDescriptor,
    Registry,
    UnknownChannelError,
    UnknownResourceKindError,
    builtin_descriptor,
    builtin_registry,
)

__all__ = [
    "CONSUME_CHANNELS",
    "DuplicatePriorityError",
    "OptimizerDescriptor",
    "Registry",
    "UnknownChannelError",
    "UnknownResourceKindError",
    "builtin_descriptor",
    "builtin_registry",
    "autoscale",
    "harvest",
    "madc",
    "overclock",
    "oversub",
    "preprovision",
    "region",
    "rightsize",
    "spot",
    "underclock",
]
