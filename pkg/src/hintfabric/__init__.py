"""hintfabric: a bi-directional hint fabric between workloads and the platform.

Workloads describe their flexibility (scaling, preemptibility, delay and
availability tolerance, locality) once at deployment and adjust it at
runtime; platform optimizations consume those hints, bid for shared
resources through a priority arbiter, and notify workloads before acting.
The package also ships a deterministic desk-scale platform simulator and
an accounting layer that prices optimizations and bounds fleet-wide
savings with a small LP.
"""

from .ids import (
    COMPATIBILITY_GROUPS,
    FREQUENCY_GROUP,
    FREQUENCY_MULTIPLIER,
    PRIORITY,
    SPARE_COMPUTE_GROUP,
    FrequencyLevel,
    OptimizationId,
    ResourceKind,
)
from .hints import (
    Decision,
    EffectiveHints,
    EligibilityConfig,
    HintKind,
    HintRejection,
    HintSet,
    HintSource,
    HintValidationError,
    NotificationKind,
    PlatformNotification,
    PreemptionPriority,
    RuntimeHint,
    ScalePreference,
    UtilStats,
    conservative_hints,
    consistency_check,
    eligibility,
    merge,
    validate,
)

__version__ = "0.1.0"

__all__ = [
    "COMPATIBILITY_GROUPS",
    "FREQUENCY_GROUP",
    "FREQUENCY_MULTIPLIER",
    "PRIORITY",
    "SPARE_COMPUTE_GROUP",
    "Decision",
    "EffectiveHints",
    "EligibilityConfig",
    "FrequencyLevel",
    "HintKind",
    "HintRejection",
    "HintSet",
    "HintSource",
    "HintValidationError",
    "NotificationKind",
    "OptimizationId",
    "PlatformNotification",
    "PreemptionPriority",
    "ResourceKind",
    "RuntimeHint",
    "ScalePreference",
    "UtilStats",
    "conservative_hints",
    "consistency_check",
    "eligibility",
    "merge",
    "validate",
    "__version__",
]
