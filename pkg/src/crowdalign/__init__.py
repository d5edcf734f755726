"""crowdalign: persona-driven crowd simulation with iterative alignment of
the emergent behavior distribution to an expert reference."""

__version__ = "0.1.0"

from .behaviors import (
    EXPERT_REFERENCE,
    BehaviorDistribution,
    BehaviorLabel,
    SignedGapVector,
    empirical_distribution,
    signed_gaps,
)
from .metrics import (
    AlignmentReport,
    MetricsOptions,
    alignment_report,
    entropy_gap,
    js_distance,
    js_divergence,
    kl_divergence,
    tv_distance,
)
from .personas import Persona, load_bundled_pool, load_pool, save_pool

__all__ = [
    "EXPERT_REFERENCE",
    "AlignmentReport",
    "BehaviorDistribution",
    "BehaviorLabel",
    "MetricsOptions",
    "Persona",
    "SignedGapVector",
    "alignment_report",
    "empirical_distribution",
    "entropy_gap",
    "js_distance",
    "js_divergence",
    "kl_divergence",
    "load_bundled_pool",
    "load_pool",
    "save_pool",
    "signed_gaps",
    "tv_distance",
    "__version__",
]
