"""Divergence metrics between behavior distributions.

All metrics default to natural log (nats). The log base is configurable via
MetricsOptions because different reporting conventions exist; every value in
one report uses a single base.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .behaviors import LABEL_ORDER, BehaviorDistribution


@dataclass(frozen=True)
class MetricsOptions:
    """Shared knobs for divergence computations."""

    log_base: float = math.e
    # Additive smoothing applied to both inputs before KL only; JS, TV and the
    # entropy gap are finite without it.
    kl_smoothing: float = 0.0

    def __post_init__(self) -> None:
        if self.log_base <= 0 or self.log_base == 1.0:
            raise ValueError("log_base must be positive and != 1")
        if self.kl_smoothing < 0:
            raise ValueError("kl_smoothing must be >= 0")

    def log(self, x: float) -> float:
        return math.log(x) / math.log(self.log_base)


def default_smoothing(population_size: int) -> float:
    """Default additive KL smoothing: 1/(10*N) for a population of N agents."""
    if population_size <= 0:
        raise ValueError("population_size must be positive")
    return 1.0 / (10.0 * population_size)


def _smooth(dist: BehaviorDistribution, smoothing: float) -> tuple[float, ...]:
    values = dist.as_vector()
    if smoothing == 0:
        return values
    total = 1.0 + smoothing * len(values)
    return tuple((v + smoothing) / total for v in values)


def kl_divergence(
    p: BehaviorDistribution,
    q: BehaviorDistribution,
    smoothing: float = 0.0,
    options: MetricsOptions | None = None,
) -> float:
    """KL(p || q) after additive smoothing of both inputs.

    With zero smoothing the support of p must be contained in the support of
    q, otherwise the divergence is infinite and an error is raised.
    """
    if smoothing < 0:
        raise ValueError("smoothing must be >= 0")
    opts = options or MetricsOptions()
    pv = _smooth(p, smoothing)
    qv = _smooth(q, smoothing)
    total = 0.0
    for pi, qi in zip(pv, qv):
        if pi == 0.0:
            continue
        if qi == 0.0:
            raise ValueError("infinite divergence: p has mass where q is zero")
        total += pi * math.log(pi / qi)
    return max(0.0, total / math.log(opts.log_base))


def js_divergence(
    p: BehaviorDistribution,
    q: BehaviorDistribution,
    options: MetricsOptions | None = None,
) -> float:
    """Jensen-Shannon divergence via the midpoint mixture; always finite."""
    opts = options or MetricsOptions()
    pv = p.as_vector()
    qv = q.as_vector()
    total = 0.0
    for pi, qi in zip(pv, qv):
        mi = 0.5 * (pi + qi)
        if pi > 0:
            total += 0.5 * pi * math.log(pi / mi)
        if qi > 0:
            total += 0.5 * qi * math.log(qi / mi)
    return max(0.0, total / math.log(opts.log_base))


def js_distance(
    p: BehaviorDistribution,
    q: BehaviorDistribution,
    options: MetricsOptions | None = None,
) -> float:
    """Square root of the Jensen-Shannon divergence (a metric)."""
    return math.sqrt(js_divergence(p, q, options))


def entropy(p: BehaviorDistribution, options: MetricsOptions | None = None) -> float:
    """Shannon entropy with the 0*log(0) = 0 convention."""
    opts = options or MetricsOptions()
    total = 0.0
    for pi in p.as_vector():
        if pi > 0:
            total -= pi * math.log(pi)
    return total / math.log(opts.log_base)


def entropy_gap(
    p: BehaviorDistribution,
    q: BehaviorDistribution,
    options: MetricsOptions | None = None,
) -> float:
    """Absolute difference of the two Shannon entropies."""
    return abs(entropy(p, options) - entropy(q, options))


def tv_distance(p: BehaviorDistribution, q: BehaviorDistribution) -> float:
    """Total variation distance: half the L1 distance."""
    return 0.5 * sum(abs(pi - qi) for pi, qi in zip(p.as_vector(), q.as_vector()))


@dataclass(frozen=True)
class AlignmentReport:
    """All four divergence metrics for one simulated-vs-reference comparison.

    ``kl`` is oriented KL(sim || real), the orientation the optimizer's
    convergence test uses; ``kl_real_vs_sim`` carries the reverse orientation
    for reporting.
    """

    kl: float
    js_distance: float
    entropy_gap: float
    tv: float
    kl_real_vs_sim: float
    iteration: int
    per_label_sim: BehaviorDistribution
    per_label_real: BehaviorDistribution
    smoothing: float = 0.0

    def __post_init__(self) -> None:
        if not 0.0 <= self.tv <= 1.0 + 1e-12:
            raise ValueError(f"tv out of range: {self.tv}")
        if self.js_distance < 0 or self.js_distance > math.sqrt(math.log(2)) + 1e-9:
            raise ValueError(f"js_distance out of range: {self.js_distance}")

    def metric_row(self) -> dict[str, float]:
        return {
            "kl": self.kl,
            "js": self.js_distance,
            "entropy_gap": self.entropy_gap,
            "tv": self.tv,
        }

    def to_json_dict(self) -> dict:
        return {
            "iteration": self.iteration,
            "kl": self.kl,
            "js_distance": self.js_distance,
            "entropy_gap": self.entropy_gap,
            "tv": self.tv,
            "kl_real_vs_sim": self.kl_real_vs_sim,
            "smoothing": self.smoothing,
            "per_label_sim": self.per_label_sim.to_json_dict(),
            "per_label_real": self.per_label_real.to_json_dict(),
        }


def alignment_report(
    p_sim: BehaviorDistribution,
    p_real: BehaviorDistribution,
    iteration: int = 0,
    smoothing: float | None = None,
    population_size: int | None = None,
    options: MetricsOptions | None = None,
) -> AlignmentReport:
    """Build the full report; smoothing defaults to 1/(10*N) when N is given."""
    if smoothing is None:
        smoothing = default_smoothing(population_size) if population_size else 0.0
    return AlignmentReport(
        kl=kl_divergence(p_sim, p_real, smoothing, options),
        js_distance=js_distance(p_sim, p_real, options),
        entropy_gap=entropy_gap(p_sim, p_real, options),
        tv=tv_distance(p_sim, p_real),
        kl_real_vs_sim=kl_divergence(p_real, p_sim, smoothing, options),
        iteration=iteration,
        per_label_sim=p_sim,
        per_label_real=p_real,
        smoothing=smoothing,
    )
