"""Behavior taxonomy and crowd-level behavior distributions."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Mapping

PROB_SUM_TOL = 1e-9


class BehaviorLabel(Enum):
    """The six civilian behavior classes, in fixed taxonomy order."""

    RUN_FOLLOWING_CROWD = "RUN_FOLLOWING_CROWD"
    HIDE_IN_PLACE = "HIDE_IN_PLACE"
    HIDE_AFTER_RUNNING = "HIDE_AFTER_RUNNING"
    RUN_INDEPENDENTLY = "RUN_INDEPENDENTLY"
    FREEZE = "FREEZE"
    FIGHT = "FIGHT"

    def __lt__(self, other: "BehaviorLabel") -> bool:
        if not isinstance(other, BehaviorLabel):
            return NotImplemented
        return LABEL_ORDER.index(self) < LABEL_ORDER.index(other)


LABEL_ORDER: tuple[BehaviorLabel, ...] = tuple(BehaviorLabel)

BEHAVIOR_DESCRIPTIONS: dict[BehaviorLabel, str] = {
    BehaviorLabel.RUN_FOLLOWING_CROWD: (
        "Fleeing alongside a group, driven by the instinct to follow others "
        "without independently evaluating the safest route; behavior is driven "
        "by herding panic."
    ),
    BehaviorLabel.HIDE_IN_PLACE: (
        "Taking cover immediately at the current location, usually from fear "
        "or confusion."
    ),
    BehaviorLabel.HIDE_AFTER_RUNNING: (
        "Running first to gain distance, then switching to concealment when "
        "further flight seems unsafe."
    ),
    BehaviorLabel.RUN_INDEPENDENTLY: (
        "Escaping in a self-chosen direction based on rapid environmental "
        "assessment or prior knowledge."
    ),
    BehaviorLabel.FREEZE: (
        "Becoming immobilised (tonic immobility) under extreme stress, unable "
        "to flee or hide."
    ),
    BehaviorLabel.FIGHT: (
        "Actively confronting or attempting to disarm the shooter as a last "
        "resort."
    ),
}


def parse_label(text: str) -> BehaviorLabel:
    """Parse a behavior label from loose text ("hide in place" == HIDE_IN_PLACE)."""
    key = text.strip().upper().replace(" ", "_").replace("-", "_")
    try:
        return BehaviorLabel(key)
    except ValueError:
        raise ValueError(f"unknown behavior label: {text!r}") from None


@dataclass(frozen=True)
class BehaviorDistribution:
    """Probability vector over the six behavior classes."""

    probs: Mapping[BehaviorLabel, float]

    def __post_init__(self) -> None:
        missing = [b for b in LABEL_ORDER if b not in self.probs]
        if missing:
            raise ValueError(f"missing behavior keys: {[b.value for b in missing]}")
        extra = [k for k in self.probs if not isinstance(k, BehaviorLabel)]
        if extra:
            raise ValueError(f"unknown behavior keys: {extra}")
        for label in LABEL_ORDER:
            if self.probs[label] < 0:
                raise ValueError(f"negative probability for {label.value}")
        total = sum(self.probs[b] for b in LABEL_ORDER)
        if abs(total - 1.0) > PROB_SUM_TOL:
            raise ValueError(f"probabilities sum to {total!r}, expected 1")
        object.__setattr__(
            self, "probs", {b: float(self.probs[b]) for b in LABEL_ORDER}
        )

    def __getitem__(self, label: BehaviorLabel) -> float:
        return self.probs[label]

    def as_vector(self) -> tuple[float, ...]:
        """Probabilities in taxonomy order."""
        return tuple(self.probs[b] for b in LABEL_ORDER)

    def to_json_dict(self) -> dict[str, float]:
        return {b.value: self.probs[b] for b in LABEL_ORDER}

    @classmethod
    def from_json_dict(cls, data: Mapping[str, float]) -> "BehaviorDistribution":
        known = {b.value for b in LABEL_ORDER}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ValueError(f"unknown behavior keys: {unknown}")
        return cls({b: float(data.get(b.value, 0.0)) for b in LABEL_ORDER})

    @classmethod
    def from_vector(cls, values: Iterable[float]) -> "BehaviorDistribution":
        values = tuple(values)
        if len(values) != len(LABEL_ORDER):
            raise ValueError(f"expected {len(LABEL_ORDER)} values, got {len(values)}")
        return cls(dict(zip(LABEL_ORDER, values)))


# Expert-elicited reference distribution for active-shooter civilian response
# (mean allocation across 18 subject-matter experts).
EXPERT_REFERENCE = BehaviorDistribution(
    {
        BehaviorLabel.RUN_FOLLOWING_CROWD: 0.28,
        BehaviorLabel.HIDE_IN_PLACE: 0.26,
        BehaviorLabel.HIDE_AFTER_RUNNING: 0.12,
        BehaviorLabel.RUN_INDEPENDENTLY: 0.12,
        BehaviorLabel.FREEZE: 0.12,
        BehaviorLabel.FIGHT: 0.10,
    }
)


def empirical_distribution(labels: list[BehaviorLabel]) -> BehaviorDistribution:
    """Aggregate per-agent labels into the crowd-level distribution."""
    if not labels:
        raise ValueError("empty population")
    n = len(labels)
    counts = {b: 0 for b in LABEL_ORDER}
    for label in labels:
        counts[label] += 1
    return BehaviorDistribution({b: counts[b] / n for b in LABEL_ORDER})


@dataclass(frozen=True)
class SignedGapVector:
    """Per-class signed difference reference minus simulated."""

    gaps: Mapping[BehaviorLabel, float]

    def __post_init__(self) -> None:
        missing = [b for b in LABEL_ORDER if b not in self.gaps]
        if missing:
            raise ValueError(f"missing gap keys: {[b.value for b in missing]}")
        total = sum(self.gaps[b] for b in LABEL_ORDER)
        if abs(total) > PROB_SUM_TOL:
            raise ValueError(f"gaps sum to {total!r}, expected 0")
        object.__setattr__(self, "gaps", {b: float(self.gaps[b]) for b in LABEL_ORDER})

    def __getitem__(self, label: BehaviorLabel) -> float:
        return self.gaps[label]

    def surplus(self) -> dict[BehaviorLabel, float]:
        """Over-represented classes (negative gap), as positive magnitudes."""
        return {b: -g for b, g in self.gaps.items() if g < 0}

    def deficit(self) -> dict[BehaviorLabel, float]:
        """Under-represented classes (positive gap)."""
        return {b: g for b, g in self.gaps.items() if g > 0}


def signed_gaps(
    p_sim: BehaviorDistribution, p_real: BehaviorDistribution
) -> SignedGapVector:
    """Gap per class: p_real(b) - p_sim(b)."""
    return SignedGapVector({b: p_real[b] - p_sim[b] for b in LABEL_ORDER})
