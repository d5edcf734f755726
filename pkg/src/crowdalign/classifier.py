"""Trajectory-to-behavior classification: rule oracle, LLM classifier, and
the evaluation harness for benchmarking one against labeled data."""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass

from .behaviors import LABEL_ORDER, BehaviorLabel, parse_label
from .layout import distance
from .simulation import (
    FIGHT_ACTION,
    TERMINAL_EXITED,
    TERMINAL_HIDING,
    Trajectory,
)

log = logging.getLogger(__name__)

# Rule thresholds; the behavior classes are defined in prose, so the concrete
# cutoffs are artifact constants.
FREEZE_DISPLACEMENT_M = 2.0
CROWD_RADIUS_M = 5.0
CO_MOVEMENT_FRACTION = 0.5
CO_MOVER_MIN = 2


@dataclass(frozen=True)
class ClassificationResult:
    label: BehaviorLabel
    ranking: tuple[BehaviorLabel, ...]
    reasoning: str = ""

    def __post_init__(self) -> None:
        if sorted(self.ranking, key=lambda b: b.value) != sorted(
            LABEL_ORDER, key=lambda b: b.value
        ):
            raise ValueError("ranking must be a permutation of all six labels")
        if self.ranking[0] is not self.label:
            raise ValueError("ranking[0] must equal the classified label")

    def to_json_dict(self) -> dict:
        return {
            "label": self.label.value,
            "ranking": [b.value for b in self.ranking],
            "reasoning": self.reasoning,
        }


def _rule_features(traj: Trajectory) -> dict:
    post = traj.post_incident_records()
    if not post:
        raise ValueError("pre-incident only: trajectory has no post-incident records")
    fought = any(r.action_id == FIGHT_ACTION for r in post)
    hid = (
        any(r.posture == "hiding" for r in post)
        or traj.terminal_status == TERMINAL_HIDING
    )
    region_changes = max(r.regions_crossed for r in post)
    exited = traj.terminal_status == TERMINAL_EXITED
    start = post[0].position
    end = post[-1].position
    displacement = distance(start, end)
    flight = [
        r
        for r in post
        if r.movement != "stay_still" and r.action_id != FIGHT_ACTION
    ]
    if flight:
        co_moving = sum(1 for r in flight if r.co_movers >= CO_MOVER_MIN)
        co_fraction = co_moving / len(flight)
    else:
        co_fraction = 0.0
    return {
        "fought": fought,
        "hid": hid,
        "region_changes": region_changes,
        "exited": exited,
        "displacement": displacement,
        "co_fraction": co_fraction,
        "flight_decisions": len(flight),
    }


def classify_rule(traj: Trajectory) -> ClassificationResult:
    """Deterministic rule oracle over trajectory features.

    Rules fire in priority order: fight action; ended concealed after at
    least one region change; ended concealed without leaving the room; exited
    with sustained co-movement toward a shared exit; exited alone; barely
    moved and never hid. Anything left falls back to FREEZE.
    """
    feats = _rule_features(traj)
    label = _rule_label(feats)
    scores = _rule_scores(feats)
    rest = sorted(
        (b for b in LABEL_ORDER if b is not label),
        key=lambda b: (-scores[b], LABEL_ORDER.index(b)),
    )
    return ClassificationResult(label=label, ranking=(label, *rest))


def _rule_label(feats: dict) -> BehaviorLabel:
    if feats["fought"]:
        return BehaviorLabel.FIGHT
    if feats["hid"] and not feats["exited"]:
        if feats["region_changes"] >= 1:
            return BehaviorLabel.HIDE_AFTER_RUNNING
        return BehaviorLabel.HIDE_IN_PLACE
    if feats["exited"]:
        if feats["co_fraction"] >= CO_MOVEMENT_FRACTION:
            return BehaviorLabel.RUN_FOLLOWING_CROWD
        return BehaviorLabel.RUN_INDEPENDENTLY
    if feats["displacement"] < FREEZE_DISPLACEMENT_M and not feats["hid"]:
        return BehaviorLabel.FREEZE
    return BehaviorLabel.FREEZE


def _rule_scores(feats: dict) -> dict[BehaviorLabel, float]:
    """Heuristic per-label evidence used to order the tail of the ranking."""
    moved = min(feats["displacement"] / 10.0, 1.0)
    return {
        BehaviorLabel.FIGHT: 1.0 if feats["fought"] else 0.0,
        BehaviorLabel.HIDE_AFTER_RUNNING: (
            0.8 if feats["hid"] and feats["region_changes"] >= 1 else 0.0
        )
        + (0.1 if feats["hid"] else 0.0),
        BehaviorLabel.HIDE_IN_PLACE: (
            0.8 if feats["hid"] and feats["region_changes"] == 0 else 0.0
        )
        + (0.1 if feats["hid"] else 0.0),
        BehaviorLabel.RUN_FOLLOWING_CROWD: (
            (0.6 if feats["exited"] else 0.2 * moved) * feats["co_fraction"]
        ),
        BehaviorLabel.RUN_INDEPENDENTLY: (
            0.6 if feats["exited"] else 0.2 * moved
        )
        * (1.0 - feats["co_fraction"]),
        BehaviorLabel.FREEZE: 1.0 - moved,
    }


# ---------------------------------------------------------------------------
# LLM classifier


def _trajectory_texts(traj: Trajectory) -> dict[str, str]:
    states = []
    actions = []
    memories = []
    for record in traj.records:
        states.append(
            f"t={record.time_s:g}s in {record.region}, mood {record.mood}, "
            f"posture {record.posture}, health {record.health}"
        )
        actions.append(f"t={record.time_s:g}s: {record.action_id} ({record.thought})")
        if record.memory_update:
            memories.append(record.memory_update)
    return {
        "states_text": "; ".join(states),
        "actions_text": "; ".join(actions),
        "memories_text": "; ".join(memories) if memories else "(none)",
    }


_CLASSIFICATION_RE = re.compile(r"classification\s*:\s*([A-Za-z_ ]+)", re.IGNORECASE)
_RANKING_RE = re.compile(r"ranking\s*:\s*\[(.*?)\]", re.IGNORECASE | re.DOTALL)
_REASONING_RE = re.compile(r"reasoning\s*:\s*(.+?)(?=classification\s*:)",
                           re.IGNORECASE | re.DOTALL)


def parse_classifier_response(content: str) -> ClassificationResult:
    """Parse 'Reasoning/Classification/Ranking' text into a result.

    Raises ValueError for unparseable content or a non-permutation ranking.
    When ranking[0] disagrees with the classification, the classification
    wins and the ranking is reordered (with a warning).
    """
    class_match = _CLASSIFICATION_RE.search(content)
    rank_match = _RANKING_RE.search(content)
    if not class_match or not rank_match:
        raise ValueError("missing classification or ranking")
    label = parse_label(class_match.group(1))
    items = [s.strip() for s in rank_match.group(1).split(",") if s.strip()]
    ranking = tuple(parse_label(item) for item in items)
    if sorted(b.value for b in ranking) != sorted(b.value for b in LABEL_ORDER):
        raise ValueError("ranking is not a permutation of the six labels")
    reasoning_match = _REASONING_RE.search(content)
    reasoning = reasoning_match.group(1).strip() if reasoning_match else ""
    if ranking[0] is not label:
        log.warning(
            "classifier ranking[0]=%s disagrees with classification=%s; "
            "classification wins",
            ranking[0].value,
            label.value,
        )
        ranking = (label, *[b for b in ranking if b is not label])
    return ClassificationResult(label=label, ranking=ranking, reasoning=reasoning)


def classify_llm(traj: Trajectory, gateway) -> ClassificationResult:
    """LLM-backed classification at temperature 0, with one reprompt."""
    from .gateway import render_template

    if not traj.post_incident_records():
        raise ValueError("pre-incident only: trajectory has no post-incident records")
    bindings = _trajectory_texts(traj)
    system, user = render_template("classifier", bindings)
    last_error = ""
    for attempt in range(2):
        prompt = user if attempt == 0 else (
            user + f"\n\nYour previous response was invalid: {last_error}. "
            "Answer again with Reasoning, Classification, and a Ranking that "
            "lists each of the six labels exactly once."
        )
        response = gateway.chat(system=system, user=prompt, temperature=0.0)
        try:
            return parse_classifier_response(response.content)
        except ValueError as exc:
            last_error = str(exc)
    raise ValueError(f"classifier failure for agent {traj.agent_id}: {last_error}")


# ---------------------------------------------------------------------------
# evaluation harness


@dataclass(frozen=True)
class ClassifierEvalReport:
    accuracy: float
    per_label: dict[BehaviorLabel, dict[str, float]]
    support: dict[BehaviorLabel, int]
    cohen_kappa: float
    mean_true_label_rank: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.accuracy <= 1.0:
            raise ValueError("accuracy out of [0, 1]")
        if not 1.0 <= self.mean_true_label_rank <= 6.0:
            raise ValueError("mean_true_label_rank out of [1, 6]")

    def to_json_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "cohen_kappa": self.cohen_kappa,
            "mean_true_label_rank": self.mean_true_label_rank,
            "per_label": {
                b.value: dict(self.per_label[b]) for b in LABEL_ORDER
            },
            "support": {b.value: self.support[b] for b in LABEL_ORDER},
        }


def evaluate_classifier(
    predictions: list[ClassificationResult], gold: list[BehaviorLabel]
) -> ClassifierEvalReport:
    """Multi-class metrics of predictions against gold labels."""
    if len(predictions) != len(gold):
        raise ValueError(
            f"length mismatch: {len(predictions)} predictions vs {len(gold)} gold"
        )
    if not predictions:
        raise ValueError("empty evaluation set")
    n = len(gold)
    correct = sum(1 for p, g in zip(predictions, gold) if p.label is g)
    accuracy = correct / n

    per_label: dict[BehaviorLabel, dict[str, float]] = {}
    support: dict[BehaviorLabel, int] = {}
    for label in LABEL_ORDER:
        tp = sum(1 for p, g in zip(predictions, gold) if p.label is label and g is label)
        fp = sum(1 for p, g in zip(predictions, gold) if p.label is label and g is not label)
        fn = sum(1 for p, g in zip(predictions, gold) if p.label is not label and g is label)
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / (tp + fn) if tp + fn else 0.0
        f1 = (
            2 * precision * recall / (precision + recall)
            if precision + recall
            else 0.0
        )
        per_label[label] = {"precision": precision, "recall": recall, "f1": f1}
        support[label] = tp + fn

    # Cohen's kappa against the marginal chance agreement.
    p_observed = accuracy
    p_expected = 0.0
    for label in LABEL_ORDER:
        pred_frac = sum(1 for p in predictions if p.label is label) / n
        gold_frac = support[label] / n
        p_expected += pred_frac * gold_frac
    kappa = (
        (p_observed - p_expected) / (1.0 - p_expected)
        if p_expected < 1.0
        else 1.0
    )

    rank_total = 0
    for pred, gold_label in zip(predictions, gold):
        rank_total += pred.ranking.index(gold_label) + 1
    mean_rank = rank_total / n

    return ClassifierEvalReport(
        accuracy=accuracy,
        per_label=per_label,
        support=support,
        cohen_kappa=kappa,
        mean_true_label_rank=mean_rank,
    )
