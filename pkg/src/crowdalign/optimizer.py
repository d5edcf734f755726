"""The persona-pool optimization loop: simulate, classify, measure the gap,
select over-represented agents, assign target behaviors, rewrite."""

from __future__ import annotations

import math
import random
import time
from dataclasses import dataclass, field

from .behaviors import (
    EXPERT_REFERENCE,
    LABEL_ORDER,
    BehaviorDistribution,
    BehaviorLabel,
    SignedGapVector,
    empirical_distribution,
    signed_gaps,
)
from .classifier import classify_rule
from .layout import Layout
from .metrics import AlignmentReport, alignment_report, default_smoothing
from .personas import Persona
from .simulation import EpisodeConfig, EpisodeResult, run_episode
from .writer import EvolutionLog, PersonaWriter


@dataclass(frozen=True)
class AssignmentMap:
    """agent id -> target behavior, for agents selected for rewriting."""

    entries: dict[str, BehaviorLabel]

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, agent_id: str) -> bool:
        return agent_id in self.entries

    def items(self):
        return sorted(self.entries.items())

    def to_json_dict(self) -> dict[str, str]:
        return {a: b.value for a, b in sorted(self.entries.items())}


@dataclass(frozen=True)
class PevoConfig:
    epsilon: float = 0.05
    max_iterations: int = 15
    seeds: tuple[int, ...] = (11, 23, 37, 53, 71)
    policy_mode: str = "trait"
    writer_mode: str = "trait"
    reference: BehaviorDistribution = EXPERT_REFERENCE
    episode: EpisodeConfig = field(default_factory=EpisodeConfig)
    classifier_mode: str = "rule"

    def __post_init__(self) -> None:
        if self.epsilon <= 0:
            raise ValueError("epsilon must be > 0")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if not self.seeds:
            raise ValueError("at least one seed required")


@dataclass
class IterationRecord:
    iteration: int
    p_sim: BehaviorDistribution
    report: AlignmentReport
    assignment: AssignmentMap
    labels: dict[str, BehaviorLabel]
    prompt_tokens: int
    completion_tokens: int
    cost_calls: int
    wall_time_s: float

    def to_json_dict(self) -> dict:
        return {
            "iteration": self.iteration,
            "p_sim": self.p_sim.to_json_dict(),
            "report": self.report.to_json_dict(),
            "assignment": self.assignment.to_json_dict(),
            "labels": {a: b.value for a, b in sorted(self.labels.items())},
            "prompt_tokens": self.prompt_tokens,
            "completion_tokens": self.completion_tokens,
            "cost_calls": self.cost_calls,
            "wall_time_s": self.wall_time_s,
        }

    def semantic_dict(self) -> dict:
        """Everything except wall time, for determinism comparisons."""
        data = self.to_json_dict()
        data.pop("wall_time_s")
        return data


def select_and_assign(
    labels: dict[str, BehaviorLabel],
    gaps: SignedGapVector,
    rng: random.Random,
) -> AssignmentMap:
    """Pick agents from over-represented classes and draw each a target from
    the under-represented classes proportionally to the remaining deficit.

    For every surplus class the selection size is ceil(|gap| * N), capped at
    the number of agents currently carrying that label.
    """
    n = len(labels)
    if n < 1:
        raise ValueError("labels must be non-empty")
    surplus = gaps.surplus()
    deficit = gaps.deficit()
    entries: dict[str, BehaviorLabel] = {}
    if not surplus or not deficit:
        return AssignmentMap(entries={})
    deficit_labels = [b for b in LABEL_ORDER if b in deficit]
    weights = [deficit[b] for b in deficit_labels]
    total_weight = sum(weights)
    for label in LABEL_ORDER:
        if label not in surplus:
            continue
        members = sorted(a for a, b in labels.items() if b is label)
        k = min(math.ceil(surplus[label] * n), len(members))
        if k <= 0:
            continue
        chosen = rng.sample(members, k)
        for agent_id in sorted(chosen):
            pick = rng.random() * total_weight
            cumulative = 0.0
            target = deficit_labels[-1]
            for b, w in zip(deficit_labels, weights):
                cumulative += w
                if pick < cumulative:
                    target = b
                    break
            entries[agent_id] = target
    return AssignmentMap(entries=entries)


def classify_pool(
    result: EpisodeResult, mode: str = "rule", gateway=None
) -> dict[str, BehaviorLabel]:
    labels: dict[str, BehaviorLabel] = {}
    for traj in result.trajectories:
        if mode == "rule":
            labels[traj.agent_id] = classify_rule(traj).label
        elif mode == "llm":
            from .classifier import classify_llm

            labels[traj.agent_id] = classify_llm(traj, gateway).label
        else:
            raise ValueError(f"unknown classifier mode: {mode!r}")
    return labels


def pevo_iterate(
    pool: list[Persona],
    layout: Layout,
    config: PevoConfig,
    writer: PersonaWriter,
    rng: random.Random,
    iteration: int = 1,
    seed: int = 0,
    gateway=None,
    evolution_log: EvolutionLog | None = None,
) -> tuple[list[Persona], IterationRecord]:
    """One full loop pass. If the measured gap is already within tolerance,
    no personas are rewritten and the pool is returned as-is."""
    started = time.monotonic()
    tokens_before = gateway.ledger.snapshot() if gateway is not None else None
    episode = run_episode(
        layout,
        pool,
        policy_mode=config.policy_mode,
        seed=seed,
        config=config.episode,
        gateway=gateway,
    )
    labels = classify_pool(episode, config.classifier_mode, gateway)
    p_sim = empirical_distribution([labels[a] for a in sorted(labels)])
    report = alignment_report(
        p_sim,
        config.reference,
        iteration=iteration,
        smoothing=default_smoothing(len(pool)),
    )
    gaps = signed_gaps(p_sim, config.reference)
    if report.kl <= config.epsilon:
        assignment = AssignmentMap(entries={})
    else:
        assignment = select_and_assign(labels, gaps, rng)
    new_pool: list[Persona] = []
    for persona in pool:
        if persona.id in assignment:
            target = assignment.entries[persona.id]
            rewritten = writer.rewrite(persona, labels[persona.id], target)
            if evolution_log is not None:
                evolution_log.record(
                    iteration, persona, rewritten, labels[persona.id], target
                )
            new_pool.append(rewritten)
        else:
            new_pool.append(persona)
    if tokens_before is not None:
        after = gateway.ledger.snapshot()
        prompt_tokens = after["prompt_tokens"] - tokens_before["prompt_tokens"]
        completion_tokens = (
            after["completion_tokens"] - tokens_before["completion_tokens"]
        )
        calls = after["calls"] - tokens_before["calls"]
    else:
        prompt_tokens = completion_tokens = calls = 0
    record = IterationRecord(
        iteration=iteration,
        p_sim=p_sim,
        report=report,
        assignment=assignment,
        labels=labels,
        prompt_tokens=prompt_tokens,
        completion_tokens=completion_tokens,
        cost_calls=calls,
        wall_time_s=time.monotonic() - started,
    )
    return new_pool, record


@dataclass
class OptimizeResult:
    pool: list[Persona]
    history: list[IterationRecord]
    converged: bool
    evolution_log: EvolutionLog


def optimize(
    pool: list[Persona],
    layout: Layout,
    config: PevoConfig,
    writer: PersonaWriter,
    seed: int = 0,
    gateway=None,
) -> OptimizeResult:
    """Iterate until the gap closes (KL(sim || real) <= epsilon) or the
    iteration budget runs out. History holds one record per executed pass."""
    rng = random.Random(seed * 104729 + 7)
    history: list[IterationRecord] = []
    evolution_log = EvolutionLog()
    current = list(pool)
    converged = False
    for k in range(1, config.max_iterations + 1):
        current, record = pevo_iterate(
            current,
            layout,
            config,
            writer,
            rng,
            iteration=k,
            seed=seed,
            gateway=gateway,
            evolution_log=evolution_log,
        )
        history.append(record)
        if record.report.kl <= config.epsilon:
            converged = True
            break
    return OptimizeResult(
        pool=current, history=history, converged=converged,
        evolution_log=evolution_log,
    )


def transfer_evaluate(
    pool: list[Persona],
    target_layout: Layout,
    config: PevoConfig,
    gateway=None,
) -> AlignmentReport:
    """Evaluate a pool on a new layout without any rewriting: run one episode
    per configured seed and average the metrics (personas carried intact)."""
    reports = []
    for seed in config.seeds:
        episode = run_episode(
            target_layout,
            pool,
            policy_mode=config.policy_mode,
            seed=seed,
            config=config.episode,
            gateway=gateway,
        )
        labels = classify_pool(episode, config.classifier_mode, gateway)
        p_sim = empirical_distribution([labels[a] for a in sorted(labels)])
        reports.append(
            alignment_report(
                p_sim,
                config.reference,
                iteration=0,
                smoothing=default_smoothing(len(pool)),
            )
        )
    mean_sim = BehaviorDistribution(
        {
            b: sum(r.per_label_sim[b] for r in reports) / len(reports)
            for b in LABEL_ORDER
        }
    )
    return AlignmentReport(
        kl=sum(r.kl for r in reports) / len(reports),
        js_distance=sum(r.js_distance for r in reports) / len(reports),
        entropy_gap=sum(r.entropy_gap for r in reports) / len(reports),
        tv=sum(r.tv for r in reports) / len(reports),
        kl_real_vs_sim=sum(r.kl_real_vs_sim for r in reports) / len(reports),
        iteration=0,
        per_label_sim=mean_sim,
        per_label_real=config.reference,
        smoothing=reports[0].smoothing,
    )


def cost_report(
    history: list[IterationRecord],
    price_table: dict[str, tuple[float, float]] | None = None,
    model: str = "",
) -> dict:
    """Per-iteration token counts and dollar cost, plus KL improvement per
    dollar. In deterministic mode everything is zero."""
    if not history:
        raise ValueError("history must be non-empty")
    price_table = price_table or {}
    rows = []
    cumulative_cost = 0.0
    kl_start = history[0].report.kl
    for record in history:
        tokens = record.prompt_tokens + record.completion_tokens
        if tokens > 0:
            if model not in price_table:
                raise ValueError(f"missing price entry for model {model!r}")
            prompt_price, completion_price = price_table[model]
            cost = (
                record.prompt_tokens / 1e6 * prompt_price
                + record.completion_tokens / 1e6 * completion_price
            )
        else:
            cost = 0.0
        cumulative_cost += cost
        improvement = kl_start - record.report.kl
        rows.append(
            {
                "iteration": record.iteration,
                "prompt_tokens": record.prompt_tokens,
                "completion_tokens": record.completion_tokens,
                "cost_usd": cost,
                "cumulative_cost_usd": cumulative_cost,
                "kl": record.report.kl,
                "kl_improvement": improvement,
                "kl_improvement_per_usd": (
                    improvement / cumulative_cost if cumulative_cost > 0 else None
                ),
            }
        )
    return {
        "model": model,
        "total_prompt_tokens": sum(r["prompt_tokens"] for r in rows),
        "total_completion_tokens": sum(r["completion_tokens"] for r in rows),
        "total_cost_usd": cumulative_cost,
        "iterations": rows,
    }
