"""Run artifacts: trajectory/label/history files, CSV exports, run manifests,
and the matplotlib figures rendered next to each delimited output."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from . import __version__
from .behaviors import LABEL_ORDER, BehaviorDistribution, BehaviorLabel
from .classifier import ClassificationResult
from .metrics import AlignmentReport
from .optimizer import IterationRecord
from .personas import Persona
from .simulation import EpisodeResult, EpisodeSummary, Trajectory, TrajectoryRecord

CONVERGENCE_HEADER = ("iteration", "kl", "js", "entropy_gap", "tv")


# ---------------------------------------------------------------------------
# trajectory + label files


def write_trajectories(trajectories: list[Trajectory], path: str | Path) -> None:
    """One JSONL record per decision, across all agents, time-ordered."""
    records: list[TrajectoryRecord] = []
    for traj in trajectories:
        records.extend(traj.records)
    records.sort(key=lambda r: (r.time_s, r.agent_id))
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record.to_json_dict(), sort_keys=True) + "\n")


def read_trajectories(
    path: str | Path, summary: EpisodeSummary | dict
) -> list[Trajectory]:
    """Rebuild per-agent trajectories from the JSONL log plus the summary."""
    if isinstance(summary, EpisodeSummary):
        terminal = summary.terminal_statuses
        personas = summary.personas
    else:
        terminal = summary["terminal_statuses"]
        personas = summary["personas"]
    by_agent: dict[str, list[TrajectoryRecord]] = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            record = TrajectoryRecord.from_json_dict(json.loads(line))
            by_agent.setdefault(record.agent_id, []).append(record)
    trajectories = []
    for agent_id in sorted(by_agent):
        records = sorted(by_agent[agent_id], key=lambda r: r.time_s)
        trajectories.append(
            Trajectory(
                agent_id=agent_id,
                persona=Persona.from_json_dict(personas[agent_id]),
                records=records,
                terminal_status=terminal[agent_id],
            )
        )
    return trajectories


def write_summary(summary: EpisodeSummary, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(summary.to_json_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_summary(path: str | Path) -> dict:
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def write_labels(
    results: dict[str, ClassificationResult], path: str | Path
) -> None:
    payload = {a: results[a].to_json_dict() for a in sorted(results)}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_report(report: AlignmentReport, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report.to_json_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_history(history: list[IterationRecord], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for record in history:
            fh.write(json.dumps(record.to_json_dict(), sort_keys=True) + "\n")


def read_history(path: str | Path) -> list[dict]:
    rows = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                rows.append(json.loads(line))
    return rows


def write_convergence_csv(history: list[IterationRecord], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CONVERGENCE_HEADER)
        for record in history:
            row = record.report.metric_row()
            writer.writerow(
                [
                    record.iteration,
                    f"{row['kl']:.6f}",
                    f"{row['js']:.6f}",
                    f"{row['entropy_gap']:.6f}",
                    f"{row['tv']:.6f}",
                ]
            )


def write_manifest(path: str | Path, command: str, args: dict) -> None:
    """Config snapshot sufficient to rerun the command exactly."""
    payload = {
        "command": command,
        "package_version": __version__,
        "args": args,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------------------
# figures


def _label_names() -> list[str]:
    return [b.value for b in LABEL_ORDER]


def plot_distribution(
    p_sim: BehaviorDistribution,
    p_real: BehaviorDistribution,
    path: str | Path,
    title: str = "Simulated vs reference behavior distribution",
) -> None:
    fig, ax = plt.subplots(figsize=(8, 4))
    positions = range(len(LABEL_ORDER))
    width = 0.38
    ax.bar(
        [p - width / 2 for p in positions],
        [p_sim[b] for b in LABEL_ORDER],
        width,
        label="simulated",
    )
    ax.bar(
        [p + width / 2 for p in positions],
        [p_real[b] for b in LABEL_ORDER],
        width,
        label="reference",
    )
    ax.set_xticks(list(positions))
    ax.set_xticklabels(_label_names(), rotation=30, ha="right", fontsize=8)
    ax.set_ylabel("probability")
    ax.set_title(title)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_convergence(
    histories: dict[int, list[IterationRecord]], path: str | Path
) -> None:
    """Four-panel metric-vs-iteration curves, one line per seed."""
    fig, axes = plt.subplots(2, 2, figsize=(9, 6))
    metrics = ("kl", "js", "entropy_gap", "tv")
    titles = ("KL divergence", "JS distance", "Entropy gap", "TV distance")
    for ax, metric, title in zip(axes.flat, metrics, titles):
        for seed in sorted(histories):
            records = histories[seed]
            ax.plot(
                [r.iteration for r in records],
                [r.report.metric_row()[metric] for r in records],
                marker="o",
                markersize=3,
                label=f"seed {seed}",
            )
        ax.set_title(title)
        ax.set_xlabel("iteration")
        ax.grid(alpha=0.3)
    axes.flat[0].legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_transfer(rows: dict[str, dict[str, float]], path: str | Path) -> None:
    fig, ax = plt.subplots(figsize=(8, 4))
    metrics = ("kl", "js", "entropy_gap", "tv")
    conditions = list(rows)
    width = 0.8 / len(conditions)
    for i, condition in enumerate(conditions):
        offsets = [j + i * width for j in range(len(metrics))]
        ax.bar(
            offsets,
            [rows[condition][m] for m in metrics],
            width,
            label=condition,
        )
    ax.set_xticks([j + width for j in range(len(metrics))])
    ax.set_xticklabels(metrics)
    ax.set_title("Transfer comparison")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_cost(report: dict, path: str | Path) -> None:
    rows = report["iterations"]
    fig, axes = plt.subplots(1, 2, figsize=(10, 4))
    iterations = [r["iteration"] for r in rows]
    axes[0].bar(iterations, [r["prompt_tokens"] for r in rows], label="prompt")
    axes[0].bar(
        iterations,
        [r["completion_tokens"] for r in rows],
        bottom=[r["prompt_tokens"] for r in rows],
        label="completion",
    )
    axes[0].set_title("Tokens per iteration")
    axes[0].set_xlabel("iteration")
    axes[0].legend()
    effective = [
        r["kl_improvement_per_usd"]
        for r in rows
        if r["kl_improvement_per_usd"] is not None
    ]
    axes[1].plot(
        [r["iteration"] for r in rows if r["kl_improvement_per_usd"] is not None],
        effective,
        marker="o",
    )
    axes[1].set_title("KL improvement per dollar")
    axes[1].set_xlabel("iteration")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_tfidf(
    results: dict[BehaviorLabel, list[tuple[str, float]]], path: str | Path
) -> None:
    labels = [b for b in LABEL_ORDER if b in results]
    fig, axes = plt.subplots(2, 3, figsize=(12, 6))
    for ax, label in zip(axes.flat, labels):
        terms = results[label]
        ax.barh(
            range(len(terms)),
            [score for _, score in reversed(terms)],
        )
        ax.set_yticks(range(len(terms)))
        ax.set_yticklabels([t for t, _ in reversed(terms)], fontsize=7)
        ax.set_title(label.value, fontsize=9)
    for ax in axes.flat[len(labels):]:
        ax.axis("off")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_eval_report(report_dict: dict, path: str | Path) -> None:
    fig, ax = plt.subplots(figsize=(8, 4))
    names = _label_names()
    scores = [report_dict["per_label"][n]["f1"] for n in names]
    ax.bar(range(len(names)), scores)
    ax.set_xticks(range(len(names)))
    ax.set_xticklabels(names, rotation=30, ha="right", fontsize=8)
    ax.set_ylabel("F1")
    ax.set_ylim(0, 1.05)
    ax.set_title(
        f"Classifier agreement (accuracy {report_dict['accuracy']:.3f}, "
        f"mean rank {report_dict['mean_true_label_rank']:.2f})"
    )
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def write_episode_artifacts(
    result: EpisodeResult,
    out_dir: str | Path,
    labels: dict[str, ClassificationResult] | None = None,
    report: AlignmentReport | None = None,
) -> dict[str, Path]:
    """Write the standard artifact set for one episode into out_dir."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "trajectories": out / "trajectories.jsonl",
        "summary": out / "summary.json",
    }
    write_trajectories(result.trajectories, paths["trajectories"])
    write_summary(result.summary, paths["summary"])
    if labels is not None:
        paths["labels"] = out / "labels.json"
        write_labels(labels, paths["labels"])
    if report is not None:
        paths["report"] = out / "report.json"
        write_report(report, paths["report"])
        paths["distribution_png"] = out / "distribution.png"
        plot_distribution(
            report.per_label_sim, report.per_label_real, paths["distribution_png"]
        )
    return paths
