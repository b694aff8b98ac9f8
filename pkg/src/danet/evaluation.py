"""Benchmark comparison metrics: accuracy summaries, wins, ranks, MPCE.

Conventions: per dataset, methods are ranked by accuracy descending with
tied methods sharing the average of the positions they span; a Win is
credited to every method attaining that dataset's maximum (shared wins);
missing cells drop the method from that dataset's ranking and the dataset
from that method's averages. MPCE uses fraction-valued error rates in [0,1].
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

__all__ = [
    "EvalReport",
    "build_report",
    "mpce",
    "ranking_summary",
]


def mpce(error_rates: Sequence[float], class_counts: Sequence[int]) -> float:
    """Mean per-class error: average of error_rate / class_count over datasets."""
    if len(error_rates) != len(class_counts):
        raise ValueError(
            f"{len(error_rates)} error rates for {len(class_counts)} class counts"
        )
    if len(error_rates) == 0:
        raise ValueError("mpce needs at least one dataset")
    for d in class_counts:
        if d < 1:
            raise ValueError(f"class count must be >= 1, got {d}")
    return float(np.mean([e / d for e, d in zip(error_rates, class_counts)]))


def _dataset_ranks(column: Mapping[str, float]) -> dict[str, float]:
    """Ranks for one dataset: 1 is best, ties share the average position."""
    items = sorted(column.items(), key=lambda kv: -kv[1])
    ranks: dict[str, float] = {}
    i = 0
    while i < len(items):
        j = i
        while j < len(items) and items[j][1] == items[i][1]:
            j += 1
        shared = (i + j + 1) / 2.0
        for name, _ in items[i:j]:
            ranks[name] = shared
        i = j
    return ranks


def ranking_summary(
    table: Mapping[str, Mapping[str, float]],
) -> dict[str, dict[str, float]]:
    """Per-method summary over an accuracy table.

    table: method -> {dataset -> accuracy in [0,1]}; missing entries simply
    absent. Returns method -> {"avg_acc", "std_acc" (population), "win",
    "avg_rank", "n_datasets"}.
    """
    if not table:
        raise ValueError("empty accuracy table")
    datasets = sorted({ds for row in table.values() for ds in row})
    if not datasets:
        raise ValueError("accuracy table has no datasets")
    for method, row in table.items():
        for ds, acc in row.items():
            if not 0.0 <= acc <= 1.0:
                raise ValueError(f"{method}/{ds}: accuracy {acc} outside [0, 1]")

    wins = {method: 0 for method in table}
    rank_lists: dict[str, list[float]] = {method: [] for method in table}
    for ds in datasets:
        column = {m: row[ds] for m, row in table.items() if ds in row}
        if not column:
            continue
        best = max(column.values())
        for method, rank in _dataset_ranks(column).items():
            rank_lists[method].append(rank)
            if column[method] == best:
                wins[method] += 1

    summary = {}
    for method, row in table.items():
        accs = np.array([row[ds] for ds in datasets if ds in row])
        summary[method] = {
            "avg_acc": float(accs.mean()) if accs.size else float("nan"),
            "std_acc": float(accs.std()) if accs.size else float("nan"),
            "win": wins[method],
            "avg_rank": float(np.mean(rank_lists[method]))
            if rank_lists[method]
            else float("nan"),
            "n_datasets": int(accs.size),
        }
    return summary


@dataclass(frozen=True)
class EvalReport:
    """An accuracy table plus its derived summary rows."""

    datasets: tuple[str, ...]
    class_counts: dict[str, int]
    accuracies: dict[str, dict[str, float]]
    summary: dict[str, dict[str, float]]

    def to_json(self) -> str:
        payload = {
            "datasets": list(self.datasets),
            "class_counts": self.class_counts,
            "accuracies": self.accuracies,
            "summary": self.summary,
        }
        return json.dumps(payload, sort_keys=True, indent=2)

    def to_text(self) -> str:
        """Aligned methods-by-datasets table with the four summary rows."""
        methods = sorted(self.accuracies)
        name_width = max(len("dataset"), *(len(ds) for ds in self.datasets)) if self.datasets else 8
        col = max(9, *(len(m) for m in methods)) + 2
        lines = ["dataset".ljust(name_width) + "".join(m.rjust(col) for m in methods)]
        for ds in self.datasets:
            cells = []
            for m in methods:
                acc = self.accuracies[m].get(ds)
                cells.append(("N/A" if acc is None else f"{acc:.3f}").rjust(col))
            lines.append(ds.ljust(name_width) + "".join(cells))
        lines.append("-" * (name_width + col * len(methods)))

        def row(label, fmt):
            cells = [fmt(self.summary[m]).rjust(col) for m in methods]
            return label.ljust(name_width) + "".join(cells)

        lines.append(row("AVG acc", lambda s: f"{s['avg_acc']:.3f}±{s['std_acc']:.3f}"))
        lines.append(row("Win", lambda s: str(int(s["win"]))))
        lines.append(row("AVG rank", lambda s: f"{s['avg_rank']:.3f}"))
        lines.append(row("MPCE", lambda s: f"{s['mpce']:.4f}"))
        return "\n".join(lines)


def build_report(
    results: Mapping[str, Mapping[str, float]],
    class_counts: Mapping[str, int],
) -> EvalReport:
    """Assemble the full comparison report from raw accuracies.

    results: method -> {dataset -> accuracy}. Every dataset present anywhere
    must have a class count >= 2.
    """
    datasets = sorted({ds for row in results.values() for ds in row})
    for ds in datasets:
        if ds not in class_counts:
            raise ValueError(f"no class count for dataset {ds!r}")
        if class_counts[ds] < 2:
            raise ValueError(f"{ds}: class count must be >= 2, got {class_counts[ds]}")
    summary = ranking_summary(results)
    for method, row in results.items():
        rates = [1.0 - row[ds] for ds in datasets if ds in row]
        counts = [class_counts[ds] for ds in datasets if ds in row]
        summary[method]["mpce"] = mpce(rates, counts) if rates else float("nan")
    return EvalReport(
        datasets=tuple(datasets),
        class_counts={ds: int(class_counts[ds]) for ds in datasets},
        accuracies={m: dict(row) for m, row in results.items()},
        summary=summary,
    )
