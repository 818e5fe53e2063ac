from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np


PAPER_ORDER = ("single", "kd_labeled", "kd_unlabeled", "unikd", "ensemble")


@dataclass(frozen=True)
class ReportEntry:
    method: str
    seed: int
    accuracy: float
    lam: float | None = None


@dataclass(frozen=True)
class MethodSummary:
    method: str
    lam: float | None
    mean: float
    std: float
    count: int


@dataclass
class ExperimentReport:
    """Per-(method, seed) accuracies; std is the population std over seeds."""

    title: str
    entries: list[ReportEntry] = field(default_factory=list)
    provenance: dict[str, Any] = field(default_factory=dict)
    notes: list[str] = field(default_factory=list)

    def add(self, method: str, seed: int, accuracy: float, lam: float | None = None) -> None:
        self.entries.append(ReportEntry(method=method, seed=seed, accuracy=float(accuracy), lam=lam))

    def accuracies(self, method: str, lam: float | None = None) -> list[float]:
        return [e.accuracy for e in self.entries if e.method == method and (lam is None or e.lam == lam)]

    def summary(self) -> list[MethodSummary]:
        groups: dict[tuple[str, float | None], list[float]] = {}
        for e in self.entries:
            groups.setdefault((e.method, e.lam), []).append(e.accuracy)
        return [
            MethodSummary(
                method=method,
                lam=lam,
                mean=float(np.mean(values)),
                std=float(np.std(values)),
                count=len(values),
            )
            for (method, lam), values in groups.items()
        ]

    def mean(self, method: str, lam: float | None = None) -> float:
        values = self.accuracies(method, lam)
        return float(np.mean(values)) if values else float("nan")

    def method_ordering_holds(self) -> bool | None:
        """single < kd_labeled < kd_unlabeled < unikd <= ensemble, on means."""
        if not all(self.accuracies(m) for m in PAPER_ORDER):
            return None
        means = [self.mean(m) for m in PAPER_ORDER]
        strict = all(a < b for a, b in zip(means[:3], means[1:4]))
        return strict and means[3] <= means[4]


def _lam_text(lam: float | None) -> str:
    return "" if lam is None else repr(float(lam))


def format_table(report: ExperimentReport) -> str:
    rows = [("method", "lambda", "mean", "std", "runs")]
    for s in report.summary():
        rows.append((s.method, _lam_text(s.lam) or "-", f"{100 * s.mean:.2f}", f"{100 * s.std:.2f}", str(s.count)))
    widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
    lines = [report.title]
    for i, row in enumerate(rows):
        lines.append("  ".join(cell.ljust(widths[j]) if j == 0 else cell.rjust(widths[j]) for j, cell in enumerate(row)))
        if i == 0:
            lines.append("  ".join("-" * w for w in widths))
    for note in report.notes:
        lines.append(f"note: {note}")
    return "\n".join(lines) + "\n"


def report_csv(report: ExperimentReport) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["method", "seed", "lambda", "accuracy"])
    for e in report.entries:
        writer.writerow([e.method, e.seed, _lam_text(e.lam), repr(e.accuracy)])
    return buffer.getvalue()


def report_json(report: ExperimentReport) -> dict[str, Any]:
    return {
        "title": report.title,
        "provenance": report.provenance,
        "results": [
            {"method": e.method, "seed": e.seed, "lambda": e.lam, "accuracy": e.accuracy}
            for e in report.entries
        ],
        "summary": [
            {"method": s.method, "lambda": s.lam, "mean": s.mean, "std": s.std, "runs": s.count}
            for s in report.summary()
        ],
        "method_ordering_holds": report.method_ordering_holds(),
        "notes": list(report.notes),
    }


def write_report(report: ExperimentReport, run_dir: str | Path, stem: str) -> tuple[Path, Path]:
    out = Path(run_dir)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / f"{stem}.csv"
    json_path = out / f"{stem}.json"
    csv_path.write_text(report_csv(report), encoding="utf-8")
    json_path.write_text(json.dumps(report_json(report), indent=2) + "\n", encoding="utf-8")
    return csv_path, json_path
