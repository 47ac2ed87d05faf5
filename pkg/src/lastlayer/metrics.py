"""Confusion-matrix metrics: per-class precision/recall/F and macro averages.

All ratio math runs on ``fractions.Fraction`` (counts are integers), so the
truncated two-decimal percentage views are exact, never float-floor
artifacts.

Two naming modes exist for the same numbers. ``standard`` labels
diag/column-sum as precision and diag/row-sum as recall (rows are actual
classes). ``swapped`` reports each value under the other heading, for
comparing against tables that use the transposed convention.

Each report carries two value sets: exact ratios, and a truncated-table
view where per-class percentages are truncated to two decimals and the
F-measure is the harmonic mean of those truncated percentages (truncated
again). Macro averages come in the same two flavors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import MetricsError

__all__ = [
    "NAMING_MODES",
    "ConfusionMatrix",
    "ClassMetrics",
    "ClassMetricsReport",
    "MacroAverages",
    "build_confusion",
    "class_metrics",
    "macro_average",
    "overall_accuracy",
    "truncate_pct",
    "render_report_text",
    "render_report_csv",
    "render_confusion_csv",
]

NAMING_STANDARD = "standard"
NAMING_SWAPPED = "swapped"
NAMING_MODES = (NAMING_STANDARD, NAMING_SWAPPED)


@dataclass(frozen=True)
class ConfusionMatrix:
    """K x K count grid; rows are actual classes, columns predicted."""

    counts: np.ndarray
    class_names: tuple[str, ...]

    def __post_init__(self) -> None:
        c = self.counts
        if c.ndim != 2 or c.shape[0] != c.shape[1]:
            raise MetricsError(f"confusion matrix must be square, got shape {c.shape}")
        if len(self.class_names) != c.shape[0]:
            raise MetricsError(
                f"{len(self.class_names)} class names for a {c.shape[0]}x{c.shape[0]} matrix"
            )
        if not np.issubdtype(c.dtype, np.integer) or (c < 0).any():
            raise MetricsError("confusion counts must be nonnegative integers")

    @property
    def num_classes(self) -> int:
        return self.counts.shape[0]

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def row_sum(self, c: int) -> int:
        return int(self.counts[c, :].sum())

    def col_sum(self, c: int) -> int:
        return int(self.counts[:, c].sum())


def build_confusion(
    truths, predictions, num_classes: int, class_names: tuple[str, ...] | None = None
) -> ConfusionMatrix:
    truths = list(truths)
    predictions = list(predictions)
    if len(truths) != len(predictions):
        raise MetricsError(
            f"{len(truths)} truths vs {len(predictions)} predictions"
        )
    counts = np.zeros((num_classes, num_classes), dtype=np.int64)
    for t, p in zip(truths, predictions):
        if not (0 <= t < num_classes and 0 <= p < num_classes):
            raise MetricsError(f"class id out of range: truth={t}, prediction={p}, K={num_classes}")
        counts[t, p] += 1
    if class_names is None:
        class_names = tuple(f"class_{i:02d}" for i in range(num_classes))
    return ConfusionMatrix(counts=counts, class_names=class_names)


def truncate_pct(value: Fraction) -> Fraction:
    """Ratio -> percentage truncated (not rounded) to two decimal digits."""
    return Fraction(math.floor(value * 10000), 100)


def _harmonic(a: Fraction, b: Fraction) -> Fraction:
    if a + b == 0:
        return Fraction(0)
    return 2 * a * b / (a + b)


@dataclass(frozen=True)
class ClassMetrics:
    name: str
    precision: Fraction  # diag / column sum (standard naming)
    recall: Fraction  # diag / row sum
    f_measure: Fraction  # harmonic mean of the exact ratios
    precision_pct: Fraction  # truncated two-decimal percentage
    recall_pct: Fraction
    f_measure_pct: Fraction  # harmonic mean of the truncated percentages, truncated
    undefined_precision: bool = False  # empty column: reported as 0 by convention
    undefined_recall: bool = False  # empty row


@dataclass(frozen=True)
class ClassMetricsReport:
    per_class: tuple[ClassMetrics, ...]
    naming_mode: str

    def under_label(self, m: ClassMetrics, label: str) -> tuple[Fraction, Fraction]:
        """(exact, truncated pct) value this report shows under a heading.

        Swapped mode prints diag/row-sum under "precision" and diag/col-sum
        under "recall"; standard mode keeps the usual assignment.
        """
        swap = self.naming_mode == NAMING_SWAPPED
        if label == "precision":
            return (m.recall, m.recall_pct) if swap else (m.precision, m.precision_pct)
        if label == "recall":
            return (m.precision, m.precision_pct) if swap else (m.recall, m.recall_pct)
        raise MetricsError(f"unknown metric label {label!r}")


def class_metrics(cm: ConfusionMatrix, naming_mode: str = NAMING_STANDARD) -> ClassMetricsReport:
    if naming_mode not in NAMING_MODES:
        raise MetricsError(f"unknown naming mode {naming_mode!r}")
    rows: list[ClassMetrics] = []
    for c, name in enumerate(cm.class_names):
        diag = int(cm.counts[c, c])
        col = cm.col_sum(c)
        row = cm.row_sum(c)
        precision = Fraction(diag, col) if col else Fraction(0)
        recall = Fraction(diag, row) if row else Fraction(0)
        p_pct = truncate_pct(precision)
        r_pct = truncate_pct(recall)
        rows.append(
            ClassMetrics(
                name=name,
                precision=precision,
                recall=recall,
                f_measure=_harmonic(precision, recall),
                precision_pct=p_pct,
                recall_pct=r_pct,
                f_measure_pct=Fraction(math.floor(_harmonic(p_pct, r_pct) * 100), 100),
                undefined_precision=col == 0,
                undefined_recall=row == 0,
            )
        )
    return ClassMetricsReport(per_class=tuple(rows), naming_mode=naming_mode)


@dataclass(frozen=True)
class MacroAverages:
    """Unweighted means over classes, in both exact and truncated-table form.

    Exact fields are ratio-valued; the ``*_pct`` fields are means of the
    per-class truncated percentages (what a table of truncated entries
    averages to), left unrounded.
    """

    precision: Fraction
    recall: Fraction
    f_measure: Fraction
    precision_pct: Fraction
    recall_pct: Fraction
    f_measure_pct: Fraction


def macro_average(report: ClassMetricsReport) -> MacroAverages:
    k = len(report.per_class)
    if k < 1:
        raise MetricsError("macro average needs at least one class")

    def mean(values: list[Fraction]) -> Fraction:
        return sum(values, start=Fraction(0)) / k

    return MacroAverages(
        precision=mean([m.precision for m in report.per_class]),
        recall=mean([m.recall for m in report.per_class]),
        f_measure=mean([m.f_measure for m in report.per_class]),
        precision_pct=mean([m.precision_pct for m in report.per_class]),
        recall_pct=mean([m.recall_pct for m in report.per_class]),
        f_measure_pct=mean([m.f_measure_pct for m in report.per_class]),
    )


def overall_accuracy(cm: ConfusionMatrix) -> Fraction:
    if cm.total == 0:
        raise MetricsError("cannot compute accuracy of an empty confusion matrix")
    return Fraction(int(np.trace(cm.counts)), cm.total)


def _fmt(fr: Fraction) -> str:
    return repr(float(fr))


def render_confusion_csv(cm: ConfusionMatrix) -> str:
    lines = ["actual," + ",".join(cm.class_names)]
    for c, name in enumerate(cm.class_names):
        lines.append(name + "," + ",".join(str(int(v)) for v in cm.counts[c]))
    return "\n".join(lines) + "\n"


def render_report_text(cm: ConfusionMatrix, report: ClassMetricsReport) -> str:
    """Key-value report; which number sits under each heading follows the
    naming mode."""
    macro = macro_average(report)
    acc = overall_accuracy(cm)
    lines = [
        f"naming_mode = {report.naming_mode}",
        f"overall_accuracy = {_fmt(acc)}",
        f"overall_accuracy_pct = {float(truncate_pct(acc))}",
    ]
    for m in report.per_class:
        for label in ("precision", "recall"):
            exact, pct = report.under_label(m, label)
            lines.append(f"class.{m.name}.{label} = {_fmt(exact)}")
            lines.append(f"class.{m.name}.{label}_pct_truncated = {float(pct)}")
        lines.append(f"class.{m.name}.f_measure = {_fmt(m.f_measure)}")
        lines.append(f"class.{m.name}.f_measure_pct_truncated = {float(m.f_measure_pct)}")
        if m.undefined_precision or m.undefined_recall:
            lines.append(f"class.{m.name}.zero_denominator = true")
    swap = report.naming_mode == NAMING_SWAPPED
    macro_by_label = {
        "precision": (macro.recall, macro.recall_pct) if swap else (macro.precision, macro.precision_pct),
        "recall": (macro.precision, macro.precision_pct) if swap else (macro.recall, macro.recall_pct),
    }
    for label in ("precision", "recall"):
        exact, table = macro_by_label[label]
        lines.append(f"macro.{label} = {_fmt(exact)}")
        lines.append(f"macro.{label}_truncated_table_pct = {float(table)}")
    lines.append(f"macro.f_measure = {_fmt(macro.f_measure)}")
    lines.append(f"macro.f_measure_truncated_table_pct = {float(macro.f_measure_pct)}")
    return "\n".join(lines) + "\n"


def render_report_csv(report: ClassMetricsReport) -> str:
    lines = [
        "naming_mode,class,precision,recall,f_measure,"
        "precision_pct_truncated,recall_pct_truncated,f_measure_pct_truncated"
    ]
    for m in report.per_class:
        (p_exact, p_pct) = report.under_label(m, "precision")
        (r_exact, r_pct) = report.under_label(m, "recall")
        lines.append(
            ",".join(
                (
                    report.naming_mode,
                    m.name,
                    _fmt(p_exact),
                    _fmt(r_exact),
                    _fmt(m.f_measure),
                    str(float(p_pct)),
                    str(float(r_pct)),
                    str(float(m.f_measure_pct)),
                )
            )
        )
    return "\n".join(lines) + "\n"
